#include "mixstage/nn.hpp"

#include "mixstage/error.hpp"

#include <cmath>

namespace mixstage::nn {

namespace {

void uniform_fill(Mat& m, float bound, Rng& rng) {
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void require_channels(const Seq& x, int expected, const char* who) {
    if (x.channels() != expected || x.columns() != x.batch * x.time)
        throw ShapeError(std::string(who) + ": expected " + std::to_string(expected) + " channels, got " +
                         std::to_string(x.channels()) + " x " + std::to_string(x.columns()));
}

}  // namespace

void ParamList::append(const ParamList& other) {
    params.insert(params.end(), other.params.begin(), other.params.end());
    buffers.insert(buffers.end(), other.buffers.begin(), other.buffers.end());
}

void ParamList::zero_grad() {
    for (auto& [name, p] : params) p->zero_grad();
}

double ParamList::grad_norm_sq() const {
    double s = 0.0;
    for (const auto& [name, p] : params) s += p->grad.cast<double>().squaredNorm();
    return s;
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(int in, int out, int kernel, int stride, int pad, Rng& rng)
    : weight(out, in * kernel), bias(out, 1), in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in * kernel));
    uniform_fill(weight.value, bound, rng);
    uniform_fill(bias.value, bound, rng);
}

Mat Conv1d::im2col(const Seq& x, int t_out) const {
    Mat col = Mat::Zero(static_cast<Eigen::Index>(in_) * kernel_, static_cast<Eigen::Index>(x.batch) * t_out);
    for (int b = 0; b < x.batch; ++b) {
        for (int t = 0; t < t_out; ++t) {
            const Eigen::Index c = static_cast<Eigen::Index>(b) * t_out + t;
            for (int k = 0; k < kernel_; ++k) {
                const int src = t * stride_ + k - pad_;
                if (src < 0 || src >= x.time) continue;
                col.col(c).segment(static_cast<Eigen::Index>(k) * in_, in_) =
                    x.data.col(static_cast<Eigen::Index>(b) * x.time + src);
            }
        }
    }
    return col;
}

Seq Conv1d::forward(const Seq& x) {
    require_channels(x, in_, "Conv1d");
    const int t_out = out_time(x.time);
    if (t_out < 1) throw ShapeError("Conv1d: input too short");
    col_ = im2col(x, t_out);
    cached_batch_ = x.batch;
    cached_time_ = x.time;
    Seq y;
    y.batch = x.batch;
    y.time = t_out;
    y.data.noalias() = weight.value * col_;
    y.data.colwise() += bias.value.col(0);
    return y;
}

Seq Conv1d::infer(const Seq& x) const {
    require_channels(x, in_, "Conv1d");
    const int t_out = out_time(x.time);
    if (t_out < 1) throw ShapeError("Conv1d: input too short");
    const Mat col = im2col(x, t_out);
    Seq y;
    y.batch = x.batch;
    y.time = t_out;
    y.data.noalias() = weight.value * col;
    y.data.colwise() += bias.value.col(0);
    return y;
}

Seq Conv1d::backward(const Seq& dy) {
    if (dy.channels() != out_ || dy.columns() != col_.cols()) throw ShapeError("Conv1d::backward: gradient shape");
    weight.grad.noalias() += dy.data * col_.transpose();
    bias.grad.col(0) += dy.data.rowwise().sum();
    const Mat dcol = weight.value.transpose() * dy.data;
    Seq dx = Seq::zeros(in_, cached_batch_, cached_time_);
    const int t_out = dy.time;
    for (int b = 0; b < cached_batch_; ++b) {
        for (int t = 0; t < t_out; ++t) {
            const Eigen::Index c = static_cast<Eigen::Index>(b) * t_out + t;
            for (int k = 0; k < kernel_; ++k) {
                const int src = t * stride_ + k - pad_;
                if (src < 0 || src >= cached_time_) continue;
                dx.data.col(static_cast<Eigen::Index>(b) * cached_time_ + src) +=
                    dcol.col(c).segment(static_cast<Eigen::Index>(k) * in_, in_);
            }
        }
    }
    return dx;
}

void Conv1d::collect(const std::string& prefix, ParamList& out) {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
}

// ----------------------------------------------------------- BatchNorm1d

BatchNorm1d::BatchNorm1d(int channels, float momentum, float eps)
    : gamma(channels, 1),
      beta(channels, 1),
      running_mean(Mat::Zero(channels, 1)),
      running_var(Mat::Ones(channels, 1)),
      momentum_(momentum),
      eps_(eps) {
    gamma.value.setOnes();
}

Seq BatchNorm1d::forward(const Seq& x) {
    require_channels(x, static_cast<int>(gamma.value.rows()), "BatchNorm1d");
    const Eigen::Index n = x.data.cols();
    const Eigen::VectorXf mean = x.data.rowwise().mean();
    xhat_ = x.data.colwise() - mean;
    const Eigen::VectorXf var = xhat_.array().square().rowwise().mean();
    inv_std_ = (var.array() + eps_).rsqrt();
    xhat_ = inv_std_.asDiagonal() * xhat_;

    const float unbias = n > 1 ? static_cast<float>(n) / static_cast<float>(n - 1) : 1.0f;
    running_mean = (1.0f - momentum_) * running_mean + momentum_ * mean;
    running_var = (1.0f - momentum_) * running_var + (momentum_ * unbias) * var;

    Seq y(gamma.value.col(0).asDiagonal() * xhat_, x.batch, x.time);
    y.data.colwise() += beta.value.col(0);
    return y;
}

Seq BatchNorm1d::infer(const Seq& x) const {
    require_channels(x, static_cast<int>(gamma.value.rows()), "BatchNorm1d");
    const Eigen::VectorXf scale = gamma.value.col(0).array() * (running_var.col(0).array() + eps_).rsqrt();
    const Eigen::VectorXf shift = beta.value.col(0).array() - running_mean.col(0).array() * scale.array();
    Seq y(scale.asDiagonal() * x.data, x.batch, x.time);
    y.data.colwise() += shift;
    return y;
}

Seq BatchNorm1d::backward(const Seq& dy) {
    if (dy.data.rows() != xhat_.rows() || dy.data.cols() != xhat_.cols())
        throw ShapeError("BatchNorm1d::backward: gradient shape");
    const float n = static_cast<float>(dy.data.cols());
    const Eigen::VectorXf sum_dy = dy.data.rowwise().sum();
    const Eigen::VectorXf sum_dy_xhat = (dy.data.array() * xhat_.array()).rowwise().sum();
    gamma.grad.col(0) += sum_dy_xhat;
    beta.grad.col(0) += sum_dy;

    const Eigen::VectorXf g = gamma.value.col(0).array() * inv_std_.array() / n;
    Mat dx = n * dy.data;
    dx.colwise() -= sum_dy;
    dx -= sum_dy_xhat.asDiagonal() * xhat_;
    return {g.asDiagonal() * dx, dy.batch, dy.time};
}

void BatchNorm1d::collect(const std::string& prefix, ParamList& out) {
    out.add(prefix + ".gamma", gamma);
    out.add(prefix + ".beta", beta);
    out.add_buffer(prefix + ".running_mean", running_mean);
    out.add_buffer(prefix + ".running_var", running_var);
}

// -------------------------------------------------------------- ConvBlock

namespace {
constexpr float kLeakySlope = 0.2f;
}

ConvBlock::ConvBlock(const Spec& spec, Rng& rng)
    : conv(spec.in, spec.out, spec.kernel, spec.stride, spec.pad, rng), spec_(spec) {
    if (spec.batch_norm) bn = BatchNorm1d(spec.out);
}

Mat ConvBlock::activate(const Mat& x) const {
    switch (spec_.act) {
        case Act::kRelu: return x.cwiseMax(0.0f);
        case Act::kLeakyRelu: return x.unaryExpr([](float v) { return v > 0.0f ? v : kLeakySlope * v; });
        case Act::kNone: break;
    }
    return x;
}

Seq ConvBlock::forward(const Seq& x) {
    Seq h = conv.forward(x);
    if (spec_.batch_norm) h = bn.forward(h);
    if (spec_.act != Act::kNone) {
        pre_act_ = h.data;
        h.data = activate(h.data);
    }
    return h;
}

Seq ConvBlock::infer(const Seq& x) const {
    Seq h = conv.infer(x);
    if (spec_.batch_norm) h = bn.infer(h);
    h.data = activate(h.data);
    return h;
}

Seq ConvBlock::backward(const Seq& dy) {
    Seq g = dy;
    switch (spec_.act) {
        case Act::kRelu: g.data = (pre_act_.array() > 0.0f).select(dy.data, 0.0f); break;
        case Act::kLeakyRelu:
            g.data = (pre_act_.array() > 0.0f).select(dy.data, kLeakySlope * dy.data);
            break;
        case Act::kNone: break;
    }
    if (spec_.batch_norm) g = bn.backward(g);
    return conv.backward(g);
}

void ConvBlock::collect(const std::string& prefix, ParamList& out) {
    conv.collect(prefix + ".conv", out);
    if (spec_.batch_norm) bn.collect(prefix + ".bn", out);
}

// ------------------------------------------------------------------ Stack

Seq Stack::forward(const Seq& x) {
    Seq h = x;
    for (auto& b : blocks_) h = b.forward(h);
    return h;
}

Seq Stack::infer(const Seq& x) const {
    Seq h = x;
    for (const auto& b : blocks_) h = b.infer(h);
    return h;
}

Seq Stack::backward(const Seq& dy) {
    Seq g = dy;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    return g;
}

void Stack::collect(const std::string& prefix, ParamList& out) {
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + "." + std::to_string(i), out);
}

// ----------------------------------------------------------------- Linear

Linear::Linear(int in, int out, Rng& rng) : weight(out, in), bias(out, 1) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    uniform_fill(weight.value, bound, rng);
    uniform_fill(bias.value, bound, rng);
}

Mat Linear::forward(const Mat& x) {
    x_ = x;
    return infer(x);
}

Mat Linear::infer(const Mat& x) const {
    if (x.rows() != weight.value.cols()) throw ShapeError("Linear: input width");
    Mat y = weight.value * x;
    y.colwise() += bias.value.col(0);
    return y;
}

Mat Linear::backward(const Mat& dy) {
    weight.grad.noalias() += dy * x_.transpose();
    bias.grad.col(0) += dy.rowwise().sum();
    return weight.value.transpose() * dy;
}

void Linear::collect(const std::string& prefix, ParamList& out) {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
}

// -------------------------------------------------------------- shape ops

Seq upsample2(const Seq& x) {
    Seq y = Seq::zeros(x.channels(), x.batch, 2 * x.time);
    for (int b = 0; b < x.batch; ++b)
        for (int t = 0; t < x.time; ++t) {
            const auto src = x.data.col(static_cast<Eigen::Index>(b) * x.time + t);
            const Eigen::Index dst = static_cast<Eigen::Index>(b) * y.time + 2 * t;
            y.data.col(dst) = src;
            y.data.col(dst + 1) = src;
        }
    return y;
}

Seq upsample2_backward(const Seq& dy) {
    Seq dx = Seq::zeros(dy.channels(), dy.batch, dy.time / 2);
    for (int b = 0; b < dy.batch; ++b)
        for (int t = 0; t < dx.time; ++t) {
            const Eigen::Index src = static_cast<Eigen::Index>(b) * dy.time + 2 * t;
            dx.data.col(static_cast<Eigen::Index>(b) * dx.time + t) = dy.data.col(src) + dy.data.col(src + 1);
        }
    return dx;
}

Mat mean_pool_time(const Seq& x) {
    Mat out(x.channels(), x.batch);
    for (int b = 0; b < x.batch; ++b)
        out.col(b) = x.data.middleCols(static_cast<Eigen::Index>(b) * x.time, x.time).rowwise().mean();
    return out;
}

Seq mean_pool_time_backward(const Mat& dy, int time) {
    Seq dx = Seq::zeros(static_cast<int>(dy.rows()), static_cast<int>(dy.cols()), time);
    for (Eigen::Index b = 0; b < dy.cols(); ++b)
        dx.data.middleCols(b * time, time).colwise() = dy.col(b) / static_cast<float>(time);
    return dx;
}

Seq broadcast_time(const Mat& v, int time) {
    Seq out = Seq::zeros(static_cast<int>(v.rows()), static_cast<int>(v.cols()), time);
    for (Eigen::Index b = 0; b < v.cols(); ++b) out.data.middleCols(b * time, time).colwise() = v.col(b);
    return out;
}

Mat broadcast_time_backward(const Seq& dy) {
    Mat out(dy.channels(), dy.batch);
    for (int b = 0; b < dy.batch; ++b)
        out.col(b) = dy.data.middleCols(static_cast<Eigen::Index>(b) * dy.time, dy.time).rowwise().sum();
    return out;
}

Seq concat_channels(const Seq& a, const Seq& b) {
    if (a.batch != b.batch || a.time != b.time) throw ShapeError("concat_channels: batch/time mismatch");
    Seq out;
    out.batch = a.batch;
    out.time = a.time;
    out.data.resize(a.data.rows() + b.data.rows(), a.data.cols());
    out.data.topRows(a.data.rows()) = a.data;
    out.data.bottomRows(b.data.rows()) = b.data;
    return out;
}

std::pair<Seq, Seq> split_channels(const Seq& x, int first) {
    return {Seq(x.data.topRows(first), x.batch, x.time), Seq(x.data.bottomRows(x.data.rows() - first), x.batch, x.time)};
}

Seq concat_batch(const Seq& a, const Seq& b) {
    if (a.channels() != b.channels() || a.time != b.time) throw ShapeError("concat_batch: channel/time mismatch");
    Seq out;
    out.batch = a.batch + b.batch;
    out.time = a.time;
    out.data.resize(a.data.rows(), a.data.cols() + b.data.cols());
    out.data.leftCols(a.data.cols()) = a.data;
    out.data.rightCols(b.data.cols()) = b.data;
    return out;
}

std::pair<Seq, Seq> split_batch(const Seq& x, int first_batch) {
    const Eigen::Index n = static_cast<Eigen::Index>(first_batch) * x.time;
    return {Seq(x.data.leftCols(n), first_batch, x.time),
            Seq(x.data.rightCols(x.data.cols() - n), x.batch - first_batch, x.time)};
}

Mat sigmoid(const Mat& x) {
    return x.unaryExpr([](float v) { return 1.0f / (1.0f + std::exp(-v)); });
}

// ------------------------------------------------------------------- Adam

Adam::Adam(ParamList params, Options opt) : params_(std::move(params)), opt_(opt) {
    slots_.reserve(params_.params.size());
    for (const auto& [name, p] : params_.params) {
        slots_.push_back({Mat::Zero(p->value.rows(), p->value.cols()), Mat::Zero(p->value.rows(), p->value.cols()), 0});
    }
}

void Adam::step(double lr) {
    const float b1 = static_cast<float>(opt_.beta1);
    const float b2 = static_cast<float>(opt_.beta2);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        Param& p = *params_.params[i].second;
        if ((p.grad.array() == 0.0f).all()) continue;
        Slot& s = slots_[i];
        ++s.steps;
        s.m = b1 * s.m + (1.0f - b1) * p.grad;
        s.v = b2 * s.v + (1.0f - b2) * p.grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(s.steps));
        const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(s.steps));
        const float step_size = static_cast<float>(lr / c1);
        const float inv_c2 = static_cast<float>(1.0 / std::sqrt(c2));
        const float eps = static_cast<float>(opt_.eps);
        p.value.array() -= step_size * s.m.array() / (s.v.array().sqrt() * inv_c2 + eps);
    }
}

void Adam::zero_grad() { params_.zero_grad(); }

}  // namespace mixstage::nn
