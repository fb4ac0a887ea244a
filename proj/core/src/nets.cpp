#include "mixstage/nets.hpp"

#include "mixstage/error.hpp"

#include <cmath>

namespace mixstage {

using nn::ConvBlock;
using nn::Seq;
using nn::Stack;

// ----------------------------------------------------------------- UNet1d

UNet1d::UNet1d(int in, int width, int depth, nn::Rng& rng) : in_(ConvBlock::same(in, width), rng) {
    for (int i = 0; i < depth; ++i) downs_.emplace_back(ConvBlock::down(width, width), rng);
    bottleneck_ = ConvBlock(ConvBlock::same(width, width), rng);
    for (int i = 0; i < depth; ++i) ups_.emplace_back(ConvBlock::same(width, width), rng);
}

Seq UNet1d::forward(const Seq& x) {
    std::vector<Seq> skips;
    skips.reserve(downs_.size());
    Seq h = in_.forward(x);
    for (auto& d : downs_) {
        skips.push_back(h);
        h = d.forward(h);
    }
    h = bottleneck_.forward(h);
    for (int i = depth() - 1; i >= 0; --i) {
        Seq u = nn::upsample2(h);
        u.data += skips[i].data;
        h = ups_[i].forward(u);
    }
    return h;
}

Seq UNet1d::infer(const Seq& x) const {
    std::vector<Seq> skips;
    skips.reserve(downs_.size());
    Seq h = in_.infer(x);
    for (const auto& d : downs_) {
        skips.push_back(h);
        h = d.infer(h);
    }
    h = bottleneck_.infer(h);
    for (int i = depth() - 1; i >= 0; --i) {
        Seq u = nn::upsample2(h);
        u.data += skips[i].data;
        h = ups_[i].infer(u);
    }
    return h;
}

Seq UNet1d::backward(const Seq& dy) {
    // skip_grads[i] is the gradient reaching level i through its skip connection.
    std::vector<Seq> skip_grads(downs_.size());
    Seq g = dy;
    for (int i = 0; i < depth(); ++i) {
        g = ups_[i].backward(g);
        skip_grads[i] = g;
        g = nn::upsample2_backward(g);
    }
    g = bottleneck_.backward(g);
    for (int i = depth() - 1; i >= 0; --i) {
        g = downs_[i].backward(g);
        g.data += skip_grads[i].data;
    }
    return in_.backward(g);
}

void UNet1d::collect(const std::string& prefix, nn::ParamList& out) {
    in_.collect(prefix + ".in", out);
    for (std::size_t i = 0; i < downs_.size(); ++i) downs_[i].collect(prefix + ".down" + std::to_string(i), out);
    bottleneck_.collect(prefix + ".bottleneck", out);
    for (std::size_t i = 0; i < ups_.size(); ++i) ups_[i].collect(prefix + ".up" + std::to_string(i), out);
}

// ----------------------------------------------------- SequenceClassifier

SequenceClassifier::SequenceClassifier(Stack body, int width, int classes, nn::Rng& rng)
    : body_(std::move(body)), head_(width, classes, rng) {}

nn::Mat SequenceClassifier::forward(const Seq& x) {
    const Seq h = body_.forward(x);
    time_ = h.time;
    return head_.forward(nn::mean_pool_time(h));
}

nn::Mat SequenceClassifier::infer(const Seq& x) const { return head_.infer(nn::mean_pool_time(body_.infer(x))); }

Seq SequenceClassifier::backward(const nn::Mat& dlogits) {
    return body_.backward(nn::mean_pool_time_backward(head_.backward(dlogits), time_));
}

void SequenceClassifier::collect(const std::string& prefix, nn::ParamList& out) {
    body_.collect(prefix + ".body", out);
    head_.collect(prefix + ".head", out);
}

// ---------------------------------------------------------- MixStageModel

MixStageModel::MixStageModel(const ArchitectureConfig& arch, std::uint64_t seed) : arch_(arch) {
    validate(arch);
    nn::Rng rng(seed);
    const int w = arch.hidden;
    const int pose_ch = 2 * arch.J;
    const int latent = arch.content_dim + arch.D;

    audio_encoder = Stack({ConvBlock(ConvBlock::same(arch.F, w), rng), ConvBlock(ConvBlock::same(w, w), rng),
                           ConvBlock(ConvBlock::same(w, arch.content_dim), rng)});
    pose_encoder = Stack({ConvBlock(ConvBlock::same(pose_ch, w), rng), ConvBlock(ConvBlock::same(w, w), rng),
                          ConvBlock(ConvBlock::same(w, arch.content_dim), rng)});
    style_encoder = SequenceClassifier(Stack({ConvBlock(ConvBlock::same(pose_ch, w), rng),
                                              ConvBlock(ConvBlock::down(w, w), rng),
                                              ConvBlock(ConvBlock::same(w, w), rng)}),
                                       w, arch.N, rng);

    style_table = nn::Param(arch.N, arch.D);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (Eigen::Index i = 0; i < style_table.value.size(); ++i) style_table.value.data()[i] = normal(rng);

    prior_net = Stack({ConvBlock(ConvBlock::same(latent, w), rng), ConvBlock(ConvBlock::same(w, w), rng),
                       ConvBlock(ConvBlock::pointwise(w, arch.M), rng)});
    trunk = UNet1d(latent, w, arch.unet_depth, rng);
    for (int m = 0; m < arch.M; ++m) {
        sub_generators.emplace_back(std::vector<ConvBlock>{
            ConvBlock(ConvBlock::same(w, w), rng),
            ConvBlock(ConvBlock::Spec{w, pose_ch, 3, 1, 1, false, nn::Act::kNone}, rng)});
    }
    const int dw = std::max(1, w / 2);
    discriminator = Stack({ConvBlock(ConvBlock::down(pose_ch, dw, false, nn::Act::kLeakyRelu), rng),
                           ConvBlock(ConvBlock::down(dw, dw, false, nn::Act::kLeakyRelu), rng),
                           ConvBlock(ConvBlock::Spec{dw, 1, 3, 1, 1, false, nn::Act::kNone}, rng)});
}

namespace {

Seq as_seq(const Eigen::MatrixXf& m) { return Seq(m, 1, static_cast<int>(m.cols())); }

}  // namespace

Eigen::MatrixXf MixStageModel::encode_audio_content(const AudioFeatures& a) const {
    if (a.bins() != arch_.F) throw ShapeError("audio features have " + std::to_string(a.bins()) + " bins, model expects " +
                                              std::to_string(arch_.F));
    return audio_encoder.infer(as_seq(a.mel)).data;
}

Eigen::MatrixXf MixStageModel::encode_pose_content(const PoseSequence& p) const {
    if (p.joints() != arch_.J) throw ShapeError("pose has " + std::to_string(p.joints()) + " joints, model expects " +
                                                std::to_string(arch_.J));
    return pose_encoder.infer(as_seq(p.coords)).data;
}

Eigen::VectorXf MixStageModel::encode_style(const PoseSequence& p) const {
    if (p.joints() != arch_.J) throw ShapeError("pose joint count does not match the model");
    return style_encoder.infer(as_seq(p.coords)).col(0);
}

Eigen::VectorXf MixStageModel::style_lookup(std::span<const float> logits) const {
    if (static_cast<int>(logits.size()) != arch_.N) throw ShapeError("style logits length must equal N");
    int best = 0;
    for (int i = 1; i < arch_.N; ++i)
        if (logits[i] > logits[best]) best = i;
    return style_row({best});
}

Eigen::VectorXf MixStageModel::style_mix(std::span<const float> weights) const {
    if (static_cast<int>(weights.size()) != arch_.N) throw ShapeError("style weights length must equal N");
    double sum = 0.0;
    for (float w : weights) {
        if (!(w >= 0.0f)) throw InvalidArgument("style weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw InvalidArgument("style weights must sum to 1");
    const Eigen::Map<const Eigen::VectorXf> w(weights.data(), arch_.N);
    return style_table.value.transpose() * w;
}

Eigen::VectorXf MixStageModel::style_row(SpeakerID id) const {
    if (id.id < 0 || id.id >= arch_.N) throw RangeError("speaker id outside the style table");
    return style_table.value.row(id.id).transpose();
}

LatentSequence MixStageModel::make_latent(const Eigen::MatrixXf& content, const Eigen::VectorXf& style) const {
    if (content.rows() != arch_.content_dim || style.size() != arch_.D) throw ShapeError("latent parts have wrong sizes");
    LatentSequence z;
    z.content_dim = arch_.content_dim;
    z.z.resize(arch_.content_dim + arch_.D, content.cols());
    z.z.topRows(arch_.content_dim) = content;
    z.z.bottomRows(arch_.D).colwise() = style;
    return z;
}

void MixStageModel::check_latent(const LatentSequence& z) const {
    if (z.z.rows() != arch_.content_dim + arch_.D || z.content_dim != arch_.content_dim)
        throw ShapeError("latent has " + std::to_string(z.z.rows()) + " channels, model expects " +
                         std::to_string(arch_.content_dim + arch_.D));
    if (z.frames() % (1 << arch_.unet_depth) != 0)
        throw ShapeError("latent length must be a multiple of 2^unet_depth");
}

std::vector<Eigen::MatrixXf> MixStageModel::sub_generator_outputs(const LatentSequence& z) const {
    check_latent(z);
    const Seq u = trunk.infer(as_seq(z.z));
    std::vector<Eigen::MatrixXf> out;
    out.reserve(sub_generators.size());
    for (const auto& g : sub_generators) out.push_back(g.infer(u).data);
    return out;
}

PoseSequence MixStageModel::generate(const LatentSequence& z, const Eigen::MatrixXf& phi) const {
    if (phi.rows() != arch_.M || phi.cols() != z.frames()) throw ShapeError("phi must be [M, T]");
    check_simplex_columns(phi, 1e-6, "mixture prior");
    const auto outs = sub_generator_outputs(z);
    Eigen::MatrixXf pose = Eigen::MatrixXf::Zero(2 * arch_.J, z.frames());
    for (int m = 0; m < arch_.M; ++m) pose += outs[m] * phi.row(m).asDiagonal();
    return PoseSequence(std::move(pose));
}

Eigen::MatrixXf MixStageModel::classify_priors(const LatentSequence& z) const {
    check_latent(z);
    return softmax_columns(prior_net.infer(as_seq(z.z)).data);
}

Eigen::VectorXf MixStageModel::discriminate(const PoseSequence& p) const {
    if (p.joints() != arch_.J) throw ShapeError("pose joint count does not match the model");
    if (p.frames() % 4 != 0) throw ShapeError("discriminator input length must be a multiple of 4");
    return nn::sigmoid(discriminator.infer(as_seq(p.coords)).data).row(0).transpose();
}

nn::ParamList MixStageModel::generator_params() {
    nn::ParamList out;
    audio_encoder.collect("audio_encoder", out);
    pose_encoder.collect("pose_encoder", out);
    style_encoder.collect("style_encoder", out);
    out.add("style_table", style_table);
    prior_net.collect("prior_net", out);
    trunk.collect("trunk", out);
    for (std::size_t m = 0; m < sub_generators.size(); ++m)
        sub_generators[m].collect("sub_generator" + std::to_string(m), out);
    return out;
}

nn::ParamList MixStageModel::discriminator_params() {
    nn::ParamList out;
    discriminator.collect("discriminator", out);
    return out;
}

nn::ParamList MixStageModel::sub_generator_params(int m) {
    nn::ParamList out;
    sub_generators.at(m).collect("sub_generator" + std::to_string(m), out);
    return out;
}

nn::ParamList MixStageModel::style_encoder_params() {
    nn::ParamList out;
    style_encoder.collect("style_encoder", out);
    return out;
}

nn::ParamList MixStageModel::all_params() {
    nn::ParamList out = generator_params();
    out.append(discriminator_params());
    return out;
}

void check_simplex_columns(const Eigen::MatrixXf& phi, double tol, const char* what) {
    for (Eigen::Index t = 0; t < phi.cols(); ++t) {
        double sum = 0.0;
        for (Eigen::Index m = 0; m < phi.rows(); ++m) {
            const float v = phi(m, t);
            if (!(v >= 0.0f)) throw InvalidArgument(std::string(what) + ": negative or NaN entry at frame " + std::to_string(t));
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol)
            throw InvalidArgument(std::string(what) + ": frame " + std::to_string(t) + " sums to " + std::to_string(sum));
    }
}

Eigen::MatrixXf softmax_columns(const Eigen::MatrixXf& logits) {
    Eigen::MatrixXf out(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const float mx = logits.col(c).maxCoeff();
        out.col(c) = (logits.col(c).array() - mx).exp();
        out.col(c) /= out.col(c).sum();
    }
    return out;
}

}  // namespace mixstage
