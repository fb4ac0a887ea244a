#include "mixstage/trainer.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace mixstage {

using nn::Mat;
using nn::Seq;

void validate(const TrainConfig& cfg, const ArchitectureConfig& arch) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw InvalidArgument("train config: " + what);
    };
    require(cfg.iterations >= 0, "iterations must be >= 0");
    require(cfg.checkpoint_every > 0, "checkpoint_every must be positive");
    require(cfg.iterations % cfg.checkpoint_every == 0, "checkpoint_every must divide iterations");
    require(cfg.lr > 0.0 && std::isfinite(cfg.lr), "lr must be positive");
    require(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0, "lr_decay must be in (0, 1]");
    require(cfg.batch_size > 0, "batch_size must be positive");
    require(cfg.lambda_id >= 0.0, "lambda_id must be >= 0");
    require(cfg.window_stride >= 0, "window_stride must be >= 0");
    require(cfg.log_every > 0, "log_every must be positive");
    require(cfg.device == "cpu", "only the cpu device is available");
    if (cfg.M != arch.M)
        throw ArchMismatchError("train config M=" + std::to_string(cfg.M) + " but architecture M=" + std::to_string(arch.M));
    validate(arch);
}

double scheduled_lr(const TrainConfig& cfg, long iteration) {
    return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(iteration / 100));
}

std::vector<TrainWindow> prepare_windows(const Dataset& d, const ModeModel& modes, int window, int stride) {
    std::vector<TrainWindow> out;
    for (const auto& s : d.samples) {
        for (auto& w : make_windows(s, window, stride)) {
            ModeAssignment a = assign(modes, w.pose);
            out.push_back({std::move(w), std::move(a.phi), std::move(a.labels)});
        }
    }
    return out;
}

Batch make_batch(const std::vector<TrainWindow>& windows, std::span<const std::size_t> indices) {
    if (indices.empty()) throw InvalidArgument("make_batch: empty batch");
    const auto& first = windows.at(indices[0]);
    Batch b;
    b.size = static_cast<int>(indices.size());
    b.time = first.sample.pose.frames();
    const Eigen::Index T = b.time;
    b.audio.resize(first.sample.audio.bins(), b.size * T);
    b.pose.resize(first.sample.pose.coords.rows(), b.size * T);
    b.phi.resize(first.phi.rows(), b.size * T);
    for (int i = 0; i < b.size; ++i) {
        const auto& w = windows.at(indices[i]);
        if (w.sample.pose.frames() != b.time || w.sample.audio.frames() != b.time || w.phi.cols() != b.time)
            throw ShapeError("make_batch: windows differ in length");
        b.audio.middleCols(i * T, T) = w.sample.audio.mel;
        b.pose.middleCols(i * T, T) = w.sample.pose.coords;
        b.phi.middleCols(i * T, T) = w.phi;
        b.speakers.push_back(w.sample.speaker.id);
    }
    return b;
}

// ------------------------------------------------------------ TrainState

namespace {

nn::Adam make_adam(nn::ParamList p) { return nn::Adam(std::move(p), nn::Adam::Options{}); }

std::string rng_text(const nn::Rng& rng) {
    std::ostringstream s;
    s << rng;
    return s.str();
}

}  // namespace

TrainState::TrainState(const ArchitectureConfig& arch, const TrainConfig& cfg)
    : best_dev_loss(std::numeric_limits<double>::infinity()),
      rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL),
      model_(std::make_unique<MixStageModel>(arch, cfg.seed)),
      gen_opt_(make_adam(model_->generator_params())),
      disc_opt_(make_adam(model_->discriminator_params())) {
    validate(cfg, arch);
}

TrainState::TrainState(const Checkpoint& ckpt, const TrainConfig& cfg)
    : iteration(ckpt.iteration),
      best_dev_loss(ckpt.best_dev_loss),
      model_(model_from_checkpoint(ckpt)),
      gen_opt_(make_adam(model_->generator_params())),
      disc_opt_(make_adam(model_->discriminator_params())) {
    if (cfg.M != ckpt.arch.M)
        throw ArchMismatchError("checkpoint has M=" + std::to_string(ckpt.arch.M) + " but config asks for M=" +
                                std::to_string(cfg.M));
    restore_optimizer(ckpt.gen_optimizer, gen_opt_);
    restore_optimizer(ckpt.disc_optimizer, disc_opt_);
    if (ckpt.rng_state.empty()) {
        rng.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    } else {
        std::istringstream s(ckpt.rng_state);
        s >> rng;
        if (!s) throw FormatError("<checkpoint>", 0, "unreadable RNG state");
    }
}

// ------------------------------------------------------------- the pass

namespace {

Seq style_sequence(const Mat& table, const std::vector<int>& speakers, int time) {
    Mat v(table.cols(), static_cast<Eigen::Index>(speakers.size()));
    for (std::size_t b = 0; b < speakers.size(); ++b) v.col(b) = table.row(speakers[b]).transpose();
    return nn::broadcast_time(v, time);
}

void accumulate_style_grad(const Seq& ds, const std::vector<int>& speakers, Mat& table_grad) {
    const Mat per_sample = nn::broadcast_time_backward(ds);
    for (std::size_t b = 0; b < speakers.size(); ++b) table_grad.row(speakers[b]) += per_sample.col(b).transpose();
}

Eigen::MatrixXd as_double(const Mat& m) { return m.cast<double>(); }

Mat doubled(const Mat& phi) {
    Mat out(phi.rows(), 2 * phi.cols());
    out << phi, phi;
    return out;
}

std::vector<bool> active_modes(const Mat& phi) {
    std::vector<bool> on(phi.rows());
    for (Eigen::Index m = 0; m < phi.rows(); ++m) on[m] = (phi.row(m).array() != 0.0f).any();
    return on;
}

Mat sigmoid_backward(const Eigen::VectorXd& dscore, const Mat& score) {
    Mat g(1, score.cols());
    for (Eigen::Index i = 0; i < score.cols(); ++i) g(0, i) = static_cast<float>(dscore(i)) * score(0, i) * (1.0f - score(0, i));
    return g;
}

Eigen::VectorXd row_vector(const Mat& m) { return m.row(0).transpose().cast<double>(); }

void check_batch(const MixStageModel& model, const Batch& b) {
    const auto& a = model.arch();
    if (b.audio.rows() != a.F || b.pose.rows() != 2 * a.J || b.phi.rows() != a.M)
        throw ShapeError("batch channels do not match the architecture");
    if (b.time % (1 << a.unet_depth) != 0 || b.time % 4 != 0)
        throw ShapeError("batch window length must be a multiple of 2^unet_depth and of 4");
    for (int s : b.speakers)
        if (s < 0 || s >= a.N) throw RangeError("batch speaker id " + std::to_string(s) + " outside the style table");
}

void finish(LossReport& r, double lambda_id) {
    r.lambda_id = lambda_id;
    r.total = total_loss(r);
}

}  // namespace

LossReport evaluate(const MixStageModel& model, const Batch& b, const TrainConfig& cfg) {
    check_batch(model, b);
    const int B = b.size, T = b.time;
    const Seq xa(b.audio, B, T), yp(b.pose, B, T);
    const Seq s = style_sequence(model.style_table.value, b.speakers, T);
    const Seq z = nn::concat_batch(nn::concat_channels(model.pose_encoder.infer(yp), s),
                                   nn::concat_channels(model.audio_encoder.infer(xa), s));
    const Mat phi2 = doubled(b.phi);

    LossReport r;
    r.mix = loss_mix_logits(as_double(phi2), as_double(model.prior_net.infer(z).data)).value;

    const Seq u = model.trunk.infer(z);
    const auto on = active_modes(phi2);
    Seq yhat = Seq::zeros(2 * model.arch().J, 2 * B, T);
    for (int m = 0; m < model.arch().M; ++m)
        if (on[m]) yhat.data += model.sub_generators[m].infer(u).data * phi2.row(m).asDiagonal();
    const auto [pp, ap] = nn::split_batch(yhat, B);
    r.joint = loss_l1(as_double(b.pose), as_double(pp.data));
    r.rec = loss_l1(as_double(b.pose), as_double(ap.data));

    const Mat sl = model.style_encoder.infer(nn::concat_batch(yp, ap));
    r.id = loss_id_batch(as_double(sl.leftCols(B)), as_double(sl.rightCols(B)), b.speakers).value;

    const Mat d_real = nn::sigmoid(model.discriminator.infer(yp).data);
    const Mat d_fake = nn::sigmoid(model.discriminator.infer(ap).data);
    const AdvLoss adv = loss_adv(row_vector(d_real), row_vector(d_fake), cfg.adv_saturating);
    r.adv_d = adv.adv_d;
    r.adv_g = adv.adv_g;
    finish(r, cfg.lambda_id);
    return r;
}

LossReport evaluate_windows(const MixStageModel& model, const std::vector<TrainWindow>& windows, const TrainConfig& cfg) {
    if (windows.empty()) throw InsufficientDataError("evaluate_windows: no windows");
    LossReport acc;
    const std::size_t step = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < windows.size(); start += step) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(windows.size(), start + step); ++i) idx.push_back(i);
        const LossReport r = evaluate(model, make_batch(windows, idx), cfg);
        const double w = static_cast<double>(idx.size()) / static_cast<double>(windows.size());
        acc.mix += w * r.mix;
        acc.joint += w * r.joint;
        acc.rec += w * r.rec;
        acc.id += w * r.id;
        acc.adv_g += w * r.adv_g;
        acc.adv_d += w * r.adv_d;
    }
    finish(acc, cfg.lambda_id);
    return acc;
}

LossReport compute_gradients(TrainState& state, const Batch& b, const TrainConfig& cfg) {
    MixStageModel& model = state.model();
    check_batch(model, b);
    const auto& arch = model.arch();
    const int B = b.size, T = b.time, C = arch.content_dim;
    const double lr = scheduled_lr(cfg, state.iteration);
    state.gen_optimizer().zero_grad();
    state.disc_optimizer().zero_grad();

    // Generator forward on [Z_pp ; Z_ap].
    const Seq xa(b.audio, B, T), yp(b.pose, B, T);
    const Seq s = style_sequence(model.style_table.value, b.speakers, T);
    const Seq z = nn::concat_batch(nn::concat_channels(model.pose_encoder.forward(yp), s),
                                   nn::concat_channels(model.audio_encoder.forward(xa), s));
    const Mat phi2 = doubled(b.phi);

    LossReport r;
    const LossGrad mix = loss_mix_logits(as_double(phi2), as_double(model.prior_net.forward(z).data));
    r.mix = mix.value;

    const Seq u = model.trunk.forward(z);
    const auto on = active_modes(phi2);
    Seq yhat = Seq::zeros(2 * arch.J, 2 * B, T);
    for (int m = 0; m < arch.M; ++m)
        if (on[m]) yhat.data += model.sub_generators[m].forward(u).data * phi2.row(m).asDiagonal();
    const auto [pp, ap] = nn::split_batch(yhat, B);
    const LossGrad joint = loss_l1_grad(as_double(b.pose), as_double(pp.data));
    const LossGrad rec = loss_l1_grad(as_double(b.pose), as_double(ap.data));
    r.joint = joint.value;
    r.rec = rec.value;
    if (!std::isfinite(r.mix) || !std::isfinite(r.joint) || !std::isfinite(r.rec))
        throw NonFiniteLossError("non-finite generator loss at iteration " + std::to_string(state.iteration) +
                                 ": mix=" + std::to_string(r.mix) + " joint=" + std::to_string(r.joint) +
                                 " rec=" + std::to_string(r.rec));

    // Discriminator ascent on real vs. detached fake.
    {
        const Mat scores = nn::sigmoid(model.discriminator.forward(nn::concat_batch(yp, ap)).data);
        const Eigen::Index half = scores.cols() / 2;
        const AdvLoss adv = loss_adv(row_vector(scores.leftCols(half)), row_vector(scores.rightCols(half)), cfg.adv_saturating);
        r.adv_d = adv.adv_d;
        if (!std::isfinite(r.adv_d))
            throw NonFiniteLossError("non-finite discriminator loss at iteration " + std::to_string(state.iteration));
        Mat g(1, scores.cols());
        g << sigmoid_backward(adv.grad_d_real, scores.leftCols(half)), sigmoid_backward(adv.grad_d_fake, scores.rightCols(half));
        model.discriminator.backward(Seq(g, 2 * B, T / 4));
        state.disc_optimizer().step(lr);
        state.disc_optimizer().zero_grad();
    }

    // Generator-side adversarial term against the updated discriminator.
    Seq d_ap(Mat::Zero(2 * arch.J, B * T), B, T);
    {
        const Mat fake = nn::sigmoid(model.discriminator.forward(ap).data);
        const Eigen::VectorXd ones = Eigen::VectorXd::Constant(fake.cols(), 0.5);
        const AdvLoss adv = loss_adv(ones, row_vector(fake), cfg.adv_saturating);
        r.adv_g = adv.adv_g;
        d_ap.data += model.discriminator.backward(Seq(sigmoid_backward(adv.grad_g_fake, fake), B, T / 4)).data;
        state.disc_optimizer().zero_grad();
    }

    // Style consistency on real and generated poses.
    {
        const Mat sl = model.style_encoder.forward(nn::concat_batch(yp, ap));
        const IdLoss id = loss_id_batch(as_double(sl.leftCols(B)), as_double(sl.rightCols(B)), b.speakers);
        r.id = id.value;
        Mat g(sl.rows(), sl.cols());
        g << (cfg.lambda_id * id.grad_real).cast<float>(), (cfg.lambda_id * id.grad_gen).cast<float>();
        const Seq dx = model.style_encoder.backward(g);
        d_ap.data += nn::split_batch(dx, B).second.data;
    }
    finish(r, cfg.lambda_id);
    if (!r.finite())
        throw NonFiniteLossError("non-finite loss at iteration " + std::to_string(state.iteration) + ": " +
                                 loss_log_row(state.iteration, r));

    // Backward through the generator.
    Seq dyhat = nn::concat_batch(Seq(joint.grad.cast<float>(), B, T), Seq(Mat(rec.grad.cast<float>() + d_ap.data), B, T));
    Seq du = Seq::zeros(u.channels(), 2 * B, T);
    for (int m = 0; m < arch.M; ++m) {
        if (!on[m]) continue;
        const Seq gm(dyhat.data * phi2.row(m).asDiagonal(), 2 * B, T);
        du.data += model.sub_generators[m].backward(gm).data;
    }
    Seq dz = model.trunk.backward(du);
    dz.data += model.prior_net.backward(Seq(mix.grad.cast<float>(), 2 * B, T)).data;

    const auto [dz_pp, dz_ap] = nn::split_batch(dz, B);
    const auto [dc_p, ds_p] = nn::split_channels(dz_pp, C);
    const auto [dc_a, ds_a] = nn::split_channels(dz_ap, C);
    model.pose_encoder.backward(dc_p);
    model.audio_encoder.backward(dc_a);
    accumulate_style_grad(ds_p, b.speakers, model.style_table.grad);
    accumulate_style_grad(ds_a, b.speakers, model.style_table.grad);
    return r;
}

LossReport train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg) {
    const LossReport r = compute_gradients(state, batch, cfg);
    state.gen_optimizer().step(scheduled_lr(cfg, state.iteration));
    ++state.iteration;
    return r;
}

std::vector<std::size_t> sample_batch(TrainState& state, std::size_t n_windows, int batch_size) {
    if (n_windows == 0) throw InsufficientDataError("no training windows");
    std::uniform_int_distribution<std::size_t> pick(0, n_windows - 1);
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch_size));
    for (auto& i : idx) i = pick(state.rng);
    return idx;
}

Checkpoint make_checkpoint(TrainState& state, const ModeModel* modes, double dev_loss) {
    MixStageModel& model = state.model();
    if (!model.style_table.value.allFinite()) throw NonFiniteLossError("style table has non-finite rows");
    Checkpoint c;
    c.arch = model.arch();
    c.iteration = state.iteration;
    c.dev_loss = dev_loss;
    c.best_dev_loss = state.best_dev_loss;
    c.tensors = capture_tensors(model);
    c.gen_optimizer = capture_optimizer(state.gen_optimizer());
    c.disc_optimizer = capture_optimizer(state.disc_optimizer());
    c.rng_state = rng_text(state.rng);
    if (modes) c.modes = *modes;
    return c;
}

// ------------------------------------------------------------------- fit

namespace {

int stride_of(const TrainConfig& cfg, const ArchitectureConfig& arch) {
    return cfg.window_stride > 0 ? cfg.window_stride : std::max(1, arch.window_T / 2);
}

std::string checkpoint_name(long iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%08ld.mxk", iteration);
    return buf;
}

FitResult run(TrainState& state, const TrainConfig& cfg, const Dataset& train, const Dataset& dev, const ModeModel& modes,
              const std::string& out_dir, bool fresh) {
    const ArchitectureConfig arch = state.model().arch();
    validate(cfg, arch);
    if (modes.modes() != arch.M || modes.dim() != 2 * arch.J)
        throw ArchMismatchError("mode model is " + std::to_string(modes.modes()) + " modes x " + std::to_string(modes.dim()) +
                                " dims, architecture needs " + std::to_string(arch.M) + " x " + std::to_string(2 * arch.J));
    const auto train_windows = prepare_windows(train, modes, arch.window_T, stride_of(cfg, arch));
    const auto dev_windows = prepare_windows(dev, modes, arch.window_T, arch.window_T);
    if (train_windows.empty()) throw InsufficientDataError("training set yields no windows of " + std::to_string(arch.window_T) + " frames");
    if (dev_windows.empty()) throw InsufficientDataError("dev set yields no windows of " + std::to_string(arch.window_T) + " frames");

    std::ofstream log;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const fs::path log_path = fs::path(out_dir) / "train_log.csv";
        const bool have_log = !fresh && fs::exists(log_path);
        log.open(log_path, have_log ? std::ios::app : std::ios::trunc);
        if (!log) throw Error("cannot open training log " + log_path.string());
        if (!have_log) log << loss_log_header() << '\n';
    }
    auto write = [&](const Checkpoint& c, const std::string& name) {
        if (!out_dir.empty()) save_checkpoint(c, (fs::path(out_dir) / name).string());
    };

    FitResult res;
    if (fresh && cfg.iterations == 0) {
        const double dev_loss = evaluate_windows(state.model(), dev_windows, cfg).total;
        state.best_dev_loss = dev_loss;
        res.best = res.last = make_checkpoint(state, &modes, dev_loss);
        res.dev_losses.push_back(dev_loss);
        write(res.best, "best.mxk");
        return res;
    }

    bool have_best = false;
    if (!fresh) {
        const fs::path best_path = fs::path(out_dir) / "best.mxk";
        if (!out_dir.empty() && fs::exists(best_path)) {
            res.best = load_checkpoint(best_path.string());
            have_best = true;
        }
    }
    if (state.iteration >= cfg.iterations) {
        res.last = make_checkpoint(state, &modes, state.best_dev_loss);
        if (!have_best) res.best = res.last;
        return res;
    }

    while (state.iteration < cfg.iterations) {
        const auto idx = sample_batch(state, train_windows.size(), cfg.batch_size);
        const LossReport r = train_step(state, make_batch(train_windows, idx), cfg);
        res.log.push_back(r);
        if (log) log << loss_log_row(state.iteration, r) << '\n';
        if (state.iteration % cfg.log_every == 0)
            spdlog::info("iter {} total {:.4f} (mix {:.4f} joint {:.4f} rec {:.4f} id {:.4f} adv_g {:.4f} adv_d {:.4f})",
                         state.iteration, r.total, r.mix, r.joint, r.rec, r.id, r.adv_g, r.adv_d);
        if (state.iteration % cfg.checkpoint_every == 0) {
            const double dev_loss = evaluate_windows(state.model(), dev_windows, cfg).total;
            const bool better = dev_loss < state.best_dev_loss;
            if (better) state.best_dev_loss = dev_loss;
            Checkpoint c = make_checkpoint(state, &modes, dev_loss);
            write(c, checkpoint_name(state.iteration));
            res.checkpoint_iterations.push_back(state.iteration);
            res.dev_losses.push_back(dev_loss);
            spdlog::info("checkpoint {} dev loss {:.5f}{}", state.iteration, dev_loss, better ? " (best)" : "");
            if (better || !have_best) {
                res.best = c;
                have_best = true;
                write(c, "best.mxk");
            }
            res.last = std::move(c);
        }
        if (log) log.flush();
    }
    return res;
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const ArchitectureConfig& arch, const Dataset& train, const Dataset& dev,
              const ModeModel& modes, const std::string& out_dir) {
    TrainState state(arch, cfg);
    return run(state, cfg, train, dev, modes, out_dir, true);
}

FitResult resume(const Checkpoint& ckpt, const TrainConfig& cfg, const Dataset& train, const Dataset& dev,
                 const ModeModel& modes, const std::string& out_dir) {
    TrainState state(ckpt, cfg);
    return run(state, cfg, train, dev, modes, out_dir, false);
}

}  // namespace mixstage
