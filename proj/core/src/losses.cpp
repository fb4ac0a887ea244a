#include "mixstage/losses.hpp"

#include "mixstage/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mixstage {

namespace {

Eigen::Index argmax(const Eigen::MatrixXd& m, Eigen::Index col) {
    Eigen::Index best = 0;
    m.col(col).maxCoeff(&best);
    return best;
}

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(who) + ": shape mismatch");
    if (a.cols() == 0) throw ShapeError(std::string(who) + ": empty input");
}

void require_simplex(const Eigen::MatrixXd& p, const char* who) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        if ((p.col(c).array() < 0.0).any() || !p.col(c).allFinite() || std::abs(p.col(c).sum() - 1.0) > 1e-6)
            throw InvalidArgument(std::string(who) + ": column " + std::to_string(c) + " is not a probability simplex");
    }
}

Eigen::VectorXd log_softmax(std::span<const double> logits) {
    const Eigen::Map<const Eigen::VectorXd> l(logits.data(), static_cast<Eigen::Index>(logits.size()));
    const double mx = l.maxCoeff();
    const double lse = mx + std::log((l.array() - mx).exp().sum());
    return l.array() - lse;
}

Eigen::MatrixXd softmax_cols(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double mx = logits.col(c).maxCoeff();
        p.col(c) = (logits.col(c).array() - mx).exp();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

double clamp_score(double s) { return std::clamp(s, kScoreClampEps, 1.0 - kScoreClampEps); }

// d/ds of log(clamp(s)): zero where the clamp is active.
double dlog_clamped(double s) { return (s > kScoreClampEps && s < 1.0 - kScoreClampEps) ? 1.0 / s : 0.0; }

}  // namespace

bool LossReport::finite() const {
    for (double v : {mix, joint, rec, id, adv_g, adv_d, total})
        if (!std::isfinite(v)) return false;
    return true;
}

double total_loss(const LossReport& p) { return p.mix + p.joint + p.rec + p.lambda_id * p.id + p.adv_g; }

std::string loss_log_header() { return "iter,mix,joint,rec,id,adv_g,adv_d,total"; }

std::string loss_log_row(long iteration, const LossReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", iteration, r.mix, r.joint, r.rec, r.id,
                  r.adv_g, r.adv_d, r.total);
    return buf;
}

double loss_mix(const Eigen::MatrixXd& phi_true, const Eigen::MatrixXd& phi_pred) {
    return loss_mix_grad(phi_true, phi_pred).value;
}

LossGrad loss_mix_grad(const Eigen::MatrixXd& phi_true, const Eigen::MatrixXd& phi_pred) {
    require_same_shape(phi_true, phi_pred, "loss_mix");
    require_simplex(phi_pred, "loss_mix");
    const double n = static_cast<double>(phi_pred.cols());
    LossGrad out{0.0, Eigen::MatrixXd::Zero(phi_pred.rows(), phi_pred.cols())};
    for (Eigen::Index c = 0; c < phi_pred.cols(); ++c) {
        const Eigen::Index k = argmax(phi_true, c);
        const double p = phi_pred(k, c);
        out.value -= std::log(p) / n;
        out.grad(k, c) = -1.0 / (p * n);
    }
    return out;
}

LossGrad loss_mix_logits(const Eigen::MatrixXd& phi_true, const Eigen::MatrixXd& logits) {
    require_same_shape(phi_true, logits, "loss_mix");
    const double n = static_cast<double>(logits.cols());
    LossGrad out{0.0, softmax_cols(logits)};
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const Eigen::Index k = argmax(phi_true, c);
        const double* col = logits.col(c).data();
        out.value -= log_softmax({col, static_cast<std::size_t>(logits.rows())})(k) / n;
        out.grad(k, c) -= 1.0;
    }
    out.grad /= n;
    return out;
}

double loss_l1(const Eigen::MatrixXd& target, const Eigen::MatrixXd& generated) {
    require_same_shape(target, generated, "loss_l1");
    return (target - generated).cwiseAbs().mean();
}

double loss_l1(const PoseSequence& target, const PoseSequence& generated) {
    return loss_l1(Eigen::MatrixXd(target.coords.cast<double>()), Eigen::MatrixXd(generated.coords.cast<double>()));
}

LossGrad loss_l1_grad(const Eigen::MatrixXd& target, const Eigen::MatrixXd& generated) {
    require_same_shape(target, generated, "loss_l1");
    const Eigen::MatrixXd diff = generated - target;
    const double n = static_cast<double>(diff.size());
    return {diff.cwiseAbs().mean(), diff.unaryExpr([n](double d) { return d > 0 ? 1.0 / n : (d < 0 ? -1.0 / n : 0.0); })};
}

double loss_id(std::span<const double> logits_real, std::span<const double> logits_gen, SpeakerID id) {
    if (logits_real.size() != logits_gen.size() || logits_real.empty()) throw ShapeError("loss_id: logits length mismatch");
    if (id.id < 0 || id.id >= static_cast<int>(logits_real.size())) throw RangeError("loss_id: speaker id out of range");
    return -0.5 * (log_softmax(logits_real)(id.id) + log_softmax(logits_gen)(id.id));
}

IdLoss loss_id_batch(const Eigen::MatrixXd& logits_real, const Eigen::MatrixXd& logits_gen, std::span<const int> ids) {
    require_same_shape(logits_real, logits_gen, "loss_id");
    if (static_cast<std::size_t>(logits_real.cols()) != ids.size()) throw ShapeError("loss_id: one id per column required");
    const double n = static_cast<double>(ids.size());
    IdLoss out{0.0, softmax_cols(logits_real), softmax_cols(logits_gen)};
    for (Eigen::Index c = 0; c < logits_real.cols(); ++c) {
        const int k = ids[c];
        if (k < 0 || k >= logits_real.rows()) throw RangeError("loss_id: speaker id out of range");
        out.value += loss_id({logits_real.col(c).data(), static_cast<std::size_t>(logits_real.rows())},
                             {logits_gen.col(c).data(), static_cast<std::size_t>(logits_gen.rows())}, {k}) /
                     n;
        out.grad_real(k, c) -= 1.0;
        out.grad_gen(k, c) -= 1.0;
    }
    out.grad_real /= 2.0 * n;
    out.grad_gen /= 2.0 * n;
    return out;
}

AdvLoss loss_adv(const Eigen::VectorXd& d_real, const Eigen::VectorXd& d_fake, bool saturating) {
    if (d_real.size() == 0 || d_fake.size() == 0) throw ShapeError("loss_adv: empty scores");
    const double nr = static_cast<double>(d_real.size());
    const double nf = static_cast<double>(d_fake.size());
    AdvLoss out;
    out.grad_d_real.resize(d_real.size());
    out.grad_d_fake.resize(d_fake.size());
    out.grad_g_fake.resize(d_fake.size());
    for (Eigen::Index i = 0; i < d_real.size(); ++i) {
        out.adv_d -= std::log(clamp_score(d_real(i))) / nr;
        out.grad_d_real(i) = -dlog_clamped(d_real(i)) / nr;
    }
    for (Eigen::Index i = 0; i < d_fake.size(); ++i) {
        const double s = d_fake(i);
        const double one_minus = 1.0 - s;
        // log(1 - clamp(s)) has the same active region as log(clamp(1 - s)).
        out.adv_d -= std::log(clamp_score(one_minus)) / nf;
        out.grad_d_fake(i) = dlog_clamped(one_minus) / nf;
        if (saturating) {
            out.adv_g += std::log(clamp_score(one_minus)) / nf;
            out.grad_g_fake(i) = -dlog_clamped(one_minus) / nf;
        } else {
            out.adv_g -= std::log(clamp_score(s)) / nf;
            out.grad_g_fake(i) = -dlog_clamped(s) / nf;
        }
    }
    return out;
}

}  // namespace mixstage
