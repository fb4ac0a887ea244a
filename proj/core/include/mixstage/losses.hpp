#pragma once

#include "mixstage/types.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <string>

namespace mixstage {

inline constexpr double kScoreClampEps = 1e-7;
inline constexpr double kDefaultLambdaId = 0.1;

/// Per-iteration breakdown of the objective. `total` is the generator-side sum.
struct LossReport {
    double mix = 0.0;
    double joint = 0.0;
    double rec = 0.0;
    double id = 0.0;
    double adv_g = 0.0;
    double adv_d = 0.0;
    double total = 0.0;
    double lambda_id = kDefaultLambdaId;

    bool finite() const;
};

/// mix + joint + rec + lambda_id * id + adv_g.
double total_loss(const LossReport& parts);

/// "iter,mix,joint,rec,id,adv_g,adv_d,total"
std::string loss_log_header();
std::string loss_log_row(long iteration, const LossReport& r);

/// A loss value and its gradient w.r.t. the differentiated input.
struct LossGrad {
    double value = 0.0;
    Eigen::MatrixXd grad;
};

// All matrices are column-per-frame (or column-per-sample): [classes, count].

/// Mean over columns of -log pred[argmax truth]. pred columns must be simplices.
double loss_mix(const Eigen::MatrixXd& phi_true, const Eigen::MatrixXd& phi_pred);
LossGrad loss_mix_grad(const Eigen::MatrixXd& phi_true, const Eigen::MatrixXd& phi_pred);
/// Same loss with H's softmax fused in; gradient is w.r.t. the logits.
LossGrad loss_mix_logits(const Eigen::MatrixXd& phi_true, const Eigen::MatrixXd& logits);

/// Mean absolute difference over every entry.
double loss_l1(const Eigen::MatrixXd& target, const Eigen::MatrixXd& generated);
double loss_l1(const PoseSequence& target, const PoseSequence& generated);
/// Gradient w.r.t. `generated` (subgradient 0 at ties).
LossGrad loss_l1_grad(const Eigen::MatrixXd& target, const Eigen::MatrixXd& generated);

/// Style consistency for one sequence pair: mean of CCE(softmax(real), id) and CCE(softmax(gen), id).
double loss_id(std::span<const double> logits_real, std::span<const double> logits_gen, SpeakerID id);

/// Batched style consistency. Columns of both logit matrices are samples.
/// grad_real / grad_gen are w.r.t. the logits.
struct IdLoss {
    double value = 0.0;
    Eigen::MatrixXd grad_real;
    Eigen::MatrixXd grad_gen;
};
IdLoss loss_id_batch(const Eigen::MatrixXd& logits_real, const Eigen::MatrixXd& logits_gen, std::span<const int> ids);

/// Discriminator / generator adversarial terms on realness scores in (0, 1).
/// Scores are clamped to [eps, 1 - eps] before the logs.
struct AdvLoss {
    double adv_d = 0.0;
    double adv_g = 0.0;
    Eigen::VectorXd grad_d_real;  ///< d adv_d / d real score
    Eigen::VectorXd grad_d_fake;  ///< d adv_d / d fake score
    Eigen::VectorXd grad_g_fake;  ///< d adv_g / d fake score
};
/// adv_d = -mean log D(real) - mean log(1 - D(fake)).
/// adv_g = -mean log D(fake) (non-saturating) or mean log(1 - D(fake)) when `saturating`.
AdvLoss loss_adv(const Eigen::VectorXd& d_real, const Eigen::VectorXd& d_fake, bool saturating = false);

}  // namespace mixstage
