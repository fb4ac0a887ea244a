#pragma once

#include "mixstage/nn.hpp"
#include "mixstage/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mixstage {

/// Content latent concatenated with the style vector broadcast over time:
/// rows [0, content_dim) are content, the remaining D rows are style.
struct LatentSequence {
    Eigen::MatrixXf z;  ///< [content_dim + D, T]
    int content_dim = 0;

    int frames() const { return static_cast<int>(z.cols()); }
};

/// 1D U-Net: stride-2 downsampling convolutions, nearest upsampling with
/// additive skips, every stage a conv + batch-norm + ReLU block.
class UNet1d {
public:
    UNet1d() = default;
    UNet1d(int in, int width, int depth, nn::Rng& rng);

    nn::Seq forward(const nn::Seq& x);
    nn::Seq infer(const nn::Seq& x) const;
    nn::Seq backward(const nn::Seq& dy);
    void collect(const std::string& prefix, nn::ParamList& out);

    int depth() const { return static_cast<int>(downs_.size()); }

private:
    nn::ConvBlock in_;
    std::vector<nn::ConvBlock> downs_;
    nn::ConvBlock bottleneck_;
    std::vector<nn::ConvBlock> ups_;  ///< ups_[i] restores the resolution of level i
};

/// Temporal conv stack -> mean pool over time -> linear head.
class SequenceClassifier {
public:
    SequenceClassifier() = default;
    SequenceClassifier(nn::Stack body, int width, int classes, nn::Rng& rng);

    nn::Mat forward(const nn::Seq& x);  ///< logits [classes, batch]
    nn::Mat infer(const nn::Seq& x) const;
    nn::Seq backward(const nn::Mat& dlogits);
    void collect(const std::string& prefix, nn::ParamList& out);

    int classes() const { return static_cast<int>(head_.bias.value.rows()); }

private:
    nn::Stack body_;
    nn::Linear head_;
    int time_ = 0;
};

/// Every learnable component of the gesture model.
///
/// Single-sequence operations below run in evaluation mode (batch-norm
/// running statistics) and are const; the trainer drives the batched
/// `forward`/`backward` methods of the public members directly.
class MixStageModel {
public:
    MixStageModel() = default;
    MixStageModel(const ArchitectureConfig& arch, std::uint64_t seed);

    const ArchitectureConfig& arch() const { return arch_; }

    Eigen::MatrixXf encode_audio_content(const AudioFeatures& a) const;  ///< [content_dim, T]
    Eigen::MatrixXf encode_pose_content(const PoseSequence& p) const;    ///< [content_dim, T]
    Eigen::VectorXf encode_style(const PoseSequence& p) const;           ///< logits [N]

    /// onehot(argmax(logits))^T S.
    Eigen::VectorXf style_lookup(std::span<const float> logits) const;
    /// weights^T S for caller-supplied simplex weights.
    Eigen::VectorXf style_mix(std::span<const float> weights) const;
    Eigen::VectorXf style_row(SpeakerID id) const;

    LatentSequence make_latent(const Eigen::MatrixXf& content, const Eigen::VectorXf& style) const;

    /// Frame-wise mixture sum_m phi[m, t] * G_m(z)[t]. phi is [M, T].
    PoseSequence generate(const LatentSequence& z, const Eigen::MatrixXf& phi) const;
    /// Outputs of all M sub-generators, each [2J, T].
    std::vector<Eigen::MatrixXf> sub_generator_outputs(const LatentSequence& z) const;
    /// Softmax of the prior network H, [M, T].
    Eigen::MatrixXf classify_priors(const LatentSequence& z) const;
    /// Realness scores in (0, 1), length T / 4.
    Eigen::VectorXf discriminate(const PoseSequence& p) const;

    // Components. Public so the trainer can run batched passes.
    nn::Stack audio_encoder;
    nn::Stack pose_encoder;
    SequenceClassifier style_encoder;
    nn::Param style_table;  ///< [N, D], row i = speaker i
    nn::Stack prior_net;
    UNet1d trunk;
    std::vector<nn::Stack> sub_generators;
    nn::Stack discriminator;

    /// Everything updated by the generator-side optimizer.
    nn::ParamList generator_params();
    nn::ParamList discriminator_params();
    /// Parameters of sub-generator m only.
    nn::ParamList sub_generator_params(int m);
    nn::ParamList style_encoder_params();
    /// All tensors and buffers with stable checkpoint names.
    nn::ParamList all_params();

private:
    void check_latent(const LatentSequence& z) const;

    ArchitectureConfig arch_;
};

/// Throws InvalidArgument unless every column of phi is non-negative and sums to 1 within tol.
void check_simplex_columns(const Eigen::MatrixXf& phi, double tol, const char* what);

/// Columnwise softmax.
Eigen::MatrixXf softmax_columns(const Eigen::MatrixXf& logits);

}  // namespace mixstage
