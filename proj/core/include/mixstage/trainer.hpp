#pragma once

#include "mixstage/checkpoint.hpp"
#include "mixstage/dataio.hpp"
#include "mixstage/losses.hpp"
#include "mixstage/modes.hpp"
#include "mixstage/nets.hpp"
#include "mixstage/nn.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mixstage {

struct TrainConfig {
    long iterations = 60000;
    long checkpoint_every = 3000;
    double lr = 0.001;
    double lr_decay = 0.999;  ///< multiplicative factor applied every 100 iterations
    int batch_size = 32;
    double lambda_id = kDefaultLambdaId;
    std::uint64_t seed = 0;
    int M = 4;
    std::string device = "cpu";
    bool adv_saturating = false;
    int window_stride = 0;  ///< training window hop in frames; 0 means window_T / 2
    long log_every = 100;   ///< console progress interval
};

/// Throws InvalidArgument for non-positive values, a checkpoint period that
/// does not divide the iteration count, or M differing from the architecture.
void validate(const TrainConfig& cfg, const ArchitectureConfig& arch);

/// lr * lr_decay^(iteration / 100) with integer division.
double scheduled_lr(const TrainConfig& cfg, long iteration);

/// A fixed-length window with its per-frame one-hot prior.
struct TrainWindow {
    Sample sample;
    Eigen::MatrixXf phi;  ///< [M, T]
    std::vector<int> labels;
};

std::vector<TrainWindow> prepare_windows(const Dataset& d, const ModeModel& modes, int window, int stride);

/// Windows stacked along the batch axis in nn::Seq column order.
struct Batch {
    nn::Mat audio;  ///< [F, B * T]
    nn::Mat pose;   ///< [2J, B * T]
    nn::Mat phi;    ///< [M, B * T]
    std::vector<int> speakers;
    int size = 0;
    int time = 0;
};

Batch make_batch(const std::vector<TrainWindow>& windows, std::span<const std::size_t> indices);

/// Model, both optimizers, iteration counter and sampling RNG. Owned by one thread.
class TrainState {
public:
    TrainState(const ArchitectureConfig& arch, const TrainConfig& cfg);
    /// Restores a snapshot; ArchMismatchError when cfg.M disagrees with it.
    TrainState(const Checkpoint& ckpt, const TrainConfig& cfg);

    TrainState(const TrainState&) = delete;
    TrainState& operator=(const TrainState&) = delete;
    TrainState(TrainState&&) = default;
    TrainState& operator=(TrainState&&) = default;

    MixStageModel& model() { return *model_; }
    const MixStageModel& model() const { return *model_; }
    nn::Adam& gen_optimizer() { return gen_opt_; }
    nn::Adam& disc_optimizer() { return disc_opt_; }

    long iteration = 0;
    double best_dev_loss = 0.0;
    nn::Rng rng;

private:
    std::unique_ptr<MixStageModel> model_;
    nn::Adam gen_opt_, disc_opt_;
};

/// One discriminator ascent step on adv_d, followed by the generator-side
/// forward and backward pass. Generator gradients are left in place and no
/// generator parameter has been modified yet.
LossReport compute_gradients(TrainState& state, const Batch& batch, const TrainConfig& cfg);

/// compute_gradients, then the generator-side Adam step. Advances the iteration.
LossReport train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg);

/// Losses in evaluation mode, with unchanged parameters.
LossReport evaluate(const MixStageModel& model, const Batch& batch, const TrainConfig& cfg);
/// Size-weighted mean of evaluate over consecutive batches of the windows.
LossReport evaluate_windows(const MixStageModel& model, const std::vector<TrainWindow>& windows, const TrainConfig& cfg);

/// Draws batch_size window indices from the state's RNG.
std::vector<std::size_t> sample_batch(TrainState& state, std::size_t n_windows, int batch_size);

Checkpoint make_checkpoint(TrainState& state, const ModeModel* modes, double dev_loss);

struct FitResult {
    Checkpoint best;
    Checkpoint last;
    std::vector<long> checkpoint_iterations;
    std::vector<double> dev_losses;
    std::vector<LossReport> log;  ///< one report per iteration run in this call
};

/// Trains from scratch. With a non-empty out_dir, checkpoints go to
/// out_dir/ckpt_<iter>.mxk and out_dir/best.mxk and the per-iteration log to
/// out_dir/train_log.csv.
FitResult fit(const TrainConfig& cfg, const ArchitectureConfig& arch, const Dataset& train, const Dataset& dev,
              const ModeModel& modes, const std::string& out_dir = "");

/// Continues from `ckpt` up to cfg.iterations along the same trajectory an
/// uninterrupted run would take.
FitResult resume(const Checkpoint& ckpt, const TrainConfig& cfg, const Dataset& train, const Dataset& dev,
                 const ModeModel& modes, const std::string& out_dir = "");

}  // namespace mixstage
