#pragma once

#include "mixstage/modes.hpp"
#include "mixstage/nets.hpp"
#include "mixstage/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mixstage {

struct NamedTensor {
    std::string name;
    Eigen::MatrixXf value;
};

struct AdamSlotRecord {
    std::string name;
    Eigen::MatrixXf m, v;
    std::int64_t steps = 0;
};

/// Serialized training snapshot. Tensors carry the model's stable names;
/// optimizer slots follow the optimizer's parameter order.
struct Checkpoint {
    ArchitectureConfig arch;
    std::int64_t iteration = 0;
    double dev_loss = 0.0;
    double best_dev_loss = 0.0;
    std::vector<NamedTensor> tensors;
    std::vector<AdamSlotRecord> gen_optimizer;
    std::vector<AdamSlotRecord> disc_optimizer;
    std::string rng_state;  ///< textual std::mt19937_64 state, empty if none
    std::optional<ModeModel> modes;
};

/// "MXK1" container; the trailing 32 bytes are the SHA-256 of everything before them.
std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Hex SHA-256 of the encoded payload.
std::string content_hash(const Checkpoint& c);

bool operator==(const Checkpoint& a, const Checkpoint& b);

/// Parameters and buffers of `model` under their stable names.
std::vector<NamedTensor> capture_tensors(MixStageModel& model);
/// Copies named tensors into `model`; ArchMismatchError on missing names or wrong shapes.
void restore_tensors(const std::vector<NamedTensor>& tensors, MixStageModel& model);

std::vector<AdamSlotRecord> capture_optimizer(const nn::Adam& opt);
void restore_optimizer(const std::vector<AdamSlotRecord>& slots, nn::Adam& opt);

/// Fresh model with the checkpoint's architecture and weights.
std::unique_ptr<MixStageModel> model_from_checkpoint(const Checkpoint& c);

/// Throws ArchMismatchError naming the first differing field.
void require_same_arch(const ArchitectureConfig& expected, const ArchitectureConfig& got);

}  // namespace mixstage
