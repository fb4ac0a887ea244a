#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mixstage {

inline constexpr double kPoseFps = 15.0;
inline constexpr int kPatsJoints = 26;

/// 2D keypoint sequence. Stored frame-major: column t holds the J (x, y)
/// pairs of frame t, so `coords` is [2J, T] and a frame is contiguous.
struct PoseSequence {
    Eigen::MatrixXf coords;
    double fps = kPoseFps;

    PoseSequence() = default;
    PoseSequence(int frames, int joints) : coords(Eigen::MatrixXf::Zero(2 * joints, frames)) {}
    explicit PoseSequence(Eigen::MatrixXf c, double rate = kPoseFps) : coords(std::move(c)), fps(rate) {}

    int frames() const { return static_cast<int>(coords.cols()); }
    int joints() const { return static_cast<int>(coords.rows() / 2); }

    float& x(int t, int j) { return coords(2 * j, t); }
    float& y(int t, int j) { return coords(2 * j + 1, t); }
    float x(int t, int j) const { return coords(2 * j, t); }
    float y(int t, int j) const { return coords(2 * j + 1, t); }

    bool operator==(const PoseSequence& o) const {
        return fps == o.fps && coords.rows() == o.coords.rows() && coords.cols() == o.coords.cols() &&
               coords == o.coords;
    }
};

/// Log-mel features [F, T], one column per pose frame.
struct AudioFeatures {
    Eigen::MatrixXf mel;
    int sample_rate_hz = 16000;

    int frames() const { return static_cast<int>(mel.cols()); }
    int bins() const { return static_cast<int>(mel.rows()); }

    bool operator==(const AudioFeatures& o) const {
        return sample_rate_hz == o.sample_rate_hz && mel.rows() == o.mel.rows() && mel.cols() == o.mel.cols() &&
               mel == o.mel;
    }
};

struct SpeakerID {
    int id = 0;
    bool operator==(const SpeakerID&) const = default;
};

struct Sample {
    AudioFeatures audio;
    PoseSequence pose;
    SpeakerID speaker;
    std::string interval_id;

    bool operator==(const Sample&) const = default;
};

struct ArchitectureConfig {
    int M = 4;             ///< sub-generators / pose modes
    int N = 2;             ///< speakers (rows of the style table)
    int D = 8;             ///< style embedding length
    int J = kPatsJoints;   ///< joints per frame
    int F = 64;            ///< mel bins
    int content_dim = 64;  ///< content latent channels
    int hidden = 64;       ///< generator / encoder hidden width
    int window_T = 64;     ///< training window length in frames
    int unet_depth = 3;

    bool operator==(const ArchitectureConfig&) const = default;
};

/// Throws InvalidArgument listing the first offending field.
void validate(const ArchitectureConfig& arch);

enum class Violation {
    kEmptyPose,
    kTooFewJoints,
    kNonFinitePose,
    kNonFiniteAudio,
    kLengthMismatch,
    kBadFps,
    kBadSampleRate,
    kNegativeSpeaker,
};

std::string_view to_string(Violation v);

/// Every invariant a Sample breaks; empty when the sample is valid. Never throws.
std::vector<Violation> validate_sample(const Sample& s);

/// Unit basis vector e_id of length n. Throws RangeError when id is outside [0, n).
Eigen::VectorXf one_hot(SpeakerID id, int n);

/// Joint topology needed by normalization, rendering and the heatmap.
struct Skeleton {
    int joints = 0;
    int root = 0;
    int right_shoulder = 1;
    int left_shoulder = 2;
    std::vector<std::pair<int, int>> edges;
    std::vector<std::pair<int, int>> right_arm;  ///< edges belonging to the right arm
    std::vector<std::pair<int, int>> left_arm;

    /// Upper-body layout used by the synthetic generator:
    /// 0 neck (root), 1 nose, 2 r-shoulder, 3 r-elbow, 4 r-wrist,
    /// 5 l-shoulder, 6 l-elbow, 7 l-wrist; joints 8.. alternate between
    /// right and left hand tips hanging off the wrists.
    static Skeleton upper_body(int joints);

    void check() const;
};

}  // namespace mixstage
