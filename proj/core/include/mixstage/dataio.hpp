#pragma once

#include "mixstage/audio.hpp"
#include "mixstage/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mixstage {

enum class Split { kTrain, kDev, kTest, kAll };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> speakers;  ///< index = SpeakerID::id
    Split split = Split::kAll;
    std::size_t rejected = 0;  ///< intervals dropped at load because of non-finite payloads

    bool operator==(const Dataset& o) const {
        return samples == o.samples && speakers == o.speakers && split == o.split;
    }
};

double mean_shoulder_length(const PoseSequence& p, const Skeleton& sk);

/// Uniform scaling about each frame's root joint so the mean shoulder length
/// equals `target`. Throws DegeneratePoseError on zero shoulder length.
PoseSequence normalize_pose(const PoseSequence& p, const Skeleton& sk, double target_shoulder);

/// Windows of `window` frames every `stride` frames, ids suffixed with "@start".
/// Returns an empty list when the sample is shorter than one window.
std::vector<Sample> make_windows(const Sample& s, int window, int stride);

/// Split ratios 80/10/10 by interval id with a seeded shuffle, stratified per speaker.
std::vector<Sample> select_split(const std::vector<Sample>& samples, int n_speakers, Split split, std::uint64_t seed);

// ------------------------------------------------------------- binary files

std::string encode_pose(const PoseSequence& p);
PoseSequence decode_pose(const std::string& bytes, const std::string& origin);
std::string encode_audio(const AudioFeatures& a);
AudioFeatures decode_audio(const std::string& bytes, const std::string& origin);
void save_pose(const PoseSequence& p, const std::string& path);
PoseSequence load_pose(const std::string& path);
void save_audio(const AudioFeatures& a, const std::string& path);
AudioFeatures load_audio(const std::string& path);

/// Writes intervals.csv plus pose/<id>.mxp and audio/<id>.mxa under root.
void save_dataset(const Dataset& d, const std::string& root);

/// Reads the intervals of `speakers` (all speakers, in file order, when empty);
/// speaker ids follow the order of `speakers`. Unknown speakers throw
/// InvalidArgument; malformed files throw FormatError; intervals with
/// non-finite values are skipped and counted in `rejected`.
Dataset load_dataset(const std::string& root, const std::vector<std::string>& speakers, Split split,
                     std::uint64_t split_seed = 0);

// -------------------------------------------------------------- synthetic

struct SynthConfig {
    int n_speakers = 2;
    int modes_per_speaker = 2;
    int n_intervals = 24;  ///< per speaker
    int T = 128;           ///< frames per interval
    int J = 10;
    int F = 64;
    std::uint64_t seed = 7;
    double jitter = 0.01;            ///< std-dev of Gaussian noise added to every coordinate
    double motion_amplitude = 0.25;  ///< peak audio-driven displacement of the moving joints
    double mode_separation = 0.9;    ///< minimum distance between any two rest modes
    int sample_rate = 16000;
    int min_segment = 10;  ///< frames per audio segment, inclusive bounds
    int max_segment = 30;
    /// Probability that a segment's pose mode differs from its audio class; the
    /// replacement is drawn uniformly from the speaker's other modes.
    double mode_ambiguity = 0.0;
    /// Each rest mode shifts only its own joint group (right elbow, right hand,
    /// left elbow, left hand) away from a shared base pose; at most 4 modes per speaker.
    bool disjoint_modes = false;
};

void validate(const SynthConfig& cfg);

/// Audio-to-motion rule of one synthetic speaker.
struct SynthSpeakerRule {
    int band_lo = 0, band_hi = 0;  ///< mel bins averaged to obtain the drive signal
    double drive_mean = 0.0, drive_scale = 1.0;
    std::vector<int> moving_joints;
    Eigen::MatrixXf directions;  ///< [2, moving_joints.size()] displacement at unit drive
    std::vector<Eigen::VectorXf> rest_modes;  ///< one flattened [2J] pose per private mode
};

struct SynthDataset {
    Dataset dataset;
    Skeleton skeleton;
    std::vector<SynthSpeakerRule> rules;
    /// Generating mode per frame of each sample, global id speaker * modes_per_speaker + class.
    std::vector<std::vector<int>> mode_labels;
    int total_modes = 0;
};

/// Pose implied by the speaker's rule for the given features and per-frame mode classes (no jitter).
PoseSequence apply_synth_rule(const SynthSpeakerRule& rule, const AudioFeatures& audio, const std::vector<int>& classes,
                              int joints);

/// Deterministic multi-speaker dataset: segment classes pick band-limited
/// noise and the speaker's private rest mode; each speaker's loudness in its
/// private mel band drives its own joint group.
SynthDataset synth_multispeaker(const SynthConfig& cfg);

/// Every mode of every speaker, [2J, total_modes], root-centered.
Eigen::MatrixXd synth_mode_centers(const SynthDataset& d);

}  // namespace mixstage
