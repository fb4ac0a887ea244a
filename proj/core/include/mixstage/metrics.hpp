#pragma once

#include "mixstage/dataio.hpp"
#include "mixstage/modes.hpp"
#include "mixstage/nets.hpp"
#include "mixstage/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mixstage {

inline constexpr double kDefaultPckAlphas[] = {0.1, 0.2};

/// Fraction of keypoints within alpha * max(bbox width, bbox height) of the
/// ground truth, averaged over frames and alphas. Frames whose ground-truth
/// box has zero extent are skipped; DegeneratePoseError if all are.
double pck(const PoseSequence& pred, const PoseSequence& gt, std::span<const double> alphas = kDefaultPckAlphas);

/// Per-frame correctness counts behind pck, for pooling across sequences.
struct PckTally {
    double correct = 0.0;  ///< summed over alphas
    double total = 0.0;
    int skipped_frames = 0;
    double value() const { return total > 0.0 ? correct / total : 0.0; }
};
PckTally pck_tally(const PoseSequence& pred, const PoseSequence& gt, std::span<const double> alphas = kDefaultPckAlphas);

/// Macro F1 over the classes present in either labelling.
double macro_f1(std::span<const int> truth, std::span<const int> pred);

/// Frame-wise nearest-centroid labels of both sequences, scored with macro_f1 (ground truth as truth).
double mode_f1(const PoseSequence& pred, const PoseSequence& gt, const ModeModel& model);

/// exp(mean_i KL(p_i || mean_j p_j)); columns of probs are per-sample conditionals.
double inception_score(const Eigen::MatrixXd& probs);

/// Temporal conv classifier from pose sequences to speakers.
class SpeakerClassifier {
public:
    SpeakerClassifier() = default;
    SpeakerClassifier(int joints, int speakers, int width, std::uint64_t seed);

    Eigen::VectorXd probabilities(const PoseSequence& p) const;
    /// [speakers, n]; sequences must share one length.
    Eigen::MatrixXd probabilities(const std::vector<PoseSequence>& ps) const;
    int predict(const PoseSequence& p) const;

    int speakers() const { return net.classes(); }
    int joints() const { return joints_; }

    SequenceClassifier net;

private:
    int joints_ = 0;
};

double inception_score(const SpeakerClassifier& clf, const std::vector<PoseSequence>& samples);

struct ClassifierTrainConfig {
    int iterations = 600;
    int batch_size = 16;
    double lr = 1e-3;
    int window = 64;
    int width = 32;
    double holdout_fraction = 0.2;  ///< intervals per speaker held out for the accuracy estimate
    std::uint64_t seed = 0;
    bool shuffle_labels = false;  ///< control run: labels drawn evenly within each speaker, independent of it
};

struct ClassifierFit {
    SpeakerClassifier classifier;
    double heldout_accuracy = 0.0;
    int heldout_windows = 0;
};

/// Cross-entropy training on non-overlapping windows of real poses.
/// InsufficientDataError for fewer than two speakers or no windows.
ClassifierFit train_speaker_classifier(const Dataset& train, const ClassifierTrainConfig& cfg);

struct BootstrapResult {
    bool significant = false;
    double p = 1.0;
    double t = 0.0;  ///< observed Welch statistic
};

/// Welch t statistic; zero variance gives 0 for equal means and +-inf otherwise.
double welch_t(std::span<const double> a, std::span<const double> b);

/// Two-sided bootstrap t-test: both samples are shifted to the pooled mean,
/// resampled with replacement n_boot times, and p is the fraction of
/// resampled |t| at least the observed |t|.
BootstrapResult bootstrap_test(std::span<const double> a, std::span<const double> b, int n_boot = 10000,
                               double alpha = 0.1, std::uint64_t seed = 0);

struct SpeakerMetrics {
    std::string speaker;
    std::string style;
    double pck = 0.0;
    double mode_f1 = 0.0;
    double inception_score = 1.0;
    int n = 0;
};

struct MetricsReport {
    double pck = 0.0;
    double mode_f1 = 0.0;
    double inception_score = 1.0;
    int n_samples = 0;
    std::vector<SpeakerMetrics> per_speaker;
    /// Per-window scores in window order, for significance tests.
    std::vector<double> window_pck, window_mode_f1;
};

/// Generates every window of `test` with its own speaker's style, or with
/// speaker `transfer_style` when given, and scores it against the real pose.
MetricsReport evaluate_model(const MixStageModel& model, const ModeModel& modes, const SpeakerClassifier& clf,
                             const Dataset& test, std::optional<int> transfer_style = std::nullopt);

/// Throws std::logic_error when a report violates its value bounds.
void check_report(const MetricsReport& r, int classes);

/// "speaker,style,pck,mode_f1,inception_score,n" with one row per speaker and a final "all" row.
void write_report_csv(const MetricsReport& r, std::ostream& out);
void write_report_csv(const MetricsReport& r, const std::string& path);
std::vector<SpeakerMetrics> read_report_csv(const std::string& path);

}  // namespace mixstage
