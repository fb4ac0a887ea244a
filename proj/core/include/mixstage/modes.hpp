#pragma once

#include "mixstage/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace mixstage {

/// Frames are centered on this joint before clustering.
inline constexpr int kModeRootJoint = 0;

/// Lloyd centroids over root-centered flattened pose frames.
struct ModeModel {
    Eigen::MatrixXf centroids;  ///< [dim, M], float32 as persisted
    double fit_inertia = 0.0;

    int modes() const { return static_cast<int>(centroids.cols()); }
    int dim() const { return static_cast<int>(centroids.rows()); }

    bool operator==(const ModeModel& o) const {
        return centroids.rows() == o.centroids.rows() && centroids.cols() == o.centroids.cols() &&
               centroids == o.centroids;
    }
};

/// One-hot prior per frame, [M, T].
struct ModeAssignment {
    Eigen::MatrixXf phi;
    std::vector<int> labels;  ///< argmax of each column

    int frames() const { return static_cast<int>(labels.size()); }
};

struct LloydOptions {
    int max_iters = 300;
    int restarts = 10;  ///< independent seeded initializations; lowest inertia wins
    std::uint64_t seed = 0;
};

/// Per-iteration inertia of the winning restart, recorded for diagnostics.
struct LloydTrace {
    std::vector<double> inertia;
    int iterations = 0;
    bool converged = false;
};

/// Lloyd's algorithm on the columns of `points` ([dim, n], already root-centered).
/// Throws InsufficientDataError when fewer than M distinct points exist.
ModeModel fit_modes_points(const Eigen::MatrixXd& points, int M, const LloydOptions& opt, LloydTrace* trace = nullptr);

/// Root-centers every frame of every sequence and clusters them.
ModeModel fit_modes(const std::vector<PoseSequence>& poses, int M, const LloydOptions& opt,
                    LloydTrace* trace = nullptr);

/// Root-centered pose frames as columns.
Eigen::MatrixXd center_frames(const PoseSequence& p);

/// Nearest centroid per frame; ties go to the lowest index.
ModeAssignment assign(const ModeModel& model, const PoseSequence& p);
int nearest_mode(const ModeModel& model, const Eigen::VectorXd& centered_frame);

/// Sum of squared distances of each point to its nearest centroid.
double inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids);

/// "MXC1", u32 M, u32 dim, float32 centroids (column per mode).
void save_mode_model(const ModeModel& m, const std::string& path);
ModeModel load_mode_model(const std::string& path);
std::string encode_mode_model(const ModeModel& m);
ModeModel decode_mode_model(const std::string& bytes, const std::string& origin);

}  // namespace mixstage
