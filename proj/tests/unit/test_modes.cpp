#include "mixstage/dataio.hpp"
#include "mixstage/error.hpp"
#include "mixstage/modes.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>

namespace mixstage {
namespace {

Eigen::MatrixXd random_points(int dim, int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd p(dim, n);
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = g(rng);
    return p;
}

TEST(FitModes, SingleModeIsMean) {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd pts = random_points(4, 30, rng);
    const ModeModel m = fit_modes_points(pts, 1, {});
    EXPECT_LT((m.centroids.col(0).cast<double>() - pts.rowwise().mean()).norm(), 1e-6);
}

TEST(FitModes, TwoBlobs) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 0.05);
    Eigen::MatrixXd pts(2, 12);
    for (int i = 0; i < 12; ++i) {
        const double cx = i < 6 ? -2.0 : 3.0;
        pts(0, i) = cx + g(rng);
        pts(1, i) = g(rng);
    }
    const ModeModel m = fit_modes_points(pts, 2, {});
    Eigen::Vector2d mean_a = pts.leftCols(6).rowwise().mean(), mean_b = pts.rightCols(6).rowwise().mean();
    const Eigen::Vector2d c0 = m.centroids.col(0).cast<double>(), c1 = m.centroids.col(1).cast<double>();
    const double d = std::min((c0 - mean_a).norm() + (c1 - mean_b).norm(), (c1 - mean_a).norm() + (c0 - mean_b).norm());
    EXPECT_LT(d, 0.05);
    EXPECT_NEAR(m.fit_inertia, oracle::kmeans_optimum(pts, 2), 1e-9);
}

TEST(FitModes, EveryPointItsOwnCentroid) {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd pts = random_points(3, 5, rng);
    EXPECT_NEAR(fit_modes_points(pts, 5, {}).fit_inertia, 0.0, 1e-15);
}

TEST(FitModes, TooFewDistinctFrames) {
    Eigen::MatrixXd pts(2, 6);
    pts << 1, 1, 1, 2, 2, 2, 0, 0, 0, 0, 0, 0;
    EXPECT_THROW(fit_modes_points(pts, 3, {}), InsufficientDataError);
    EXPECT_NO_THROW(fit_modes_points(pts, 2, {}));
}

TEST(FitModes, DeterministicGivenSeed) {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd pts = random_points(3, 40, rng);
    LloydOptions opt;
    opt.seed = 9;
    EXPECT_EQ(fit_modes_points(pts, 3, opt), fit_modes_points(pts, 3, opt));
}

TEST(FitModes, InertiaMonotoneAndMatchesOracleOnSmallSets) {
    std::mt19937_64 rng(5);
    int agree = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 6 + trial % 5, M = 1 + trial % 3;
        const Eigen::MatrixXd pts = random_points(2, n, rng);
        LloydTrace trace;
        const ModeModel m = fit_modes_points(pts, M, {}, &trace);
        for (std::size_t i = 1; i < trace.inertia.size(); ++i) EXPECT_LE(trace.inertia[i], trace.inertia[i - 1] + 1e-12);
        agree += std::abs(m.fit_inertia - oracle::kmeans_optimum(pts, M)) <= 1e-9;
    }
    EXPECT_GE(agree, 9);
}

TEST(FitModes, RootCenteringRemovesTranslation) {
    PoseSequence a(3, 3);
    a.coords.setRandom();
    PoseSequence b = a;
    for (int t = 0; t < 3; ++t)
        for (int j = 0; j < 3; ++j) {
            b.x(t, j) += 5.0f * t;
            b.y(t, j) -= 2.0f;
        }
    EXPECT_TRUE(center_frames(a).isApprox(center_frames(b), 1e-5));
}

TEST(Assign, FrameAtCentroid) {
    ModeModel m;
    m.centroids = Eigen::MatrixXf::Zero(4, 3);
    m.centroids.col(1) << 0, 0, 1, 0;
    m.centroids.col(2) << 0, 0, 0, 1;
    PoseSequence p(1, 2);
    p.coords.col(0) << 0, 0, 0, 1;
    const ModeAssignment a = assign(m, p);
    EXPECT_EQ(a.labels, std::vector<int>{2});
    EXPECT_EQ(a.phi.col(0), (Eigen::VectorXf(3) << 0, 0, 1).finished());
}

TEST(Assign, TieGoesToLowestIndex) {
    ModeModel m;
    m.centroids = Eigen::MatrixXf::Zero(4, 2);
    m.centroids.col(0) << 0, 0, 1, 0;
    m.centroids.col(1) << 0, 0, -1, 0;
    PoseSequence p(1, 2);
    EXPECT_EQ(assign(m, p).labels, std::vector<int>{0});
}

TEST(Assign, MatchesBruteForceAndIsPure) {
    std::mt19937_64 rng(6);
    ModeModel m;
    m.centroids = Eigen::MatrixXf::Random(6, 4);
    PoseSequence p(25, 3);
    p.coords.setRandom();
    const ModeAssignment a = assign(m, p);
    const Eigen::MatrixXd c = center_frames(p);
    for (int t = 0; t < 25; ++t) {
        int best = 0;
        double bd = 1e300;
        for (int k = 0; k < 4; ++k) {
            double d = 0;
            for (int r = 0; r < 6; ++r) d += std::pow(c(r, t) - double(m.centroids(r, k)), 2);
            if (d < bd) bd = d, best = k;
        }
        EXPECT_EQ(a.labels[t], best);
        EXPECT_EQ(a.phi.col(t).sum(), 1.0f);
        EXPECT_EQ((a.phi.col(t).array() == 1.0f).count(), 1);
    }
    EXPECT_EQ(assign(m, p).labels, a.labels);
}

TEST(Assign, DimensionMismatch) {
    ModeModel m;
    m.centroids = Eigen::MatrixXf::Zero(6, 2);
    EXPECT_THROW(assign(m, PoseSequence(2, 2)), ShapeError);
}

TEST(ModeModelFile, RoundTripAndLayout) {
    ModeModel m;
    m.centroids = Eigen::MatrixXf::Random(6, 3);
    const std::string bytes = encode_mode_model(m);
    ASSERT_EQ(bytes.size(), 4u + 8u + 18u * 4u);
    EXPECT_EQ(bytes.substr(0, 4), "MXC1");
    EXPECT_EQ(decode_mode_model(bytes, "mem"), m);
    const auto path = (std::filesystem::temp_directory_path() / "mixstage_modes_test.mxc").string();
    save_mode_model(m, path);
    EXPECT_EQ(load_mode_model(path), m);
    EXPECT_THROW(decode_mode_model(bytes.substr(0, 20), "mem"), FormatError);
    EXPECT_THROW(decode_mode_model("MXC2" + bytes.substr(4), "mem"), FormatError);
}

TEST(FitModes, SyntheticPurity) {
    SynthConfig cfg;
    cfg.n_intervals = 12;
    const SynthDataset d = synth_multispeaker(cfg);
    std::vector<PoseSequence> poses;
    for (const auto& s : d.dataset.samples) poses.push_back(s.pose);
    const ModeModel m = fit_modes(poses, d.total_modes, {});
    std::map<std::pair<int, int>, int> counts;
    int total = 0;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto labels = assign(m, poses[i]).labels;
        for (std::size_t t = 0; t < labels.size(); ++t) {
            ++counts[{labels[t], d.mode_labels[i][t]}];
            ++total;
        }
    }
    std::map<int, int> best_per_cluster;
    for (const auto& [key, n] : counts) best_per_cluster[key.first] = std::max(best_per_cluster[key.first], n);
    int pure = 0;
    for (const auto& [k, n] : best_per_cluster) pure += n;
    EXPECT_GE(static_cast<double>(pure) / total, 0.95);
}

}  // namespace
}  // namespace mixstage
