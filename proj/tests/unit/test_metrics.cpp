#include "mixstage/error.hpp"
#include "mixstage/inference.hpp"
#include "mixstage/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

namespace mixstage {
namespace {

TEST(Pck, Examples) {
    PoseSequence gt(1, 3);
    gt.x(0, 1) = 1.0f;
    gt.y(0, 2) = 0.5f;
    EXPECT_DOUBLE_EQ(pck(gt, gt), 1.0);
    PoseSequence far = gt;
    far.coords.array() += 5.0f;
    EXPECT_DOUBLE_EQ(pck(far, gt), 0.0);
    // Joint 0 off by 0.15: inside alpha 0.2, outside alpha 0.1 (scale 1).
    PoseSequence one = gt;
    one.x(0, 0) += 0.15f;
    EXPECT_NEAR(pck(one, gt), (2.0 / 3 + 1.0) / 2, 1e-12);
    const double a1[] = {0.1};
    EXPECT_NEAR(pck(one, gt, a1), 2.0 / 3, 1e-12);
}

TEST(Pck, DegenerateFramesSkipped) {
    PoseSequence gt(2, 2);
    gt.x(1, 1) = 1.0f;
    const PckTally t = pck_tally(gt, gt);
    EXPECT_EQ(t.skipped_frames, 1);
    EXPECT_DOUBLE_EQ(t.value(), 1.0);
    EXPECT_THROW(pck(PoseSequence(3, 2), PoseSequence(3, 2)), DegeneratePoseError);
    EXPECT_THROW(pck(PoseSequence(3, 2), PoseSequence(4, 2)), ShapeError);
}

TEST(Pck, MatchesOracle) {
    std::mt19937 rng(1);
    std::normal_distribution<float> g(0.0f, 1.0f);
    for (int trial = 0; trial < 20; ++trial) {
        PoseSequence gt(8, 5), pred(8, 5);
        for (Eigen::Index i = 0; i < gt.coords.size(); ++i) {
            gt.coords(i) = g(rng);
            pred.coords(i) = gt.coords(i) + 0.3f * g(rng);
        }
        EXPECT_NEAR(pck(pred, gt), oracle::pck(pred.coords, gt.coords, {0.1, 0.2}), 1e-12);
        const double v = pck(pred, gt);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(F1, Examples) {
    const std::vector<int> a = {0, 0, 1, 1};
    EXPECT_DOUBLE_EQ(macro_f1(a, a), 1.0);
    const std::vector<int> swapped = {1, 1, 0, 0};
    EXPECT_DOUBLE_EQ(macro_f1(a, swapped), 0.0);
    // Class 0: p=1 r=.5 → 2/3; class 1: p=2/3 r=1 → 0.8.
    const std::vector<int> pred = {0, 1, 1, 1};
    EXPECT_NEAR(macro_f1(a, pred), (2.0 / 3 + 0.8) / 2, 1e-12);
    // A class only in the prediction counts with F1 0.
    const std::vector<int> t = {0, 0}, p = {0, 2};
    EXPECT_NEAR(macro_f1(t, p), (2.0 / 3 + 0.0) / 2, 1e-12);
    EXPECT_THROW(macro_f1(a, t), ShapeError);
}

TEST(F1, MatchesOracle) {
    std::mt19937 rng(2);
    std::uniform_int_distribution<int> u(0, 4);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<int> t(40), p(40);
        for (auto& v : t) v = u(rng);
        for (auto& v : p) v = u(rng) < 2 ? u(rng) : -1;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] < 0) p[i] = t[i];
        EXPECT_NEAR(macro_f1(t, p), oracle::macro_f1(t, p), 1e-12);
    }
}

TEST(InceptionScore, Bounds) {
    EXPECT_NEAR(inception_score(Eigen::MatrixXd::Identity(3, 3)), 3.0, 1e-12);
    EXPECT_NEAR(inception_score(Eigen::MatrixXd::Constant(3, 5, 1.0 / 3)), 1.0, 1e-12);
    Eigen::MatrixXd same(2, 4);
    same.row(0).setConstant(1.0);
    same.row(1).setZero();
    EXPECT_NEAR(inception_score(same), 1.0, 1e-12);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd p(4, 9);
        for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
        p = p.array().rowwise() / p.colwise().sum().array();
        const double is = inception_score(p);
        EXPECT_NEAR(is, oracle::inception_score(p), 1e-9);
        EXPECT_GE(is, 1.0 - 1e-12);
        EXPECT_LE(is, 4.0 + 1e-12);
    }
}

TEST(Welch, MatchesOracleAndEdgeCases) {
    const std::vector<double> a = {1, 2, 3, 4}, b = {2, 4, 6, 8, 10};
    EXPECT_NEAR(welch_t(a, b), oracle::welch(a, b), 1e-12);
    const std::vector<double> c = {1, 1, 1}, d = {2, 2, 2};
    EXPECT_EQ(welch_t(c, c), 0.0);
    EXPECT_EQ(welch_t(c, d), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(welch_t(d, c), std::numeric_limits<double>::infinity());
}

TEST(Bootstrap, AgreesWithIndependentResampler) {
    std::mt19937 rng(4);
    for (double shift : {0.0, 0.3, 0.8}) {
        std::normal_distribution<double> ga(shift, 1.0), gb(0.0, 1.0);
        std::vector<double> a(30), b(35);
        for (auto& v : a) v = ga(rng);
        for (auto& v : b) v = gb(rng);
        const BootstrapResult r = bootstrap_test(a, b, 10000, 0.1, 5);
        const double ref = oracle::bootstrap_p(a, b, 10000, 99);
        EXPECT_NEAR(r.p, ref, 0.02) << shift;
        EXPECT_NEAR(r.t, oracle::welch(a, b), 1e-12);
        EXPECT_EQ(r.significant, r.p < 0.1);
    }
}

TEST(Bootstrap, SeparatedSamplesAreSignificant) {
    std::vector<double> a(30), b(30);
    for (int i = 0; i < 30; ++i) {
        a[i] = 1.0 + 0.01 * (i % 5);
        b[i] = 0.0 + 0.01 * (i % 7);
    }
    const BootstrapResult r = bootstrap_test(a, b);
    EXPECT_TRUE(r.significant);
    EXPECT_LT(r.p, 1e-3);
    const BootstrapResult same = bootstrap_test(a, a);
    EXPECT_FALSE(same.significant);
    EXPECT_DOUBLE_EQ(bootstrap_test(a, b, 500, 0.1, 1).p, bootstrap_test(a, b, 500, 0.1, 1).p);
}

Dataset classifier_data(std::uint64_t seed) {
    SynthConfig c;
    c.n_intervals = 40;
    c.T = 64;
    c.F = 16;
    c.seed = seed;
    return synth_multispeaker(c).dataset;
}

TEST(SpeakerClassifier, LearnsSpeakersAndFailsOnShuffledLabels) {
    const Dataset d = classifier_data(11);
    ClassifierTrainConfig cfg;
    cfg.window = 32;
    cfg.iterations = 300;
    cfg.seed = 1;
    const ClassifierFit fit = train_speaker_classifier(d, cfg);
    EXPECT_GE(fit.heldout_windows, 30);
    EXPECT_GE(fit.heldout_accuracy, 0.95);
    const Eigen::VectorXd p = fit.classifier.probabilities(d.samples[0].pose);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);

    cfg.shuffle_labels = true;
    const ClassifierFit control = train_speaker_classifier(d, cfg);
    EXPECT_NEAR(control.heldout_accuracy, 0.5, 0.15);

    Dataset one = d;
    one.samples.erase(std::remove_if(one.samples.begin(), one.samples.end(), [](const Sample& s) { return s.speaker.id != 0; }),
                      one.samples.end());
    EXPECT_THROW(train_speaker_classifier(one, cfg), InsufficientDataError);
}

TEST(Report, CsvRoundTripAndBounds) {
    MetricsReport r;
    r.pck = 0.5;
    r.mode_f1 = 0.25;
    r.inception_score = 1.5;
    r.n_samples = 7;
    r.per_speaker = {{"oliver", "oliver", 0.4, 0.2, 1.2, 3}, {"chemistry", "chemistry", 0.6, 0.3, 1.1, 4}};
    std::ostringstream s;
    write_report_csv(r, s);
    EXPECT_EQ(s.str(),
              "speaker,style,pck,mode_f1,inception_score,n\n"
              "oliver,oliver,0.400000,0.200000,1.200000,3\n"
              "chemistry,chemistry,0.600000,0.300000,1.100000,4\n"
              "all,own,0.500000,0.250000,1.500000,7\n");
    const auto path = (std::filesystem::temp_directory_path() / "mixstage_report.csv").string();
    write_report_csv(r, path);
    const auto rows = read_report_csv(path);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1].speaker, "chemistry");
    EXPECT_DOUBLE_EQ(rows[2].pck, 0.5);
    EXPECT_EQ(rows[2].n, 7);

    EXPECT_NO_THROW(check_report(r, 2));
    MetricsReport bad = r;
    bad.inception_score = 2.5;
    EXPECT_THROW(check_report(bad, 2), std::logic_error);
    bad = r;
    bad.per_speaker[0].pck = 1.2;
    EXPECT_THROW(check_report(bad, 2), std::logic_error);
}

TEST(Evaluate, PerfectGeneratorScoresOne) {
    ArchitectureConfig a;
    a.M = 2;
    a.N = 2;
    a.D = 4;
    a.J = 10;
    a.F = 16;
    a.content_dim = 8;
    a.hidden = 8;
    a.window_T = 32;
    a.unet_depth = 2;
    const MixStageModel model(a, 1);
    Dataset windows = classifier_data(12);
    windows.samples.resize(4);
    // Replace every real window with the model's own output for its audio.
    std::vector<Sample> ws;
    std::vector<PoseSequence> poses;
    for (const auto& s : windows.samples)
        for (auto w : make_windows(s, 32, 32)) {
            w.pose = generate_gestures(model, {w.audio, w.speaker, PriorMode::kArgmax});
            poses.push_back(w.pose);
            ws.push_back(w);
        }
    windows.samples = ws;
    const ModeModel modes = fit_modes(poses, 2, {});
    const SpeakerClassifier clf(10, 2, 8, 3);
    const MetricsReport r = evaluate_model(model, modes, clf, windows);
    EXPECT_DOUBLE_EQ(r.pck, 1.0);
    EXPECT_DOUBLE_EQ(r.mode_f1, 1.0);
    EXPECT_EQ(r.n_samples, 8);
    EXPECT_EQ(r.window_pck.size(), 8u);
    EXPECT_NO_THROW(check_report(r, 2));
    EXPECT_THROW(evaluate_model(model, modes, clf, windows, 5), RangeError);
}

}  // namespace
}  // namespace mixstage
