#include "mixstage/error.hpp"
#include "mixstage/types.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

namespace mixstage {
namespace {

Sample make_sample(int T, int J, int audio_T = -1) {
    Sample s;
    s.pose = PoseSequence(T, J);
    s.pose.coords.setRandom();
    s.audio.mel = Eigen::MatrixXf::Random(8, audio_T < 0 ? T : audio_T);
    s.interval_id = "x";
    return s;
}

TEST(ValidateSample, WellFormedSampleHasNoViolations) {
    EXPECT_TRUE(validate_sample(make_sample(64, 10)).empty());
}

TEST(ValidateSample, NanInPoseReported) {
    Sample s = make_sample(64, 10);
    s.pose.x(5, 3) = std::numeric_limits<float>::quiet_NaN();
    const auto v = validate_sample(s);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0], Violation::kNonFinitePose);
    EXPECT_EQ(to_string(v[0]), "NON_FINITE_POSE");
}

TEST(ValidateSample, LengthMismatchReported) {
    const auto v = validate_sample(make_sample(64, 10, 63));
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0], Violation::kLengthMismatch);
}

TEST(ValidateSample, ReportsEveryViolationAtOnce) {
    Sample s = make_sample(4, 1, 3);
    s.audio.mel(0, 0) = std::numeric_limits<float>::infinity();
    s.pose.fps = 0.0;
    s.audio.sample_rate_hz = 0;
    s.speaker.id = -1;
    const auto v = validate_sample(s);
    for (Violation want : {Violation::kTooFewJoints, Violation::kNonFiniteAudio, Violation::kLengthMismatch,
                           Violation::kBadFps, Violation::kBadSampleRate, Violation::kNegativeSpeaker})
        EXPECT_NE(std::find(v.begin(), v.end(), want), v.end()) << to_string(want);
}

TEST(ValidateSample, EmptyPose) {
    Sample s;
    s.pose = PoseSequence(0, 4);
    s.audio.mel = Eigen::MatrixXf(8, 0);
    const auto v = validate_sample(s);
    EXPECT_NE(std::find(v.begin(), v.end(), Violation::kEmptyPose), v.end());
}

TEST(ValidateSample, IdempotentAndPure) {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Sample s = make_sample(1 + rng() % 20, 1 + rng() % 5, 1 + rng() % 20);
        if (rng() % 2) s.pose.y(0, 0) = std::nanf("");
        const Sample before = s;
        const auto a = validate_sample(s);
        const auto b = validate_sample(s);
        EXPECT_EQ(a, b);
        EXPECT_TRUE(s.pose.coords.hasNaN() == before.pose.coords.hasNaN());
        EXPECT_EQ(s.audio, before.audio);
    }
}

TEST(OneHot, Examples) {
    EXPECT_EQ(one_hot({0}, 2), (Eigen::VectorXf(2) << 1, 0).finished());
    EXPECT_EQ(one_hot({1}, 2), (Eigen::VectorXf(2) << 0, 1).finished());
    EXPECT_EQ(one_hot({3}, 4), (Eigen::VectorXf(4) << 0, 0, 0, 1).finished());
}

TEST(OneHot, OutOfRangeThrows) {
    EXPECT_THROW(one_hot({2}, 2), RangeError);
    EXPECT_THROW(one_hot({-1}, 2), RangeError);
}

TEST(OneHot, SumsToOneForAllValidInputs) {
    for (int n = 1; n <= 12; ++n)
        for (int id = 0; id < n; ++id) {
            const Eigen::VectorXf v = one_hot({id}, n);
            EXPECT_EQ(v.sum(), 1.0f);
            EXPECT_EQ((v.array() != 0.0f).count(), 1);
        }
}

TEST(ArchitectureConfig, DefaultsAreValid) { EXPECT_NO_THROW(validate(ArchitectureConfig{})); }

TEST(ArchitectureConfig, RejectsBadFields) {
    ArchitectureConfig a;
    a.M = 0;
    EXPECT_THROW(validate(a), InvalidArgument);
    a = {};
    a.window_T = 63;
    EXPECT_THROW(validate(a), InvalidArgument);
    a = {};
    a.window_T = 36;  // not divisible by 2^3
    EXPECT_THROW(validate(a), InvalidArgument);
    a = {};
    a.J = 1;
    EXPECT_THROW(validate(a), InvalidArgument);
}

TEST(Skeleton, UpperBodyTopology) {
    const Skeleton s = Skeleton::upper_body(10);
    EXPECT_NO_THROW(s.check());
    EXPECT_EQ(s.edges.size(), 9u);
    EXPECT_EQ(s.right_arm.size() + s.left_arm.size(), 6u);
    EXPECT_THROW(Skeleton::upper_body(7), InvalidArgument);
}

}  // namespace
}  // namespace mixstage
