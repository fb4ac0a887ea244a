#include "mixstage/binio.hpp"
#include "mixstage/dataio.hpp"
#include "mixstage/error.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <set>

namespace mixstage {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mixstage_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

PoseSequence random_pose(int T, int J, std::mt19937_64& rng) {
    std::normal_distribution<float> g(0.0f, 1.0f);
    PoseSequence p(T, J);
    for (Eigen::Index i = 0; i < p.coords.size(); ++i) p.coords(i) = g(rng);
    return p;
}

SynthConfig small_synth() {
    SynthConfig c;
    c.n_intervals = 10;
    c.T = 96;
    return c;
}

TEST(NormalizePose, HalvesRootRelativeCoordinates) {
    const Skeleton sk = Skeleton::upper_body(8);
    std::mt19937_64 rng(1);
    PoseSequence p = random_pose(5, 8, rng);
    // Force every frame's shoulder span to 2.
    for (int t = 0; t < 5; ++t) {
        p.x(t, sk.right_shoulder) = p.x(t, sk.left_shoulder) + 2.0f;
        p.y(t, sk.right_shoulder) = p.y(t, sk.left_shoulder);
    }
    ASSERT_NEAR(mean_shoulder_length(p, sk), 2.0, 1e-6);
    const PoseSequence q = normalize_pose(p, sk, 1.0);
    for (int t = 0; t < 5; ++t)
        for (int j = 0; j < 8; ++j) {
            EXPECT_NEAR(q.x(t, j) - q.x(t, 0), 0.5f * (p.x(t, j) - p.x(t, 0)), 1e-5);
            EXPECT_NEAR(q.y(t, j) - q.y(t, 0), 0.5f * (p.y(t, j) - p.y(t, 0)), 1e-5);
        }
    for (int t = 0; t < 5; ++t) {
        EXPECT_EQ(q.x(t, sk.root), p.x(t, sk.root));
        EXPECT_EQ(q.y(t, sk.root), p.y(t, sk.root));
    }
}

TEST(NormalizePose, AlreadyAtTargetIsIdentity) {
    const Skeleton sk = Skeleton::upper_body(8);
    std::mt19937_64 rng(2);
    const PoseSequence p = normalize_pose(random_pose(7, 8, rng), sk, 1.0);
    const PoseSequence q = normalize_pose(p, sk, 1.0);
    EXPECT_LT((q.coords - p.coords).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(NormalizePose, RandomPosesReachTargetAndAreIdempotent) {
    const Skeleton sk = Skeleton::upper_body(10);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> target(0.2, 3.0);
    for (int trial = 0; trial < 30; ++trial) {
        const double tgt = target(rng);
        const PoseSequence once = normalize_pose(random_pose(1 + trial, 10, rng), sk, tgt);
        EXPECT_NEAR(mean_shoulder_length(once, sk), tgt, 1e-5 * tgt);
        const PoseSequence twice = normalize_pose(once, sk, tgt);
        EXPECT_LT((twice.coords - once.coords).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, tgt));
    }
}

TEST(NormalizePose, DegenerateShoulder) {
    const Skeleton sk = Skeleton::upper_body(8);
    PoseSequence p(3, 8);
    EXPECT_THROW(normalize_pose(p, sk, 1.0), DegeneratePoseError);
}

TEST(MakeWindows, CountFormula) {
    Sample s;
    s.pose = PoseSequence(64, 4);
    s.audio.mel = Eigen::MatrixXf::Zero(8, 64);
    s.interval_id = "a";
    EXPECT_EQ(make_windows(s, 64, 32).size(), 1u);
    s.pose = PoseSequence(128, 4);
    s.audio.mel = Eigen::MatrixXf::Zero(8, 128);
    const auto w = make_windows(s, 64, 32);
    ASSERT_EQ(w.size(), 3u);
    EXPECT_EQ(w[2].interval_id, "a@64");
    s.pose = PoseSequence(63, 4);
    s.audio.mel = Eigen::MatrixXf::Zero(8, 63);
    EXPECT_TRUE(make_windows(s, 64, 32).empty());
}

TEST(MakeWindows, WindowsAreValidAndAligned) {
    const SynthDataset d = synth_multispeaker(small_synth());
    for (const Sample& s : d.dataset.samples)
        for (int stride : {1, 7, 32}) {
            const auto ws = make_windows(s, 32, stride);
            EXPECT_EQ(static_cast<int>(ws.size()), (s.pose.frames() - 32) / stride + 1);
            for (std::size_t i = 0; i < ws.size(); ++i) {
                EXPECT_TRUE(validate_sample(ws[i]).empty());
                EXPECT_EQ(ws[i].pose.frames(), ws[i].audio.frames());
                EXPECT_EQ(ws[i].pose.coords, s.pose.coords.middleCols(i * stride, 32));
            }
        }
}

TEST(SelectSplit, DisjointCoveringAndStratified) {
    const SynthDataset d = synth_multispeaker(small_synth());
    const auto& all = d.dataset.samples;
    std::set<std::string> seen;
    std::size_t total = 0;
    for (Split sp : {Split::kTrain, Split::kDev, Split::kTest}) {
        const auto part = select_split(all, 2, sp, 5);
        for (const auto& s : part) EXPECT_TRUE(seen.insert(s.interval_id).second) << s.interval_id;
        total += part.size();
        for (int spk = 0; spk < 2; ++spk)
            EXPECT_TRUE(std::any_of(part.begin(), part.end(), [&](const Sample& s) { return s.speaker.id == spk; }));
    }
    EXPECT_EQ(total, all.size());
    EXPECT_EQ(select_split(all, 2, Split::kTrain, 5).size(), 16u);
    EXPECT_EQ(select_split(all, 2, Split::kAll, 5).size(), all.size());
    EXPECT_EQ(select_split(all, 2, Split::kDev, 5), select_split(all, 2, Split::kDev, 5));
}

TEST(PoseFile, LayoutAndRoundTrip) {
    std::mt19937_64 rng(4);
    const PoseSequence p = random_pose(3, 2, rng);
    const std::string bytes = encode_pose(p);
    ASSERT_EQ(bytes.size(), 16u + 3 * 2 * 2 * 4);
    EXPECT_EQ(bytes.substr(0, 4), "MXP1");
    std::uint32_t hdr[3];
    std::memcpy(hdr, bytes.data() + 4, 12);
    EXPECT_EQ(hdr[0], 1u);
    EXPECT_EQ(hdr[1], 3u);
    EXPECT_EQ(hdr[2], 2u);
    float first[2];
    std::memcpy(first, bytes.data() + 16, 8);
    EXPECT_EQ(first[0], p.x(0, 0));
    EXPECT_EQ(first[1], p.y(0, 0));
    float second[2];
    std::memcpy(second, bytes.data() + 24, 8);
    EXPECT_EQ(second[0], p.x(0, 1));
    EXPECT_EQ(decode_pose(bytes, "m"), p);
}

TEST(AudioFile, LayoutAndRoundTrip) {
    AudioFeatures a;
    a.mel = Eigen::MatrixXf::Random(4, 3);
    const std::string bytes = encode_audio(a);
    ASSERT_EQ(bytes.size(), 16u + 12 * 4);
    EXPECT_EQ(bytes.substr(0, 4), "MXA1");
    float f[2];
    std::memcpy(f, bytes.data() + 16, 8);
    EXPECT_EQ(f[0], a.mel(0, 0));
    EXPECT_EQ(f[1], a.mel(1, 0));
    const AudioFeatures b = decode_audio(bytes, "m");
    EXPECT_EQ(b.mel, a.mel);
}

TEST(PoseFile, MalformedInputsNameTheFile) {
    std::mt19937_64 rng(5);
    const std::string bytes = encode_pose(random_pose(4, 3, rng));
    try {
        decode_pose(bytes.substr(0, bytes.size() - 3), "dir/x.mxp");
        FAIL() << "truncated file accepted";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.path(), "dir/x.mxp");
        EXPECT_NE(std::string(e.what()).find("dir/x.mxp"), std::string::npos);
        EXPECT_EQ(e.offset(), 16u);
    }
    std::string bad = bytes;
    bad[0] = 'Q';
    EXPECT_THROW(decode_pose(bad, "x"), FormatError);
    bad = bytes;
    bad[4] = 2;
    EXPECT_THROW(decode_pose(bad, "x"), FormatError);
    EXPECT_THROW(decode_pose(bytes + "zz", "x"), FormatError);
}

TEST(Dataset, SaveLoadRoundTripIsBitExact) {
    const fs::path root = fresh_dir("ds_roundtrip");
    const SynthDataset d = synth_multispeaker(small_synth());
    save_dataset(d.dataset, root.string());
    const Dataset back = load_dataset(root.string(), {}, Split::kAll);
    EXPECT_EQ(back, d.dataset);
    EXPECT_EQ(back.rejected, 0u);
    const std::string a = binio::read_file((root / "pose" / (d.dataset.samples[3].interval_id + ".mxp")).string());
    save_dataset(back, (root / "copy").string());
    EXPECT_EQ(binio::read_file((root / "copy" / "pose" / (d.dataset.samples[3].interval_id + ".mxp")).string()), a);
}

TEST(Dataset, IntervalCsvHeader) {
    const fs::path root = fresh_dir("ds_csv");
    save_dataset(synth_multispeaker(small_synth()).dataset, root.string());
    std::ifstream in(root / "intervals.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(header, "interval_id,speaker,frames");
    EXPECT_NE(row.find(",spk0,96"), std::string::npos);
}

TEST(Dataset, SpeakerSelectionAndUnknownSpeaker) {
    const fs::path root = fresh_dir("ds_speakers");
    save_dataset(synth_multispeaker(small_synth()).dataset, root.string());
    const Dataset one = load_dataset(root.string(), {"spk1"}, Split::kAll);
    EXPECT_EQ(one.speakers, std::vector<std::string>{"spk1"});
    EXPECT_EQ(one.samples.size(), 10u);
    for (const auto& s : one.samples) EXPECT_EQ(s.speaker.id, 0);
    EXPECT_THROW(load_dataset(root.string(), {"nobody"}, Split::kAll), InvalidArgument);
}

TEST(Dataset, TruncatedPoseFileReportsItsPath) {
    const fs::path root = fresh_dir("ds_truncated");
    const SynthDataset d = synth_multispeaker(small_synth());
    save_dataset(d.dataset, root.string());
    const fs::path victim = root / "pose" / (d.dataset.samples[0].interval_id + ".mxp");
    fs::resize_file(victim, 30);
    try {
        load_dataset(root.string(), {}, Split::kAll);
        FAIL() << "truncated file accepted";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.path(), victim.string());
    }
}

TEST(Dataset, NanIntervalSkipped) {
    const fs::path root = fresh_dir("ds_nan");
    SynthDataset d = synth_multispeaker(small_synth());
    d.dataset.samples[4].pose.x(10, 3) = std::numeric_limits<float>::quiet_NaN();
    save_dataset(d.dataset, root.string());
    const Dataset back = load_dataset(root.string(), {}, Split::kAll);
    EXPECT_EQ(back.rejected, 1u);
    EXPECT_EQ(back.samples.size(), d.dataset.samples.size() - 1);
    for (const auto& s : back.samples) EXPECT_NE(s.interval_id, d.dataset.samples[4].interval_id);
}

TEST(Dataset, ReservedCharactersInIdsRejected) {
    Dataset d = synth_multispeaker(small_synth()).dataset;
    d.samples[0].interval_id = "a,b";
    EXPECT_THROW(save_dataset(d, fresh_dir("ds_reserved").string()), InvalidArgument);
}

TEST(Synth, SameSeedIsByteIdentical) {
    SynthConfig c = small_synth();
    c.seed = 7;
    const SynthDataset a = synth_multispeaker(c), b = synth_multispeaker(c);
    EXPECT_EQ(a.dataset, b.dataset);
    EXPECT_EQ(a.mode_labels, b.mode_labels);
    for (std::size_t i = 0; i < a.dataset.samples.size(); ++i) {
        EXPECT_EQ(encode_pose(a.dataset.samples[i].pose), encode_pose(b.dataset.samples[i].pose));
        EXPECT_EQ(encode_audio(a.dataset.samples[i].audio), encode_audio(b.dataset.samples[i].audio));
    }
    c.seed = 8;
    EXPECT_FALSE(synth_multispeaker(c).dataset == a.dataset);
}

TEST(Synth, ZeroJitterPoseIsExactRuleOutput) {
    SynthConfig c = small_synth();
    c.jitter = 0.0;
    const SynthDataset d = synth_multispeaker(c);
    for (std::size_t i = 0; i < d.dataset.samples.size(); ++i) {
        const Sample& s = d.dataset.samples[i];
        std::vector<int> classes(d.mode_labels[i].size());
        for (std::size_t t = 0; t < classes.size(); ++t) classes[t] = d.mode_labels[i][t] % c.modes_per_speaker;
        const PoseSequence rule = apply_synth_rule(d.rules[s.speaker.id], s.audio, classes, c.J);
        EXPECT_EQ((rule.coords - s.pose.coords).cwiseAbs().maxCoeff(), 0.0f);
    }
}

TEST(Synth, SamplesAreValidAndModesDistinct) {
    const SynthDataset d = synth_multispeaker(small_synth());
    EXPECT_EQ(d.total_modes, 4);
    EXPECT_EQ(d.dataset.samples.size(), 20u);
    for (const auto& s : d.dataset.samples) EXPECT_TRUE(validate_sample(s).empty());
    const Eigen::MatrixXd centers = synth_mode_centers(d);
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) EXPECT_GE((centers.col(a) - centers.col(b)).norm(), 0.9 - 1e-6);
}

TEST(Synth, NearestCentroidSpeakerClassifierSeparatesSpeakers) {
    SynthConfig c = small_synth();
    c.n_intervals = 16;
    const SynthDataset d = synth_multispeaker(c);
    // Centroids of each generating mode, fitted on the first half of each speaker's intervals.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(2 * c.J, d.total_modes);
    std::vector<int> counts(d.total_modes, 0);
    std::vector<int> seen(c.n_speakers, 0);
    std::vector<bool> held_out(d.dataset.samples.size());
    for (std::size_t i = 0; i < d.dataset.samples.size(); ++i) {
        const Sample& s = d.dataset.samples[i];
        held_out[i] = seen[s.speaker.id]++ >= c.n_intervals / 2;
        if (held_out[i]) continue;
        for (int t = 0; t < s.pose.frames(); ++t) {
            sums.col(d.mode_labels[i][t]) += s.pose.coords.col(t).cast<double>();
            ++counts[d.mode_labels[i][t]];
        }
    }
    for (int m = 0; m < d.total_modes; ++m) sums.col(m) /= counts[m];
    int correct = 0, total = 0;
    for (std::size_t i = 0; i < d.dataset.samples.size(); ++i) {
        if (!held_out[i]) continue;
        const Sample& s = d.dataset.samples[i];
        for (int t = 0; t < s.pose.frames(); ++t) {
            Eigen::Index best = 0;
            (sums.colwise() - s.pose.coords.col(t).cast<double>()).colwise().squaredNorm().minCoeff(&best);
            correct += static_cast<int>(best) / c.modes_per_speaker == s.speaker.id;
            ++total;
        }
    }
    EXPECT_GE(static_cast<double>(correct) / total, 0.95);
}

TEST(Synth, InvalidConfigs) {
    SynthConfig c;
    c.n_speakers = 0;
    EXPECT_THROW(synth_multispeaker(c), InvalidArgument);
    c = {};
    c.J = 4;
    EXPECT_THROW(validate(c), InvalidArgument);
    c = {};
    c.disjoint_modes = true;
    c.modes_per_speaker = 5;
    EXPECT_THROW(validate(c), InvalidArgument);
}

TEST(SplitNames, RoundTrip) {
    for (Split s : {Split::kTrain, Split::kDev, Split::kTest, Split::kAll}) EXPECT_EQ(parse_split(to_string(s)), s);
    EXPECT_THROW(parse_split("validation"), InvalidArgument);
}

}  // namespace
}  // namespace mixstage
