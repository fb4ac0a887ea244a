#include "mixstage/checkpoint.hpp"
#include "mixstage/error.hpp"
#include "mixstage/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace mixstage {
namespace {

ArchitectureConfig small_arch() {
    ArchitectureConfig a;
    a.M = 2;
    a.N = 2;
    a.D = 4;
    a.J = 10;
    a.F = 8;
    a.content_dim = 8;
    a.hidden = 8;
    a.window_T = 32;
    a.unet_depth = 2;
    return a;
}

Checkpoint sample_checkpoint() {
    MixStageModel model(small_arch(), 3);
    Checkpoint c;
    c.arch = small_arch();
    c.iteration = 1234;
    c.dev_loss = 0.75;
    c.best_dev_loss = 0.5;
    c.tensors = capture_tensors(model);
    c.gen_optimizer.push_back({"x", Eigen::MatrixXf::Random(2, 3), Eigen::MatrixXf::Random(2, 3), 7});
    c.rng_state = "1 2 3";
    ModeModel modes;
    modes.centroids = Eigen::MatrixXf::Random(20, 2);
    c.modes = modes;
    return c;
}

TEST(Checkpoint, EncodeDecodeIsBitExact) {
    const Checkpoint c = sample_checkpoint();
    const std::string bytes = encode_checkpoint(c);
    EXPECT_EQ(bytes.substr(0, 4), "MXK1");
    const Checkpoint back = decode_checkpoint(bytes, "mem");
    EXPECT_TRUE(back == c);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(content_hash(back), content_hash(c));
    EXPECT_EQ(content_hash(c).size(), 64u);
}

TEST(Checkpoint, FileRoundTripRestoresTheModel) {
    const Checkpoint c = sample_checkpoint();
    const auto path = (std::filesystem::temp_directory_path() / "mixstage_ckpt_test.mxk").string();
    save_checkpoint(c, path);
    const Checkpoint back = load_checkpoint(path);
    EXPECT_TRUE(back == c);
    auto model = model_from_checkpoint(back);
    MixStageModel original(small_arch(), 3);
    const auto a = model->all_params(), b = original.all_params();
    ASSERT_EQ(a.params.size(), b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].second->value, b.params[i].second->value);
}

TEST(Checkpoint, CorruptionIsDetected) {
    const std::string bytes = encode_checkpoint(sample_checkpoint());
    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x01;
    EXPECT_THROW(decode_checkpoint(flipped, "mem"), FormatError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1), "mem"), FormatError);
    EXPECT_THROW(decode_checkpoint("MXK2" + bytes.substr(4), "mem"), FormatError);
    EXPECT_THROW(load_checkpoint("/nonexistent/x.mxk"), FormatError);
}

TEST(Checkpoint, OptionalModeModel) {
    Checkpoint c = sample_checkpoint();
    c.modes.reset();
    const Checkpoint back = decode_checkpoint(encode_checkpoint(c), "mem");
    EXPECT_FALSE(back.modes.has_value());
    EXPECT_TRUE(back == c);
}

TEST(Checkpoint, ArchitectureMismatch) {
    ArchitectureConfig other = small_arch();
    other.M = 3;
    try {
        require_same_arch(small_arch(), other);
        FAIL();
    } catch (const ArchMismatchError& e) {
        EXPECT_NE(std::string(e.what()).find('M'), std::string::npos);
    }
    EXPECT_NO_THROW(require_same_arch(small_arch(), small_arch()));

    const Checkpoint c = sample_checkpoint();
    MixStageModel wider(other, 1);
    EXPECT_THROW(restore_tensors(c.tensors, wider), ArchMismatchError);
    auto missing = c.tensors;
    missing.pop_back();
    MixStageModel same(small_arch(), 1);
    EXPECT_THROW(restore_tensors(missing, same), ArchMismatchError);
}

TEST(Checkpoint, OptimizerStateRoundTrip) {
    TrainConfig cfg;
    cfg.M = 2;
    TrainState s(small_arch(), cfg);
    for (auto& slot : s.gen_optimizer().slots()) {
        slot.m.setRandom();
        slot.v.setRandom();
        slot.steps = 3;
    }
    const auto captured = capture_optimizer(s.gen_optimizer());
    TrainState t(small_arch(), cfg);
    restore_optimizer(captured, t.gen_optimizer());
    ASSERT_EQ(t.gen_optimizer().slots().size(), s.gen_optimizer().slots().size());
    for (std::size_t i = 0; i < captured.size(); ++i) {
        EXPECT_EQ(t.gen_optimizer().slots()[i].m, s.gen_optimizer().slots()[i].m);
        EXPECT_EQ(t.gen_optimizer().slots()[i].steps, 3);
    }
    auto short_slots = captured;
    short_slots.pop_back();
    EXPECT_THROW(restore_optimizer(short_slots, t.gen_optimizer()), ArchMismatchError);
}

}  // namespace
}  // namespace mixstage
