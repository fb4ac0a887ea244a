#include "mixstage/audio.hpp"
#include "mixstage/dataio.hpp"
#include "mixstage/modes.hpp"
#include "mixstage/nn.hpp"
#include "mixstage/trainer.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

namespace {

using namespace mixstage;

// Args: channels, batch * time.
void BM_Conv1dForwardBackward(benchmark::State& state) {
    const int C = static_cast<int>(state.range(0)), T = 64, B = static_cast<int>(state.range(1)) / T;
    nn::Rng rng(1);
    nn::Conv1d conv(C, C, 3, 1, 1, rng);
    nn::Seq x(nn::Mat::Random(C, B * T), B, T);
    for (auto _ : state) {
        nn::Seq y = conv.forward(x);
        benchmark::DoNotOptimize(conv.backward(y).data.data());
    }
    state.SetItemsProcessed(state.iterations() * B * T);
}
BENCHMARK(BM_Conv1dForwardBackward)->Args({32, 1024})->Args({64, 1024})->Args({64, 4096});

void BM_TrainStep(benchmark::State& state) {
    SynthConfig sc;
    sc.n_intervals = 8;
    const SynthDataset sd = synth_multispeaker(sc);
    std::vector<PoseSequence> poses;
    for (const auto& s : sd.dataset.samples) poses.push_back(s.pose);
    const ModeModel modes = fit_modes(poses, sd.total_modes, {});
    ArchitectureConfig a;
    a.M = sd.total_modes;
    a.J = sc.J;
    a.hidden = static_cast<int>(state.range(0));
    a.content_dim = a.hidden;
    TrainConfig cfg;
    cfg.M = a.M;
    cfg.batch_size = 16;
    const auto windows = prepare_windows(sd.dataset, modes, a.window_T, a.window_T / 2);
    TrainState ts(a, cfg);
    for (auto _ : state) {
        const auto idx = sample_batch(ts, windows.size(), cfg.batch_size);
        benchmark::DoNotOptimize(train_step(ts, make_batch(windows, idx), cfg).total);
    }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

// Args: frames, modes.
void BM_FitModes(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd pts(20, state.range(0));
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts(i) = g(rng);
    const int M = static_cast<int>(state.range(1));
    for (auto _ : state) benchmark::DoNotOptimize(fit_modes_points(pts, M, {}).fit_inertia);
    state.SetItemsProcessed(state.iterations() * pts.cols());
}
BENCHMARK(BM_FitModes)->Args({2000, 4})->Args({20000, 4})->Args({20000, 8})->Unit(benchmark::kMillisecond);

void BM_LogMel(benchmark::State& state) {
    const int sr = 16000, seconds = static_cast<int>(state.range(0));
    std::vector<float> wave(static_cast<std::size_t>(sr) * seconds);
    for (std::size_t i = 0; i < wave.size(); ++i) wave[i] = 0.5f * std::sin(0.05f * static_cast<float>(i));
    const int frames = static_cast<int>(kPoseFps * seconds);
    for (auto _ : state) benchmark::DoNotOptimize(extract_audio_features(wave, sr, frames).mel.data());
    state.SetItemsProcessed(state.iterations() * static_cast<long>(wave.size()));
}
BENCHMARK(BM_LogMel)->Arg(4)->Arg(30)->Unit(benchmark::kMillisecond);

}  // namespace
