#include "mixstage/audio.hpp"
#include "mixstage/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

namespace mixstage {
namespace {

std::vector<float> sine(double hz, int sr, int n, double amp = 0.5) {
    std::vector<float> w(n);
    for (int i = 0; i < n; ++i) w[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / sr));
    return w;
}

// Direct O(n^2) DFT power of a zero-padded frame.
std::vector<double> dft_power(const std::vector<double>& x, int n_fft) {
    std::vector<double> p(n_fft / 2 + 1);
    for (int k = 0; k <= n_fft / 2; ++k) {
        std::complex<double> acc = 0;
        for (std::size_t n = 0; n < x.size(); ++n)
            acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * k * static_cast<double>(n) / n_fft);
        p[k] = std::norm(acc);
    }
    return p;
}

TEST(AudioFeatures, ShapeContract) {
    const auto w = sine(440.0, 16000, 16000);
    const AudioFeatures a = extract_audio_features(w, 16000, 15);
    EXPECT_EQ(a.frames(), 15);
    EXPECT_EQ(a.bins(), 64);
    EXPECT_EQ(a.sample_rate_hz, 16000);
    EXPECT_TRUE(a.mel.allFinite());
}

TEST(AudioFeatures, DeterministicBitIdentical) {
    std::mt19937 rng(1);
    std::normal_distribution<float> g(0, 0.1f);
    std::vector<float> w(8000);
    for (float& v : w) v = g(rng);
    EXPECT_EQ(extract_audio_features(w, 16000, 30), extract_audio_features(w, 16000, 30));
}

TEST(AudioFeatures, EmptyOrSilentRejected) {
    EXPECT_THROW(extract_audio_features(std::vector<float>{}, 16000, 4), EmptyAudioError);
    EXPECT_THROW(extract_audio_features(std::vector<float>(4000, 0.0f), 16000, 4), EmptyAudioError);
    EXPECT_THROW(extract_audio_features(sine(100, 16000, 400), 0, 4), InvalidArgument);
}

TEST(AudioFeatures, PowerSpectrumMatchesDirectDft) {
    std::mt19937 rng(2);
    std::uniform_real_distribution<float> u(-1, 1);
    std::vector<float> frame(300);
    for (float& v : frame) v = u(rng);
    const Eigen::VectorXd p = power_spectrum(frame, 512);
    const auto q = dft_power(std::vector<double>(frame.begin(), frame.end()), 512);
    for (int k = 0; k <= 256; ++k) EXPECT_NEAR(p(k), q[k], 1e-3 * std::max(1.0, q[k]));
}

TEST(AudioFeatures, SinusoidEnergyInCoveringMelBin) {
    const int sr = 16000;
    const MelConfig cfg;
    const StftGeometry g = stft_geometry(sr, cfg);
    ASSERT_EQ(g.window, 400);
    ASSERT_EQ(g.hop, 160);
    ASSERT_EQ(g.n_fft, 512);
    const double hz = 1000.0;
    const auto w = sine(hz, sr, g.window);
    const AudioFeatures a = extract_audio_features(w, sr, 1, cfg);

    // Oracle: direct DFT of the Hann-windowed frame through triangular HTK filters.
    std::vector<double> x(g.window);
    for (int i = 0; i < g.window; ++i)
        x[i] = w[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / g.window));
    const auto p = dft_power(x, g.n_fft);
    const double top = 2595.0 * std::log10(1.0 + (sr / 2.0) / 700.0);
    std::vector<double> edges(cfg.n_mels + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) edges[i] = 700.0 * (std::pow(10.0, top * i / (cfg.n_mels + 1) / 2595.0) - 1.0);
    std::vector<double> energy(cfg.n_mels);
    for (int m = 0; m < cfg.n_mels; ++m) {
        double e = 0;
        for (int k = 0; k <= g.n_fft / 2; ++k) {
            const double f = double(k) * sr / g.n_fft;
            double wgt = 0;
            if (f > edges[m] && f <= edges[m + 1]) wgt = (f - edges[m]) / (edges[m + 1] - edges[m]);
            else if (f > edges[m + 1] && f < edges[m + 2]) wgt = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
            e += wgt * p[k];
        }
        energy[m] = e;
    }
    // Float FFT leakage floors far below the peak; compare those bins in linear energy.
    const double peak_energy = *std::max_element(energy.begin(), energy.end());
    int oracle_peak = 0;
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double e = energy[m];
        if (e > 1e-6 * peak_energy)
            EXPECT_NEAR(a.mel(m, 0), std::log(std::max(e, cfg.log_floor)), 1e-3) << "bin " << m;
        else
            EXPECT_NEAR(std::exp(double(a.mel(m, 0))), e, 1e-8 * peak_energy) << "bin " << m;
        if (e > energy[oracle_peak]) oracle_peak = m;
    }
    Eigen::Index peak = 0;
    a.mel.col(0).maxCoeff(&peak);
    EXPECT_EQ(peak, oracle_peak);
    EXPECT_GT(edges[peak + 2], hz);
    EXPECT_LT(edges[peak], hz);
}

TEST(MelScale, RoundTripAndFilterShape) {
    for (double hz : {0.0, 100.0, 1000.0, 7999.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-6);
    const Eigen::MatrixXd fb = mel_filterbank(16, 512, 16000, 0, 0);
    EXPECT_GE(fb.minCoeff(), 0.0);
    EXPECT_LE(fb.maxCoeff(), 1.0);
    for (int m = 0; m < 16; ++m) EXPECT_GT(fb.row(m).sum(), 0.0);
}

TEST(Resample, IdentityAndConstant) {
    const Eigen::MatrixXf x = Eigen::MatrixXf::Random(3, 7);
    EXPECT_EQ(resample_columns(x, 7), x);
    const Eigen::MatrixXf c = Eigen::MatrixXf::Constant(2, 5, 1.5f);
    const Eigen::MatrixXf r = resample_columns(c, 13);
    EXPECT_EQ(r.cols(), 13);
    EXPECT_LT((r.array() - 1.5f).abs().maxCoeff(), 1e-6f);
}

TEST(Resample, LinearRampStaysLinearInInterior) {
    Eigen::MatrixXf x(1, 4);
    x << 0, 1, 2, 3;
    const Eigen::MatrixXf r = resample_columns(x, 8);
    for (int i = 2; i < 7; ++i) EXPECT_NEAR(r(0, i) - r(0, i - 1), 0.5f, 1e-6) << i;
}

TEST(Wav, Pcm16RoundTrip) {
    const auto w = sine(300.0, 8000, 1000, 0.8);
    const auto path = (std::filesystem::temp_directory_path() / "mixstage_audio_test.wav").string();
    write_wav_pcm16(path, w, 8000);
    int sr = 0;
    const auto back = read_wav(path, &sr);
    EXPECT_EQ(sr, 8000);
    ASSERT_EQ(back.size(), w.size());
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(back[i], w[i], 0.5 / 32768.0 + 1e-7);
}

TEST(Wav, MalformedFile) {
    const auto path = (std::filesystem::temp_directory_path() / "mixstage_bad.wav").string();
    { std::FILE* f = std::fopen(path.c_str(), "wb"); std::fputs("RIFFxxxxWAVE", f); std::fclose(f); }
    int sr = 0;
    EXPECT_THROW(read_wav(path, &sr), FormatError);
    EXPECT_THROW(read_wav("/nonexistent/x.wav", &sr), FormatError);
}

}  // namespace
}  // namespace mixstage
