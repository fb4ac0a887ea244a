#pragma once

#include "mixstage/types.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace mixstage {

struct MelConfig {
    int n_mels = 64;
    double window_ms = 25.0;
    double hop_ms = 10.0;
    double fmin_hz = 0.0;
    double fmax_hz = 0.0;  ///< 0 selects the Nyquist frequency
    double log_floor = 1e-10;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-mel filters, [n_mels, n_fft / 2 + 1].
Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin_hz, double fmax_hz);

/// |rfft(frame)|^2 of a frame zero-padded to n_fft (no window applied here).
Eigen::VectorXd power_spectrum(std::span<const float> frame, int n_fft);

/// Periodic Hann window.
std::vector<float> hann_window(int length);

/// STFT frame geometry derived from the sample rate.
struct StftGeometry {
    int window = 0;
    int hop = 0;
    int n_fft = 0;
};
StftGeometry stft_geometry(int sample_rate, const MelConfig& cfg);

/// Log-mel spectrogram at a fixed hop, linearly resampled along time to exactly
/// `frames` columns. Throws EmptyAudioError for empty or all-zero input.
AudioFeatures extract_audio_features(std::span<const float> waveform, int sample_rate, int frames,
                                     const MelConfig& cfg = {});

/// Linear interpolation of columns so the result has `frames` columns.
Eigen::MatrixXf resample_columns(const Eigen::MatrixXf& x, int frames);

/// Mono RIFF/WAVE reader (PCM16 or IEEE float32). Multi-channel input is averaged.
std::vector<float> read_wav(const std::string& path, int* sample_rate);
void write_wav_pcm16(const std::string& path, std::span<const float> samples, int sample_rate);

}  // namespace mixstage
