#include "mixstage/audio.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numbers>

namespace mixstage {

namespace {

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftwf_free(p); }
};

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin_hz, double fmax_hz) {
    if (n_mels < 1 || n_fft < 2 || sample_rate <= 0) throw InvalidArgument("mel_filterbank: bad parameters");
    if (fmax_hz <= 0.0) fmax_hz = sample_rate / 2.0;
    const int bins = n_fft / 2 + 1;
    const double lo = hz_to_mel(fmin_hz);
    const double hi = hz_to_mel(fmax_hz);
    std::vector<double> edges(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));

    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, bins);
    for (int m = 0; m < n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            if (f > left && f < right)
                fb(m, k) = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
        }
    }
    return fb;
}

Eigen::VectorXd power_spectrum(std::span<const float> frame, int n_fft) {
    if (static_cast<int>(frame.size()) > n_fft) throw InvalidArgument("power_spectrum: frame longer than n_fft");
    const int bins = n_fft / 2 + 1;
    std::unique_ptr<float, FftwFree> in(static_cast<float*>(fftwf_malloc(sizeof(float) * n_fft)));
    std::unique_ptr<fftwf_complex, FftwFree> out(static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * bins)));
    fftwf_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftwf_plan_dft_r2c_1d(n_fft, in.get(), out.get(), FFTW_ESTIMATE);
    }
    std::fill(in.get(), in.get() + n_fft, 0.0f);
    std::copy(frame.begin(), frame.end(), in.get());
    fftwf_execute(plan);
    Eigen::VectorXd p(bins);
    for (int k = 0; k < bins; ++k) {
        const double re = out.get()[k][0], im = out.get()[k][1];
        p(k) = re * re + im * im;
    }
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftwf_destroy_plan(plan);
    }
    return p;
}

std::vector<float> hann_window(int length) {
    std::vector<float> w(length);
    for (int i = 0; i < length; ++i)
        w[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length));
    return w;
}

StftGeometry stft_geometry(int sample_rate, const MelConfig& cfg) {
    StftGeometry g;
    g.window = std::max(2, static_cast<int>(std::lround(sample_rate * cfg.window_ms / 1000.0)));
    g.hop = std::max(1, static_cast<int>(std::lround(sample_rate * cfg.hop_ms / 1000.0)));
    g.n_fft = 1;
    while (g.n_fft < g.window) g.n_fft *= 2;
    return g;
}

Eigen::MatrixXf resample_columns(const Eigen::MatrixXf& x, int frames) {
    if (x.cols() < 1 || frames < 1) throw InvalidArgument("resample_columns: empty input or target");
    Eigen::MatrixXf out(x.rows(), frames);
    const double n = static_cast<double>(x.cols());
    for (int i = 0; i < frames; ++i) {
        double u = (i + 0.5) * n / frames - 0.5;
        u = std::clamp(u, 0.0, n - 1.0);
        const auto i0 = static_cast<Eigen::Index>(std::floor(u));
        const Eigen::Index i1 = std::min<Eigen::Index>(i0 + 1, x.cols() - 1);
        const float w = static_cast<float>(u - static_cast<double>(i0));
        out.col(i) = (1.0f - w) * x.col(i0) + w * x.col(i1);
    }
    return out;
}

AudioFeatures extract_audio_features(std::span<const float> waveform, int sample_rate, int frames, const MelConfig& cfg) {
    if (sample_rate <= 0) throw InvalidArgument("extract_audio_features: sample rate must be positive");
    if (frames < 1) throw InvalidArgument("extract_audio_features: target frame count must be positive");
    if (waveform.empty()) throw EmptyAudioError("extract_audio_features: empty waveform");
    if (std::none_of(waveform.begin(), waveform.end(), [](float v) { return std::abs(v) > 1e-12f; }))
        throw EmptyAudioError("extract_audio_features: silent waveform");

    const StftGeometry g = stft_geometry(sample_rate, cfg);
    const int bins = g.n_fft / 2 + 1;
    const int length = static_cast<int>(waveform.size());
    const int n_frames = length <= g.window ? 1 : 1 + (length - g.window) / g.hop;
    const Eigen::MatrixXd fb = mel_filterbank(cfg.n_mels, g.n_fft, sample_rate, cfg.fmin_hz, cfg.fmax_hz);
    const std::vector<float> win = hann_window(g.window);

    std::unique_ptr<float, FftwFree> in(static_cast<float*>(fftwf_malloc(sizeof(float) * g.n_fft)));
    std::unique_ptr<fftwf_complex, FftwFree> out(static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * bins)));
    fftwf_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftwf_plan_dft_r2c_1d(g.n_fft, in.get(), out.get(), FFTW_ESTIMATE);
    }

    Eigen::MatrixXf mel(cfg.n_mels, n_frames);
    Eigen::VectorXd power(bins);
    for (int f = 0; f < n_frames; ++f) {
        const int start = f * g.hop;
        std::fill(in.get(), in.get() + g.n_fft, 0.0f);
        for (int i = 0; i < g.window && start + i < length; ++i) in.get()[i] = waveform[start + i] * win[i];
        fftwf_execute(plan);
        for (int k = 0; k < bins; ++k) {
            const double re = out.get()[k][0], im = out.get()[k][1];
            power(k) = re * re + im * im;
        }
        const Eigen::VectorXd energies = fb * power;
        for (int m = 0; m < cfg.n_mels; ++m)
            mel(m, f) = static_cast<float>(std::log(std::max(energies(m), cfg.log_floor)));
    }
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftwf_destroy_plan(plan);
    }

    AudioFeatures a;
    a.mel = resample_columns(mel, frames);
    a.sample_rate_hz = sample_rate;
    return a;
}

std::vector<float> read_wav(const std::string& path, int* sample_rate) {
    const std::string bytes = binio::read_file(path);
    binio::Reader r(bytes, path);
    r.expect_magic("RIFF");
    r.u32();
    r.expect_magic("WAVE");
    int channels = 0, bits = 0, format = 0, rate = 0;
    while (r.remaining() >= 8) {
        const std::size_t chunk_at = r.offset();
        const std::string id = bytes.substr(chunk_at, 4);
        r.expect_magic(id);
        const std::uint32_t size = r.u32();
        if (r.remaining() < size) r.fail("chunk '" + id + "' runs past end of file");
        const std::size_t body = r.offset();
        if (id == "fmt ") {
            if (size < 16) r.fail("fmt chunk too small");
            std::uint16_t fields[8];
            std::memcpy(fields, bytes.data() + body, 16);
            format = fields[0];
            channels = fields[1];
            std::memcpy(&rate, bytes.data() + body + 4, 4);
            bits = fields[7];
        } else if (id == "data") {
            if (channels < 1) r.fail("data chunk before fmt chunk");
            const int width = bits / 8;
            if (!((format == 1 && bits == 16) || (format == 3 && bits == 32)))
                r.fail("unsupported WAVE encoding (need PCM16 or float32)");
            const std::size_t n = size / (static_cast<std::size_t>(width) * channels);
            std::vector<float> samples(n, 0.0f);
            for (std::size_t i = 0; i < n; ++i) {
                float acc = 0.0f;
                for (int c = 0; c < channels; ++c) {
                    const char* p = bytes.data() + body + (i * channels + c) * width;
                    if (format == 1) {
                        std::int16_t v;
                        std::memcpy(&v, p, 2);
                        acc += static_cast<float>(v) / 32768.0f;
                    } else {
                        float v;
                        std::memcpy(&v, p, 4);
                        acc += v;
                    }
                }
                samples[i] = acc / static_cast<float>(channels);
            }
            if (sample_rate) *sample_rate = rate;
            return samples;
        }
        r.skip(std::min<std::size_t>(size + (size & 1u), r.remaining()));
    }
    r.fail("no data chunk");
}

void write_wav_pcm16(const std::string& path, std::span<const float> samples, int sample_rate) {
    binio::Writer w;
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    w.magic("RIFF");
    w.u32(36 + data_bytes);
    w.magic("WAVE");
    w.magic("fmt ");
    w.u32(16);
    const std::uint16_t fmt[2] = {1, 1};
    w.bytes(fmt, sizeof fmt);
    w.u32(static_cast<std::uint32_t>(sample_rate));
    w.u32(static_cast<std::uint32_t>(sample_rate * 2));
    const std::uint16_t align_bits[2] = {2, 16};
    w.bytes(align_bits, sizeof align_bits);
    w.magic("data");
    w.u32(data_bytes);
    for (float s : samples) {
        const auto v = static_cast<std::int16_t>(std::clamp<long>(std::lround(s * 32768.0f), -32768, 32767));
        w.bytes(&v, sizeof v);
    }
    binio::write_file_atomic(path, w.buffer());
}

}  // namespace mixstage
