#include "mixstage/dataio.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace mixstage {

std::string_view to_string(Split s) {
    switch (s) {
        case Split::kTrain: return "train";
        case Split::kDev: return "dev";
        case Split::kTest: return "test";
        case Split::kAll: return "all";
    }
    return "all";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::kTrain;
    if (s == "dev") return Split::kDev;
    if (s == "test") return Split::kTest;
    if (s == "all") return Split::kAll;
    throw InvalidArgument("unknown split '" + std::string(s) + "'");
}

double mean_shoulder_length(const PoseSequence& p, const Skeleton& sk) {
    if (sk.right_shoulder >= p.joints() || sk.left_shoulder >= p.joints() || sk.root >= p.joints())
        throw RangeError("skeleton shoulder/root joints outside the pose");
    if (p.frames() == 0) return 0.0;
    double sum = 0.0;
    for (int t = 0; t < p.frames(); ++t) {
        const double dx = double(p.x(t, sk.right_shoulder)) - p.x(t, sk.left_shoulder);
        const double dy = double(p.y(t, sk.right_shoulder)) - p.y(t, sk.left_shoulder);
        sum += std::sqrt(dx * dx + dy * dy);
    }
    return sum / p.frames();
}

PoseSequence normalize_pose(const PoseSequence& p, const Skeleton& sk, double target_shoulder) {
    if (!(target_shoulder > 0.0)) throw InvalidArgument("normalize_pose: target shoulder length must be positive");
    const double len = mean_shoulder_length(p, sk);
    if (!(len > 0.0) || !std::isfinite(len)) throw DegeneratePoseError("normalize_pose: zero shoulder length");
    const double scale = target_shoulder / len;
    PoseSequence out = p;
    if (scale == 1.0) return out;
    for (int t = 0; t < p.frames(); ++t) {
        const double rx = p.x(t, sk.root), ry = p.y(t, sk.root);
        for (int j = 0; j < p.joints(); ++j) {
            out.x(t, j) = static_cast<float>(rx + scale * (p.x(t, j) - rx));
            out.y(t, j) = static_cast<float>(ry + scale * (p.y(t, j) - ry));
        }
    }
    return out;
}

std::vector<Sample> make_windows(const Sample& s, int window, int stride) {
    if (window < 1 || stride < 1) throw InvalidArgument("make_windows: window and stride must be positive");
    std::vector<Sample> out;
    const int T = s.pose.frames();
    if (window > T || s.audio.frames() != T) return out;
    for (int start = 0; start + window <= T; start += stride) {
        Sample w;
        w.speaker = s.speaker;
        w.interval_id = s.interval_id + "@" + std::to_string(start);
        w.pose = PoseSequence(s.pose.coords.middleCols(start, window), s.pose.fps);
        w.audio.mel = s.audio.mel.middleCols(start, window);
        w.audio.sample_rate_hz = s.audio.sample_rate_hz;
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<Sample> select_split(const std::vector<Sample>& samples, int n_speakers, Split split, std::uint64_t seed) {
    if (split == Split::kAll) return samples;
    std::vector<Sample> out;
    for (int spk = 0; spk < n_speakers; ++spk) {
        std::vector<const Sample*> mine;
        for (const auto& s : samples)
            if (s.speaker.id == spk) mine.push_back(&s);
        std::sort(mine.begin(), mine.end(), [](auto* a, auto* b) { return a->interval_id < b->interval_id; });
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(spk));
        for (std::size_t i = mine.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(mine[i - 1], mine[pick(rng)]);
        }
        const std::size_t n = mine.size();
        std::size_t n_test = n / 10, n_dev = n / 10;
        if (n >= 3) {
            n_test = std::max<std::size_t>(n_test, 1);
            n_dev = std::max<std::size_t>(n_dev, 1);
        }
        const std::size_t n_train = n - n_test - n_dev;
        std::size_t lo = 0, hi = n_train;
        if (split == Split::kDev) lo = n_train, hi = n_train + n_dev;
        if (split == Split::kTest) lo = n_train + n_dev, hi = n;
        for (std::size_t i = lo; i < hi; ++i) out.push_back(*mine[i]);
    }
    return out;
}

// -------------------------------------------------------------- binary I/O

std::string encode_pose(const PoseSequence& p) {
    binio::Writer w;
    w.magic("MXP1");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(p.frames()));
    w.u32(static_cast<std::uint32_t>(p.joints()));
    w.f32s(p.coords.data(), static_cast<std::size_t>(p.coords.size()));
    return w.take();
}

PoseSequence decode_pose(const std::string& bytes, const std::string& origin) {
    binio::Reader r(bytes, origin);
    r.expect_magic("MXP1");
    if (const auto v = r.u32(); v != 1) r.fail("unsupported pose file version " + std::to_string(v));
    const std::uint32_t T = r.u32();
    const std::uint32_t J = r.u32();
    if (T == 0 || J == 0) r.fail("empty pose header");
    if (r.remaining() != static_cast<std::size_t>(T) * J * 2 * sizeof(float))
        r.fail("payload size does not match header (T=" + std::to_string(T) + ", J=" + std::to_string(J) + ")");
    PoseSequence p(static_cast<int>(T), static_cast<int>(J));
    r.f32s(p.coords.data(), static_cast<std::size_t>(T) * J * 2);
    return p;
}

std::string encode_audio(const AudioFeatures& a) {
    binio::Writer w;
    w.magic("MXA1");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(a.frames()));
    w.u32(static_cast<std::uint32_t>(a.bins()));
    w.f32s(a.mel.data(), static_cast<std::size_t>(a.mel.size()));
    return w.take();
}

AudioFeatures decode_audio(const std::string& bytes, const std::string& origin) {
    binio::Reader r(bytes, origin);
    r.expect_magic("MXA1");
    if (const auto v = r.u32(); v != 1) r.fail("unsupported audio file version " + std::to_string(v));
    const std::uint32_t T = r.u32();
    const std::uint32_t F = r.u32();
    if (T == 0 || F == 0) r.fail("empty audio header");
    if (r.remaining() != static_cast<std::size_t>(T) * F * sizeof(float))
        r.fail("payload size does not match header (T=" + std::to_string(T) + ", F=" + std::to_string(F) + ")");
    AudioFeatures a;
    a.mel.resize(F, T);
    r.f32s(a.mel.data(), static_cast<std::size_t>(T) * F);
    return a;
}

void save_pose(const PoseSequence& p, const std::string& path) { binio::write_file_atomic(path, encode_pose(p)); }
PoseSequence load_pose(const std::string& path) { return decode_pose(binio::read_file(path), path); }
void save_audio(const AudioFeatures& a, const std::string& path) { binio::write_file_atomic(path, encode_audio(a)); }
AudioFeatures load_audio(const std::string& path) { return decode_audio(binio::read_file(path), path); }

void save_dataset(const Dataset& d, const std::string& root) {
    fs::create_directories(fs::path(root) / "pose");
    fs::create_directories(fs::path(root) / "audio");
    std::ostringstream csv;
    csv << "interval_id,speaker,frames\n";
    for (const auto& s : d.samples) {
        if (s.speaker.id < 0 || s.speaker.id >= static_cast<int>(d.speakers.size()))
            throw RangeError("save_dataset: sample " + s.interval_id + " has no speaker name");
        if (s.interval_id.find_first_of(",\n/") != std::string::npos)
            throw InvalidArgument("save_dataset: interval id '" + s.interval_id + "' contains a reserved character");
        save_pose(s.pose, (fs::path(root) / "pose" / (s.interval_id + ".mxp")).string());
        save_audio(s.audio, (fs::path(root) / "audio" / (s.interval_id + ".mxa")).string());
        csv << s.interval_id << ',' << d.speakers[s.speaker.id] << ',' << s.pose.frames() << '\n';
    }
    binio::write_file_atomic((fs::path(root) / "intervals.csv").string(), csv.str());
}

namespace {

struct IntervalRow {
    std::string id, speaker;
    int frames = 0;
};

std::vector<IntervalRow> read_interval_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path, 0, "cannot open interval metadata");
    std::string line;
    std::uint64_t offset = 0;
    if (!std::getline(in, line) || (line != "interval_id,speaker,frames" && line != "interval_id,speaker,frames\r"))
        throw FormatError(path, 0, "expected header 'interval_id,speaker,frames'");
    offset += line.size() + 1;
    std::vector<IntervalRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            offset += 1;
            continue;
        }
        const auto a = line.find(','), b = line.rfind(',');
        if (a == std::string::npos || a == b) throw FormatError(path, offset, "expected three fields");
        IntervalRow row{line.substr(0, a), line.substr(a + 1, b - a - 1), 0};
        try {
            row.frames = std::stoi(line.substr(b + 1));
        } catch (const std::exception&) {
            throw FormatError(path, offset, "frames field is not an integer");
        }
        rows.push_back(std::move(row));
        offset += line.size() + 1;
    }
    return rows;
}

}  // namespace

Dataset load_dataset(const std::string& root, const std::vector<std::string>& speakers, Split split,
                     std::uint64_t split_seed) {
    const auto rows = read_interval_csv((fs::path(root) / "intervals.csv").string());
    Dataset d;
    d.split = split;
    d.speakers = speakers;
    if (d.speakers.empty()) {
        for (const auto& r : rows)
            if (std::find(d.speakers.begin(), d.speakers.end(), r.speaker) == d.speakers.end()) d.speakers.push_back(r.speaker);
    }
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < d.speakers.size(); ++i) index[d.speakers[i]] = static_cast<int>(i);
    for (const auto& name : d.speakers) {
        if (std::none_of(rows.begin(), rows.end(), [&](const IntervalRow& r) { return r.speaker == name; }))
            throw InvalidArgument("unknown speaker '" + name + "' in " + root);
    }

    std::vector<Sample> all;
    for (const auto& r : rows) {
        const auto it = index.find(r.speaker);
        if (it == index.end()) continue;
        const std::string pose_path = (fs::path(root) / "pose" / (r.id + ".mxp")).string();
        const std::string audio_path = (fs::path(root) / "audio" / (r.id + ".mxa")).string();
        Sample s;
        s.interval_id = r.id;
        s.speaker = {it->second};
        s.pose = load_pose(pose_path);
        s.audio = load_audio(audio_path);
        if (s.pose.frames() != r.frames)
            throw FormatError(pose_path, 8, "frame count disagrees with intervals.csv");
        if (!s.pose.coords.allFinite() || !s.audio.mel.allFinite()) {
            spdlog::warn("skipping interval {}: non-finite values", r.id);
            ++d.rejected;
            continue;
        }
        all.push_back(std::move(s));
    }
    d.samples = select_split(all, static_cast<int>(d.speakers.size()), split, split_seed);
    return d;
}

// -------------------------------------------------------------- synthetic

void validate(const SynthConfig& c) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("synth config: ") + what);
    };
    require(c.n_speakers >= 1, "n_speakers must be >= 1");
    require(c.modes_per_speaker >= 1, "modes_per_speaker must be >= 1");
    require(c.n_intervals >= 1, "n_intervals must be >= 1");
    require(c.T >= 1, "T must be >= 1");
    require(c.J >= 8, "J must be >= 8 for the upper-body skeleton");
    require(c.F >= 4, "F must be >= 4");
    require(c.jitter >= 0.0, "jitter must be >= 0");
    require(c.sample_rate >= 1000, "sample_rate must be >= 1000");
    require(c.min_segment >= 1 && c.max_segment >= c.min_segment, "segment bounds");
    require(c.mode_ambiguity >= 0.0 && c.mode_ambiguity <= 1.0, "mode_ambiguity must be in [0, 1]");
    require(c.mode_ambiguity == 0.0 || c.modes_per_speaker >= 2, "mode_ambiguity needs at least two modes per speaker");
    require(!c.disjoint_modes || c.modes_per_speaker <= 4, "disjoint_modes supports at most 4 modes per speaker");
}

namespace {

Eigen::VectorXf base_pose(int J) {
    Eigen::VectorXf p = Eigen::VectorXf::Zero(2 * J);
    const float xy[8][2] = {{0, 0}, {0, 0.5f}, {-0.5f, 0}, {-0.7f, -0.5f}, {-0.6f, -1.0f},
                            {0.5f, 0}, {0.7f, -0.5f}, {0.6f, -1.0f}};
    for (int j = 0; j < 8; ++j) p(2 * j) = xy[j][0], p(2 * j + 1) = xy[j][1];
    for (int j = 8; j < J; ++j) {
        const int wrist = (j % 2 == 0) ? 4 : 7;
        p(2 * j) = p(2 * wrist);
        p(2 * j + 1) = p(2 * wrist + 1) - 0.15f;
    }
    return p;
}

std::vector<int> arm_joints(int J, bool right) {
    std::vector<int> out = right ? std::vector<int>{3, 4} : std::vector<int>{6, 7};
    for (int j = 8; j < J; ++j)
        if ((j % 2 == 0) == right) out.push_back(j);
    return out;
}

// A rest mode moves elbows, wrists and hand tips; shoulders, neck and nose stay put.
Eigen::VectorXf random_mode(int J, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(-0.45f, 0.45f);
    Eigen::VectorXf p = base_pose(J);
    for (bool right : {true, false}) {
        const int elbow = right ? 3 : 6, wrist = right ? 4 : 7;
        const float ex = u(rng), ey = u(rng), wx = ex + u(rng), wy = ey + u(rng);
        p(2 * elbow) += ex, p(2 * elbow + 1) += ey;
        p(2 * wrist) += wx, p(2 * wrist + 1) += wy;
        for (int j : arm_joints(J, right))
            if (j >= 8) p(2 * j) += wx, p(2 * j + 1) += wy;
    }
    return p;
}

// RBJ band-pass biquad (constant 0 dB peak gain).
std::vector<float> bandpass(const std::vector<float>& x, double center, double q, int sr) {
    const double w0 = 2.0 * std::numbers::pi * center / sr;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    const double b0 = alpha / a0, b2 = -alpha / a0;
    const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
    std::vector<float> y(x.size());
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = b0 * x[i] + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1, x1 = x[i], y2 = y1, y1 = v;
        y[i] = static_cast<float>(v);
    }
    return y;
}

// Joint groups owned by the modes of the disjoint layout.
std::vector<int> mode_group(int J, int g) {
    switch (g) {
        case 0: return {3};
        case 2: return {6};
        default: {
            std::vector<int> js{g == 1 ? 4 : 7};
            for (int j = 8; j < J; ++j)
                if ((j % 2 == 0) == (g == 1)) js.push_back(j);
            return js;
        }
    }
}

std::vector<Eigen::VectorXf> disjoint_speaker_modes(int J, int P, double separation, std::mt19937_64& rng) {
    const Eigen::VectorXf base = random_mode(J, rng);
    std::uniform_real_distribution<float> angle(0.0f, 2.0f * std::numbers::pi_v<float>);
    std::vector<Eigen::VectorXf> out;
    for (int m = 0; m < P; ++m) {
        Eigen::VectorXf p = base;
        const float a = angle(rng), len = static_cast<float>(separation);
        for (int j : mode_group(J, m)) p(2 * j) += len * std::cos(a), p(2 * j + 1) += len * std::sin(a);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

PoseSequence apply_synth_rule(const SynthSpeakerRule& rule, const AudioFeatures& audio, const std::vector<int>& classes,
                              int joints) {
    const int T = audio.frames();
    if (static_cast<int>(classes.size()) != T) throw ShapeError("apply_synth_rule: one class per frame required");
    PoseSequence p(T, joints);
    for (int t = 0; t < T; ++t) {
        const double drive = audio.mel.col(t).segment(rule.band_lo, rule.band_hi - rule.band_lo).cast<double>().mean();
        const float amp = static_cast<float>(std::tanh((drive - rule.drive_mean) / rule.drive_scale));
        p.coords.col(t) = rule.rest_modes.at(classes[t]);
        for (std::size_t k = 0; k < rule.moving_joints.size(); ++k) {
            const int j = rule.moving_joints[k];
            p.x(t, j) += amp * rule.directions(0, k);
            p.y(t, j) += amp * rule.directions(1, k);
        }
    }
    return p;
}

SynthDataset synth_multispeaker(const SynthConfig& cfg) {
    validate(cfg);
    std::mt19937_64 rng(cfg.seed);
    SynthDataset out;
    out.skeleton = Skeleton::upper_body(cfg.J);
    const int P = cfg.modes_per_speaker;
    out.total_modes = cfg.n_speakers * P;

    // Rest modes, pairwise separated across every speaker.
    std::vector<Eigen::VectorXf> modes;
    if (cfg.disjoint_modes) {
        for (int k = 0; k < cfg.n_speakers; ++k)
            for (auto& m : disjoint_speaker_modes(cfg.J, P, cfg.mode_separation, rng)) modes.push_back(std::move(m));
    }
    for (int attempt = 0; static_cast<int>(modes.size()) < out.total_modes; ++attempt) {
        if (attempt > 100000) throw InvalidArgument("synth config: mode_separation too large to satisfy");
        Eigen::VectorXf cand = random_mode(cfg.J, rng);
        bool ok = true;
        for (const auto& m : modes) ok = ok && (m - cand).norm() >= cfg.mode_separation;
        if (ok) modes.push_back(cand);
    }

    // Class c of every speaker is voiced as noise around a shared centre frequency.
    std::vector<double> centers(P);
    for (int c = 0; c < P; ++c) centers[c] = 300.0 * std::pow(12.0, (c + 0.5) / P);

    std::uniform_int_distribution<int> band_start(0, cfg.F - std::max(2, cfg.F / 4));
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (int k = 0; k < cfg.n_speakers; ++k) {
        SynthSpeakerRule rule;
        rule.band_lo = band_start(rng);
        rule.band_hi = rule.band_lo + std::max(2, cfg.F / 4);
        rule.moving_joints = arm_joints(cfg.J, k % 2 == 0);
        rule.directions.resize(2, static_cast<Eigen::Index>(rule.moving_joints.size()));
        const float theta0 = std::uniform_real_distribution<float>(0.0f, 2.0f * std::numbers::pi_v<float>)(rng);
        for (std::size_t i = 0; i < rule.moving_joints.size(); ++i) {
            const float theta = theta0 + 0.3f * static_cast<float>(i);
            const float gain = static_cast<float>(cfg.motion_amplitude) * (rule.moving_joints[i] == 3 || rule.moving_joints[i] == 6 ? 0.5f : 1.0f);
            rule.directions(0, i) = gain * std::cos(theta);
            rule.directions(1, i) = gain * std::sin(theta);
        }
        for (int c = 0; c < P; ++c) rule.rest_modes.push_back(modes[k * P + c]);
        out.rules.push_back(std::move(rule));
    }

    const int samples_total = static_cast<int>(std::lround(cfg.T * cfg.sample_rate / kPoseFps));
    MelConfig mel_cfg;
    mel_cfg.n_mels = cfg.F;
    std::vector<std::vector<int>> classes_of;  // pose mode class per frame
    for (int k = 0; k < cfg.n_speakers; ++k) {
        out.dataset.speakers.push_back("spk" + std::to_string(k));
        for (int i = 0; i < cfg.n_intervals; ++i) {
            // Segment classes per frame.
            std::vector<int> classes(cfg.T), modes_here(cfg.T);
            std::uniform_int_distribution<int> seg_len(cfg.min_segment, cfg.max_segment);
            std::uniform_int_distribution<int> seg_class(0, P - 1);
            std::bernoulli_distribution swap_mode(cfg.mode_ambiguity);
            for (int t = 0; t < cfg.T;) {
                const int len = seg_len(rng), c = seg_class(rng);
                int m = c;
                if (cfg.mode_ambiguity > 0.0 && swap_mode(rng)) {
                    m = std::uniform_int_distribution<int>(0, P - 2)(rng);
                    if (m >= c) ++m;
                }
                for (int u = t; u < std::min(cfg.T, t + len); ++u) classes[u] = c, modes_here[u] = m;
                t += len;
            }
            // Envelope knots every 4 frames.
            std::uniform_real_distribution<float> env_u(0.1f, 1.0f);
            std::vector<float> knots(cfg.T / 4 + 2);
            for (auto& v : knots) v = env_u(rng);

            std::vector<float> white(samples_total), floor_noise(samples_total);
            for (auto& v : white) v = gauss(rng);
            for (auto& v : floor_noise) v = gauss(rng);
            std::vector<std::vector<float>> voiced;
            for (int c = 0; c < P; ++c) voiced.push_back(bandpass(white, centers[c], 4.0, cfg.sample_rate));

            std::vector<float> wave(samples_total);
            for (int n = 0; n < samples_total; ++n) {
                const double frame_pos = n * kPoseFps / cfg.sample_rate;
                const int t = std::min(cfg.T - 1, static_cast<int>(frame_pos));
                const double kp = frame_pos / 4.0;
                const auto k0 = std::min<std::size_t>(static_cast<std::size_t>(kp), knots.size() - 2);
                const float w = static_cast<float>(kp - static_cast<double>(k0));
                const float env = (1.0f - w) * knots[k0] + w * knots[k0 + 1];
                wave[n] = 0.3f * env * (voiced[classes[t]][n] + 0.05f * floor_noise[n]);
            }

            Sample s;
            s.speaker = {k};
            char id[32];
            std::snprintf(id, sizeof id, "spk%d_%04d", k, i);
            s.interval_id = id;
            s.audio = extract_audio_features(wave, cfg.sample_rate, cfg.T, mel_cfg);
            out.dataset.samples.push_back(std::move(s));
            classes_of.push_back(std::move(modes_here));
        }
    }

    // Drive normalization per speaker from that speaker's own audio.
    for (int k = 0; k < cfg.n_speakers; ++k) {
        auto& rule = out.rules[k];
        double sum = 0.0, sq = 0.0;
        long n = 0;
        for (const auto& s : out.dataset.samples) {
            if (s.speaker.id != k) continue;
            for (int t = 0; t < s.audio.frames(); ++t) {
                const double d = s.audio.mel.col(t).segment(rule.band_lo, rule.band_hi - rule.band_lo).cast<double>().mean();
                sum += d, sq += d * d, ++n;
            }
        }
        rule.drive_mean = sum / n;
        rule.drive_scale = std::max(1e-3, std::sqrt(std::max(0.0, sq / n - rule.drive_mean * rule.drive_mean)));
    }

    for (std::size_t i = 0; i < out.dataset.samples.size(); ++i) {
        auto& s = out.dataset.samples[i];
        const int k = s.speaker.id;
        s.pose = apply_synth_rule(out.rules[k], s.audio, classes_of[i], cfg.J);
        if (cfg.jitter > 0.0) {
            std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.jitter));
            for (Eigen::Index e = 0; e < s.pose.coords.size(); ++e) s.pose.coords.data()[e] += noise(rng);
            s.pose = normalize_pose(s.pose, out.skeleton, 1.0);
        }
        std::vector<int> labels(classes_of[i].size());
        for (std::size_t t = 0; t < labels.size(); ++t) labels[t] = k * P + classes_of[i][t];
        out.mode_labels.push_back(std::move(labels));
    }
    return out;
}

Eigen::MatrixXd synth_mode_centers(const SynthDataset& d) {
    const int dim = 2 * d.skeleton.joints;
    Eigen::MatrixXd out(dim, d.total_modes);
    int col = 0;
    for (const auto& r : d.rules)
        for (const auto& m : r.rest_modes) {
            Eigen::VectorXd v = m.cast<double>();
            for (int j = 0; j < dim / 2; ++j) v(2 * j) -= m(0), v(2 * j + 1) -= m(1);
            out.col(col++) = v;
        }
    return out;
}

}  // namespace mixstage
