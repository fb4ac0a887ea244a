#include "cli.hpp"

#include "manifest.hpp"
#include "settings.hpp"

#include "mixstage/audio.hpp"
#include "mixstage/binio.hpp"
#include "mixstage/checkpoint.hpp"
#include "mixstage/dataio.hpp"
#include "mixstage/error.hpp"
#include "mixstage/inference.hpp"
#include "mixstage/metrics.hpp"
#include "mixstage/modes.hpp"
#include "mixstage/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace mixstage::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kModesFile = "modes.mxc";

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

bool is_integer(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

/// Manifest path for a command writing into `out`: inside it when it is a
/// directory, next to it when it is a file.
std::string manifest_path(const std::string& command, const std::string& out, bool out_is_dir) {
    if (out_is_dir) return (fs::path(out) / ("manifest_" + command + ".json")).string();
    return out + ".manifest.json";
}

class ManifestScope {
public:
    ManifestScope(std::string command, std::vector<std::string> argv, std::string path)
        : path_(std::move(path)) {
        m_.command = std::move(command);
        m_.argv = std::move(argv);
        m_.source_revision = source_revision();
        m_.started_at = utc_timestamp();
    }

    RunManifest& manifest() { return m_; }

    void begin(const Settings& s, std::uint64_t seed, std::vector<std::string> outputs) {
        m_.config = s.resolved();
        m_.sources = s.sources();
        m_.seed = seed;
        m_.outputs = std::move(outputs);
        write_manifest(m_, path_);
        spdlog::info("{} config {} (hash {})", m_.command, m_.config.dump(), m_.config_hash().substr(0, 12));
    }

    void finish() {
        m_.finished_at = utc_timestamp();
        write_manifest(m_, path_);
    }

private:
    RunManifest m_;
    std::string path_;
};

/// Speaker names of a dataset root in first-appearance order of intervals.csv.
std::vector<std::string> dataset_speakers(const std::string& root) {
    const std::string path = (fs::path(root) / "intervals.csv").string();
    std::ifstream in(path);
    if (!in) throw FormatError(path, 0, "cannot open file");
    std::string line;
    std::getline(in, line);
    std::vector<std::string> names;
    while (std::getline(in, line)) {
        const auto fields = split_list(line);
        if (fields.size() < 2) continue;
        if (std::find(names.begin(), names.end(), fields[1]) == names.end()) names.push_back(fields[1]);
    }
    return names;
}

int resolve_speaker(const std::string& token, const std::vector<std::string>& names) {
    if (is_integer(token)) return std::stoi(token);
    const auto it = std::find(names.begin(), names.end(), token);
    if (it == names.end()) {
        if (names.empty()) throw InvalidArgument("speaker '" + token + "' needs --data to resolve its name");
        throw InvalidArgument("unknown speaker '" + token + "'");
    }
    return static_cast<int>(it - names.begin());
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
};

void run_synth(const SynthArgs& a, ManifestScope& scope) {
    Settings s = a.config.empty() ? Settings() : Settings::from_file(a.config);
    SynthConfig c;
    c.n_speakers = s.get("n_speakers", c.n_speakers);
    c.modes_per_speaker = s.get("modes_per_speaker", c.modes_per_speaker);
    c.n_intervals = s.get("n_intervals", c.n_intervals);
    c.T = s.get("T", c.T);
    c.J = s.get("J", c.J);
    c.F = s.get("F", c.F);
    c.seed = s.get("seed", c.seed, a.seed);
    c.jitter = s.get("jitter", c.jitter);
    c.motion_amplitude = s.get("motion_amplitude", c.motion_amplitude);
    c.mode_separation = s.get("mode_separation", c.mode_separation);
    c.sample_rate = s.get("sample_rate", c.sample_rate);
    c.min_segment = s.get("min_segment", c.min_segment);
    c.max_segment = s.get("max_segment", c.max_segment);
    c.mode_ambiguity = s.get("mode_ambiguity", c.mode_ambiguity);
    c.disjoint_modes = s.get("disjoint_modes", c.disjoint_modes);
    s.reject_unknown();
    validate(c);

    const fs::path out(a.out);
    scope.begin(s, c.seed, {(out / "intervals.csv").string(), (out / "pose").string(), (out / "audio").string()});
    const SynthDataset d = synth_multispeaker(c);
    save_dataset(d.dataset, a.out);
    spdlog::info("wrote {} intervals of {} speakers to {}", d.dataset.samples.size(), d.dataset.speakers.size(),
                 a.out);
}

// ------------------------------------------------------------------- prep

struct PrepArgs {
    std::string root, out, speakers;
    double target_shoulder = 1.0;
    std::string shoulders = "2,5";
    int root_joint = 0;
    int mels = 64;
};

void run_prep(const PrepArgs& a, ManifestScope& scope) {
    Settings s;
    const std::string out = a.out.empty() ? a.root : a.out;
    const auto speakers = split_list(s.get<std::string>("speakers", "", a.speakers));
    const double target = s.get("target_shoulder", 1.0, std::optional<double>(a.target_shoulder));
    const auto shoulders = split_list(s.get("shoulders", std::string("2,5"), std::optional<std::string>(a.shoulders)));
    const int root_joint = s.get("root_joint", 0, std::optional<int>(a.root_joint));
    const int mels = s.get("mels", 64, std::optional<int>(a.mels));
    if (shoulders.size() != 2 || !is_integer(shoulders[0]) || !is_integer(shoulders[1]))
        throw InvalidArgument("--shoulders expects two joint indices 'right,left'");
    if (!(target > 0.0)) throw InvalidArgument("--target-shoulder must be positive");

    scope.begin(s, 0, {(fs::path(out) / "intervals.csv").string()});
    Dataset d = load_dataset(a.root, speakers, Split::kAll);
    if (d.rejected > 0) spdlog::warn("dropped {} intervals with non-finite values", d.rejected);

    std::size_t reextracted = 0;
    for (Sample& sample : d.samples) {
        Skeleton sk;
        sk.joints = sample.pose.joints();
        sk.root = root_joint;
        sk.right_shoulder = std::stoi(shoulders[0]);
        sk.left_shoulder = std::stoi(shoulders[1]);
        sk.check();
        sample.pose = normalize_pose(sample.pose, sk, target);

        const fs::path wav = fs::path(a.root) / "wav" / (sample.interval_id + ".wav");
        if (fs::exists(wav)) {
            int sr = 0;
            const std::vector<float> wave = read_wav(wav.string(), &sr);
            MelConfig mc;
            mc.n_mels = mels;
            sample.audio = extract_audio_features(wave, sr, sample.pose.frames(), mc);
            ++reextracted;
        }
    }
    save_dataset(d, out);
    spdlog::info("normalized {} intervals ({} with audio from wav/) into {}", d.samples.size(), reextracted, out);
}

// ---------------------------------------------------------------- cluster

struct ClusterArgs {
    std::string data, out, speakers;
    int M = 4;
    int restarts = 10;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
};

std::string modes_path(const std::string& out) {
    if (fs::path(out).extension() == ".mxc") return out;
    return (fs::path(out) / kModesFile).string();
}

void run_cluster(const ClusterArgs& a, ManifestScope& scope) {
    Settings s;
    const int M = s.get("M", 4, std::optional<int>(a.M));
    LloydOptions opt;
    opt.restarts = s.get("restarts", opt.restarts, std::optional<int>(a.restarts));
    opt.seed = s.get("seed", opt.seed, std::optional<std::uint64_t>(a.seed));
    const auto split_seed = s.get("split_seed", std::uint64_t{0}, std::optional<std::uint64_t>(a.split_seed));
    const auto speakers = split_list(s.get<std::string>("speakers", "", a.speakers));
    if (M < 1) throw InvalidArgument("--M must be positive");

    const std::string path = modes_path(a.out);
    scope.begin(s, opt.seed, {path});
    const Dataset train = load_dataset(a.data, speakers, Split::kTrain, split_seed);
    std::vector<PoseSequence> poses;
    for (const Sample& x : train.samples) poses.push_back(x.pose);
    LloydTrace trace;
    const ModeModel model = fit_modes(poses, M, opt, &trace);
    save_mode_model(model, path);
    spdlog::info("fitted {} modes on {} train intervals, inertia {:.6g} after {} iterations", M, poses.size(),
                 model.fit_inertia, trace.iterations);
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string config, data, out, resume, modes;
    std::optional<long> iterations, checkpoint_every;
    std::optional<int> batch_size, M;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a, ManifestScope& scope) {
    Settings s = a.config.empty() ? Settings() : Settings::from_file(a.config);
    TrainConfig cfg;
    cfg.iterations = s.get("iterations", cfg.iterations, a.iterations);
    cfg.checkpoint_every = s.get("checkpoint_every", cfg.checkpoint_every, a.checkpoint_every);
    cfg.lr = s.get("lr", cfg.lr, a.lr);
    cfg.lr_decay = s.get("lr_decay", cfg.lr_decay);
    cfg.batch_size = s.get("batch_size", cfg.batch_size, a.batch_size);
    cfg.lambda_id = s.get("lambda_id", cfg.lambda_id);
    cfg.seed = s.get("seed", cfg.seed, a.seed);
    cfg.M = s.get("M", cfg.M, a.M);
    cfg.device = s.get("device", cfg.device);
    cfg.adv_saturating = s.get("adv_saturating", cfg.adv_saturating);
    cfg.window_stride = s.get("window_stride", cfg.window_stride);
    cfg.log_every = s.get("log_every", cfg.log_every);

    ArchitectureConfig arch;
    arch.M = cfg.M;
    arch.D = s.get("D", arch.D);
    arch.content_dim = s.get("content_dim", arch.content_dim);
    arch.hidden = s.get("hidden", arch.hidden);
    arch.window_T = s.get("window_T", arch.window_T);
    arch.unet_depth = s.get("unet_depth", arch.unet_depth);

    const auto speakers = s.get("speakers", std::vector<std::string>{});
    const auto split_seed = s.get("split_seed", std::uint64_t{0});
    LloydOptions lloyd;
    lloyd.restarts = s.get("lloyd_restarts", lloyd.restarts);
    lloyd.seed = cfg.seed;
    s.reject_unknown();
    if (cfg.device != "cpu") throw InvalidArgument("device '" + cfg.device + "' is not available; use \"cpu\"");

    const Dataset train = load_dataset(a.data, speakers, Split::kTrain, split_seed);
    const Dataset dev = load_dataset(a.data, speakers, Split::kDev, split_seed);
    if (train.samples.empty()) throw InsufficientDataError("no training intervals in " + a.data);
    const Sample& first = train.samples.front();
    arch.N = static_cast<int>(train.speakers.size());
    arch.J = first.pose.joints();
    arch.F = first.audio.bins();
    validate(arch);
    validate(cfg, arch);

    const fs::path out(a.out);
    scope.begin(s, cfg.seed, {(out / "best.mxk").string(), (out / "train_log.csv").string()});

    std::string modes_file = a.modes;
    if (modes_file.empty() && fs::exists(fs::path(a.data) / kModesFile)) modes_file = (fs::path(a.data) / kModesFile).string();
    ModeModel modes;
    if (!modes_file.empty()) {
        modes = load_mode_model(modes_file);
        spdlog::info("using mode model {}", modes_file);
    } else {
        std::vector<PoseSequence> poses;
        for (const Sample& x : train.samples) poses.push_back(x.pose);
        modes = fit_modes(poses, cfg.M, lloyd);
        spdlog::info("fitted {} modes on the training split", cfg.M);
    }
    if (modes.modes() != cfg.M)
        throw ArchMismatchError("mode model has " + std::to_string(modes.modes()) + " modes, config asks for M=" +
                                std::to_string(cfg.M));

    FitResult r;
    if (!a.resume.empty()) {
        const Checkpoint ckpt = load_checkpoint(a.resume);
        require_same_arch(arch, ckpt.arch);
        r = resume(ckpt, cfg, train, dev, modes, a.out);
    } else {
        r = fit(cfg, arch, train, dev, modes, a.out);
    }
    for (long it : r.checkpoint_iterations) {
        char name[32];
        std::snprintf(name, sizeof name, "ckpt_%08ld.mxk", it);
        scope.manifest().outputs.push_back((out / name).string());
    }
    spdlog::info("best checkpoint at iteration {} with dev loss {:.5f}", r.best.iteration, r.best.dev_loss);
}

// --------------------------------------------------------------- generate

struct GenerateArgs {
    std::string ckpt, audio, style, out, data, prior = "argmax";
    bool heatmap = false;
    bool frames = true;
};

AudioFeatures load_request_audio(const std::string& path, int bins) {
    if (fs::path(path).extension() == ".mxa") return load_audio(path);
    int sr = 0;
    const std::vector<float> wave = read_wav(path, &sr);
    const int frames = std::max(1, static_cast<int>(std::lround(wave.size() * kPoseFps / sr)));
    MelConfig mc;
    mc.n_mels = bins;
    return extract_audio_features(wave, sr, frames, mc);
}

void run_generate(const GenerateArgs& a, ManifestScope& scope) {
    Settings s;
    const std::string prior = s.get("prior", std::string("argmax"), std::optional<std::string>(a.prior));
    const std::string style = s.get("style", std::string(), std::optional<std::string>(a.style));
    const bool heatmap = s.get("heatmap", false, std::optional<bool>(a.heatmap));
    if (prior != "argmax" && prior != "soft") throw InvalidArgument("--prior must be 'argmax' or 'soft'");

    const fs::path out(a.out);
    std::vector<std::string> outputs{(out / "pose.mxp").string()};
    if (a.frames) outputs.push_back((out / "%06d.png").string());
    if (heatmap) outputs.push_back((out / "heatmap.png").string());
    scope.begin(s, 0, outputs);

    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    GenerationRequest req;
    req.audio = load_request_audio(a.audio, ckpt.arch.F);
    req.prior = prior == "soft" ? PriorMode::kSoft : PriorMode::kArgmax;
    if (style.find(',') != std::string::npos) {
        std::vector<float> w;
        for (const std::string& t : split_list(style)) w.push_back(std::stof(t));
        req.style = w;
    } else {
        const auto names = a.data.empty() ? std::vector<std::string>{} : dataset_speakers(a.data);
        req.style = SpeakerID{resolve_speaker(style, names)};
    }

    const PoseSequence pose = generate_gestures(ckpt, req);
    fs::create_directories(out);
    save_pose(pose, (out / "pose.mxp").string());
    const Skeleton sk = Skeleton::upper_body(pose.joints());
    if (a.frames) write_frames(render_skeleton(pose, sk.edges), a.out);
    if (heatmap) write_png(to_image(render_style_heatmap(pose, sk)), (out / "heatmap.png").string());
    spdlog::info("generated {} frames into {}", pose.frames(), a.out);
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
    std::string ckpt, data, out, transfer_style, gesture_space;
    int classifier_iterations = 600;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
};

void run_eval(const EvalArgs& a, ManifestScope& scope) {
    Settings s;
    ClassifierTrainConfig cc;
    cc.iterations = s.get("classifier_iterations", cc.iterations, std::optional<int>(a.classifier_iterations));
    cc.seed = s.get("seed", cc.seed, std::optional<std::uint64_t>(a.seed));
    const auto split_seed = s.get("split_seed", std::uint64_t{0}, std::optional<std::uint64_t>(a.split_seed));
    const std::string transfer = s.get("transfer_style", std::string(), std::optional<std::string>(a.transfer_style));

    std::vector<std::string> outputs{a.out};
    if (!a.gesture_space.empty()) outputs.push_back(a.gesture_space);
    scope.begin(s, cc.seed, outputs);

    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    if (!ckpt.modes) throw FormatError(a.ckpt, 0, "checkpoint carries no mode model");
    const auto model = model_from_checkpoint(ckpt);
    const Dataset train = load_dataset(a.data, {}, Split::kTrain, split_seed);
    const Dataset test = load_dataset(a.data, {}, Split::kTest, split_seed);
    if (static_cast<int>(test.speakers.size()) != ckpt.arch.N)
        throw ArchMismatchError("dataset has " + std::to_string(test.speakers.size()) +
                                " speakers, checkpoint was trained on " + std::to_string(ckpt.arch.N));
    std::optional<int> transfer_id;
    if (!transfer.empty()) transfer_id = resolve_speaker(transfer, test.speakers);

    cc.window = ckpt.arch.window_T;
    const ClassifierFit clf = train_speaker_classifier(train, cc);
    spdlog::info("speaker classifier held-out accuracy {:.3f} on {} windows", clf.heldout_accuracy,
                 clf.heldout_windows);

    const MetricsReport report = evaluate_model(*model, *ckpt.modes, clf.classifier, test, transfer_id);
    write_report_csv(report, a.out);
    if (!a.gesture_space.empty()) {
        std::vector<Sample> windows;
        for (const Sample& x : test.samples)
            for (Sample& w : make_windows(x, ckpt.arch.window_T, ckpt.arch.window_T)) windows.push_back(std::move(w));
        export_gesture_space(*model, *ckpt.modes, windows, a.gesture_space);
    }
    spdlog::info("pck {:.4f} mode_f1 {:.4f} inception {:.4f} over {} windows", report.pck, report.mode_f1,
                 report.inception_score, report.n_samples);
}

// ----------------------------------------------------------------- report

struct ReportArgs {
    std::vector<std::string> inputs, labels;
    std::string out;
};

void run_report(const ReportArgs& a, ManifestScope& scope) {
    Settings s;
    const auto labels = s.get("labels", a.labels, std::optional<std::vector<std::string>>(a.labels));
    if (!labels.empty() && labels.size() != a.inputs.size())
        throw InvalidArgument("--labels needs one label per input");
    scope.begin(s, 0, {a.out});

    std::vector<std::string> speakers;
    std::vector<std::map<std::string, SpeakerMetrics>> tables;
    for (const std::string& path : a.inputs) {
        std::map<std::string, SpeakerMetrics> rows;
        for (const SpeakerMetrics& m : read_report_csv(path)) {
            if (m.speaker != "all" && std::find(speakers.begin(), speakers.end(), m.speaker) == speakers.end())
                speakers.push_back(m.speaker);
            rows[m.speaker] = m;
        }
        if (!rows.count("all")) throw FormatError(path, 0, "report has no 'all' row");
        tables.push_back(std::move(rows));
    }

    std::ostringstream csv, md;
    csv << "model";
    md << "| model |";
    for (const std::string& spk : speakers) {
        csv << ',' << spk << "_pck," << spk << "_f1";
        md << ' ' << spk << " PCK | " << spk << " F1 |";
    }
    csv << ",mean_pck,mean_f1,inception_score\n";
    md << " mean PCK | mean F1 | IS |\n|---|";
    for (std::size_t i = 0; i < 2 * speakers.size() + 3; ++i) md << "---|";
    md << '\n';
    auto cell = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < tables.size(); ++i) {
        const std::string label = labels.empty() ? fs::path(a.inputs[i]).stem().string() : labels[i];
        csv << label;
        md << "| " << label << " |";
        for (const std::string& spk : speakers) {
            const auto it = tables[i].find(spk);
            const std::string p = it == tables[i].end() ? "" : cell(it->second.pck);
            const std::string f = it == tables[i].end() ? "" : cell(it->second.mode_f1);
            csv << ',' << p << ',' << f;
            md << ' ' << (p.empty() ? "-" : p) << " | " << (f.empty() ? "-" : f) << " |";
        }
        const SpeakerMetrics& all = tables[i].at("all");
        csv << ',' << cell(all.pck) << ',' << cell(all.mode_f1) << ',' << cell(all.inception_score) << '\n';
        md << ' ' << cell(all.pck) << " | " << cell(all.mode_f1) << " | " << cell(all.inception_score) << " |\n";
    }
    binio::write_file_atomic(a.out, csv.str());
    std::cout << md.str();
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return kOk;
    } catch (const FormatError& e) {
        spdlog::error("{}", e.what());
    } catch (const ArchMismatchError& e) {
        spdlog::error("architecture mismatch: {}", e.what());
    } catch (const InsufficientDataError& e) {
        spdlog::error("insufficient data: {}", e.what());
    } catch (const InvalidArgument& e) {
        spdlog::error("invalid input: {}", e.what());
    } catch (const DegeneratePoseError& e) {
        spdlog::error("degenerate pose: {}", e.what());
    } catch (const EmptyAudioError& e) {
        spdlog::error("empty audio: {}", e.what());
    } catch (const RangeError& e) {
        spdlog::error("out of range: {}", e.what());
    } catch (const ShapeError& e) {
        spdlog::error("shape mismatch: {}", e.what());
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("configuration: {}", e.what());
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kRuntimeError;
    }
    return kDataError;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    // stdout carries command output only; diagnostics go to stderr.
    static const bool logger_ready = [] {
        spdlog::set_default_logger(spdlog::stderr_color_mt("mixstage"));
        return true;
    }();
    (void)logger_ready;
    CLI::App app{"Multi-speaker co-speech gesture generation", "mixstage"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write a seeded synthetic multi-speaker dataset");
    c_synth->add_option("--config", synth.config, "JSON file with synthetic dataset settings")->check(CLI::ExistingFile);
    c_synth->add_option("--out", synth.out, "Dataset directory")->required();
    c_synth->add_option("--seed", synth.seed);

    PrepArgs prep;
    auto* c_prep = app.add_subcommand("prep", "Clean and normalize a dataset, re-extracting audio from wav/<id>.wav");
    c_prep->add_option("--root", prep.root, "Dataset directory")->required();
    c_prep->add_option("--speakers", prep.speakers, "Comma-separated speakers to keep (default: all)");
    c_prep->add_option("--target-shoulder", prep.target_shoulder, "Mean shoulder length after scaling");
    c_prep->add_option("--out", prep.out, "Output directory (default: in place)");
    c_prep->add_option("--shoulders", prep.shoulders, "Right and left shoulder joint indices");
    c_prep->add_option("--root-joint", prep.root_joint, "Joint kept fixed by the scaling");
    c_prep->add_option("--mels", prep.mels, "Mel bins for wav extraction");

    ClusterArgs cluster;
    auto* c_cluster = app.add_subcommand("cluster", "Fit pose modes on the training split");
    c_cluster->add_option("--data", cluster.data, "Dataset directory")->required();
    c_cluster->add_option("--M", cluster.M, "Number of modes")->required();
    c_cluster->add_option("--out", cluster.out, "Directory (writes modes.mxc) or .mxc path")->required();
    c_cluster->add_option("--restarts", cluster.restarts);
    c_cluster->add_option("--seed", cluster.seed);
    c_cluster->add_option("--split-seed", cluster.split_seed);
    c_cluster->add_option("--speakers", cluster.speakers);

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a model, keeping the best dev checkpoint");
    c_train->add_option("--config", train.config, "JSON file with training and architecture settings")
        ->check(CLI::ExistingFile);
    c_train->add_option("--data", train.data, "Dataset directory")->required();
    c_train->add_option("--out", train.out, "Run directory")->required();
    c_train->add_option("--resume", train.resume, "Checkpoint to continue from");
    c_train->add_option("--modes", train.modes, "Mode model (default: <data>/modes.mxc, else fitted)");
    c_train->add_option("--iterations", train.iterations);
    c_train->add_option("--checkpoint-every", train.checkpoint_every);
    c_train->add_option("--batch-size", train.batch_size);
    c_train->add_option("--lr", train.lr);
    c_train->add_option("--seed", train.seed);
    c_train->add_option("--M", train.M);

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Generate gestures for an audio file");
    c_gen->add_option("--ckpt", gen.ckpt, "Checkpoint")->required();
    c_gen->add_option("--audio", gen.audio, ".wav or .mxa file")->required();
    c_gen->add_option("--style", gen.style, "Speaker id or name, or mixing weights w0,w1,...")->required();
    c_gen->add_option("--out", gen.out, "Output directory")->required();
    c_gen->add_flag("--heatmap", gen.heatmap, "Also write heatmap.png");
    c_gen->add_option("--prior", gen.prior, "argmax or soft");
    c_gen->add_option("--data", gen.data, "Dataset directory used to resolve speaker names");
    c_gen->add_flag("!--no-frames", gen.frames, "Skip the PNG frame sequence");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Score a checkpoint on the test split");
    c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    c_eval->add_option("--data", ev.data, "Dataset directory")->required();
    c_eval->add_option("--out", ev.out, "Report CSV")->required();
    c_eval->add_option("--transfer-style", ev.transfer_style, "Generate every window in this speaker's style");
    c_eval->add_option("--gesture-space", ev.gesture_space, "Also export generated windows as CSV");
    c_eval->add_option("--classifier-iterations", ev.classifier_iterations);
    c_eval->add_option("--seed", ev.seed);
    c_eval->add_option("--split-seed", ev.split_seed);

    ReportArgs rep;
    auto* c_rep = app.add_subcommand("report", "Aggregate eval reports into one comparison table");
    c_rep->add_option("--inputs", rep.inputs, "Report CSVs")->required()->expected(1, -1);
    c_rep->add_option("--labels", rep.labels, "Row label per input (default: file stem)")->expected(1, -1);
    c_rep->add_option("--out", rep.out, "Table CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    std::vector<std::string> args(argv, argv + argc);
    auto scoped = [&](const std::string& name, const std::string& out, bool dir, auto runner, const auto& a) {
        return run_guarded([&] {
            ManifestScope scope(name, args, manifest_path(name, out, dir));
            runner(a, scope);
            scope.finish();
        });
    };
    if (c_synth->parsed()) return scoped("synth", synth.out, true, run_synth, synth);
    if (c_prep->parsed()) return scoped("prep", prep.out.empty() ? prep.root : prep.out, true, run_prep, prep);
    if (c_cluster->parsed()) {
        const bool dir = fs::path(cluster.out).extension() != ".mxc";
        return scoped("cluster", cluster.out, dir, run_cluster, cluster);
    }
    if (c_train->parsed()) return scoped("train", train.out, true, run_train, train);
    if (c_gen->parsed()) return scoped("generate", gen.out, true, run_generate, gen);
    if (c_eval->parsed()) return scoped("eval", ev.out, false, run_eval, ev);
    if (c_rep->parsed()) return scoped("report", rep.out, false, run_report, rep);
    return kUsage;
}

int dispatch(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mixstage::cli
