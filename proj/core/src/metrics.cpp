#include "mixstage/metrics.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"
#include "mixstage/inference.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mixstage {

// --------------------------------------------------------------------- PCK

PckTally pck_tally(const PoseSequence& pred, const PoseSequence& gt, std::span<const double> alphas) {
    if (pred.frames() != gt.frames() || pred.joints() != gt.joints())
        throw ShapeError("pck: prediction is " + std::to_string(pred.frames()) + "x" + std::to_string(pred.joints()) +
                         ", ground truth " + std::to_string(gt.frames()) + "x" + std::to_string(gt.joints()));
    if (alphas.empty()) throw InvalidArgument("pck: empty alpha set");
    PckTally tally;
    for (int t = 0; t < gt.frames(); ++t) {
        double x0 = gt.x(t, 0), x1 = x0, y0 = gt.y(t, 0), y1 = y0;
        for (int j = 1; j < gt.joints(); ++j) {
            x0 = std::min<double>(x0, gt.x(t, j)), x1 = std::max<double>(x1, gt.x(t, j));
            y0 = std::min<double>(y0, gt.y(t, j)), y1 = std::max<double>(y1, gt.y(t, j));
        }
        const double scale = std::max(x1 - x0, y1 - y0);
        if (!(scale > 0.0)) {
            ++tally.skipped_frames;
            continue;
        }
        for (int j = 0; j < gt.joints(); ++j) {
            const double d = std::hypot(double(pred.x(t, j)) - gt.x(t, j), double(pred.y(t, j)) - gt.y(t, j));
            for (double a : alphas)
                if (d < a * scale) tally.correct += 1.0;
        }
        tally.total += static_cast<double>(gt.joints()) * static_cast<double>(alphas.size());
    }
    return tally;
}

double pck(const PoseSequence& pred, const PoseSequence& gt, std::span<const double> alphas) {
    const PckTally t = pck_tally(pred, gt, alphas);
    if (t.skipped_frames > 0) spdlog::warn("pck: skipped {} frame(s) with a zero-extent ground-truth box", t.skipped_frames);
    if (t.total == 0.0) throw DegeneratePoseError("pck: every ground-truth frame has zero extent");
    return t.value();
}

// ---------------------------------------------------------------- mode F1

double macro_f1(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size()) throw ShapeError("macro_f1: label sequences differ in length");
    if (truth.empty()) throw InvalidArgument("macro_f1: no labels");
    std::set<int> classes(truth.begin(), truth.end());
    classes.insert(pred.begin(), pred.end());
    double sum = 0.0;
    for (int c : classes) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == c, p = pred[i] == c;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        sum += tp > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    }
    return sum / static_cast<double>(classes.size());
}

double mode_f1(const PoseSequence& pred, const PoseSequence& gt, const ModeModel& model) {
    if (pred.frames() != gt.frames()) throw ShapeError("mode_f1: sequences differ in length");
    if (2 * pred.joints() != model.dim() || 2 * gt.joints() != model.dim())
        throw ShapeError("mode_f1: pose dimension does not match the mode model");
    const auto a = assign(model, pred).labels;
    const auto b = assign(model, gt).labels;
    return macro_f1(b, a);
}

// --------------------------------------------------------- inception score

double inception_score(const Eigen::MatrixXd& probs) {
    if (probs.cols() == 0) throw InvalidArgument("inception_score: no samples");
    for (Eigen::Index i = 0; i < probs.cols(); ++i) {
        if ((probs.col(i).array() < 0.0).any() || std::abs(probs.col(i).sum() - 1.0) > 1e-6)
            throw InvalidArgument("inception_score: column " + std::to_string(i) + " is not a distribution");
    }
    const Eigen::VectorXd marginal = probs.rowwise().mean();
    double kl = 0.0;
    for (Eigen::Index i = 0; i < probs.cols(); ++i)
        for (Eigen::Index k = 0; k < probs.rows(); ++k) {
            const double p = probs(k, i);
            if (p > 0.0) kl += p * (std::log(p) - std::log(marginal(k)));
        }
    return std::exp(kl / static_cast<double>(probs.cols()));
}

SpeakerClassifier::SpeakerClassifier(int joints, int speakers, int width, std::uint64_t seed) : joints_(joints) {
    if (joints < 1 || speakers < 2 || width < 1) throw InvalidArgument("speaker classifier needs joints, >= 2 speakers and a width");
    nn::Rng rng(seed);
    using nn::ConvBlock;
    net = SequenceClassifier(nn::Stack({ConvBlock(ConvBlock::same(2 * joints, width), rng),
                                        ConvBlock(ConvBlock::down(width, width), rng),
                                        ConvBlock(ConvBlock::same(width, width), rng)}),
                             width, speakers, rng);
}

Eigen::VectorXd SpeakerClassifier::probabilities(const PoseSequence& p) const {
    return probabilities(std::vector<PoseSequence>{p}).col(0);
}

Eigen::MatrixXd SpeakerClassifier::probabilities(const std::vector<PoseSequence>& ps) const {
    if (ps.empty()) return Eigen::MatrixXd(speakers(), 0);
    const int T = ps.front().frames();
    nn::Mat x(2 * joints_, static_cast<Eigen::Index>(ps.size()) * T);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i].joints() != joints_ || ps[i].frames() != T) throw ShapeError("speaker classifier: sequences must share one shape");
        x.middleCols(static_cast<Eigen::Index>(i) * T, T) = ps[i].coords;
    }
    const Eigen::MatrixXf p = softmax_columns(net.infer(nn::Seq(x, static_cast<int>(ps.size()), T)));
    Eigen::MatrixXd out = p.cast<double>();
    for (Eigen::Index i = 0; i < out.cols(); ++i) out.col(i) /= out.col(i).sum();
    return out;
}

int SpeakerClassifier::predict(const PoseSequence& p) const {
    Eigen::Index best = 0;
    probabilities(p).maxCoeff(&best);
    return static_cast<int>(best);
}

double inception_score(const SpeakerClassifier& clf, const std::vector<PoseSequence>& samples) {
    if (samples.empty()) throw InvalidArgument("inception_score: no samples");
    return inception_score(clf.probabilities(samples));
}

ClassifierFit train_speaker_classifier(const Dataset& train, const ClassifierTrainConfig& cfg) {
    const int N = static_cast<int>(train.speakers.size());
    std::set<int> present;
    for (const auto& s : train.samples) present.insert(s.speaker.id);
    if (N < 2 || present.size() < 2) throw InsufficientDataError("speaker classifier needs at least two speakers");
    if (cfg.iterations < 0 || cfg.batch_size < 1 || cfg.window < 2 || !(cfg.lr > 0.0))
        throw InvalidArgument("invalid speaker classifier config");

    // Hold out whole intervals so windows of one interval never straddle the split.
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::vector<const Sample*>> by_speaker(N);
    for (const auto& s : train.samples) by_speaker.at(s.speaker.id).push_back(&s);
    std::vector<Sample> fit_windows, held_windows;
    for (auto& group : by_speaker) {
        std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->interval_id < b->interval_id; });
        std::shuffle(group.begin(), group.end(), rng);
        std::size_t n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * group.size()));
        if (group.size() >= 2 && cfg.holdout_fraction > 0.0) n_hold = std::max<std::size_t>(n_hold, 1);
        for (std::size_t i = 0; i < group.size(); ++i)
            for (auto& w : make_windows(*group[i], cfg.window, cfg.window))
                (i < n_hold ? held_windows : fit_windows).push_back(std::move(w));
    }
    if (fit_windows.empty()) throw InsufficientDataError("speaker classifier: no training windows of " + std::to_string(cfg.window) + " frames");

    std::vector<int> labels(fit_windows.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = fit_windows[i].speaker.id;
    if (cfg.shuffle_labels) {
        // Every speaker's windows get an equal share of each label, so no label tracks the speaker.
        std::vector<std::vector<std::size_t>> rows(N);
        for (std::size_t i = 0; i < fit_windows.size(); ++i) rows[fit_windows[i].speaker.id].push_back(i);
        for (auto& r : rows) {
            std::shuffle(r.begin(), r.end(), rng);
            for (std::size_t k = 0; k < r.size(); ++k) labels[r[k]] = static_cast<int>(k % N);
        }
    }

    const int J = fit_windows.front().pose.joints();
    ClassifierFit out;
    out.classifier = SpeakerClassifier(J, N, cfg.width, cfg.seed + 1);
    nn::ParamList params;
    out.classifier.net.collect("speaker_classifier", params);
    nn::Adam opt(params, nn::Adam::Options{});
    std::uniform_int_distribution<std::size_t> pick(0, fit_windows.size() - 1);
    const int T = cfg.window, B = cfg.batch_size;
    for (int it = 0; it < cfg.iterations; ++it) {
        nn::Mat x(2 * J, static_cast<Eigen::Index>(B) * T);
        std::vector<int> y(B);
        for (int b = 0; b < B; ++b) {
            const std::size_t i = pick(rng);
            x.middleCols(static_cast<Eigen::Index>(b) * T, T) = fit_windows[i].pose.coords;
            y[b] = labels[i];
        }
        opt.zero_grad();
        const Eigen::MatrixXf p = softmax_columns(out.classifier.net.forward(nn::Seq(x, B, T)));
        Eigen::MatrixXf g = p;
        for (int b = 0; b < B; ++b) g(y[b], b) -= 1.0f;
        g /= static_cast<float>(B);
        out.classifier.net.backward(g);
        opt.step(cfg.lr);
    }

    if (!held_windows.empty()) {
        int correct = 0;
        for (const auto& w : held_windows) correct += out.classifier.predict(w.pose) == w.speaker.id;
        out.heldout_windows = static_cast<int>(held_windows.size());
        out.heldout_accuracy = static_cast<double>(correct) / held_windows.size();
    }
    return out;
}

// -------------------------------------------------------------- bootstrap

namespace {

std::pair<double, double> mean_var(std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    if (x.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return {mean, ss / (n - 1.0)};
}

}  // namespace

double welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw InvalidArgument("welch_t: empty sample");
    const auto [ma, va] = mean_var(a);
    const auto [mb, vb] = mean_var(b);
    const double se2 = va / a.size() + vb / b.size();
    const double diff = ma - mb;
    if (se2 <= 0.0) {
        if (diff == 0.0) return 0.0;
        return diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    return diff / std::sqrt(se2);
}

BootstrapResult bootstrap_test(std::span<const double> a, std::span<const double> b, int n_boot, double alpha,
                               std::uint64_t seed) {
    if (a.empty() || b.empty()) throw InvalidArgument("bootstrap_test: both samples must be non-empty");
    if (n_boot < 1) throw InvalidArgument("bootstrap_test: n_boot must be positive");
    BootstrapResult r;
    r.t = welch_t(a, b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double pooled = (std::accumulate(a.begin(), a.end(), 0.0) + std::accumulate(b.begin(), b.end(), 0.0)) / (na + nb);
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
    std::vector<double> sa(a.size()), sb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) sa[i] = a[i] - ma + pooled;
    for (std::size_t i = 0; i < b.size(); ++i) sb[i] = b[i] - mb + pooled;

    const double thresh = std::abs(r.t) * (1.0 - 1e-9);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pa(0, a.size() - 1), pb(0, b.size() - 1);
    std::vector<double> ra(a.size()), rb(b.size());
    long hits = 0;
    for (int k = 0; k < n_boot; ++k) {
        for (auto& v : ra) v = sa[pa(rng)];
        for (auto& v : rb) v = sb[pb(rng)];
        if (std::abs(welch_t(ra, rb)) >= thresh) ++hits;
    }
    r.p = static_cast<double>(hits) / n_boot;
    r.significant = r.p < alpha;
    return r;
}

// ----------------------------------------------------------------- report

MetricsReport evaluate_model(const MixStageModel& model, const ModeModel& modes, const SpeakerClassifier& clf,
                             const Dataset& test, std::optional<int> transfer_style) {
    const auto& arch = model.arch();
    if (transfer_style && (*transfer_style < 0 || *transfer_style >= arch.N))
        throw RangeError("transfer style " + std::to_string(*transfer_style) + " outside the style table");
    struct Acc {
        PckTally pck;
        std::vector<int> truth, pred;
        std::vector<PoseSequence> generated;
    };
    std::map<int, Acc> per;
    Acc all;
    MetricsReport r;
    for (const auto& s : test.samples) {
        for (const auto& w : make_windows(s, arch.window_T, arch.window_T)) {
            const SpeakerID style{transfer_style.value_or(w.speaker.id)};
            const PoseSequence g = generate_gestures(model, {w.audio, style, PriorMode::kArgmax});
            const PckTally t = pck_tally(g, w.pose);
            const auto truth = assign(modes, w.pose).labels;
            const auto pred = assign(modes, g).labels;
            r.window_pck.push_back(t.value());
            r.window_mode_f1.push_back(macro_f1(truth, pred));
            for (Acc* a : {&per[w.speaker.id], &all}) {
                a->pck.correct += t.correct;
                a->pck.total += t.total;
                a->truth.insert(a->truth.end(), truth.begin(), truth.end());
                a->pred.insert(a->pred.end(), pred.begin(), pred.end());
                a->generated.push_back(g);
            }
        }
    }
    if (all.generated.empty()) throw InsufficientDataError("evaluation set yields no windows of " + std::to_string(arch.window_T) + " frames");
    auto name_of = [&](int id) { return id < static_cast<int>(test.speakers.size()) ? test.speakers[id] : std::to_string(id); };
    for (auto& [id, a] : per) {
        SpeakerMetrics m;
        m.speaker = name_of(id);
        m.style = name_of(transfer_style.value_or(id));
        m.pck = a.pck.value();
        m.mode_f1 = macro_f1(a.truth, a.pred);
        m.inception_score = inception_score(clf, a.generated);
        m.n = static_cast<int>(a.generated.size());
        r.per_speaker.push_back(m);
    }
    r.pck = all.pck.value();
    r.mode_f1 = macro_f1(all.truth, all.pred);
    r.inception_score = inception_score(clf, all.generated);
    r.n_samples = static_cast<int>(all.generated.size());
    check_report(r, clf.speakers());
    return r;
}

void check_report(const MetricsReport& r, int classes) {
    auto check = [&](double pck, double f1, double is, const std::string& who) {
        if (!(pck >= 0.0 && pck <= 1.0)) throw std::logic_error(who + ": pck outside [0, 1]");
        if (!(f1 >= 0.0 && f1 <= 1.0)) throw std::logic_error(who + ": mode F1 outside [0, 1]");
        if (!(is >= 1.0 - 1e-9 && is <= classes + 1e-9))
            throw std::logic_error(who + ": inception score outside [1, " + std::to_string(classes) + "]");
    };
    check(r.pck, r.mode_f1, r.inception_score, "report");
    for (const auto& s : r.per_speaker) check(s.pck, s.mode_f1, s.inception_score, "speaker " + s.speaker);
}

void write_report_csv(const MetricsReport& r, std::ostream& out) {
    out << "speaker,style,pck,mode_f1,inception_score,n\n";
    char buf[160];
    for (const auto& s : r.per_speaker) {
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%d\n", s.pck, s.mode_f1, s.inception_score, s.n);
        out << s.speaker << ',' << s.style << buf;
    }
    std::string style = "own";
    if (!r.per_speaker.empty() && std::all_of(r.per_speaker.begin(), r.per_speaker.end(),
                                              [&](const SpeakerMetrics& s) { return s.style == r.per_speaker.front().style; }))
        style = r.per_speaker.front().style;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%d\n", r.pck, r.mode_f1, r.inception_score, r.n_samples);
    out << "all," << style << buf;
}

void write_report_csv(const MetricsReport& r, const std::string& path) {
    std::ostringstream s;
    write_report_csv(r, s);
    binio::write_file_atomic(path, s.str());
}

std::vector<SpeakerMetrics> read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path, 0, "cannot open report");
    std::string line;
    std::uint64_t offset = 0;
    if (!std::getline(in, line) || line != "speaker,style,pck,mode_f1,inception_score,n")
        throw FormatError(path, 0, "expected header 'speaker,style,pck,mode_f1,inception_score,n'");
    offset += line.size() + 1;
    std::vector<SpeakerMetrics> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            ++offset;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 6) throw FormatError(path, offset, "expected 6 fields");
        try {
            rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stoi(f[5])});
        } catch (const std::exception&) {
            throw FormatError(path, offset, "malformed number");
        }
        offset += line.size() + 1;
    }
    return rows;
}

}  // namespace mixstage
