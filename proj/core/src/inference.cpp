#include "mixstage/inference.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace mixstage {

Eigen::VectorXf request_style(const MixStageModel& model, const GenerationRequest& req) {
    if (const auto* id = std::get_if<SpeakerID>(&req.style)) return model.style_row(*id);
    const auto& w = std::get<std::vector<float>>(req.style);
    return model.style_mix(w);
}

WindowOutput generate_window(const MixStageModel& model, const Eigen::MatrixXf& mel, const Eigen::VectorXf& style,
                             PriorMode prior) {
    AudioFeatures a;
    a.mel = mel;
    const LatentSequence z = model.make_latent(model.encode_audio_content(a), style);
    Eigen::MatrixXf phi = model.classify_priors(z);
    if (prior == PriorMode::kArgmax) {
        for (Eigen::Index t = 0; t < phi.cols(); ++t) {
            Eigen::Index best = 0;
            phi.col(t).maxCoeff(&best);
            phi.col(t).setZero();
            phi(best, t) = 1.0f;
        }
    }
    PoseSequence pose = model.generate(z, phi);
    return {std::move(pose), std::move(phi)};
}

std::vector<int> chunk_starts(int frames, int window) {
    if (window < 2) throw InvalidArgument("chunk_starts: window must be >= 2");
    if (frames <= window) return {0};
    std::vector<int> starts;
    const int hop = window / 2;
    for (int s = 0; s + window < frames; s += hop) starts.push_back(s);
    starts.push_back(frames - window);
    return starts;
}

PoseSequence generate_gestures(const MixStageModel& model, const GenerationRequest& req) {
    const auto& arch = model.arch();
    const int T = req.audio.frames();
    if (T == 0) throw EmptyAudioError("generate_gestures: audio has no frames");
    if (req.audio.bins() != arch.F)
        throw ArchMismatchError("audio has " + std::to_string(req.audio.bins()) + " bins, model expects " + std::to_string(arch.F));
    if (!req.audio.mel.allFinite()) throw InvalidArgument("generate_gestures: non-finite audio features");
    const Eigen::VectorXf style = request_style(model, req);
    const int W = arch.window_T;

    if (T <= W) {
        Eigen::MatrixXf mel(arch.F, W);
        mel.leftCols(T) = req.audio.mel;
        for (int t = T; t < W; ++t) mel.col(t) = req.audio.mel.col(T - 1);
        PoseSequence full = generate_window(model, mel, style, req.prior).pose;
        return PoseSequence(full.coords.leftCols(T), kPoseFps);
    }

    const auto starts = chunk_starts(T, W);
    Eigen::MatrixXf out(2 * arch.J, T);
    int filled = 0;  // frames [0, filled) are final or awaiting a blend
    for (std::size_t c = 0; c < starts.size(); ++c) {
        const int s = starts[c];
        const Eigen::MatrixXf chunk = generate_window(model, req.audio.mel.middleCols(s, W), style, req.prior).pose.coords;
        if (c == 0) {
            out.leftCols(W) = chunk;
            filled = W;
            continue;
        }
        const int overlap = filled - s;
        const int fade = std::min(kCrossfadeFrames, overlap);
        const int mid = s + overlap / 2;
        const int f0 = std::clamp(mid - fade / 2, s, filled - fade);
        for (int t = f0; t < f0 + fade; ++t) {
            const float w = (static_cast<float>(t - f0) + 0.5f) / static_cast<float>(fade);
            out.col(t) = (1.0f - w) * out.col(t) + w * chunk.col(t - s);
        }
        for (int t = f0 + fade; t < s + W; ++t) out.col(t) = chunk.col(t - s);
        filled = s + W;
    }
    return PoseSequence(std::move(out), kPoseFps);
}

PoseSequence generate_gestures(const Checkpoint& ckpt, const GenerationRequest& req) {
    return generate_gestures(*model_from_checkpoint(ckpt), req);
}

// --------------------------------------------------------------- rendering

std::pair<double, double> to_pixel(const RenderOptions& opt, double x, double y) {
    return {opt.origin_x + opt.scale * x, opt.origin_y - opt.scale * y};
}

std::vector<std::pair<int, int>> raster_segment(int width, int height, double ax, double ay, double bx, double by,
                                                double line_width) {
    const double r = line_width / 2.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r - 1)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r - 1)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(ay, by) + r + 1)));
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    std::vector<std::pair<int, int>> px;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double cx = x + 0.5, cy = y + 0.5;
            double u = len2 > 0.0 ? ((cx - ax) * dx + (cy - ay) * dy) / len2 : 0.0;
            u = std::clamp(u, 0.0, 1.0);
            const double ex = cx - (ax + u * dx), ey = cy - (ay + u * dy);
            if (ex * ex + ey * ey <= r * r) px.emplace_back(x, y);
        }
    }
    return px;
}

namespace {

void check_edges(const std::vector<std::pair<int, int>>& edges, int joints) {
    for (auto [a, b] : edges)
        if (a < 0 || b < 0 || a >= joints || b >= joints)
            throw RangeError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") references a joint outside [0, " +
                             std::to_string(joints) + ")");
}

void paint(Image& img, int x, int y, const std::uint8_t* color) {
    std::uint8_t* p = img.at(x, y);
    p[0] = color[0], p[1] = color[1], p[2] = color[2];
}

}  // namespace

std::vector<Image> render_skeleton(const PoseSequence& p, const std::vector<std::pair<int, int>>& edges,
                                   const RenderOptions& opt) {
    check_edges(edges, p.joints());
    std::vector<Image> frames;
    frames.reserve(static_cast<std::size_t>(p.frames()));
    for (int t = 0; t < p.frames(); ++t) {
        Image img(opt.width, opt.height);
        for (auto [a, b] : edges) {
            const auto [ax, ay] = to_pixel(opt, p.x(t, a), p.y(t, a));
            const auto [bx, by] = to_pixel(opt, p.x(t, b), p.y(t, b));
            for (auto [x, y] : raster_segment(opt.width, opt.height, ax, ay, bx, by, opt.line_width)) paint(img, x, y, kEdgeColor);
        }
        for (int j = 0; j < p.joints(); ++j) {
            const auto [cx, cy] = to_pixel(opt, p.x(t, j), p.y(t, j));
            for (auto [x, y] : raster_segment(opt.width, opt.height, cx, cy, cx, cy, 2.0 * opt.dot_radius)) paint(img, x, y, kDotColor);
        }
        frames.push_back(std::move(img));
    }
    return frames;
}

std::pair<std::vector<double>, std::vector<double>> arm_motion_weights(const PoseSequence& p, const Skeleton& sk) {
    auto joints_of = [](const std::vector<std::pair<int, int>>& arm) {
        std::set<int> js;
        for (auto [a, b] : arm) js.insert(a), js.insert(b);
        return js;
    };
    const auto right = joints_of(sk.right_arm), left = joints_of(sk.left_arm);
    const int T = p.frames();
    std::vector<double> wr(T, 0.0), wl(T, 0.0);
    for (int t = 1; t < T; ++t) {
        for (int j : right) wr[t] += std::hypot(double(p.x(t, j)) - p.x(t - 1, j), double(p.y(t, j)) - p.y(t - 1, j));
        for (int j : left) wl[t] += std::hypot(double(p.x(t, j)) - p.x(t - 1, j), double(p.y(t, j)) - p.y(t - 1, j));
    }
    const bool still = std::all_of(wr.begin(), wr.end(), [](double v) { return v == 0.0; }) &&
                       std::all_of(wl.begin(), wl.end(), [](double v) { return v == 0.0; });
    if (still) std::fill(wr.begin(), wr.end(), 1.0), std::fill(wl.begin(), wl.end(), 1.0);
    return {wr, wl};
}

HeatmapImage render_style_heatmap(const PoseSequence& p, const Skeleton& sk, const RenderOptions& opt) {
    check_edges(sk.right_arm, p.joints());
    check_edges(sk.left_arm, p.joints());
    HeatmapImage h{opt.width, opt.height, std::vector<float>(static_cast<std::size_t>(opt.width) * opt.height * 3, 0.0f)};
    std::vector<double> acc(h.rgb.size(), 0.0);
    const auto [wr, wl] = arm_motion_weights(p, sk);
    for (int t = 0; t < p.frames(); ++t) {
        for (int arm = 0; arm < 2; ++arm) {
            const double w = arm == 0 ? wr[t] : wl[t];
            if (w == 0.0) continue;
            const int channel = arm == 0 ? 0 : 2;
            // A pixel covered by several segments of the same arm counts once per frame.
            std::set<std::pair<int, int>> covered;
            for (auto [a, b] : arm == 0 ? sk.right_arm : sk.left_arm) {
                const auto [ax, ay] = to_pixel(opt, p.x(t, a), p.y(t, a));
                const auto [bx, by] = to_pixel(opt, p.x(t, b), p.y(t, b));
                for (const auto& px : raster_segment(opt.width, opt.height, ax, ay, bx, by, opt.line_width)) covered.insert(px);
            }
            for (auto [x, y] : covered) acc[(static_cast<std::size_t>(y) * opt.width + x) * 3 + channel] += w;
        }
    }
    const double mx = *std::max_element(acc.begin(), acc.end());
    if (mx > 0.0)
        for (std::size_t i = 0; i < acc.size(); ++i) h.rgb[i] = static_cast<float>(acc[i] / mx);
    return h;
}

Image to_image(const HeatmapImage& h) {
    Image img(h.width, h.height, 0);
    for (std::size_t i = 0; i < h.rgb.size(); ++i)
        img.rgb[i] = static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(h.rgb[i], 0.0f, 1.0f)));
    return img;
}

void write_png(const Image& img, const std::string& path) {
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.width);
    pi.height = static_cast<png_uint_32>(img.height);
    pi.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&pi, nullptr, &size, 0, img.rgb.data(), 0, nullptr))
        throw Error("PNG encoding failed: " + std::string(pi.message));
    std::string buf(size, '\0');
    if (!png_image_write_to_memory(&pi, buf.data(), &size, 0, img.rgb.data(), 0, nullptr))
        throw Error("PNG encoding failed: " + std::string(pi.message));
    buf.resize(size);
    binio::write_file_atomic(path, buf);
}

Image read_png(const std::string& path) {
    const std::string bytes = binio::read_file(path);
    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size()))
        throw FormatError(path, 0, "not a PNG file: " + std::string(pi.message));
    pi.format = PNG_FORMAT_RGB;
    Image img(static_cast<int>(pi.width), static_cast<int>(pi.height), 0);
    if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr))
        throw FormatError(path, 0, "PNG decoding failed: " + std::string(pi.message));
    return img;
}

std::vector<std::string> write_frames(const std::vector<Image>& frames, const std::string& dir) {
    fs::create_directories(dir);
    std::vector<std::string> paths;
    char name[32];
    for (std::size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof name, "%06zu.png", i);
        paths.push_back((fs::path(dir) / name).string());
        write_png(frames[i], paths.back());
    }
    return paths;
}

// ------------------------------------------------------- gesture space

int majority_mode(const std::vector<int>& labels, int M) {
    if (M < 1) throw InvalidArgument("majority_mode: M must be positive");
    std::vector<int> counts(M, 0);
    for (int l : labels) {
        if (l < 0 || l >= M) throw RangeError("majority_mode: label outside [0, M)");
        ++counts[l];
    }
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

void export_gesture_space(const MixStageModel& model, const ModeModel& modes, const std::vector<Sample>& windows,
                          std::ostream& out) {
    out << "window,style,mode";
    if (!windows.empty()) {
        const int dim = 2 * windows.front().pose.joints() * windows.front().audio.frames();
        for (int i = 0; i < dim; ++i) out << ",v" << i;
    }
    out << '\n';
    char buf[32];
    for (const auto& w : windows) {
        if (w.audio.frames() != windows.front().audio.frames())
            throw ShapeError("export_gesture_space: windows must share one length");
        GenerationRequest req{w.audio, w.speaker, PriorMode::kArgmax};
        const PoseSequence g = generate_gestures(model, req);
        const int mode = majority_mode(assign(modes, g).labels, modes.modes());
        out << w.interval_id << ',' << w.speaker.id << ',' << mode;
        for (Eigen::Index i = 0; i < g.coords.size(); ++i) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(g.coords.data()[i]));
            out << buf;
        }
        out << '\n';
    }
}

void export_gesture_space(const MixStageModel& model, const ModeModel& modes, const std::vector<Sample>& windows,
                          const std::string& path) {
    std::ostringstream s;
    export_gesture_space(model, modes, windows, s);
    binio::write_file_atomic(path, s.str());
}

}  // namespace mixstage
