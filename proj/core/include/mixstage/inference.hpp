#pragma once

#include "mixstage/checkpoint.hpp"
#include "mixstage/modes.hpp"
#include "mixstage/nets.hpp"
#include "mixstage/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mixstage {

enum class PriorMode { kArgmax, kSoft };

struct GenerationRequest {
    AudioFeatures audio;
    std::variant<SpeakerID, std::vector<float>> style;  ///< speaker row or mixing weights over N
    PriorMode prior = PriorMode::kArgmax;
};

inline constexpr int kCrossfadeFrames = 8;

/// Style vector for a request; InvalidArgument for weights off the simplex.
Eigen::VectorXf request_style(const MixStageModel& model, const GenerationRequest& req);

/// Pose and prior for exactly one window of window_T frames.
struct WindowOutput {
    PoseSequence pose;
    Eigen::MatrixXf phi;  ///< [M, T] prior used for the mixture
};
WindowOutput generate_window(const MixStageModel& model, const Eigen::MatrixXf& mel, const Eigen::VectorXf& style,
                             PriorMode prior);

/// Chunk start frames: hop window/2, the last chunk aligned to the end.
/// A sequence shorter than one window yields the single start 0.
std::vector<int> chunk_starts(int frames, int window);

/// Generates any length of audio. Short audio is edge-padded to one window and
/// cropped; longer audio is split into half-overlapping windows whose seams
/// are cross-faded over kCrossfadeFrames frames.
PoseSequence generate_gestures(const MixStageModel& model, const GenerationRequest& req);
PoseSequence generate_gestures(const Checkpoint& ckpt, const GenerationRequest& req);

// --------------------------------------------------------------- rendering

struct Image {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  ///< row-major, 3 bytes per pixel

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 255) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}
    std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    bool operator==(const Image&) const = default;
};

/// Fixed mapping from pose units to pixels: px = origin_x + scale * x, py = origin_y - scale * y.
struct RenderOptions {
    int width = 256, height = 256;
    double scale = 64.0;
    double origin_x = 128.0, origin_y = 96.0;
    double dot_radius = 3.0;
    double line_width = 2.0;
};

inline constexpr std::uint8_t kDotColor[3] = {220, 40, 40};
inline constexpr std::uint8_t kEdgeColor[3] = {90, 90, 90};

std::pair<double, double> to_pixel(const RenderOptions& opt, double x, double y);

/// One image per frame: edges as segments, joints as dots drawn on top.
/// RangeError when an edge references a missing joint.
std::vector<Image> render_skeleton(const PoseSequence& p, const std::vector<std::pair<int, int>>& edges,
                                   const RenderOptions& opt = {});

/// Pixels whose centre lies within width/2 of segment ab (pixel coordinates).
std::vector<std::pair<int, int>> raster_segment(int width, int height, double ax, double ay, double bx, double by,
                                                double line_width);

/// Float RGB image in [0, 1]: red = right-arm motion density, blue = left-arm.
struct HeatmapImage {
    int width = 0, height = 0;
    std::vector<float> rgb;

    float at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Each frame adds its arm's segments to the arm's channel, weighted by how
/// far that arm's joints moved since the previous frame; a sequence without
/// any arm motion falls back to plain occupancy. Both channels share one
/// normalization so the brightest pixel is 1.
HeatmapImage render_style_heatmap(const PoseSequence& p, const Skeleton& sk, const RenderOptions& opt = {});

/// Per-frame arm motion weights used by the heatmap, [T] for each arm.
std::pair<std::vector<double>, std::vector<double>> arm_motion_weights(const PoseSequence& p, const Skeleton& sk);

Image to_image(const HeatmapImage& h);

void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);
/// Writes %06d.png frames into dir; returns the paths.
std::vector<std::string> write_frames(const std::vector<Image>& frames, const std::string& dir);

// ------------------------------------------------------- gesture space

/// Most frequent label; ties go to the lowest index.
int majority_mode(const std::vector<int>& labels, int M);

/// One CSV row per window: interval id, the style used, the majority mode of
/// the generated window, then the generated window flattened frame by frame.
/// Every window is generated in its own speaker's style.
void export_gesture_space(const MixStageModel& model, const ModeModel& modes, const std::vector<Sample>& windows,
                          std::ostream& out);
void export_gesture_space(const MixStageModel& model, const ModeModel& modes, const std::vector<Sample>& windows,
                          const std::string& path);

}  // namespace mixstage
