#include "mixstage/types.hpp"

#include "mixstage/error.hpp"

namespace mixstage {

void validate(const ArchitectureConfig& a) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidArgument(std::string("architecture: ") + what);
    };
    require(a.M >= 1, "M must be >= 1");
    require(a.N >= 1, "N must be >= 1");
    require(a.D >= 1, "D must be >= 1");
    require(a.J >= 2, "J must be >= 2");
    require(a.F >= 1, "F must be >= 1");
    require(a.content_dim >= 1, "content_dim must be >= 1");
    require(a.hidden >= 2, "hidden must be >= 2");
    require(a.unet_depth >= 1, "unet_depth must be >= 1");
    require(a.window_T > 0 && a.window_T % (1 << a.unet_depth) == 0,
            "window_T must be a positive multiple of 2^unet_depth");
}

std::string_view to_string(Violation v) {
    switch (v) {
        case Violation::kEmptyPose: return "EMPTY_POSE";
        case Violation::kTooFewJoints: return "TOO_FEW_JOINTS";
        case Violation::kNonFinitePose: return "NON_FINITE_POSE";
        case Violation::kNonFiniteAudio: return "NON_FINITE_AUDIO";
        case Violation::kLengthMismatch: return "LENGTH_MISMATCH";
        case Violation::kBadFps: return "BAD_FPS";
        case Violation::kBadSampleRate: return "BAD_SAMPLE_RATE";
        case Violation::kNegativeSpeaker: return "NEGATIVE_SPEAKER";
    }
    return "UNKNOWN";
}

std::vector<Violation> validate_sample(const Sample& s) {
    std::vector<Violation> out;
    if (s.pose.frames() < 1) out.push_back(Violation::kEmptyPose);
    if (s.pose.coords.rows() < 4 || s.pose.coords.rows() % 2 != 0) out.push_back(Violation::kTooFewJoints);
    if (!s.pose.coords.allFinite()) out.push_back(Violation::kNonFinitePose);
    if (!s.audio.mel.allFinite()) out.push_back(Violation::kNonFiniteAudio);
    if (s.audio.frames() != s.pose.frames()) out.push_back(Violation::kLengthMismatch);
    if (!(s.pose.fps > 0.0)) out.push_back(Violation::kBadFps);
    if (s.audio.sample_rate_hz <= 0) out.push_back(Violation::kBadSampleRate);
    if (s.speaker.id < 0) out.push_back(Violation::kNegativeSpeaker);
    return out;
}

Eigen::VectorXf one_hot(SpeakerID id, int n) {
    if (n < 1 || id.id < 0 || id.id >= n)
        throw RangeError("speaker id " + std::to_string(id.id) + " outside [0, " + std::to_string(n) + ")");
    Eigen::VectorXf v = Eigen::VectorXf::Zero(n);
    v(id.id) = 1.0f;
    return v;
}

Skeleton Skeleton::upper_body(int joints) {
    if (joints < 8) throw InvalidArgument("upper-body skeleton needs at least 8 joints");
    Skeleton s;
    s.joints = joints;
    s.root = 0;
    s.right_shoulder = 2;
    s.left_shoulder = 5;
    s.edges = {{0, 1}, {0, 2}, {2, 3}, {3, 4}, {0, 5}, {5, 6}, {6, 7}};
    s.right_arm = {{2, 3}, {3, 4}};
    s.left_arm = {{5, 6}, {6, 7}};
    for (int j = 8; j < joints; ++j) {
        const bool right = (j % 2 == 0);
        const std::pair<int, int> e{right ? 4 : 7, j};
        s.edges.push_back(e);
        (right ? s.right_arm : s.left_arm).push_back(e);
    }
    return s;
}

void Skeleton::check() const {
    auto in_range = [this](int j) { return j >= 0 && j < joints; };
    if (!in_range(root) || !in_range(right_shoulder) || !in_range(left_shoulder))
        throw RangeError("skeleton landmark joint out of range");
    for (const auto* group : {&edges, &right_arm, &left_arm})
        for (auto [a, b] : *group)
            if (!in_range(a) || !in_range(b))
                throw RangeError("skeleton edge (" + std::to_string(a) + "," + std::to_string(b) +
                                 ") references a joint outside [0, " + std::to_string(joints) + ")");
}

}  // namespace mixstage
