#include "mixstage/modes.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace mixstage {

namespace {

int count_distinct(const Eigen::MatrixXd& pts) {
    std::vector<Eigen::Index> idx(pts.cols());
    std::iota(idx.begin(), idx.end(), 0);
    auto less = [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index r = 0; r < pts.rows(); ++r) {
            if (pts(r, a) < pts(r, b)) return true;
            if (pts(r, a) > pts(r, b)) return false;
        }
        return false;
    };
    std::sort(idx.begin(), idx.end(), less);
    int distinct = idx.empty() ? 0 : 1;
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (less(idx[i - 1], idx[i])) ++distinct;
    return distinct;
}

struct Assignment {
    std::vector<int> labels;
    std::vector<double> dist2;
    double inertia = 0.0;
};

Assignment assign_points(const Eigen::MatrixXd& pts, const Eigen::MatrixXd& centroids) {
    Assignment a;
    a.labels.resize(pts.cols());
    a.dist2.resize(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < centroids.cols(); ++k) {
            const double d = (pts.col(i) - centroids.col(k)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(k);
            }
        }
        a.labels[i] = best;
        a.dist2[i] = best_d;
        a.inertia += best_d;
    }
    return a;
}

struct RunResult {
    Eigen::MatrixXd centroids;
    double inertia = 0.0;
    LloydTrace trace;
};

RunResult lloyd_run(const Eigen::MatrixXd& pts, int M, int max_iters, std::mt19937_64& rng) {
    const Eigen::Index n = pts.cols();
    // Seed with M distinct points chosen uniformly at random.
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    Eigen::MatrixXd c(pts.rows(), M);
    int filled = 0;
    for (Eigen::Index i = 0; i < n && filled < M; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
        const auto candidate = pts.col(order[i]);
        bool duplicate = false;
        for (int k = 0; k < filled && !duplicate; ++k) duplicate = (c.col(k) == candidate);
        if (!duplicate) c.col(filled++) = candidate;
    }

    RunResult run;
    std::vector<int> previous;
    Assignment a;
    for (int it = 0; it < max_iters; ++it) {
        a = assign_points(pts, c);
        if (!run.trace.inertia.empty()) {
            const double last = run.trace.inertia.back();
            if (a.inertia > last + 1e-9 * std::max(1.0, last))
                throw std::logic_error("Lloyd inertia increased between iterations");
        }
        run.trace.inertia.push_back(a.inertia);
        run.trace.iterations = it + 1;
        if (a.labels == previous) {
            run.trace.converged = true;
            break;
        }
        previous = a.labels;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(pts.rows(), M);
        std::vector<int> counts(M, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.col(a.labels[i]) += pts.col(i);
            ++counts[a.labels[i]];
        }
        for (int k = 0; k < M; ++k)
            if (counts[k] > 0) c.col(k) = sums.col(k) / counts[k];
        std::vector<int> owner = a.labels;
        for (int k = 0; k < M; ++k) {
            if (counts[k] > 0) continue;
            // Empty cluster: move it onto the point farthest from its centroid.
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d = (pts.col(i) - c.col(owner[i])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            c.col(k) = pts.col(far);
            owner[far] = k;
            counts[k] = 1;
        }
    }
    run.centroids = c;
    run.inertia = run.trace.converged ? a.inertia : assign_points(pts, c).inertia;
    return run;
}

}  // namespace

double inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids) {
    return assign_points(points, centroids).inertia;
}

ModeModel fit_modes_points(const Eigen::MatrixXd& points, int M, const LloydOptions& opt, LloydTrace* trace) {
    if (M < 1) throw InvalidArgument("fit_modes: M must be >= 1");
    if (opt.max_iters < 1 || opt.restarts < 1) throw InvalidArgument("fit_modes: max_iters and restarts must be >= 1");
    if (!points.allFinite()) throw InvalidArgument("fit_modes: non-finite frame");
    const int distinct = count_distinct(points);
    if (distinct < M)
        throw InsufficientDataError("fit_modes: " + std::to_string(distinct) + " distinct frames for M = " +
                                    std::to_string(M));

    std::mt19937_64 rng(opt.seed);
    RunResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < opt.restarts; ++r) {
        RunResult run = lloyd_run(points, M, opt.max_iters, rng);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    if (trace) *trace = best.trace;

    ModeModel model;
    model.centroids = best.centroids.cast<float>();
    model.fit_inertia = best.inertia;
    return model;
}

Eigen::MatrixXd center_frames(const PoseSequence& p) {
    if (p.joints() <= kModeRootJoint) throw ShapeError("pose has no root joint");
    Eigen::MatrixXd out = p.coords.cast<double>();
    for (Eigen::Index t = 0; t < out.cols(); ++t) {
        const double rx = out(2 * kModeRootJoint, t);
        const double ry = out(2 * kModeRootJoint + 1, t);
        for (Eigen::Index j = 0; j < out.rows() / 2; ++j) {
            out(2 * j, t) -= rx;
            out(2 * j + 1, t) -= ry;
        }
    }
    return out;
}

ModeModel fit_modes(const std::vector<PoseSequence>& poses, int M, const LloydOptions& opt, LloydTrace* trace) {
    Eigen::Index total = 0;
    for (const auto& p : poses) total += p.frames();
    if (poses.empty() || total == 0) throw InsufficientDataError("fit_modes: no frames");
    Eigen::MatrixXd pts(poses.front().coords.rows(), total);
    Eigen::Index at = 0;
    for (const auto& p : poses) {
        if (p.coords.rows() != pts.rows()) throw ShapeError("fit_modes: sequences disagree on joint count");
        pts.middleCols(at, p.frames()) = center_frames(p);
        at += p.frames();
    }
    return fit_modes_points(pts, M, opt, trace);
}

int nearest_mode(const ModeModel& model, const Eigen::VectorXd& frame) {
    if (frame.size() != model.dim()) throw ShapeError("assign: frame has dim " + std::to_string(frame.size()) +
                                                      ", model expects " + std::to_string(model.dim()));
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < model.modes(); ++k) {
        const double d = (frame - model.centroids.col(k).cast<double>()).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

ModeAssignment assign(const ModeModel& model, const PoseSequence& p) {
    if (model.modes() < 1) throw InvalidArgument("assign: empty mode model");
    if (p.coords.rows() != model.dim())
        throw ShapeError("assign: pose dim " + std::to_string(p.coords.rows()) + " vs model dim " +
                         std::to_string(model.dim()));
    const Eigen::MatrixXd frames = center_frames(p);
    ModeAssignment out;
    out.phi = Eigen::MatrixXf::Zero(model.modes(), p.frames());
    out.labels.resize(p.frames());
    for (int t = 0; t < p.frames(); ++t) {
        out.labels[t] = nearest_mode(model, frames.col(t));
        out.phi(out.labels[t], t) = 1.0f;
    }
    return out;
}

std::string encode_mode_model(const ModeModel& m) {
    binio::Writer w;
    w.magic("MXC1");
    w.u32(static_cast<std::uint32_t>(m.modes()));
    w.u32(static_cast<std::uint32_t>(m.dim()));
    w.f32s(m.centroids.data(), static_cast<std::size_t>(m.centroids.size()));
    return w.take();
}

ModeModel decode_mode_model(const std::string& bytes, const std::string& origin) {
    binio::Reader r(bytes, origin);
    r.expect_magic("MXC1");
    const std::uint32_t M = r.u32();
    const std::uint32_t dim = r.u32();
    if (M == 0 || dim == 0) r.fail("mode model with zero modes or dimension");
    ModeModel m;
    m.centroids.resize(dim, M);
    r.f32s(m.centroids.data(), static_cast<std::size_t>(M) * dim);
    if (r.remaining() != 0) r.fail("trailing bytes after centroids");
    if (!m.centroids.allFinite()) r.fail("non-finite centroid");
    return m;
}

void save_mode_model(const ModeModel& m, const std::string& path) { binio::write_file_atomic(path, encode_mode_model(m)); }

ModeModel load_mode_model(const std::string& path) { return decode_mode_model(binio::read_file(path), path); }

}  // namespace mixstage
