#pragma once

// Minimal layer toolkit with hand-written backward passes.
//
// Activations are stored as `Seq`: a [channels, batch * time] float matrix
// whose column b * time + t is the feature vector of window b at frame t.
// Layers cache what they need during `forward` so that a single `backward`
// call can follow; `infer` is the const evaluation-mode path and touches no
// cache, so it may run concurrently on a shared snapshot.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mixstage::nn {

using Mat = Eigen::MatrixXf;
using Rng = std::mt19937_64;

struct Seq {
    Mat data;
    int batch = 0;
    int time = 0;

    Seq() = default;
    Seq(Mat d, int b, int t) : data(std::move(d)), batch(b), time(t) {}

    static Seq zeros(int channels, int batch, int time) { return {Mat::Zero(channels, batch * time), batch, time}; }

    int channels() const { return static_cast<int>(data.rows()); }
    int columns() const { return static_cast<int>(data.cols()); }
};

struct Param {
    Mat value;
    Mat grad;

    Param() = default;
    Param(int rows, int cols) : value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
};

/// Stable-name views over a network's learnable tensors and buffers.
struct ParamList {
    std::vector<std::pair<std::string, Param*>> params;
    std::vector<std::pair<std::string, Mat*>> buffers;

    void add(std::string name, Param& p) { params.emplace_back(std::move(name), &p); }
    void add_buffer(std::string name, Mat& m) { buffers.emplace_back(std::move(name), &m); }
    void append(const ParamList& other);
    void zero_grad();
    double grad_norm_sq() const;
};

class Conv1d {
public:
    Conv1d() = default;
    Conv1d(int in, int out, int kernel, int stride, int pad, Rng& rng);

    Seq forward(const Seq& x);
    Seq infer(const Seq& x) const;
    Seq backward(const Seq& dy);

    int out_time(int in_time) const { return (in_time + 2 * pad_ - kernel_) / stride_ + 1; }
    int in_channels() const { return in_; }
    int out_channels() const { return out_; }

    void collect(const std::string& prefix, ParamList& out);

    Param weight;  ///< [out, kernel * in], row block k holds tap k
    Param bias;    ///< [out, 1]

private:
    Mat im2col(const Seq& x, int t_out) const;

    int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
    Mat col_;
    int cached_batch_ = 0, cached_time_ = 0;
};

class BatchNorm1d {
public:
    BatchNorm1d() = default;
    explicit BatchNorm1d(int channels, float momentum = 0.1f, float eps = 1e-5f);

    Seq forward(const Seq& x);
    Seq infer(const Seq& x) const;
    Seq backward(const Seq& dy);

    void collect(const std::string& prefix, ParamList& out);

    Param gamma, beta;
    Mat running_mean, running_var;

private:
    float momentum_ = 0.1f, eps_ = 1e-5f;
    Mat xhat_;
    Eigen::VectorXf inv_std_;
};

enum class Act { kNone, kRelu, kLeakyRelu };

/// Conv1d -> optional BatchNorm -> activation.
class ConvBlock {
public:
    struct Spec {
        int in = 0, out = 0, kernel = 3, stride = 1, pad = 1;
        bool batch_norm = true;
        Act act = Act::kRelu;
    };

    ConvBlock() = default;
    ConvBlock(const Spec& spec, Rng& rng);

    static Spec same(int in, int out, bool bn = true, Act act = Act::kRelu) { return {in, out, 3, 1, 1, bn, act}; }
    static Spec down(int in, int out, bool bn = true, Act act = Act::kRelu) { return {in, out, 4, 2, 1, bn, act}; }
    static Spec pointwise(int in, int out) { return {in, out, 1, 1, 0, false, Act::kNone}; }

    Seq forward(const Seq& x);
    Seq infer(const Seq& x) const;
    Seq backward(const Seq& dy);

    void collect(const std::string& prefix, ParamList& out);

    Conv1d conv;
    BatchNorm1d bn;

private:
    Mat activate(const Mat& x) const;

    Spec spec_;
    Mat pre_act_;
};

/// A plain chain of ConvBlocks.
class Stack {
public:
    Stack() = default;
    explicit Stack(std::vector<ConvBlock> blocks) : blocks_(std::move(blocks)) {}

    Seq forward(const Seq& x);
    Seq infer(const Seq& x) const;
    Seq backward(const Seq& dy);
    void collect(const std::string& prefix, ParamList& out);

    std::vector<ConvBlock>& blocks() { return blocks_; }
    const std::vector<ConvBlock>& blocks() const { return blocks_; }

private:
    std::vector<ConvBlock> blocks_;
};

class Linear {
public:
    Linear() = default;
    Linear(int in, int out, Rng& rng);

    Mat forward(const Mat& x);
    Mat infer(const Mat& x) const;
    Mat backward(const Mat& dy);
    void collect(const std::string& prefix, ParamList& out);

    Param weight;  ///< [out, in]
    Param bias;    ///< [out, 1]

private:
    Mat x_;
};

// Stateless shape ops. Each has an explicit adjoint.
Seq upsample2(const Seq& x);
Seq upsample2_backward(const Seq& dy);
Mat mean_pool_time(const Seq& x);  ///< [C, batch]
Seq mean_pool_time_backward(const Mat& dy, int time);
Seq broadcast_time(const Mat& v, int time);  ///< [C, batch] -> Seq
Mat broadcast_time_backward(const Seq& dy);
Seq concat_channels(const Seq& a, const Seq& b);
std::pair<Seq, Seq> split_channels(const Seq& x, int first);
Seq concat_batch(const Seq& a, const Seq& b);
std::pair<Seq, Seq> split_batch(const Seq& x, int first_batch);
Mat sigmoid(const Mat& x);

/// Adam with lazy per-tensor updates: a tensor whose gradient is exactly
/// zero in a step keeps its value and moments untouched.
class Adam {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    Adam(ParamList params, Options opt);

    void step(double lr);
    void zero_grad();

    struct Slot {
        Mat m, v;
        std::int64_t steps = 0;
    };

    const ParamList& params() const { return params_; }
    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }
    const Options& options() const { return opt_; }

private:
    ParamList params_;
    Options opt_;
    std::vector<Slot> slots_;
};

}  // namespace mixstage::nn
