#pragma once

#include "spatialgen/common.hpp"
#include "spatialgen/rng.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <string>
#include <vector>

// Minimal reverse-mode autodiff over row-major matrices. Rows are tokens or
// pixels, columns are channels. Instantiated for float and double.
namespace spatialgen::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct Parameter {
    Mat<S> value;
    Mat<S> grad;
    bool frozen = false;
};

// Name-ordered, so iteration (and therefore optimizer updates and
// checkpoints) is deterministic.
template <typename S>
class ParamSet {
public:
    Parameter<S>& add(const std::string& name, int rows, int cols);
    Parameter<S>& at(const std::string& name);
    const Parameter<S>& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::map<std::string, Parameter<S>>& all() { return params_; }
    const std::map<std::string, Parameter<S>>& all() const { return params_; }

    void zero_grad();
    std::size_t scalar_count() const;

    template <typename T>
    ParamSet<T> cast() const {
        ParamSet<T> out;
        for (const auto& [name, p] : params_) {
            auto& q = out.add(name, static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols()));
            q.value = p.value.template cast<T>();
            q.frozen = p.frozen;
        }
        return out;
    }

private:
    std::map<std::string, Parameter<S>> params_;
};

struct Var {
    int id = -1;
};

// Row groups for grouped attention; rows of different groups never interact.
using Groups = std::vector<std::vector<int>>;

template <typename S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Mat<S> value);
    // Gradients flow into p.grad unless p is frozen.
    Var param(Parameter<S>& p);

    const Mat<S>& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    const Mat<S>& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add_row(Var a, Var row);  // broadcast a 1 x C row over a
    Var scale(Var a, S s);
    Var scale_rows(Var a, Var s);  // row r of a times s(r, 0)
    Var silu(Var a);
    Var layer_norm(Var x, Var gamma, Var beta);
    // Multi-head scaled dot-product attention within each row group.
    Var attention(Var q, Var k, Var v, const Groups& groups, int heads);
    Var concat_cols(const std::vector<Var>& parts);
    Var concat_rows(const std::vector<Var>& parts);
    Var slice_cols(Var a, int start, int count);
    // Output row r, block j is input row index[r * blocks + j] (zeros for -1).
    Var gather(Var a, std::vector<int> index, int blocks);
    // mean((a - target)^2) as a 1 x 1 node.
    Var mse(Var a, const Mat<S>& target);
    Var weighted_sum(const std::vector<Var>& scalars, const std::vector<S>& weights);

    // Seeds d(out) = 1 for a 1 x 1 node, or the given gradient, and runs the
    // tape backwards.
    void backward(Var out);
    void backward(Var out, const Mat<S>& seed);

private:
    struct Node {
        Mat<S> value;
        Mat<S> grad;
        bool requires_grad = false;
        std::function<void()> backward;
    };

    Var push(Mat<S> value, bool requires_grad);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    // grad(v) += g, allocating on first use; no-op for constants.
    template <typename Expr>
    void accumulate(Var v, const Expr& g);
    void run_backward();

    std::vector<Node> nodes_;
};

// im2col index map for a k x k convolution over an h x w image (rows are
// pixels in row-major order). Output has ceil(h / stride) x ceil(w / stride)
// rows; padding = k / 2.
struct ConvGeometry {
    int out_h = 0, out_w = 0;
    std::vector<int> index;
};
ConvGeometry conv_geometry(int h, int w, int k, int stride);
// Nearest-neighbor 2x upsampling index map.
std::vector<int> upsample2x_index(int h, int w);

template <typename S>
void init_normal(Mat<S>& m, Rng& rng, double stddev);

template <typename S>
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double clip_norm = 1.0)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), clip_(clip_norm) {}

    // Updates every non-frozen parameter from its grad; returns the pre-clip
    // global gradient norm.
    double step(ParamSet<S>& params);
    void set_lr(double lr) { lr_ = lr; }
    int steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_, clip_;
    int t_ = 0;
    std::map<std::string, std::pair<Mat<S>, Mat<S>>> moments_;
};

// Serial per-query loop over the same grouped multi-head attention; the
// Tape op is checked against it.
Mat<double> attention_reference(const Mat<double>& q, const Mat<double>& k, const Mat<double>& v, const Groups& groups,
                                int heads);

}  // namespace spatialgen::nn
