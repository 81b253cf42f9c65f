#include "spatialgen/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>

namespace spatialgen::nn {

namespace {

// GEMM stays single-threaded so results never depend on the thread count;
// parallelism lives in the attention op, over disjoint row groups.
const bool kEigenSerial = (Eigen::setNbThreads(1), true);

template <typename S>
void require_shape(const Mat<S>& a, Eigen::Index rows, Eigen::Index cols, const char* op) {
    if (a.rows() != rows || a.cols() != cols) {
        throw Error(ErrorKind::InvalidInput,
                    std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " vs " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

}  // namespace

template <typename S>
Parameter<S>& ParamSet<S>::add(const std::string& name, int rows, int cols) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw Error(ErrorKind::Invariant, "duplicate parameter", name);
    it->second.value = Mat<S>::Zero(rows, cols);
    it->second.grad = Mat<S>::Zero(rows, cols);
    return it->second;
}

template <typename S>
Parameter<S>& ParamSet<S>::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorKind::InvalidInput, "unknown parameter", name);
    return it->second;
}

template <typename S>
const Parameter<S>& ParamSet<S>::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorKind::InvalidInput, "unknown parameter", name);
    return it->second;
}

template <typename S>
void ParamSet<S>::zero_grad() {
    for (auto& [_, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

template <typename S>
std::size_t ParamSet<S>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

template <typename S>
Var Tape<S>::push(Mat<S> value, bool requires_grad) {
    (void)kEigenSerial;
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
template <typename Expr>
void Tape<S>::accumulate(Var v, const Expr& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

template <typename S>
Var Tape<S>::constant(Mat<S> value) {
    return push(std::move(value), false);
}

template <typename S>
Var Tape<S>::param(Parameter<S>& p) {
    const Var out = push(p.value, !p.frozen);
    if (!p.frozen) {
        Parameter<S>* target = &p;
        node(out).backward = [this, out, target] {
            if (target->grad.size() == 0) target->grad = Mat<S>::Zero(target->value.rows(), target->value.cols());
            target->grad += node(out).grad;
        };
    }
    return out;
}

template <typename S>
Var Tape<S>::matmul(Var a, Var b) {
    const auto& va = value(a);
    const auto& vb = value(b);
    if (va.cols() != vb.rows()) require_shape(vb, va.cols(), vb.cols(), "matmul");
    Mat<S> out = va * vb;
    const Var r = push(std::move(out), requires_grad(a) || requires_grad(b));
    node(r).backward = [this, a, b, r] {
        const auto& g = node(r).grad;
        if (requires_grad(a)) accumulate(a, g * value(b).transpose());
        if (requires_grad(b)) accumulate(b, value(a).transpose() * g);
    };
    return r;
}

template <typename S>
Var Tape<S>::add(Var a, Var b) {
    require_shape(value(b), value(a).rows(), value(a).cols(), "add");
    const Var r = push(value(a) + value(b), requires_grad(a) || requires_grad(b));
    node(r).backward = [this, a, b, r] {
        accumulate(a, node(r).grad);
        accumulate(b, node(r).grad);
    };
    return r;
}

template <typename S>
Var Tape<S>::add_row(Var a, Var row) {
    require_shape(value(row), 1, value(a).cols(), "add_row");
    Mat<S> out = value(a).rowwise() + value(row).row(0);
    const Var r = push(std::move(out), requires_grad(a) || requires_grad(row));
    node(r).backward = [this, a, row, r] {
        accumulate(a, node(r).grad);
        if (requires_grad(row)) accumulate(row, node(r).grad.colwise().sum());
    };
    return r;
}

template <typename S>
Var Tape<S>::scale(Var a, S s) {
    const Var r = push(value(a) * s, requires_grad(a));
    node(r).backward = [this, a, r, s] { accumulate(a, node(r).grad * s); };
    return r;
}

template <typename S>
Var Tape<S>::scale_rows(Var a, Var s) {
    require_shape(value(s), value(a).rows(), 1, "scale_rows");
    Mat<S> out = value(a).array().colwise() * value(s).col(0).array();
    const Var r = push(std::move(out), requires_grad(a) || requires_grad(s));
    node(r).backward = [this, a, s, r] {
        const auto& g = node(r).grad;
        if (requires_grad(a)) accumulate(a, (g.array().colwise() * value(s).col(0).array()).matrix());
        if (requires_grad(s)) accumulate(s, (g.array() * value(a).array()).rowwise().sum().matrix());
    };
    return r;
}

template <typename S>
Var Tape<S>::silu(Var a) {
    const auto& x = value(a);
    Mat<S> sig = (S(1) + (-x.array()).exp()).inverse().matrix();
    Mat<S> out = (x.array() * sig.array()).matrix();
    const Var r = push(std::move(out), requires_grad(a));
    node(r).backward = [this, a, r, sig = std::move(sig)] {
        const auto& x = value(a);
        accumulate(a, (node(r).grad.array() * sig.array() * (S(1) + x.array() * (S(1) - sig.array()))).matrix());
    };
    return r;
}

template <typename S>
Var Tape<S>::layer_norm(Var x, Var gamma, Var beta) {
    constexpr S kEps = S(1e-5);
    const auto& vx = value(x);
    const Eigen::Index n = vx.rows(), c = vx.cols();
    require_shape(value(gamma), 1, c, "layer_norm");
    require_shape(value(beta), 1, c, "layer_norm");
    Mat<S> xhat(n, c);
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const S mean = vx.row(i).mean();
        const S var = (vx.row(i).array() - mean).square().mean();
        inv_std(i) = S(1) / std::sqrt(var + kEps);
        xhat.row(i) = (vx.row(i).array() - mean) * inv_std(i);
    }
    Mat<S> out = (xhat.array().rowwise() * value(gamma).row(0).array()).rowwise() + value(beta).row(0).array();
    const Var r = push(std::move(out), requires_grad(x) || requires_grad(gamma) || requires_grad(beta));
    node(r).backward = [this, x, gamma, beta, r, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const auto& g = node(r).grad;
        if (requires_grad(gamma)) accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
        if (requires_grad(beta)) accumulate(beta, g.colwise().sum());
        if (!requires_grad(x)) return;
        const Mat<S> dxhat = (g.array().rowwise() * value(gamma).row(0).array()).matrix();
        Mat<S> dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const S m1 = dxhat.row(i).mean();
            const S m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
            dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
        }
        accumulate(x, dx);
    };
    return r;
}

template <typename S>
Var Tape<S>::attention(Var q, Var k, Var v, const Groups& groups, int heads) {
    const auto& vq = value(q);
    const Eigen::Index rows = vq.rows(), dim = vq.cols();
    require_shape(value(k), rows, dim, "attention");
    require_shape(value(v), rows, dim, "attention");
    if (heads <= 0 || dim % heads != 0) throw Error(ErrorKind::InvalidInput, "attention: heads must divide the width");
    std::vector<char> seen(static_cast<std::size_t>(rows), 0);
    for (const auto& g : groups) {
        for (int i : g) {
            if (i < 0 || i >= rows || seen[static_cast<std::size_t>(i)]) {
                throw Error(ErrorKind::InvalidInput, "attention: groups must be disjoint row sets");
            }
            seen[static_cast<std::size_t>(i)] = 1;
        }
    }
    const int dh = static_cast<int>(dim / heads);
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    const int jobs = static_cast<int>(groups.size()) * heads;
    auto probs = std::make_shared<std::vector<Mat<S>>>(static_cast<std::size_t>(jobs));
    Mat<S> out = Mat<S>::Zero(rows, dim);

    auto gather = [](const Mat<S>& src, const std::vector<int>& idx, int col, int width) {
        Mat<S> m(static_cast<Eigen::Index>(idx.size()), width);
        for (std::size_t i = 0; i < idx.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = src.block(idx[i], col, 1, width);
        return m;
    };

#pragma omp parallel for schedule(dynamic)
    for (int job = 0; job < jobs; ++job) {
        const auto& idx = groups[static_cast<std::size_t>(job / heads)];
        const int col = (job % heads) * dh;
        const Mat<S> qg = gather(vq, idx, col, dh);
        const Mat<S> kg = gather(value(k), idx, col, dh);
        const Mat<S> vg = gather(value(v), idx, col, dh);
        // Sums over keys run in double so the rounded result does not depend
        // on key order (view permutations reorder the keys).
        Mat<double> p = (qg.template cast<double>() * kg.template cast<double>().transpose()) * double(scale);
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            const double mx = p.row(i).maxCoeff();
            p.row(i) = (p.row(i).array() - mx).exp();
            p.row(i) /= p.row(i).sum();
        }
        const Mat<S> o = (p * vg.template cast<double>()).template cast<S>();
        for (std::size_t i = 0; i < idx.size(); ++i) out.block(idx[i], col, 1, dh) = o.row(static_cast<Eigen::Index>(i));
        (*probs)[static_cast<std::size_t>(job)] = p.template cast<S>();
    }

    const Var r = push(std::move(out), requires_grad(q) || requires_grad(k) || requires_grad(v));
    node(r).backward = [this, q, k, v, r, groups, heads, dh, scale, probs, gather] {
        const auto& g = node(r).grad;
        const Eigen::Index rows = g.rows(), dim = g.cols();
        Mat<S> dq = Mat<S>::Zero(rows, dim), dk = Mat<S>::Zero(rows, dim), dv = Mat<S>::Zero(rows, dim);
        const int jobs = static_cast<int>(groups.size()) * heads;
#pragma omp parallel for schedule(dynamic)
        for (int job = 0; job < jobs; ++job) {
            const auto& idx = groups[static_cast<std::size_t>(job / heads)];
            const int col = (job % heads) * dh;
            const Mat<S>& p = (*probs)[static_cast<std::size_t>(job)];
            const Mat<S> qg = gather(value(q), idx, col, dh);
            const Mat<S> kg = gather(value(k), idx, col, dh);
            const Mat<S> vg = gather(value(v), idx, col, dh);
            const Mat<S> go = gather(g, idx, col, dh);
            const Mat<S> gv = p.transpose() * go;
            const Mat<S> gp = go * vg.transpose();
            const auto row_dot = (gp.array() * p.array()).rowwise().sum();
            const Mat<S> gs = (p.array() * (gp.array().colwise() - row_dot)).matrix() * scale;
            const Mat<S> gq = gs * kg;
            const Mat<S> gk = gs.transpose() * qg;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                dq.block(idx[i], col, 1, dh) = gq.row(ii);
                dk.block(idx[i], col, 1, dh) = gk.row(ii);
                dv.block(idx[i], col, 1, dh) = gv.row(ii);
            }
        }
        accumulate(q, dq);
        accumulate(k, dk);
        accumulate(v, dv);
    };
    return r;
}

template <typename S>
Var Tape<S>::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error(ErrorKind::InvalidInput, "concat_cols: no inputs");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    bool grad = false;
    for (Var p : parts) {
        require_shape(value(p), rows, value(p).cols(), "concat_cols");
        cols += value(p).cols();
        grad = grad || requires_grad(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
        out.middleCols(at, value(p).cols()) = value(p);
        at += value(p).cols();
    }
    const Var r = push(std::move(out), grad);
    node(r).backward = [this, parts, r] {
        Eigen::Index at = 0;
        for (Var p : parts) {
            const Eigen::Index c = value(p).cols();
            if (requires_grad(p)) accumulate(p, node(r).grad.middleCols(at, c));
            at += c;
        }
    };
    return r;
}

template <typename S>
Var Tape<S>::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error(ErrorKind::InvalidInput, "concat_rows: no inputs");
    const Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    bool grad = false;
    for (Var p : parts) {
        require_shape(value(p), value(p).rows(), cols, "concat_rows");
        rows += value(p).rows();
        grad = grad || requires_grad(p);
    }
    Mat<S> out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
        out.middleRows(at, value(p).rows()) = value(p);
        at += value(p).rows();
    }
    const Var r = push(std::move(out), grad);
    node(r).backward = [this, parts, r] {
        Eigen::Index at = 0;
        for (Var p : parts) {
            const Eigen::Index n = value(p).rows();
            if (requires_grad(p)) accumulate(p, node(r).grad.middleRows(at, n));
            at += n;
        }
    };
    return r;
}

template <typename S>
Var Tape<S>::slice_cols(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > value(a).cols()) {
        throw Error(ErrorKind::InvalidInput, "slice_cols: range out of bounds");
    }
    const Var r = push(value(a).middleCols(start, count), requires_grad(a));
    node(r).backward = [this, a, r, start, count] {
        Mat<S> g = Mat<S>::Zero(value(a).rows(), value(a).cols());
        g.middleCols(start, count) = node(r).grad;
        accumulate(a, g);
    };
    return r;
}

template <typename S>
Var Tape<S>::gather(Var a, std::vector<int> index, int blocks) {
    const auto& va = value(a);
    const Eigen::Index c = va.cols();
    if (blocks <= 0 || index.size() % static_cast<std::size_t>(blocks) != 0) {
        throw Error(ErrorKind::InvalidInput, "gather: index size must be a multiple of blocks");
    }
    const auto rows = static_cast<Eigen::Index>(index.size() / static_cast<std::size_t>(blocks));
    Mat<S> out = Mat<S>::Zero(rows, c * blocks);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (int j = 0; j < blocks; ++j) {
            const int src = index[static_cast<std::size_t>(r * blocks + j)];
            if (src < -1 || src >= va.rows()) throw Error(ErrorKind::InvalidInput, "gather: index out of range");
            if (src >= 0) out.block(r, j * c, 1, c) = va.row(src);
        }
    }
    const Var res = push(std::move(out), requires_grad(a));
    node(res).backward = [this, a, res, index = std::move(index), blocks, rows, c] {
        const auto& g = node(res).grad;
        Mat<S> ga = Mat<S>::Zero(value(a).rows(), c);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (int j = 0; j < blocks; ++j) {
                const int src = index[static_cast<std::size_t>(r * blocks + j)];
                if (src >= 0) ga.row(src) += g.block(r, j * c, 1, c);
            }
        }
        accumulate(a, ga);
    };
    return res;
}

template <typename S>
Var Tape<S>::mse(Var a, const Mat<S>& target) {
    require_shape(target, value(a).rows(), value(a).cols(), "mse");
    Mat<S> diff = value(a) - target;
    const S n = static_cast<S>(diff.size());
    Mat<S> out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    const Var r = push(std::move(out), requires_grad(a));
    node(r).backward = [this, a, r, diff = std::move(diff), n] { accumulate(a, diff * (S(2) * node(r).grad(0, 0) / n)); };
    return r;
}

template <typename S>
Var Tape<S>::weighted_sum(const std::vector<Var>& scalars, const std::vector<S>& weights) {
    if (scalars.size() != weights.size() || scalars.empty()) {
        throw Error(ErrorKind::InvalidInput, "weighted_sum: need one weight per term");
    }
    Mat<S> out = Mat<S>::Zero(1, 1);
    bool grad = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        require_shape(value(scalars[i]), 1, 1, "weighted_sum");
        out(0, 0) += weights[i] * value(scalars[i])(0, 0);
        grad = grad || requires_grad(scalars[i]);
    }
    const Var r = push(std::move(out), grad);
    node(r).backward = [this, scalars, weights, r] {
        for (std::size_t i = 0; i < scalars.size(); ++i) accumulate(scalars[i], node(r).grad * weights[i]);
    };
    return r;
}

template <typename S>
void Tape<S>::run_backward() {
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.grad.size() != 0 && n.backward) n.backward();
    }
}

template <typename S>
void Tape<S>::backward(Var out) {
    require_shape(value(out), 1, 1, "backward");
    backward(out, Mat<S>::Ones(1, 1));
}

template <typename S>
void Tape<S>::backward(Var out, const Mat<S>& seed) {
    require_shape(seed, value(out).rows(), value(out).cols(), "backward");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    accumulate(out, seed);
    run_backward();
}

ConvGeometry conv_geometry(int h, int w, int k, int stride) {
    if (h <= 0 || w <= 0 || k <= 0 || k % 2 == 0 || stride <= 0) {
        throw Error(ErrorKind::InvalidInput, "conv_geometry: bad arguments");
    }
    ConvGeometry g;
    g.out_h = (h + stride - 1) / stride;
    g.out_w = (w + stride - 1) / stride;
    const int pad = k / 2;
    g.index.reserve(static_cast<std::size_t>(g.out_h) * g.out_w * k * k);
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int y = oy * stride + ky - pad, x = ox * stride + kx - pad;
                    g.index.push_back(y >= 0 && y < h && x >= 0 && x < w ? y * w + x : -1);
                }
            }
        }
    }
    return g;
}

std::vector<int> upsample2x_index(int h, int w) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(4) * h * w);
    for (int y = 0; y < 2 * h; ++y)
        for (int x = 0; x < 2 * w; ++x) idx.push_back((y / 2) * w + x / 2);
    return idx;
}

template <typename S>
void init_normal(Mat<S>& m, Rng& rng, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(stddev * rng.normal());
}

template <typename S>
double Adam<S>::step(ParamSet<S>& params) {
    double sq = 0;
    for (const auto& [_, p] : params.all()) {
        if (!p.frozen && p.grad.size() != 0) sq += p.grad.template cast<double>().squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) return norm;
    const double clip = clip_ > 0 && norm > clip_ ? clip_ / norm : 1.0;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : params.all()) {
        if (p.frozen || p.grad.size() == 0) continue;
        auto [it, fresh] = moments_.try_emplace(name);
        if (fresh) {
            it->second.first = Mat<S>::Zero(p.value.rows(), p.value.cols());
            it->second.second = Mat<S>::Zero(p.value.rows(), p.value.cols());
        }
        auto& [m, v] = it->second;
        const Mat<S> g = p.grad * static_cast<S>(clip);
        m = m * static_cast<S>(beta1_) + g * static_cast<S>(1 - beta1_);
        v = v * static_cast<S>(beta2_) + g.cwiseProduct(g) * static_cast<S>(1 - beta2_);
        const auto mhat = m.array() / static_cast<S>(c1);
        const auto vhat = v.array() / static_cast<S>(c2);
        p.value.array() -= static_cast<S>(lr_) * mhat / (vhat.sqrt() + static_cast<S>(eps_));
    }
    return norm;
}

template class ParamSet<float>;
template class ParamSet<double>;
template class Tape<float>;
template class Tape<double>;
template class Adam<float>;
template class Adam<double>;
template void init_normal(Mat<float>&, Rng&, double);
template void init_normal(Mat<double>&, Rng&, double);

}  // namespace spatialgen::nn
