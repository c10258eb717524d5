// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "bee/paramset.hpp"
#include "bee/rng.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Probability floor inside logarithms. Keeps cross-entropy and entropy finite
// without measurably changing values above it.
inline constexpr double kProbFloor = 1e-12;

// Reverse-mode tape over the primitive set the losses need: affine maps,
// gelu, row L2-normalization, row softmax, cross-entropy, entropy, and a few
// elementwise helpers. Define-by-run: values are computed as nodes are added,
// backward() walks the tape once in reverse.
template <typename Real>
class Graph {
public:
    using Id = std::size_t;

    Id constant(Tensor<Real> v) { return push(Op::kConst, npos, npos, std::move(v)); }

    Id constant_scalar(Real v) {
        Tensor<Real> t;
        t.shape = {1};
        t.data = {v};
        return constant(std::move(t));
    }

    // Leaf with gradient tracking. The tensor is copied in; read the gradient
    // back through grad() after backward().
    Id param(const Tensor<Real>& v) { return push(Op::kParam, npos, npos, v); }

    Id matmul(Id a, Id b) {
        Tensor<Real> out;
        bee::matmul(val(a), val(b), out);
        return push(Op::kMatmul, a, b, std::move(out));
    }

    Id add_rowwise(Id x, Id bias) {
        Tensor<Real> out = val(x);
        bee::add_rowwise(out, val(bias));
        return push(Op::kAddRowwise, x, bias, std::move(out));
    }

    Id add(Id a, Id b) {
        check_same_shape(a, b, "add");
        Tensor<Real> out = val(a);
        const Tensor<Real>& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
        return push(Op::kAdd, a, b, std::move(out));
    }

    Id sub(Id a, Id b) {
        check_same_shape(a, b, "sub");
        Tensor<Real> out = val(a);
        const Tensor<Real>& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= vb.data[i];
        return push(Op::kSub, a, b, std::move(out));
    }

    Id scale(Id a, Real s) {
        Tensor<Real> out = val(a);
        for (Real& v : out.data) v *= s;
        Id id = push(Op::kScale, a, npos, std::move(out));
        nodes_[id].scalar = s;
        return id;
    }

    Id hadamard(Id a, Id b) {
        check_same_shape(a, b, "hadamard");
        Tensor<Real> out = val(a);
        const Tensor<Real>& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= vb.data[i];
        return push(Op::kHadamard, a, b, std::move(out));
    }

    // Exact gelu, x * Phi(x) with the Gaussian CDF; smooth everywhere so
    // finite-difference checks are clean.
    Id gelu(Id x) {
        Tensor<Real> out = val(x);
        for (Real& v : out.data) {
            const double xd = static_cast<double>(v);
            v = static_cast<Real>(0.5 * xd * (1.0 + std::erf(xd * (1.0 / std::numbers::sqrt2))));
        }
        return push(Op::kGelu, x, npos, std::move(out));
    }

    Id l2norm_rows(Id x) {
        const Tensor<Real>& vx = val(x);
        if (vx.rank() != 2) fail("graph: l2norm_rows needs rank 2");
        Tensor<Real> out = vx;
        l2_normalize_rows(out, static_cast<Real>(kNormEps));
        return push(Op::kL2NormRows, x, npos, std::move(out));
    }

    Id softmax_rows(Id x) {
        const Tensor<Real>& vx = val(x);
        if (vx.rank() != 2) fail("graph: softmax_rows needs rank 2");
        Tensor<Real> out = vx;
        bee::softmax_rows(out);
        return push(Op::kSoftmaxRows, x, npos, std::move(out));
    }

    // Mean over rows of the cross-entropy -sum_m t log q. Targets are usually
    // constants (teacher outputs, labels); gradients flow to both inputs when
    // tracked.
    Id cross_entropy_mean(Id target, Id pred) {
        check_same_shape(target, pred, "cross_entropy_mean");
        const Tensor<Real>& t = val(target);
        const Tensor<Real>& q = val(pred);
        if (t.rank() != 2) fail("graph: cross_entropy_mean needs rank 2");
        const std::size_t n = t.shape[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double qi = std::max(static_cast<double>(q.data[i]), kProbFloor);
            acc -= static_cast<double>(t.data[i]) * std::log(qi);
        }
        Tensor<Real> out;
        out.shape = {1};
        out.data = {static_cast<Real>(acc / static_cast<double>(n))};
        return push(Op::kXentMean, target, pred, std::move(out));
    }

    // Mean over rows of the Shannon entropy -sum_m p log p.
    Id entropy_mean(Id p) {
        const Tensor<Real>& vp = val(p);
        if (vp.rank() != 2) fail("graph: entropy_mean needs rank 2");
        const std::size_t n = vp.shape[0];
        double acc = 0.0;
        for (std::size_t i = 0; i < vp.size(); ++i) {
            const double pi = static_cast<double>(vp.data[i]);
            acc -= pi * std::log(std::max(pi, kProbFloor));
        }
        Tensor<Real> out;
        out.shape = {1};
        out.data = {static_cast<Real>(acc / static_cast<double>(n))};
        return push(Op::kEntropyMean, p, npos, std::move(out));
    }

    Id sum_all(Id x) {
        double acc = 0.0;
        for (const Real v : val(x).data) acc += static_cast<double>(v);
        Tensor<Real> out;
        out.shape = {1};
        out.data = {static_cast<Real>(acc)};
        return push(Op::kSumAll, x, npos, std::move(out));
    }

    Id mean_all(Id x) {
        double acc = 0.0;
        for (const Real v : val(x).data) acc += static_cast<double>(v);
        Tensor<Real> out;
        out.shape = {1};
        out.data = {static_cast<Real>(acc / static_cast<double>(val(x).size()))};
        return push(Op::kMeanAll, x, npos, std::move(out));
    }

    Id dot(Id a, Id b) {
        check_same_shape(a, b, "dot");
        const Tensor<Real>& va = val(a);
        const Tensor<Real>& vb = val(b);
        double acc = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i)
            acc += static_cast<double>(va.data[i]) * static_cast<double>(vb.data[i]);
        Tensor<Real> out;
        out.shape = {1};
        out.data = {static_cast<Real>(acc)};
        return push(Op::kDot, a, b, std::move(out));
    }

    const Tensor<Real>& value(Id id) const { return nodes_[id].val; }

    Real scalar_value(Id id) const {
        if (nodes_[id].val.size() != 1) fail("graph: node is not a scalar");
        return nodes_[id].val.data[0];
    }

    const Tensor<Real>& grad(Id id) const { return nodes_[id].grad; }

    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a scalar root. Gradients of all nodes are reset
    // first, so repeated calls do not accumulate across sweeps.
    void backward(Id root) {
        if (nodes_[root].val.size() != 1) fail("graph: backward root must be a scalar");
        for (Node& n : nodes_) {
            n.grad.shape = n.val.shape;
            n.grad.data.assign(n.val.size(), Real(0));
        }
        nodes_[root].grad.data[0] = Real(1);
        for (std::size_t k = root + 1; k-- > 0;) step_backward(k);
    }

private:
    static constexpr Id npos = static_cast<Id>(-1);
    static constexpr double kNormEps = 1e-12;

    enum class Op {
        kConst,
        kParam,
        kMatmul,
        kAddRowwise,
        kAdd,
        kSub,
        kScale,
        kHadamard,
        kGelu,
        kL2NormRows,
        kSoftmaxRows,
        kXentMean,
        kEntropyMean,
        kSumAll,
        kMeanAll,
        kDot,
    };

    struct Node {
        Op op;
        Id a, b;
        Tensor<Real> val;
        Tensor<Real> grad;
        Real scalar = Real(0);
    };

    std::vector<Node> nodes_;

    const Tensor<Real>& val(Id id) const { return nodes_[id].val; }

    Id push(Op op, Id a, Id b, Tensor<Real> v) {
        if (!v.all_finite()) fail("graph: non-finite value produced");
        nodes_.push_back(Node{op, a, b, std::move(v), {}, Real(0)});
        return nodes_.size() - 1;
    }

    void check_same_shape(Id a, Id b, const char* what) {
        if (!val(a).same_shape(val(b))) fail(std::string("graph: shape mismatch in ") + what);
    }

    void step_backward(Id k) {
        Node& n = nodes_[k];
        const Tensor<Real>& g = n.grad;
        switch (n.op) {
            case Op::kConst:
            case Op::kParam:
                break;
            case Op::kMatmul: {
                Tensor<Real> da, db;
                matmul_a_bt(g, val(n.b), da);
                matmul_at_b(val(n.a), g, db);
                accumulate(n.a, da);
                accumulate(n.b, db);
                break;
            }
            case Op::kAddRowwise: {
                accumulate(n.a, g);
                Tensor<Real>& gb = nodes_[n.b].grad;
                const std::size_t rows = g.shape[0], cols = g.shape[1];
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) gb.data[j] += g.at(i, j);
                break;
            }
            case Op::kAdd:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case Op::kSub: {
                accumulate(n.a, g);
                Tensor<Real>& gb = nodes_[n.b].grad;
                for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
                break;
            }
            case Op::kScale: {
                Tensor<Real>& ga = nodes_[n.a].grad;
                for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += n.scalar * g.data[i];
                break;
            }
            case Op::kHadamard: {
                Tensor<Real>& ga = nodes_[n.a].grad;
                Tensor<Real>& gb = nodes_[n.b].grad;
                const Tensor<Real>& va = val(n.a);
                const Tensor<Real>& vb = val(n.b);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga.data[i] += g.data[i] * vb.data[i];
                    gb.data[i] += g.data[i] * va.data[i];
                }
                break;
            }
            case Op::kGelu: {
                Tensor<Real>& ga = nodes_[n.a].grad;
                const Tensor<Real>& vx = val(n.a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = static_cast<double>(vx.data[i]);
                    const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
                    const double pdf =
                        std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
                    ga.data[i] += g.data[i] * static_cast<Real>(cdf + x * pdf);
                }
                break;
            }
            case Op::kL2NormRows: {
                Tensor<Real>& ga = nodes_[n.a].grad;
                const Tensor<Real>& vx = val(n.a);
                const Tensor<Real>& vy = n.val;
                const std::size_t rows = vx.shape[0], cols = vx.shape[1];
                for (std::size_t i = 0; i < rows; ++i) {
                    double norm2 = 0.0;
                    for (std::size_t j = 0; j < cols; ++j)
                        norm2 += static_cast<double>(vx.at(i, j)) * vx.at(i, j);
                    const double norm = std::sqrt(norm2);
                    if (norm <= kNormEps) {
                        // Clamped row: y = x / eps, the Jacobian is I/eps.
                        for (std::size_t j = 0; j < cols; ++j)
                            ga.at(i, j) += g.at(i, j) / static_cast<Real>(kNormEps);
                        continue;
                    }
                    double gy = 0.0;
                    for (std::size_t j = 0; j < cols; ++j)
                        gy += static_cast<double>(g.at(i, j)) * vy.at(i, j);
                    for (std::size_t j = 0; j < cols; ++j)
                        ga.at(i, j) += static_cast<Real>(
                            (static_cast<double>(g.at(i, j)) - gy * vy.at(i, j)) / norm);
                }
                break;
            }
            case Op::kSoftmaxRows: {
                Tensor<Real>& ga = nodes_[n.a].grad;
                const Tensor<Real>& vy = n.val;
                const std::size_t rows = vy.shape[0], cols = vy.shape[1];
                for (std::size_t i = 0; i < rows; ++i) {
                    double gy = 0.0;
                    for (std::size_t j = 0; j < cols; ++j)
                        gy += static_cast<double>(g.at(i, j)) * vy.at(i, j);
                    for (std::size_t j = 0; j < cols; ++j)
                        ga.at(i, j) += static_cast<Real>(
                            vy.at(i, j) * (static_cast<double>(g.at(i, j)) - gy));
                }
                break;
            }
            case Op::kXentMean: {
                const Real gs = g.data[0];
                Tensor<Real>& gt = nodes_[n.a].grad;
                Tensor<Real>& gq = nodes_[n.b].grad;
                const Tensor<Real>& vt = val(n.a);
                const Tensor<Real>& vq = val(n.b);
                const double inv_n = 1.0 / static_cast<double>(vt.shape[0]);
                for (std::size_t i = 0; i < vt.size(); ++i) {
                    const double q = static_cast<double>(vq.data[i]);
                    const double qf = std::max(q, kProbFloor);
                    gt.data[i] -= gs * static_cast<Real>(inv_n * std::log(qf));
                    if (q > kProbFloor)
                        gq.data[i] -=
                            gs * static_cast<Real>(inv_n * static_cast<double>(vt.data[i]) / q);
                }
                break;
            }
            case Op::kEntropyMean: {
                const Real gs = g.data[0];
                Tensor<Real>& gp = nodes_[n.a].grad;
                const Tensor<Real>& vp = val(n.a);
                const double inv_n = 1.0 / static_cast<double>(vp.shape[0]);
                for (std::size_t i = 0; i < vp.size(); ++i) {
                    const double p = static_cast<double>(vp.data[i]);
                    const double pf = std::max(p, kProbFloor);
                    const double d = std::log(pf) + (p > kProbFloor ? 1.0 : 0.0);
                    gp.data[i] -= gs * static_cast<Real>(inv_n * d);
                }
                break;
            }
            case Op::kSumAll: {
                const Real gs = g.data[0];
                Tensor<Real>& ga = nodes_[n.a].grad;
                for (Real& v : ga.data) v += gs;
                break;
            }
            case Op::kMeanAll: {
                const Real gs = g.data[0] / static_cast<Real>(val(n.a).size());
                Tensor<Real>& ga = nodes_[n.a].grad;
                for (Real& v : ga.data) v += gs;
                break;
            }
            case Op::kDot: {
                const Real gs = g.data[0];
                Tensor<Real>& ga = nodes_[n.a].grad;
                Tensor<Real>& gb = nodes_[n.b].grad;
                const Tensor<Real>& va = val(n.a);
                const Tensor<Real>& vb = val(n.b);
                for (std::size_t i = 0; i < va.size(); ++i) {
                    ga.data[i] += gs * vb.data[i];
                    gb.data[i] += gs * va.data[i];
                }
                break;
            }
        }
    }

    void accumulate(Id target, const Tensor<Real>& g) {
        Tensor<Real>& t = nodes_[target].grad;
        for (std::size_t i = 0; i < g.size(); ++i) t.data[i] += g.data[i];
    }
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    bool saw_nan = false;

    bool ok(double tol) const { return !saw_nan && checked > 0 && max_rel_err < tol; }
};

// Central-difference check of analytic gradients. loss_fn evaluates the loss
// at a ParamSet; analytic maps parameter name to its gradient tensor. Checks
// up to samples_per_tensor random entries of each tensor (0 = all entries).
template <typename Real, typename LossFn>
GradCheckResult grad_check(ParamSet<Real>& point,
                           const std::map<std::string, Tensor<Real>>& analytic, LossFn&& loss_fn,
                           double eps, std::size_t samples_per_tensor, Rng& rng) {
    GradCheckResult res;
    for (const auto& [name, grad] : analytic) {
        Tensor<Real>& t = point.get(name);
        if (!t.same_shape(grad)) fail("grad_check: analytic gradient shape mismatch for " + name);
        std::vector<std::size_t> picks;
        if (samples_per_tensor == 0 || samples_per_tensor >= t.size()) {
            picks.resize(t.size());
            for (std::size_t i = 0; i < t.size(); ++i) picks[i] = i;
        } else {
            picks = rng.sample_without_replacement(t.size(), samples_per_tensor);
        }
        for (const std::size_t i : picks) {
            const Real saved = t.data[i];
            t.data[i] = saved + static_cast<Real>(eps);
            const double up = static_cast<double>(loss_fn(std::as_const(point)));
            t.data[i] = saved - static_cast<Real>(eps);
            const double down = static_cast<double>(loss_fn(std::as_const(point)));
            t.data[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double exact = static_cast<double>(grad.data[i]);
            if (!std::isfinite(numeric) || !std::isfinite(exact)) {
                res.saw_nan = true;
                continue;
            }
            const double denom = std::max({std::fabs(numeric), std::fabs(exact), 1e-8});
            res.max_rel_err = std::max(res.max_rel_err, std::fabs(numeric - exact) / denom);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace bee
