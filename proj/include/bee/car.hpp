// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <vector>

#include "bee/net.hpp"
#include "bee/paramset.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Mean over rows of the symmetrized KL divergence between two distribution
// matrices. Zero iff equal, symmetric in its arguments.
template <typename Real>
double sym_kl(const Tensor<Real>& p, const Tensor<Real>& q) {
    if (!p.same_shape(q) || p.rank() != 2) fail("sym_kl: shape mismatch");
    const std::size_t n = p.shape[0], c = p.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        double sp = 0.0, sq = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            sp += static_cast<double>(p.at(i, j));
            sq += static_cast<double>(q.at(i, j));
        }
        if (std::fabs(sp - 1.0) > 1e-6 || std::fabs(sq - 1.0) > 1e-6)
            fail("sym_kl: rows must sum to 1");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::max(static_cast<double>(p.data[i]), kProbFloor);
        const double qi = std::max(static_cast<double>(q.data[i]), kProbFloor);
        const double lr = std::log(pi / qi);
        acc += 0.5 * (pi * lr - qi * lr);
    }
    return acc / static_cast<double>(n);
}

// Divergence of two parameter snapshots: symmetric KL of their softmaxed
// predictions on the batch.
template <typename Real>
double divergence(const Network<Real>& net, const ParamSet<Real>& a, const ParamSet<Real>& b,
                  const Tensor<Real>& batch) {
    return sym_kl(predict_probs(net, a, batch), predict_probs(net, b, batch));
}

template <typename Real>
struct Anchor {
    ParamSet<Real> params;
    std::uint64_t step = 0;
};

// Bounded FIFO of deep-copied student snapshots, one every period batches.
template <typename Real>
class AnchorPool {
public:
    AnchorPool() = default;

    AnchorPool(std::size_t capacity, std::uint64_t period) : capacity_(capacity), period_(period) {
        if (capacity == 0 || period == 0) fail_arg("AnchorPool: capacity and period positive");
    }

    // Snapshots at step % period == 0; oldest evicted beyond capacity.
    bool maybe_store(const ParamSet<Real>& theta, std::uint64_t step) {
        if (step % period_ != 0) return false;
        entries_.push_back(Anchor<Real>{theta, step});
        if (entries_.size() > capacity_) entries_.pop_front();
        return true;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t period() const { return period_; }
    const Anchor<Real>& at(std::size_t i) const { return entries_.at(i); }

private:
    std::size_t capacity_ = 0;
    std::uint64_t period_ = 0;
    std::deque<Anchor<Real>> entries_;
};

// Loss-spike detector: the incoming loss is smoothed by EMA, scored against
// the sliding window of past smoothed values, and the window is cleared on
// every trigger so one shift fires once.
class ShiftDetector {
public:
    ShiftDetector() = default;

    ShiftDetector(std::size_t window, double threshold, double momentum, std::size_t min_fill)
        : window_cap_(window), eta_(threshold), momentum_(momentum), min_fill_(min_fill) {
        if (window == 0) fail_arg("ShiftDetector: window must be positive");
        if (min_fill < 2) fail_arg("ShiftDetector: min_fill must be >= 2");
        if (momentum < 0.0 || momentum >= 1.0) fail_arg("ShiftDetector: momentum in [0,1)");
    }

    // Returns true when the smoothed loss sits more than eta sample standard
    // deviations above the window mean. The smoothed value is pushed after
    // the decision either way.
    bool observe(double loss) {
        if (!std::isfinite(loss)) fail("ShiftDetector: non-finite loss");
        smoothed_ = seen_ ? momentum_ * smoothed_ + (1.0 - momentum_) * loss : loss;
        seen_ = true;
        bool fired = false;
        if (window_.size() >= min_fill_) {
            const double mu =
                std::accumulate(window_.begin(), window_.end(), 0.0) /
                static_cast<double>(window_.size());
            double ss = 0.0;
            for (const double v : window_) ss += (v - mu) * (v - mu);
            const double sigma = std::sqrt(ss / static_cast<double>(window_.size() - 1));
            last_z_ = (smoothed_ - mu) / std::max(sigma, kSigmaFloor);
            if (last_z_ > eta_) {
                fired = true;
                window_.clear();
            }
        }
        window_.push_back(smoothed_);
        if (window_.size() > window_cap_) window_.pop_front();
        return fired;
    }

    double smoothed() const { return smoothed_; }
    double last_z() const { return last_z_; }
    std::size_t fill() const { return window_.size(); }

private:
    static constexpr double kSigmaFloor = 1e-8;

    std::size_t window_cap_ = 100;
    double eta_ = 1.5;
    double momentum_ = 0.9;
    std::size_t min_fill_ = 10;
    double smoothed_ = 0.0;
    double last_z_ = 0.0;
    bool seen_ = false;
    std::deque<double> window_;
};

// Student plus the anchors picked for a merge, with the pairwise divergence
// matrix of everyone on the triggering batch. Member 0 is the student.
template <typename Real>
struct CandidateSet {
    std::vector<ParamSet<Real>> models;
    std::vector<std::uint64_t> steps;
    std::vector<double> div;  // flattened size x size, symmetric, zero diagonal

    std::size_t size() const { return models.size(); }
    double d(std::size_t i, std::size_t j) const { return div[i * models.size() + j]; }
};

// Picks the k anchors whose predictions diverge most from the student on the
// batch; ties prefer the newer anchor. An underfull pool contributes all its
// anchors.
template <typename Real>
CandidateSet<Real> select_candidates(const Network<Real>& net, const ParamSet<Real>& student,
                                     std::uint64_t student_step, const AnchorPool<Real>& pool,
                                     const Tensor<Real>& batch, std::size_t k) {
    if (k < 1) fail_arg("select_candidates: k must be >= 1");
    const Tensor<Real> p_student = predict_probs(net, student, batch);

    struct Scored {
        double d;
        std::uint64_t step;
        std::size_t idx;
        Tensor<Real> probs;
    };
    std::vector<Scored> scored;
    scored.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        Tensor<Real> probs = predict_probs(net, pool.at(i).params, batch);
        scored.push_back(Scored{sym_kl(p_student, probs), pool.at(i).step, i, std::move(probs)});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.d != b.d) return a.d > b.d;
        return a.step > b.step;
    });
    const std::size_t take = std::min(k, scored.size());

    CandidateSet<Real> out;
    out.models.push_back(student);
    out.steps.push_back(student_step);
    std::vector<const Tensor<Real>*> probs{&p_student};
    for (std::size_t i = 0; i < take; ++i) {
        out.models.push_back(pool.at(scored[i].idx).params);
        out.steps.push_back(scored[i].step);
        probs.push_back(&scored[i].probs);
    }
    const std::size_t s = out.models.size();
    out.div.assign(s * s, 0.0);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = i + 1; j < s; ++j) {
            const double d = sym_kl(*probs[i], *probs[j]);
            out.div[i * s + j] = d;
            out.div[j * s + i] = d;
        }
    return out;
}

// Softmax over each member's total divergence to everyone else. Strictly
// positive, sums to 1.
template <typename Real>
std::vector<Real> ensemble_weights(const CandidateSet<Real>& s) {
    const std::size_t n = s.size();
    if (n == 0) fail_arg("ensemble_weights: empty candidate set");
    std::vector<double> totals(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) totals[i] += s.d(i, j);
    const double mx = *std::max_element(totals.begin(), totals.end());
    double z = 0.0;
    std::vector<Real> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        totals[i] = std::exp(totals[i] - mx);
        z += totals[i];
    }
    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<Real>(totals[i] / z);
    return w;
}

// Convex combination of the candidate models. The caller installs the result
// as the new student; nothing else is touched.
template <typename Real>
ParamSet<Real> merge(const CandidateSet<Real>& s, const std::vector<Real>& w) {
    if (s.size() != w.size()) fail_arg("merge: weight count mismatch");
    Real total = Real(0);
    for (const Real v : w) total += v;
    if (std::fabs(static_cast<double>(total) - 1.0) > 1e-9) fail("merge: weights must sum to 1");
    ParamSet<Real> out = s.models[0];
    std::vector<const ParamSet<Real>*> parts;
    parts.reserve(s.size());
    for (const auto& m : s.models) parts.push_back(&m);
    weighted_merge(out, parts, w);
    return out;
}

}  // namespace bee
