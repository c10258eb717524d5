// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <vector>

#include "bee/rng.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Prototype matrix for one block: D_j x M with unit-norm columns. Features
// are scored against it by cosine similarity over temperature tau.
template <typename Real>
struct Codebook {
    std::size_t block = 0;
    Tensor<Real> q;
    Real tau = Real(0.1);

    std::size_t dim() const { return q.rank() == 2 ? q.shape[0] : 0; }
    std::size_t prototypes() const { return q.rank() == 2 ? q.shape[1] : 0; }
};

template <typename Real>
void renormalize_columns(Codebook<Real>& cb) {
    l2_normalize_cols(cb.q);
}

namespace detail {

template <typename Real>
Tensor<Real> unit_rows_checked(const Tensor<Real>& h, const char* who) {
    if (h.rank() != 2) fail(std::string(who) + ": features must be rank 2");
    Tensor<Real> out = h;
    const std::size_t n = h.shape[0], d = h.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            s += static_cast<double>(h.at(i, j)) * h.at(i, j);
        const double r = std::sqrt(s);
        if (r < 1e-12) fail(std::string(who) + ": zero-norm feature vector");
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = static_cast<Real>(static_cast<double>(h.at(i, j)) / r);
    }
    return out;
}

}  // namespace detail

// Raw cosine scores over temperature: (normalized h) * Q / tau, shape N x M.
template <typename Real>
Tensor<Real> codebook_scores(const Tensor<Real>& h, const Codebook<Real>& cb) {
    if (cb.tau <= Real(0)) fail_arg("codebook_scores: tau must be positive");
    if (h.rank() != 2 || h.shape[1] != cb.dim())
        fail("codebook_scores: feature dim does not match codebook");
    const Tensor<Real> hn = detail::unit_rows_checked(h, "codebook_scores");
    Tensor<Real> scores;
    matmul(hn, cb.q, scores);
    for (Real& v : scores.data) v /= cb.tau;
    return scores;
}

// Student assignment distribution: softmax of the scores, rows sum to 1.
template <typename Real>
Tensor<Real> student_assign(const Tensor<Real>& h, const Codebook<Real>& cb) {
    Tensor<Real> p = codebook_scores(h, cb);
    softmax_rows(p);
    return p;
}

// Teacher path keeps the raw scores; balancing happens downstream.
template <typename Real>
Tensor<Real> teacher_similarities(const Tensor<Real>& h, const Codebook<Real>& cb) {
    return codebook_scores(h, cb);
}

// Ring buffer of unit-norm feature rows, oldest evicted first. Holds the
// teacher features of past batches so assignment balancing sees more than
// one batch of mass.
template <typename Real>
class FeatureQueue {
public:
    FeatureQueue() = default;

    FeatureQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
        if (capacity == 0 || dim == 0) fail_arg("FeatureQueue: capacity and dim must be positive");
    }

    void push_rows(const Tensor<Real>& rows) {
        if (rows.rank() != 2 || rows.shape[1] != dim_) fail("FeatureQueue: row dim mismatch");
        const Tensor<Real> unit = detail::unit_rows_checked(rows, "FeatureQueue");
        for (std::size_t i = 0; i < unit.shape[0]; ++i) {
            std::vector<Real> row(unit.data.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                                  unit.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_));
            rows_.push_back(std::move(row));
            if (rows_.size() > capacity_) rows_.pop_front();
        }
    }

    // Verbatim reload of a snapshot(). Rows are stored bit-for-bit, so a
    // checkpointed queue restores exactly; callers must pass unit rows.
    void restore(const Tensor<Real>& rows) {
        if (rows.rank() != 2 || rows.shape[1] != dim_) fail("FeatureQueue: row dim mismatch");
        for (std::size_t i = 0; i < rows.shape[0]; ++i) {
            std::vector<Real> row(rows.data.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                                  rows.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_));
            rows_.push_back(std::move(row));
            if (rows_.size() > capacity_) rows_.pop_front();
        }
    }

    std::size_t size() const { return rows_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return rows_.empty(); }

    // Oldest first, size x dim.
    Tensor<Real> snapshot() const {
        Tensor<Real> out = Tensor<Real>::zeros(rows_.size(), dim_);
        std::size_t i = 0;
        for (const auto& row : rows_) {
            for (std::size_t j = 0; j < dim_; ++j) out.at(i, j) = row[j];
            ++i;
        }
        return out;
    }

    void clear() { rows_.clear(); }

private:
    std::size_t capacity_ = 0;
    std::size_t dim_ = 0;
    std::deque<std::vector<Real>> rows_;
};

// Codebook columns start as features sampled without replacement from the
// provided pool. duplicate_count, when given, reports how many sampled
// columns collide exactly with an earlier one.
template <typename Real>
Codebook<Real> init_codebook(const Tensor<Real>& features, std::size_t block, std::size_t m,
                             Real tau, Rng& rng, std::size_t* duplicate_count = nullptr) {
    if (m < 2) fail_arg("init_codebook: need at least 2 prototypes");
    if (features.rank() != 2 || features.shape[0] < m)
        fail("init_codebook: fewer features than prototypes");
    const Tensor<Real> unit = detail::unit_rows_checked(features, "init_codebook");
    const std::size_t d = unit.shape[1];
    const auto picks = rng.sample_without_replacement(unit.shape[0], m);
    Codebook<Real> cb;
    cb.block = block;
    cb.tau = tau;
    cb.q = Tensor<Real>::zeros(d, m);
    for (std::size_t c = 0; c < m; ++c)
        for (std::size_t j = 0; j < d; ++j) cb.q.at(j, c) = unit.at(picks[c], j);
    if (duplicate_count) {
        std::size_t dup = 0;
        for (std::size_t c = 1; c < m; ++c)
            for (std::size_t e = 0; e < c; ++e) {
                bool same = true;
                for (std::size_t j = 0; j < d && same; ++j)
                    if (cb.q.at(j, c) != cb.q.at(j, e)) same = false;
                if (same) {
                    ++dup;
                    break;
                }
            }
        *duplicate_count = dup;
    }
    return cb;
}

// Teacher codebook tracks the student codebook by EMA during warm-up; the
// column renormalization keeps the unit-norm invariant.
template <typename Real>
void ema_codebook(Codebook<Real>& teacher, const Codebook<Real>& student, Real m) {
    if (!teacher.q.same_shape(student.q)) fail("ema_codebook: shape mismatch");
    for (std::size_t i = 0; i < teacher.q.size(); ++i)
        teacher.q.data[i] = m * teacher.q.data[i] + (Real(1) - m) * student.q.data[i];
    renormalize_columns(teacher);
}

}  // namespace bee
