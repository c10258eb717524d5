// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bee/util.hpp"

namespace bee {

// Dense row-major tensor. Rank 1 or 2 covers everything this library needs;
// data and shape are public on purpose, kernels below treat it as a plain
// buffer.
template <typename Real>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<Real> data;

    Tensor() = default;

    static Tensor zeros(std::size_t n) {
        Tensor t;
        t.shape = {n};
        t.data.assign(n, Real(0));
        return t;
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        Tensor t;
        t.shape = {rows, cols};
        t.data.assign(rows * cols, Real(0));
        return t;
    }

    static Tensor full(std::size_t rows, std::size_t cols, Real v) {
        Tensor t = zeros(rows, cols);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    std::size_t rank() const { return shape.size(); }
    std::size_t size() const { return data.size(); }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

    Real& at(std::size_t i) { return data[i]; }
    Real at(std::size_t i) const { return data[i]; }
    Real& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    Real at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const Real v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

namespace detail {

inline void check(bool ok, const char* what) {
    if (!ok) fail(std::string("tensor: ") + what);
}

}  // namespace detail

// C = A(N,K) * B(K,M). ikj loop order, C must not alias A or B.
template <typename Real>
void matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c) {
    detail::check(a.rank() == 2 && b.rank() == 2, "matmul: rank 2 required");
    detail::check(a.shape[1] == b.shape[0], "matmul: inner dims differ");
    const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
    c.shape = {n, m};
    c.data.assign(n * m, Real(0));
    for (std::size_t i = 0; i < n; ++i) {
        const Real* arow = a.data.data() + i * k;
        Real* crow = c.data.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            const Real* brow = b.data.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C = A^T(K,N)->(N,K) ... i.e. C(N,M) = A(K,N)^T * B(K,M).
template <typename Real>
void matmul_at_b(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c) {
    detail::check(a.rank() == 2 && b.rank() == 2, "matmul_at_b: rank 2 required");
    detail::check(a.shape[0] == b.shape[0], "matmul_at_b: outer dims differ");
    const std::size_t k = a.shape[0], n = a.shape[1], m = b.shape[1];
    c.shape = {n, m};
    c.data.assign(n * m, Real(0));
    for (std::size_t p = 0; p < k; ++p) {
        const Real* arow = a.data.data() + p * n;
        const Real* brow = b.data.data() + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const Real av = arow[i];
            Real* crow = c.data.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(N,M) = A(N,K) * B(M,K)^T.
template <typename Real>
void matmul_a_bt(const Tensor<Real>& a, const Tensor<Real>& b, Tensor<Real>& c) {
    detail::check(a.rank() == 2 && b.rank() == 2, "matmul_a_bt: rank 2 required");
    detail::check(a.shape[1] == b.shape[1], "matmul_a_bt: inner dims differ");
    const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[0];
    c.shape = {n, m};
    c.data.assign(n * m, Real(0));
    for (std::size_t i = 0; i < n; ++i) {
        const Real* arow = a.data.data() + i * k;
        Real* crow = c.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const Real* brow = b.data.data() + j * k;
            Real acc = Real(0);
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

// Adds bias (length M) to every row of X (N,M) in place.
template <typename Real>
void add_rowwise(Tensor<Real>& x, const Tensor<Real>& bias) {
    detail::check(x.rank() == 2 && bias.rank() == 1, "add_rowwise: shapes");
    detail::check(x.shape[1] == bias.shape[0], "add_rowwise: width mismatch");
    const std::size_t n = x.shape[0], m = x.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        Real* row = x.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) row[j] += bias.data[j];
    }
}

// Row-wise softmax with max subtraction.
template <typename Real>
void softmax_rows(Tensor<Real>& x) {
    detail::check(x.rank() == 2, "softmax_rows: rank 2 required");
    const std::size_t n = x.shape[0], m = x.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        Real* row = x.data.data() + i * m;
        Real mx = row[0];
        for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        Real sum = Real(0);
        for (std::size_t j = 0; j < m; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < m; ++j) row[j] /= sum;
    }
}

// Normalizes each row to unit L2 norm; rows with norm below eps are left as
// written by the caller contract (norm floored at eps).
template <typename Real>
void l2_normalize_rows(Tensor<Real>& x, Real eps = Real(1e-12)) {
    detail::check(x.rank() == 2, "l2_normalize_rows: rank 2 required");
    const std::size_t n = x.shape[0], m = x.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
        Real* row = x.data.data() + i * m;
        Real s = Real(0);
        for (std::size_t j = 0; j < m; ++j) s += row[j] * row[j];
        const Real r = std::max(std::sqrt(s), eps);
        for (std::size_t j = 0; j < m; ++j) row[j] /= r;
    }
}

// Normalizes each column to unit L2 norm.
template <typename Real>
void l2_normalize_cols(Tensor<Real>& x, Real eps = Real(1e-12)) {
    detail::check(x.rank() == 2, "l2_normalize_cols: rank 2 required");
    const std::size_t n = x.shape[0], m = x.shape[1];
    for (std::size_t j = 0; j < m; ++j) {
        Real s = Real(0);
        for (std::size_t i = 0; i < n; ++i) s += x.at(i, j) * x.at(i, j);
        const Real r = std::max(std::sqrt(s), eps);
        for (std::size_t i = 0; i < n; ++i) x.at(i, j) /= r;
    }
}

template <typename Real>
std::size_t argmax_row(const Tensor<Real>& x, std::size_t row) {
    const std::size_t m = x.shape[1];
    const Real* p = x.data.data() + row * m;
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j)
        if (p[j] > p[best]) best = j;
    return best;
}

}  // namespace bee
