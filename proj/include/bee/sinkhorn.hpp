// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Assignment distributions, rows = samples, columns = prototypes. Rows of a
// balanced matrix sum to 1.
template <typename Real>
using AssignmentMatrix = Tensor<Real>;

// L1 distance of the column mass fractions from the uniform 1/M target.
template <typename Real>
double prototype_marginal_violation(const Tensor<Real>& p) {
    const std::size_t n = p.shape[0], m = p.shape[1];
    double total = 0.0;
    for (const Real v : p.data) total += static_cast<double>(v);
    double viol = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
        double col = 0.0;
        for (std::size_t i = 0; i < n; ++i) col += static_cast<double>(p.at(i, c));
        viol += std::fabs(col / total - 1.0 / static_cast<double>(m));
    }
    return viol;
}

// Balances exp(scores) toward uniform prototype marginals by alternating
// column and row normalization, then rescales so each row is a distribution.
// Rows beyond the current batch (queue features) shape the marginals; the
// caller slices the batch rows for the loss. trace, when given, receives the
// prototype-marginal violation after every full iteration.
template <typename Real>
AssignmentMatrix<Real> sinkhorn_normalize(const Tensor<Real>& scores, std::size_t iters,
                                          std::vector<double>* trace = nullptr) {
    if (scores.rank() != 2) fail("sinkhorn_normalize: scores must be rank 2");
    if (iters < 1) fail_arg("sinkhorn_normalize: iters must be >= 1");
    if (!scores.all_finite()) fail("sinkhorn_normalize: non-finite scores");
    const std::size_t n = scores.shape[0], m = scores.shape[1];
    constexpr double kTiny = 1e-300;

    // Row max subtraction keeps exp in range; it cancels in the row
    // normalizations and only rescales columns, which the column steps undo.
    Tensor<Real> p = scores;
    for (std::size_t i = 0; i < n; ++i) {
        Real mx = p.at(i, 0);
        for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, p.at(i, c));
        for (std::size_t c = 0; c < m; ++c)
            p.at(i, c) = static_cast<Real>(std::exp(static_cast<double>(p.at(i, c) - mx)));
    }
    double total = 0.0;
    for (const Real v : p.data) total += static_cast<double>(v);
    for (Real& v : p.data) v = static_cast<Real>(static_cast<double>(v) / std::max(total, kTiny));

    if (trace) trace->clear();
    for (std::size_t it = 0; it < iters; ++it) {
        // Prototype step: every column carries mass 1/M.
        for (std::size_t c = 0; c < m; ++c) {
            double col = 0.0;
            for (std::size_t i = 0; i < n; ++i) col += static_cast<double>(p.at(i, c));
            const double scale = 1.0 / (std::max(col, kTiny) * static_cast<double>(m));
            for (std::size_t i = 0; i < n; ++i)
                p.at(i, c) = static_cast<Real>(static_cast<double>(p.at(i, c)) * scale);
        }
        // Sample step: every row carries mass 1/N.
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t c = 0; c < m; ++c) row += static_cast<double>(p.at(i, c));
            const double scale = 1.0 / (std::max(row, kTiny) * static_cast<double>(n));
            for (std::size_t c = 0; c < m; ++c)
                p.at(i, c) = static_cast<Real>(static_cast<double>(p.at(i, c)) * scale);
        }
        if (trace) trace->push_back(prototype_marginal_violation(p));
    }
    // Rows become distributions.
    for (Real& v : p.data) v = static_cast<Real>(static_cast<double>(v) * static_cast<double>(n));
    return p;
}

template <typename Real>
Tensor<Real> first_rows(const Tensor<Real>& t, std::size_t n) {
    if (t.rank() != 2 || n > t.shape[0]) fail("first_rows: bad slice");
    Tensor<Real> out;
    out.shape = {n, t.shape[1]};
    out.data.assign(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(n * t.shape[1]));
    return out;
}

}  // namespace bee
