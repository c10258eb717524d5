// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Named parameter collection. std::map keeps iteration order stable across
// runs, which every EMA / merge / serialization path relies on.
template <typename Real>
struct ParamSet {
    std::map<std::string, Tensor<Real>> items;

    bool contains(const std::string& name) const { return items.count(name) != 0; }

    Tensor<Real>& get(const std::string& name) {
        auto it = items.find(name);
        if (it == items.end()) fail("ParamSet: no parameter named " + name);
        return it->second;
    }

    const Tensor<Real>& get(const std::string& name) const {
        auto it = items.find(name);
        if (it == items.end()) fail("ParamSet: no parameter named " + name);
        return it->second;
    }

    void put(const std::string& name, Tensor<Real> t) { items[name] = std::move(t); }

    std::size_t size() const { return items.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(items.size());
        for (const auto& [k, v] : items) out.push_back(k);
        return out;
    }

    bool same_layout(const ParamSet& o) const {
        if (items.size() != o.items.size()) return false;
        auto a = items.begin();
        auto b = o.items.begin();
        for (; a != items.end(); ++a, ++b) {
            if (a->first != b->first) return false;
            if (a->second.shape != b->second.shape) return false;
        }
        return true;
    }
};

// dst <- m * dst + (1 - m) * src, elementwise over every tensor. The two
// products keep m = 0 and m = 1 exact.
template <typename Real>
void ema_update(ParamSet<Real>& dst, const ParamSet<Real>& src, Real m) {
    if (!(m >= Real(0) && m <= Real(1))) fail_arg("ema_update: momentum outside [0,1]");
    if (!dst.same_layout(src)) fail("ema_update: layout mismatch");
    auto d = dst.items.begin();
    auto s = src.items.begin();
    for (; d != dst.items.end(); ++d, ++s) {
        Real* dp = d->second.data.data();
        const Real* sp = s->second.data.data();
        const std::size_t n = d->second.size();
        for (std::size_t i = 0; i < n; ++i) dp[i] = m * dp[i] + (Real(1) - m) * sp[i];
    }
}

// Convex combination sum_k w[k] * parts[k] for weights summing to 1,
// computed as parts[0] + sum_k w[k] * (parts[k] - parts[0]). The delta form
// makes a merge of identical members return them bit-exactly.
template <typename Real>
void weighted_merge(ParamSet<Real>& dst, const std::vector<const ParamSet<Real>*>& parts,
                    const std::vector<Real>& w) {
    if (parts.size() != w.size() || parts.empty()) fail_arg("weighted_merge: arity mismatch");
    for (const auto* p : parts)
        if (!dst.same_layout(*p)) fail("weighted_merge: layout mismatch");
    using Iter = typename std::map<std::string, Tensor<Real>>::const_iterator;
    std::vector<Iter> src;
    src.reserve(parts.size());
    for (const auto* p : parts) src.push_back(p->items.begin());
    std::vector<Real> base;
    for (auto d = dst.items.begin(); d != dst.items.end(); ++d) {
        Real* dp = d->second.data.data();
        const std::size_t n = d->second.size();
        base.assign(src[0]->second.data.begin(), src[0]->second.data.end());
        for (std::size_t i = 0; i < n; ++i) dp[i] = base[i];
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const Real* sp = src[k]->second.data.data();
            const Real wk = w[k];
            for (std::size_t i = 0; i < n; ++i) dp[i] += wk * (sp[i] - base[i]);
            ++src[k];
        }
    }
}

// Content hash over names, shapes and raw payload bytes; used by tests to
// detect unintended mutation.
template <typename Real>
std::uint64_t param_hash(const ParamSet<Real>& ps) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : ps.items) {
        h = fnv1a64(name, h);
        for (const std::size_t d : t.shape) h = fnv1a64(&d, sizeof(d), h);
        h = fnv1a64(t.data.data(), t.data.size() * sizeof(Real), h);
    }
    return h;
}

}  // namespace bee
