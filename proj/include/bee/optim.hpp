// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "bee/paramset.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Adam with bias correction. One state instance serves one training phase;
// callers must pass the same parameter key set on every step because the
// bias correction uses a single shared step counter.
template <typename Real>
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::map<std::string, Tensor<Real>> m;
    std::map<std::string, Tensor<Real>> v;

    // Post-merge moments are stale for the merged parameters; drop them.
    void reset() {
        step = 0;
        m.clear();
        v.clear();
    }
};

template <typename Real>
struct AdamItem {
    std::string name;
    Tensor<Real>* param;
    const Tensor<Real>* grad;
};

template <typename Real>
void adam_step(const std::vector<AdamItem<Real>>& items, AdamState<Real>& st) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (const AdamItem<Real>& it : items) {
        Tensor<Real>& p = *it.param;
        const Tensor<Real>& g = *it.grad;
        if (!p.same_shape(g)) fail("adam_step: gradient shape mismatch for " + it.name);
        auto mit = st.m.find(it.name);
        if (mit == st.m.end()) {
            Tensor<Real> z = g;
            std::fill(z.data.begin(), z.data.end(), Real(0));
            mit = st.m.emplace(it.name, z).first;
            st.v.emplace(it.name, std::move(z));
        }
        Tensor<Real>& m = mit->second;
        Tensor<Real>& v = st.v.at(it.name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g.data[i]);
            const double mi = st.beta1 * static_cast<double>(m.data[i]) + (1.0 - st.beta1) * gi;
            const double vi =
                st.beta2 * static_cast<double>(v.data[i]) + (1.0 - st.beta2) * gi * gi;
            m.data[i] = static_cast<Real>(mi);
            v.data[i] = static_cast<Real>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p.data[i] -= static_cast<Real>(st.lr * mhat / (std::sqrt(vhat) + st.eps));
        }
    }
}

template <typename Real>
void adam_step(ParamSet<Real>& params, const std::map<std::string, Tensor<Real>>& grads,
               AdamState<Real>& st) {
    std::vector<AdamItem<Real>> items;
    items.reserve(grads.size());
    for (const auto& [name, g] : grads)
        items.push_back(AdamItem<Real>{name, &params.get(name), &g});
    adam_step(items, st);
}

}  // namespace bee
