// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bee/autodiff.hpp"
#include "bee/paramset.hpp"
#include "bee/rng.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Feed-forward classifier split into L affine+gelu blocks plus an affine
// head. Blocks are indexed 1..L; features are tapped after every block.
// shallow lists the block indices whose parameters stay trainable at test
// time, everything else is frozen then.
template <typename Real>
struct Network {
    std::size_t input_dim = 0;
    std::vector<std::size_t> widths;
    std::size_t classes = 0;
    std::vector<std::size_t> shallow;
    ParamSet<Real> params;

    std::size_t depth() const { return widths.size(); }

    std::size_t block_input_dim(std::size_t j) const {
        return j == 1 ? input_dim : widths[j - 2];
    }

    bool is_shallow(std::size_t j) const {
        for (const std::size_t s : shallow)
            if (s == j) return true;
        return false;
    }
};

inline std::string block_w_name(std::size_t j) { return "block" + std::to_string(j) + ".w"; }
inline std::string block_b_name(std::size_t j) { return "block" + std::to_string(j) + ".b"; }

template <typename Real>
Network<Real> make_network(std::size_t input_dim, std::vector<std::size_t> widths,
                           std::size_t classes, std::vector<std::size_t> shallow) {
    if (input_dim == 0 || classes < 2 || widths.empty()) fail_arg("make_network: bad dimensions");
    for (const std::size_t j : shallow)
        if (j < 1 || j > widths.size()) fail_arg("make_network: shallow index out of range");
    Network<Real> net;
    net.input_dim = input_dim;
    net.widths = std::move(widths);
    net.classes = classes;
    net.shallow = std::move(shallow);
    for (std::size_t j = 1; j <= net.depth(); ++j) {
        net.params.put(block_w_name(j),
                       Tensor<Real>::zeros(net.block_input_dim(j), net.widths[j - 1]));
        net.params.put(block_b_name(j), Tensor<Real>::zeros(net.widths[j - 1]));
    }
    net.params.put("head.w", Tensor<Real>::zeros(net.widths.back(), net.classes));
    net.params.put("head.b", Tensor<Real>::zeros(net.classes));
    return net;
}

// Fan-in scaled uniform init, biases zero. Deterministic per rng stream.
template <typename Real>
void init_params(Network<Real>& net, Rng& rng) {
    for (auto& [name, t] : net.params.items) {
        if (t.rank() == 1) {
            for (Real& v : t.data) v = Real(0);
        } else {
            const double limit = std::sqrt(3.0 / static_cast<double>(t.shape[0]));
            for (Real& v : t.data) v = static_cast<Real>(rng.uniform(-limit, limit));
        }
    }
}

// Trainable-parameter names for the adaptation phase: shallow blocks only.
template <typename Real>
std::set<std::string> shallow_param_names(const Network<Real>& net) {
    std::set<std::string> out;
    for (const std::size_t j : net.shallow) {
        out.insert(block_w_name(j));
        out.insert(block_b_name(j));
    }
    return out;
}

template <typename Real>
std::set<std::string> all_param_names(const Network<Real>& net) {
    std::set<std::string> out;
    for (const auto& [name, t] : net.params.items) out.insert(name);
    return out;
}

template <typename Real>
struct ForwardPass {
    std::vector<Tensor<Real>> features;  // one per block, N x D_j
    Tensor<Real> logits;                 // N x C
};

// Plain forward with intermediate-feature capture; params may come from a
// different snapshot than net.params (anchors, teacher).
template <typename Real>
ForwardPass<Real> forward(const Network<Real>& net, const ParamSet<Real>& params,
                          const Tensor<Real>& batch) {
    if (batch.rank() != 2 || batch.shape[1] != net.input_dim)
        fail("forward: batch shape " + std::to_string(batch.rows()) + "x" +
             std::to_string(batch.cols()) + " does not match input dim " +
             std::to_string(net.input_dim));
    if (batch.rows() == 0) fail("forward: empty batch");
    ForwardPass<Real> out;
    Tensor<Real> h = batch;
    for (std::size_t j = 1; j <= net.depth(); ++j) {
        Tensor<Real> z;
        matmul(h, params.get(block_w_name(j)), z);
        add_rowwise(z, params.get(block_b_name(j)));
        for (Real& v : z.data) {
            const double x = static_cast<double>(v);
            v = static_cast<Real>(0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))));
        }
        out.features.push_back(z);
        h = std::move(z);
    }
    matmul(h, params.get("head.w"), out.logits);
    add_rowwise(out.logits, params.get("head.b"));
    return out;
}

template <typename Real>
ForwardPass<Real> forward(const Network<Real>& net, const Tensor<Real>& batch) {
    return forward(net, net.params, batch);
}

template <typename Real>
struct GraphPass {
    std::vector<typename Graph<Real>::Id> features;
    typename Graph<Real>::Id logits = 0;
    // Graph leaves of the trainable parameters; gradients are read from these.
    std::map<std::string, typename Graph<Real>::Id> leaves;
};

// Differentiable forward. Parameters named in trainable become graph leaves
// with tracked gradients; the rest enter as constants.
template <typename Real>
GraphPass<Real> graph_forward(Graph<Real>& g, const Network<Real>& net,
                              const ParamSet<Real>& params, const Tensor<Real>& batch,
                              const std::set<std::string>& trainable) {
    if (batch.rank() != 2 || batch.shape[1] != net.input_dim)
        fail("graph_forward: batch does not match input dim");
    GraphPass<Real> out;
    auto leaf = [&](const std::string& name) {
        const Tensor<Real>& t = params.get(name);
        if (trainable.count(name)) {
            const auto id = g.param(t);
            out.leaves.emplace(name, id);
            return id;
        }
        return g.constant(t);
    };
    auto h = g.constant(batch);
    for (std::size_t j = 1; j <= net.depth(); ++j) {
        auto z = g.add_rowwise(g.matmul(h, leaf(block_w_name(j))), leaf(block_b_name(j)));
        h = g.gelu(z);
        out.features.push_back(h);
    }
    out.logits = g.add_rowwise(g.matmul(h, leaf("head.w")), leaf("head.b"));
    return out;
}

// Softmax class probabilities of a snapshot on a batch.
template <typename Real>
Tensor<Real> predict_probs(const Network<Real>& net, const ParamSet<Real>& params,
                           const Tensor<Real>& batch) {
    Tensor<Real> probs = forward(net, params, batch).logits;
    softmax_rows(probs);
    return probs;
}

// Percentage of rows whose argmax disagrees with the label.
template <typename Real>
double error_pct(const Tensor<Real>& probs, const std::vector<std::uint32_t>& labels) {
    if (probs.rows() != labels.size()) fail("error_pct: label count mismatch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (argmax_row(probs, i) != labels[i]) ++wrong;
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(labels.size());
}

}  // namespace bee
