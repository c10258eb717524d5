// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "bee/autodiff.hpp"
#include "bee/codebook.hpp"
#include "bee/sinkhorn.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Codebooks and feature queues for every block of a network pair. Student
// and teacher codebooks are indexed by block - 1.
template <typename Real>
struct CodebookBank {
    std::vector<Codebook<Real>> student;
    std::vector<Codebook<Real>> teacher;
    std::vector<FeatureQueue<Real>> queues;
    std::size_t sinkhorn_iters = 3;

    std::size_t blocks() const { return student.size(); }
};

// Cross-entropy of student assignments against balanced teacher targets,
// averaged over the batch. Teacher input is a constant.
template <typename Real>
Real mcr_block_loss(const Tensor<Real>& p_student, const Tensor<Real>& p_teacher) {
    if (!p_student.same_shape(p_teacher) || p_student.rank() != 2)
        fail("mcr_block_loss: shape mismatch");
    const std::size_t n = p_student.shape[0];
    double acc = 0.0;
    for (std::size_t i = 0; i < p_student.size(); ++i) {
        const double q = std::max(static_cast<double>(p_student.data[i]), kProbFloor);
        acc -= static_cast<double>(p_teacher.data[i]) * std::log(q);
    }
    return static_cast<Real>(acc / static_cast<double>(n));
}

// Balanced teacher targets for one block. Queue features join the batch rows
// so the balancing sees mass beyond the current batch; only batch rows come
// back. Does not touch the queue.
template <typename Real>
AssignmentMatrix<Real> teacher_targets(const Tensor<Real>& h_teacher, const Codebook<Real>& cb,
                                       const FeatureQueue<Real>& queue, std::size_t iters) {
    const std::size_t n = h_teacher.shape[0];
    Tensor<Real> scores = teacher_similarities(h_teacher, cb);
    if (!queue.empty()) {
        const Tensor<Real> past = queue.snapshot();
        Tensor<Real> past_scores = teacher_similarities(past, cb);
        Tensor<Real> all;
        all.shape = {n + past_scores.shape[0], scores.shape[1]};
        all.data = scores.data;
        all.data.insert(all.data.end(), past_scores.data.begin(), past_scores.data.end());
        scores = std::move(all);
    }
    return first_rows(sinkhorn_normalize(scores, iters), n);
}

template <typename Real>
struct McrGraphLoss {
    typename Graph<Real>::Id loss_id = 0;
    // Student codebook leaves when codebooks are trainable, block -> leaf.
    std::map<std::size_t, typename Graph<Real>::Id> codebook_leaves;
    double value = 0.0;
};

// Consistency loss summed over active blocks, built into g against the
// student feature nodes. Teacher features are evaluated outside the graph.
// Pushes the teacher features of the active blocks into their queues after
// the targets are formed.
template <typename Real>
McrGraphLoss<Real> mcr_loss_graph(Graph<Real>& g,
                                  const std::vector<typename Graph<Real>::Id>& student_features,
                                  const std::vector<Tensor<Real>>& teacher_features,
                                  CodebookBank<Real>& bank,
                                  const std::vector<std::size_t>& active_blocks,
                                  bool codebooks_trainable) {
    McrGraphLoss<Real> out;
    out.loss_id = g.constant_scalar(Real(0));
    for (const std::size_t j : active_blocks) {
        if (j < 1 || j > bank.blocks()) fail_arg("mcr_loss_graph: active block out of range");
        Codebook<Real>& cb_s = bank.student[j - 1];
        const Codebook<Real>& cb_t = bank.teacher[j - 1];
        FeatureQueue<Real>& queue = bank.queues[j - 1];
        const Tensor<Real>& h_t = teacher_features[j - 1];

        const AssignmentMatrix<Real> targets =
            teacher_targets(h_t, cb_t, queue, bank.sinkhorn_iters);

        auto q_leaf = codebooks_trainable ? g.param(cb_s.q) : g.constant(cb_s.q);
        if (codebooks_trainable) out.codebook_leaves.emplace(j, q_leaf);
        auto hn = g.l2norm_rows(student_features[j - 1]);
        auto scores = g.scale(g.matmul(hn, q_leaf), Real(1) / cb_s.tau);
        auto p_s = g.softmax_rows(scores);
        auto block = g.cross_entropy_mean(g.constant(targets), p_s);
        out.loss_id = g.add(out.loss_id, block);

        queue.push_rows(h_t);
    }
    out.value = static_cast<double>(g.scalar_value(out.loss_id));
    return out;
}

// Loss value without gradients, same queue side effect. Used by evaluation
// paths and tests.
template <typename Real>
Real mcr_loss_value(const std::vector<Tensor<Real>>& student_features,
                    const std::vector<Tensor<Real>>& teacher_features, CodebookBank<Real>& bank,
                    const std::vector<std::size_t>& active_blocks) {
    Real total = Real(0);
    for (const std::size_t j : active_blocks) {
        if (j < 1 || j > bank.blocks()) fail_arg("mcr_loss_value: active block out of range");
        const AssignmentMatrix<Real> targets = teacher_targets(
            teacher_features[j - 1], bank.teacher[j - 1], bank.queues[j - 1], bank.sinkhorn_iters);
        const Tensor<Real> p_s = student_assign(student_features[j - 1], bank.student[j - 1]);
        total += mcr_block_loss(p_s, targets);
        bank.queues[j - 1].push_rows(teacher_features[j - 1]);
    }
    return total;
}

}  // namespace bee
