// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bee/autodiff.hpp"
#include "bee/car.hpp"
#include "bee/checkpoint.hpp"
#include "bee/codebook.hpp"
#include "bee/mcr.hpp"
#include "bee/net.hpp"
#include "bee/optim.hpp"
#include "bee/rng.hpp"
#include "bee/stream.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

enum class CarMode { kTrigger, kFixedInterval };
enum class CarAction { kWeighted, kAverage, kSourceReset };

// Every knob of the adaptation loop. validate() runs before any use and
// collects all problems at once.
struct BeeConfig {
    double lr = 1e-3;

    std::size_t batch_size = 64;           // stream batch N
    std::size_t inner_steps = 2;           // R
    std::size_t inner_batch = 64;          // B
    std::size_t queue_capacity_batches = 10;

    std::size_t prototypes = 64;           // M
    std::size_t feature_queue_cap = 512;
    double tau_s = 0.1;
    double tau_t = 0.05;
    std::size_t sinkhorn_iters = 3;
    std::vector<std::size_t> active_blocks = {2, 3, 4};

    double teacher_momentum = 0.999;

    std::size_t top_k = 5;
    std::uint64_t anchor_period = 30;      // batches between snapshots
    std::size_t anchor_capacity = 50;
    std::size_t window = 100;
    double z_threshold = 1.5;
    double z_momentum = 0.9;
    std::size_t min_fill = 10;
    CarMode car_mode = CarMode::kTrigger;
    std::uint64_t fixed_interval = 160;    // used by kFixedInterval
    CarAction car_action = CarAction::kWeighted;

    bool use_mcr = true;
    bool use_pred_consistency = false;     // final-prediction consistency instead of MCR
    bool use_entropy = true;
    bool use_queue = true;
    bool use_car = true;
    bool adapt = true;                     // false = frozen model
    bool avg_in_prob_space = true;         // prediction averaging space

    std::uint64_t seed = 1;

    std::vector<std::string> validate(std::size_t depth) const {
        std::vector<std::string> errs;
        auto need = [&](bool ok, const std::string& msg) {
            if (!ok) errs.push_back(msg);
        };
        need(lr > 0, "lr must be positive");
        need(batch_size >= 1, "batch_size must be >= 1");
        need(inner_batch >= 1, "inner_batch must be >= 1");
        need(queue_capacity_batches >= 1, "queue_capacity_batches must be >= 1");
        need(prototypes >= 2, "prototypes must be >= 2");
        need(feature_queue_cap >= 1, "feature_queue_cap must be >= 1");
        need(tau_s > 0, "tau_s must be positive");
        need(tau_t > 0, "tau_t must be positive");
        need(sinkhorn_iters >= 1, "sinkhorn_iters must be >= 1");
        for (const std::size_t j : active_blocks)
            need(j >= 1 && j <= depth, "active block " + std::to_string(j) + " out of range");
        need(teacher_momentum >= 0 && teacher_momentum <= 1,
             "teacher_momentum must be in [0,1]");
        need(top_k >= 1, "top_k must be >= 1");
        need(anchor_period >= 1, "anchor_period must be >= 1");
        need(anchor_capacity >= 1, "anchor_capacity must be >= 1");
        need(window >= 2, "window must be >= 2");
        need(z_threshold > 0, "z_threshold must be positive");
        need(z_momentum >= 0 && z_momentum < 1, "z_momentum must be in [0,1)");
        need(min_fill >= 2 && min_fill <= window, "min_fill must be in [2, window]");
        need(fixed_interval >= 1, "fixed_interval must be >= 1");
        need(!(use_mcr && use_pred_consistency),
             "use_mcr and use_pred_consistency are mutually exclusive");
        if (adapt)
            need(use_mcr || use_pred_consistency || use_entropy,
                 "at least one loss must be active when adapting");
        return errs;
    }
};

struct MergeEvent {
    std::vector<std::uint64_t> anchor_steps;
    std::vector<double> weights;  // student first, then anchors
};

struct StepReport {
    std::uint64_t step = 0;
    std::uint32_t domain_id = 0;       // evaluator-side
    double batch_error_pct = -1.0;     // evaluator-side
    double mcr_loss = 0.0;
    double ent_loss = 0.0;
    bool trigger = false;
    std::optional<MergeEvent> merge;
    std::size_t n_anchors = 0;
};

// Unlabeled test samples kept for the inner-loop updates; FIFO over rows,
// uniform without-replacement sampling.
template <typename Real>
class SampleQueue {
public:
    SampleQueue() = default;

    SampleQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
        if (capacity == 0 || dim == 0) fail_arg("SampleQueue: capacity and dim positive");
    }

    void push_rows(const Tensor<Real>& batch) {
        if (batch.rank() != 2 || batch.shape[1] != dim_) fail("SampleQueue: row dim mismatch");
        for (std::size_t i = 0; i < batch.shape[0]; ++i) {
            rows_.emplace_back(batch.data.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                               batch.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim_));
            if (rows_.size() > capacity_) rows_.pop_front();
        }
    }

    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    // min(b, size) distinct rows in randomized order.
    Tensor<Real> sample(std::size_t b, Rng& rng) const {
        const std::size_t take = std::min(b, rows_.size());
        if (take == 0) fail("SampleQueue: sample from empty queue");
        const auto picks = rng.sample_without_replacement(rows_.size(), take);
        Tensor<Real> out = Tensor<Real>::zeros(take, dim_);
        for (std::size_t i = 0; i < take; ++i)
            for (std::size_t j = 0; j < dim_; ++j) out.at(i, j) = rows_[picks[i]][j];
        return out;
    }

private:
    std::size_t capacity_ = 0;
    std::size_t dim_ = 0;
    std::deque<std::vector<Real>> rows_;
};

// Test-only instrumentation: records a tag and a student-parameter hash
// after each substep of process_batch.
struct StepTrace {
    struct Entry {
        std::string tag;
        std::uint64_t params_hash;
    };
    std::vector<Entry> entries;
};

template <typename Real>
struct AdaptState {
    Network<Real> net;           // student parameters live in net.params
    ParamSet<Real> teacher;
    ParamSet<Real> source_ref;   // deployed model snapshot, for source-reset
    CodebookBank<Real> bank;
    SampleQueue<Real> queue;
    AdamState<Real> opt;
    AnchorPool<Real> pool;
    ShiftDetector detector;
    BeeConfig cfg;
    std::uint64_t step = 0;
    Rng queue_rng{0};
    StepTrace* trace = nullptr;  // not owned

    void record(const char* tag) {
        if (trace) trace->entries.push_back({tag, param_hash(net.params)});
    }
};

namespace detail {

// EMA restricted to the parameters that can differ between student and
// teacher. Everything else is bitwise identical by the freeze contract, so
// touching it would only add rounding noise.
template <typename Real>
void ema_teacher_params(AdaptState<Real>& st) {
    const Real m = static_cast<Real>(st.cfg.teacher_momentum);
    for (const std::string& name : shallow_param_names(st.net)) {
        Tensor<Real>& t = st.teacher.get(name);
        const Tensor<Real>& s = st.net.params.get(name);
        for (std::size_t i = 0; i < t.size(); ++i)
            t.data[i] = m * t.data[i] + (Real(1) - m) * s.data[i];
    }
}

template <typename Real>
std::vector<std::size_t> all_blocks(const Network<Real>& net) {
    std::vector<std::size_t> v(net.depth());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = j + 1;
    return v;
}

// One gradient step on the active consistency loss (codebook assignments or
// final predictions). Returns the loss value. codebooks_trainable is only
// true during warm-up.
template <typename Real>
double consistency_step(AdaptState<Real>& st, const Tensor<Real>& x,
                        const std::vector<std::size_t>& active, bool codebooks_trainable) {
    Graph<Real> g;
    const std::set<std::string> trainable = shallow_param_names(st.net);
    GraphPass<Real> pass = graph_forward(g, st.net, st.net.params, x, trainable);
    const ForwardPass<Real> tfwd = forward(st.net, st.teacher, x);

    typename Graph<Real>::Id loss_id;
    std::map<std::size_t, typename Graph<Real>::Id> cb_leaves;
    if (st.cfg.use_mcr) {
        McrGraphLoss<Real> mcr = mcr_loss_graph(g, pass.features, tfwd.features, st.bank, active,
                                                codebooks_trainable);
        loss_id = mcr.loss_id;
        cb_leaves = std::move(mcr.codebook_leaves);
    } else {
        Tensor<Real> pt = tfwd.logits;
        softmax_rows(pt);
        loss_id = g.cross_entropy_mean(g.constant(pt), g.softmax_rows(pass.logits));
    }
    const double value = static_cast<double>(g.scalar_value(loss_id));
    g.backward(loss_id);

    std::vector<AdamItem<Real>> items;
    for (const auto& [name, leaf] : pass.leaves)
        items.push_back({name, &st.net.params.get(name), &g.grad(leaf)});
    for (const auto& [block, leaf] : cb_leaves)
        items.push_back({"codebook.student." + std::to_string(block),
                         &st.bank.student[block - 1].q, &g.grad(leaf)});
    adam_step(items, st.opt);
    for (const auto& entry : cb_leaves) renormalize_columns(st.bank.student[entry.first - 1]);
    return value;
}

// Ensemble prediction of Eq-style student/teacher averaging, as a plain
// tensor. Softmax first then average by default; the alternative averages
// logits then softmaxes.
template <typename Real>
Tensor<Real> ensemble_probs(const AdaptState<Real>& st, const Tensor<Real>& x) {
    Tensor<Real> ls = forward(st.net, st.net.params, x).logits;
    Tensor<Real> lt = forward(st.net, st.teacher, x).logits;
    if (st.cfg.avg_in_prob_space) {
        softmax_rows(ls);
        softmax_rows(lt);
        for (std::size_t i = 0; i < ls.size(); ++i)
            ls.data[i] = Real(0.5) * (ls.data[i] + lt.data[i]);
        return ls;
    }
    for (std::size_t i = 0; i < ls.size(); ++i)
        ls.data[i] = Real(0.5) * (ls.data[i] + lt.data[i]);
    softmax_rows(ls);
    return ls;
}

// One gradient step minimizing the entropy of the averaged prediction,
// recomputed fresh inside the graph. Returns the loss value.
template <typename Real>
double entropy_step(AdaptState<Real>& st, const Tensor<Real>& x) {
    Graph<Real> g;
    const std::set<std::string> trainable = shallow_param_names(st.net);
    GraphPass<Real> pass = graph_forward(g, st.net, st.net.params, x, trainable);
    const Tensor<Real> teacher_logits = forward(st.net, st.teacher, x).logits;

    typename Graph<Real>::Id yhat;
    if (st.cfg.avg_in_prob_space) {
        Tensor<Real> pt = teacher_logits;
        softmax_rows(pt);
        yhat = g.scale(g.add(g.softmax_rows(pass.logits), g.constant(pt)), Real(0.5));
    } else {
        yhat = g.softmax_rows(g.scale(g.add(pass.logits, g.constant(teacher_logits)), Real(0.5)));
    }
    const auto loss_id = g.entropy_mean(yhat);
    const double value = static_cast<double>(g.scalar_value(loss_id));
    g.backward(loss_id);

    std::vector<AdamItem<Real>> items;
    for (const auto& [name, leaf] : pass.leaves)
        items.push_back({name, &st.net.params.get(name), &g.grad(leaf)});
    adam_step(items, st.opt);
    return value;
}

// Installs a merged or reset parameter set, keeping frozen entries bitwise
// untouched (they are identical across all candidates by construction).
template <typename Real>
void install_student(AdaptState<Real>& st, ParamSet<Real> merged) {
    const std::set<std::string> trainable = shallow_param_names(st.net);
    for (auto& [name, t] : merged.items)
        if (!trainable.count(name)) t = st.net.params.get(name);
    st.net.params = std::move(merged);
    st.opt.reset();
}

}  // namespace detail

// Supervised source training of the whole network, cross-entropy with Adam.
template <typename Real>
void train_source(Network<Real>& net, const Dataset<Real>& train, std::size_t epochs, double lr,
                  std::size_t batch_size, std::uint64_t seed) {
    if (train.size() == 0) fail_arg("train_source: empty dataset");
    AdamState<Real> opt;
    opt.lr = lr;
    const std::set<std::string> trainable = all_param_names(net);
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle = derive_rng(seed, "source-shuffle", epoch);
        for (std::size_t i = n; i-- > 1;) {
            const std::size_t j = static_cast<std::size_t>(shuffle.below(i + 1));
            std::swap(order[i], order[j]);
        }
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t b = std::min(batch_size, n - start);
            Tensor<Real> x = Tensor<Real>::zeros(b, net.input_dim);
            Tensor<Real> onehot = Tensor<Real>::zeros(b, net.classes);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t r = order[start + i];
                for (std::size_t j = 0; j < net.input_dim; ++j) x.at(i, j) = train.x.at(r, j);
                onehot.at(i, train.y[r]) = Real(1);
            }
            Graph<Real> g;
            GraphPass<Real> pass = graph_forward(g, net, net.params, x, trainable);
            const auto loss_id = g.cross_entropy_mean(g.constant(onehot),
                                                      g.softmax_rows(pass.logits));
            if (!std::isfinite(static_cast<double>(g.scalar_value(loss_id))))
                fail("train_source: loss diverged at epoch " + std::to_string(epoch));
            g.backward(loss_id);
            std::vector<AdamItem<Real>> items;
            for (const auto& [name, leaf] : pass.leaves)
                items.push_back({name, &net.params.get(name), &g.grad(leaf)});
            adam_step(items, opt);
        }
    }
}

// Builds the adaptation state from a source-trained network: copies the
// teacher, initializes codebooks from early source features, then updates
// shallow blocks and codebooks with the consistency and entropy losses for
// the given epochs. Deep blocks and codebooks are frozen afterward.
template <typename Real>
AdaptState<Real> warmup(Network<Real> net, const Dataset<Real>& source_train,
                        const BeeConfig& cfg, std::size_t epochs) {
    {
        const auto errs = cfg.validate(net.depth());
        if (!errs.empty()) {
            std::string all = "warmup: invalid config:";
            for (const auto& e : errs) all += "\n  " + e;
            fail(all);
        }
    }
    AdaptState<Real> st;
    st.cfg = cfg;
    st.teacher = net.params;
    st.net = std::move(net);
    st.queue = SampleQueue<Real>(cfg.queue_capacity_batches * cfg.batch_size, st.net.input_dim);
    st.opt.lr = cfg.lr;
    st.pool = AnchorPool<Real>(cfg.anchor_capacity, cfg.anchor_period);
    st.detector = ShiftDetector(cfg.window, cfg.z_threshold, cfg.z_momentum, cfg.min_fill);
    st.queue_rng = derive_rng(cfg.seed, "queue");

    // Codebook columns are sampled from features of the first source
    // batches; a few batches give the sampler some variety.
    const std::size_t depth = st.net.depth();
    const std::size_t want =
        std::min(source_train.size(), std::max<std::size_t>(cfg.prototypes, 4 * cfg.batch_size));
    if (want < cfg.prototypes) fail("warmup: not enough source samples to seed codebooks");
    Tensor<Real> seed_x = Tensor<Real>::zeros(want, st.net.input_dim);
    for (std::size_t i = 0; i < want; ++i)
        for (std::size_t j = 0; j < st.net.input_dim; ++j) seed_x.at(i, j) = source_train.x.at(i, j);
    const ForwardPass<Real> seed_fwd = forward(st.net, st.net.params, seed_x);
    st.bank.sinkhorn_iters = cfg.sinkhorn_iters;
    for (std::size_t j = 1; j <= depth; ++j) {
        Rng cb_rng = derive_rng(cfg.seed, "codebook-init", j);
        Codebook<Real> cb = init_codebook(seed_fwd.features[j - 1], j, cfg.prototypes,
                                          static_cast<Real>(cfg.tau_s), cb_rng);
        Codebook<Real> tcb = cb;
        tcb.tau = static_cast<Real>(cfg.tau_t);
        st.bank.student.push_back(std::move(cb));
        st.bank.teacher.push_back(std::move(tcb));
        st.bank.queues.emplace_back(cfg.feature_queue_cap, st.net.widths[j - 1]);
    }

    // Warm-up updates train every block's codebook so any active-block
    // subset can run from the same state later.
    const std::vector<std::size_t> active = detail::all_blocks(st.net);
    const std::size_t n = source_train.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle = derive_rng(cfg.seed, "warmup-shuffle", epoch);
        for (std::size_t i = n; i-- > 1;) {
            const std::size_t j = static_cast<std::size_t>(shuffle.below(i + 1));
            std::swap(order[i], order[j]);
        }
        for (std::size_t start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
            Tensor<Real> x = Tensor<Real>::zeros(cfg.batch_size, st.net.input_dim);
            for (std::size_t i = 0; i < cfg.batch_size; ++i)
                for (std::size_t j = 0; j < st.net.input_dim; ++j)
                    x.at(i, j) = source_train.x.at(order[start + i], j);
            const bool consistency_on = cfg.use_mcr || cfg.use_pred_consistency;
            if (consistency_on)
                detail::consistency_step(st, x, active, /*codebooks_trainable=*/true);
            if (cfg.use_entropy) detail::entropy_step(st, x);
            detail::ema_teacher_params(st);
            if (consistency_on)
                for (std::size_t j = 1; j <= depth; ++j)
                    ema_codebook(st.bank.teacher[j - 1], st.bank.student[j - 1],
                                 static_cast<Real>(cfg.teacher_momentum));
        }
    }
    st.opt.reset();
    st.source_ref = st.net.params;
    return st;
}

// A frozen state around a network: teacher equals student, nothing adapts.
template <typename Real>
AdaptState<Real> frozen_state(Network<Real> net, BeeConfig cfg) {
    cfg.adapt = false;
    AdaptState<Real> st;
    st.cfg = cfg;
    st.teacher = net.params;
    st.source_ref = net.params;
    st.net = std::move(net);
    st.queue = SampleQueue<Real>(cfg.queue_capacity_batches * cfg.batch_size, st.net.input_dim);
    st.pool = AnchorPool<Real>(cfg.anchor_capacity, cfg.anchor_period);
    st.detector = ShiftDetector(cfg.window, cfg.z_threshold, cfg.z_momentum, cfg.min_fill);
    st.queue_rng = derive_rng(cfg.seed, "queue");
    return st;
}

// One online step: enqueue, inner replay updates, predict, adapt on the
// current batch, snapshot, detect, merge. The returned prediction is the one
// committed before the current-batch updates.
template <typename Real>
std::pair<Tensor<Real>, StepReport> process_batch(AdaptState<Real>& st, const Tensor<Real>& x) {
    StepReport rep;
    rep.step = ++st.step;
    const BeeConfig& cfg = st.cfg;
    const bool consistency_on = cfg.adapt && (cfg.use_mcr || cfg.use_pred_consistency);

    if (cfg.adapt && cfg.use_queue) {
        st.queue.push_rows(x);
        for (std::size_t r = 0; r < cfg.inner_steps; ++r) {
            const Tensor<Real> xb = st.queue.sample(cfg.inner_batch, st.queue_rng);
            if (consistency_on)
                detail::consistency_step(st, xb, cfg.active_blocks, false);
            else
                detail::entropy_step(st, xb);
            detail::ema_teacher_params(st);
            st.record("inner");
        }
    }

    Tensor<Real> prediction = detail::ensemble_probs(st, x);

    if (cfg.adapt) {
        if (consistency_on) {
            rep.mcr_loss = detail::consistency_step(st, x, cfg.active_blocks, false);
            st.record("mcr");
        }
        if (cfg.use_entropy) {
            rep.ent_loss = detail::entropy_step(st, x);
            st.record("ent");
        }
        if (!std::isfinite(rep.mcr_loss) || !std::isfinite(rep.ent_loss))
            fail("process_batch: non-finite loss at step " + std::to_string(rep.step));
        detail::ema_teacher_params(st);
        st.record("ema");

        if (cfg.use_car) {
            st.pool.maybe_store(st.net.params, st.step);

            bool fired = false;
            if (cfg.car_mode == CarMode::kTrigger) {
                const double signal = consistency_on ? rep.mcr_loss : rep.ent_loss;
                fired = st.detector.observe(signal);
            } else {
                fired = (st.step % cfg.fixed_interval == 0);
            }
            rep.trigger = fired;
            if (fired && !st.pool.empty()) {
                if (cfg.car_action == CarAction::kSourceReset) {
                    detail::install_student(st, st.source_ref);
                } else {
                    CandidateSet<Real> cand = select_candidates(st.net, st.net.params, st.step,
                                                                st.pool, x, cfg.top_k);
                    std::vector<Real> w;
                    if (cfg.car_action == CarAction::kWeighted) {
                        w = ensemble_weights(cand);
                    } else {
                        w.assign(cand.size(), Real(1) / static_cast<Real>(cand.size()));
                    }
                    detail::install_student(st, merge(cand, w));
                    MergeEvent ev;
                    for (std::size_t i = 1; i < cand.size(); ++i)
                        ev.anchor_steps.push_back(cand.steps[i]);
                    for (const Real wi : w) ev.weights.push_back(static_cast<double>(wi));
                    rep.merge = std::move(ev);
                }
                st.record("merge");
            }
        }
    }
    rep.n_anchors = st.pool.size();
    return {std::move(prediction), rep};
}

// Plain accuracy of a parameter snapshot on held-out source data.
template <typename Real>
double eval_source_holdout(const Network<Real>& net, const ParamSet<Real>& params,
                           const Dataset<Real>& holdout) {
    const std::size_t n = holdout.size();
    if (n == 0) fail_arg("eval_source_holdout: empty holdout");
    std::size_t right = 0;
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t b = std::min(chunk, n - start);
        Tensor<Real> x = Tensor<Real>::zeros(b, net.input_dim);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < net.input_dim; ++j)
                x.at(i, j) = holdout.x.at(start + i, j);
        const Tensor<Real> probs = predict_probs(net, params, x);
        for (std::size_t i = 0; i < b; ++i)
            if (argmax_row(probs, i) == holdout.y[start + i]) ++right;
    }
    return static_cast<double>(right) / static_cast<double>(n);
}

template <typename Real>
struct RunSummary {
    std::vector<StepReport> reports;
    std::vector<std::string> domain_names;
    std::vector<double> domain_error_pct;
    double mean_error_pct = 0.0;
    // Source-holdout accuracy of the student snapshot after each domain;
    // filled when a holdout set is supplied.
    std::vector<double> boundary_source_acc;
};

// Drives the online protocol over any batch source with a DomainStream-style
// next(). Labels are consulted only after the prediction is committed.
template <typename Real, typename Source>
RunSummary<Real> run(AdaptState<Real>& st, Source& src,
                     const std::vector<std::string>& domain_names,
                     const Dataset<Real>* holdout = nullptr) {
    RunSummary<Real> out;
    out.domain_names = domain_names;
    std::map<std::uint32_t, std::pair<double, std::size_t>> per_domain;
    StreamBatch<Real> b;
    std::uint32_t last_domain = 0;
    bool any = false;
    while (src.next(b)) {
        if (any && b.domain_id != last_domain && holdout)
            out.boundary_source_acc.push_back(eval_source_holdout(st.net, st.net.params, *holdout));
        auto [probs, rep] = process_batch(st, b.x);
        rep.domain_id = b.domain_id;
        rep.batch_error_pct = error_pct(probs, b.y);
        auto& acc = per_domain[b.domain_id];
        acc.first += rep.batch_error_pct;
        acc.second += 1;
        out.reports.push_back(std::move(rep));
        last_domain = b.domain_id;
        any = true;
    }
    if (any && holdout)
        out.boundary_source_acc.push_back(eval_source_holdout(st.net, st.net.params, *holdout));
    for (const auto& [dom, acc] : per_domain)
        out.domain_error_pct.push_back(acc.first / static_cast<double>(acc.second));
    double total = 0.0;
    for (const double e : out.domain_error_pct) total += e;
    out.mean_error_pct =
        out.domain_error_pct.empty() ? 0.0 : total / static_cast<double>(out.domain_error_pct.size());
    return out;
}

// Preset wiring for the comparison runs.
inline void apply_preset(BeeConfig& cfg, const std::string& preset) {
    if (preset == "bee") {
        cfg.use_mcr = true;
        cfg.use_pred_consistency = false;
        cfg.use_entropy = true;
        cfg.use_queue = true;
        cfg.use_car = true;
        cfg.adapt = true;
    } else if (preset == "entropy-only") {
        cfg.use_mcr = false;
        cfg.use_pred_consistency = false;
        cfg.use_entropy = true;
        cfg.use_queue = false;
        cfg.use_car = false;
        cfg.adapt = true;
    } else if (preset == "source-only") {
        cfg.adapt = false;
    } else if (preset == "pred-consistency") {
        cfg.use_mcr = false;
        cfg.use_pred_consistency = true;
        cfg.use_entropy = true;
        cfg.use_queue = true;
        cfg.use_car = true;
        cfg.adapt = true;
    } else {
        fail_arg("unknown preset: " + preset);
    }
}

// Checkpoint layout of a warmed-up state: student parameters under their own
// names, teacher under "teacher.", codebooks and feature queues per block,
// and the deployed reference snapshot under "source_ref.".
template <typename Real>
ParamSet<Real> state_to_params(const AdaptState<Real>& st) {
    ParamSet<Real> out;
    for (const auto& [name, t] : st.net.params.items) out.put(name, t);
    for (const auto& [name, t] : st.teacher.items) out.put("teacher." + name, t);
    for (const auto& [name, t] : st.source_ref.items) out.put("source_ref." + name, t);
    for (std::size_t j = 1; j <= st.bank.blocks(); ++j) {
        out.put("codebook.student." + std::to_string(j), st.bank.student[j - 1].q);
        out.put("codebook.teacher." + std::to_string(j), st.bank.teacher[j - 1].q);
        if (!st.bank.queues[j - 1].empty())
            out.put("queue." + std::to_string(j), st.bank.queues[j - 1].snapshot());
    }
    return out;
}

template <typename Real>
AdaptState<Real> state_from_params(Network<Real> arch, const ParamSet<Real>& ps,
                                   const BeeConfig& cfg) {
    {
        const auto errs = cfg.validate(arch.depth());
        if (!errs.empty()) {
            std::string all = "state_from_params: invalid config:";
            for (const auto& e : errs) all += "\n  " + e;
            fail(all);
        }
    }
    AdaptState<Real> st;
    st.cfg = cfg;
    st.net = std::move(arch);
    for (auto& [name, t] : st.net.params.items) t = ps.get(name);
    st.teacher = st.net.params;
    for (auto& [name, t] : st.teacher.items) t = ps.get("teacher." + name);
    st.source_ref = st.net.params;
    for (auto& [name, t] : st.source_ref.items) t = ps.get("source_ref." + name);
    st.bank.sinkhorn_iters = cfg.sinkhorn_iters;
    for (std::size_t j = 1; j <= st.net.depth(); ++j) {
        Codebook<Real> cb;
        cb.block = j;
        cb.tau = static_cast<Real>(cfg.tau_s);
        cb.q = ps.get("codebook.student." + std::to_string(j));
        Codebook<Real> tcb;
        tcb.block = j;
        tcb.tau = static_cast<Real>(cfg.tau_t);
        tcb.q = ps.get("codebook.teacher." + std::to_string(j));
        st.bank.student.push_back(std::move(cb));
        st.bank.teacher.push_back(std::move(tcb));
        FeatureQueue<Real> q(cfg.feature_queue_cap, st.net.widths[j - 1]);
        const std::string qname = "queue." + std::to_string(j);
        if (ps.contains(qname)) q.restore(ps.get(qname));
        st.bank.queues.push_back(std::move(q));
    }
    st.queue = SampleQueue<Real>(cfg.queue_capacity_batches * cfg.batch_size, st.net.input_dim);
    st.opt.lr = cfg.lr;
    st.pool = AnchorPool<Real>(cfg.anchor_capacity, cfg.anchor_period);
    st.detector = ShiftDetector(cfg.window, cfg.z_threshold, cfg.z_momentum, cfg.min_fill);
    st.queue_rng = derive_rng(cfg.seed, "queue");
    return st;
}

}  // namespace bee
