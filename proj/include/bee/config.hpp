// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bee/loop.hpp"
#include "bee/stream.hpp"
#include "bee/util.hpp"

namespace bee {

// Everything an experiment needs: the loop knobs plus the synthetic task,
// network shape, training budgets and the drift schedule.
struct RunConfig {
    BeeConfig bee;

    std::size_t dim = 32;
    std::size_t classes = 10;
    double sigma0 = 0.5;
    double center_scale = 3.0;
    std::size_t train_n = 4000;
    std::size_t holdout_n = 2000;

    std::vector<std::size_t> widths = {64, 64, 64, 64};
    std::vector<std::size_t> shallow = {1};

    std::size_t source_epochs = 15;
    std::size_t warmup_epochs = 1;

    std::vector<std::pair<CorruptionKind, int>> domains = default_domain_list();
    std::size_t batches_per_domain = 50;

    template <typename Real>
    SourceTask<Real> task() const {
        SourceTask<Real> t;
        t.dim = dim;
        t.classes = classes;
        t.sigma0 = static_cast<Real>(sigma0);
        t.center_scale = static_cast<Real>(center_scale);
        t.train_n = train_n;
        t.holdout_n = holdout_n;
        t.seed = bee.seed;
        return t;
    }

    DomainSchedule schedule() const {
        return make_schedule(bee.seed, domains, batches_per_domain, bee.batch_size);
    }

    std::vector<std::string> domain_names() const {
        std::vector<std::string> names;
        for (const auto& [kind, sev] : domains)
            names.push_back(std::string(corruption_name(kind)) + ":" + std::to_string(sev));
        return names;
    }

    std::vector<std::string> validate() const {
        std::vector<std::string> errs = bee.validate(widths.size());
        auto need = [&](bool ok, const std::string& msg) {
            if (!ok) errs.push_back(msg);
        };
        need(dim >= 2, "task.dim must be >= 2");
        need(classes >= 2, "task.classes must be >= 2");
        need(classes <= dim, "task.classes must not exceed task.dim");
        need(sigma0 >= 0, "task.sigma0 must be nonnegative");
        need(center_scale > 0, "task.center_scale must be positive");
        need(train_n >= bee.batch_size, "task.train_n must cover at least one batch");
        need(holdout_n >= 1, "task.holdout_n must be >= 1");
        need(!widths.empty(), "net.widths must not be empty");
        for (const std::size_t w : widths) need(w >= 2, "net widths must be >= 2");
        need(!shallow.empty(), "net.shallow must not be empty");
        for (const std::size_t j : shallow)
            need(j >= 1 && j <= widths.size(),
                 "net.shallow index " + std::to_string(j) + " out of range");
        need(!domains.empty(), "stream.domains must not be empty");
        for (const auto& [kind, sev] : domains)
            need(sev >= 0 && sev <= 5, "domain severity must be 0..5");
        need(batches_per_domain >= 1, "stream.batches_per_domain must be >= 1");
        return errs;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes") { out = true; return true; }
    if (v == "false" || v == "0" || v == "no") { out = false; return true; }
    return false;
}

inline bool parse_u64(const std::string& v, std::uint64_t& out) {
    if (v.empty()) return false;
    std::uint64_t acc = 0;
    for (const char c : v) {
        if (c < '0' || c > '9') return false;
        acc = acc * 10 + static_cast<std::uint64_t>(c - '0');
    }
    out = acc;
    return true;
}

inline bool parse_size(const std::string& v, std::size_t& out) {
    std::uint64_t u;
    if (!parse_u64(v, u)) return false;
    out = static_cast<std::size_t>(u);
    return true;
}

inline bool parse_double(const std::string& v, double& out) {
    std::istringstream is(v);
    is >> out;
    return static_cast<bool>(is) && is.eof();
}

inline bool parse_size_list(const std::string& v, std::vector<std::size_t>& out) {
    out.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t n;
        if (!parse_size(trim(item), n)) return false;
        out.push_back(n);
    }
    return !out.empty() || trim(v).empty();
}

inline bool parse_domain_list(const std::string& v,
                              std::vector<std::pair<CorruptionKind, int>>& out) {
    out.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos) return false;
        std::size_t sev;
        if (!parse_size(trim(item.substr(colon + 1)), sev) || sev > 5) return false;
        try {
            out.push_back({parse_corruption(trim(item.substr(0, colon))),
                           static_cast<int>(sev)});
        } catch (const std::exception&) {
            return false;
        }
    }
    return !out.empty();
}

}  // namespace detail

// Applies one key=value setting. Returns an error message, or empty on
// success. The key set is closed: anything unknown is an error.
inline std::string set_config_key(RunConfig& cfg, const std::string& key,
                                  const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_size;
    using detail::parse_u64;
    auto bad = [&]() { return "invalid value for " + key + ": '" + value + "'"; };

    bool b;
    double d;
    std::size_t n;
    std::uint64_t u;

    if (key == "loop.lr") { if (!parse_double(value, d)) return bad(); cfg.bee.lr = d; }
    else if (key == "loop.batch_size") { if (!parse_size(value, n)) return bad(); cfg.bee.batch_size = n; }
    else if (key == "loop.inner_steps") { if (!parse_size(value, n)) return bad(); cfg.bee.inner_steps = n; }
    else if (key == "loop.inner_batch") { if (!parse_size(value, n)) return bad(); cfg.bee.inner_batch = n; }
    else if (key == "loop.queue_capacity_batches") { if (!parse_size(value, n)) return bad(); cfg.bee.queue_capacity_batches = n; }
    else if (key == "loop.teacher_momentum") { if (!parse_double(value, d)) return bad(); cfg.bee.teacher_momentum = d; }
    else if (key == "loop.avg_in_prob_space") { if (!parse_bool(value, b)) return bad(); cfg.bee.avg_in_prob_space = b; }
    else if (key == "mcr.enabled") { if (!parse_bool(value, b)) return bad(); cfg.bee.use_mcr = b; }
    else if (key == "mcr.prototypes") { if (!parse_size(value, n)) return bad(); cfg.bee.prototypes = n; }
    else if (key == "mcr.feature_queue_cap") { if (!parse_size(value, n)) return bad(); cfg.bee.feature_queue_cap = n; }
    else if (key == "mcr.tau_s") { if (!parse_double(value, d)) return bad(); cfg.bee.tau_s = d; }
    else if (key == "mcr.tau_t") { if (!parse_double(value, d)) return bad(); cfg.bee.tau_t = d; }
    else if (key == "mcr.sinkhorn_iters") { if (!parse_size(value, n)) return bad(); cfg.bee.sinkhorn_iters = n; }
    else if (key == "mcr.active_blocks") { if (!detail::parse_size_list(value, cfg.bee.active_blocks)) return bad(); }
    else if (key == "loss.entropy") { if (!parse_bool(value, b)) return bad(); cfg.bee.use_entropy = b; }
    else if (key == "loss.pred_consistency") { if (!parse_bool(value, b)) return bad(); cfg.bee.use_pred_consistency = b; }
    else if (key == "queue.enabled") { if (!parse_bool(value, b)) return bad(); cfg.bee.use_queue = b; }
    else if (key == "car.enabled") { if (!parse_bool(value, b)) return bad(); cfg.bee.use_car = b; }
    else if (key == "car.top_k") { if (!parse_size(value, n)) return bad(); cfg.bee.top_k = n; }
    else if (key == "car.xi") { if (!parse_u64(value, u)) return bad(); cfg.bee.anchor_period = u; }
    else if (key == "car.capacity") { if (!parse_size(value, n)) return bad(); cfg.bee.anchor_capacity = n; }
    else if (key == "car.window") { if (!parse_size(value, n)) return bad(); cfg.bee.window = n; }
    else if (key == "car.eta") { if (!parse_double(value, d)) return bad(); cfg.bee.z_threshold = d; }
    else if (key == "car.z_momentum") { if (!parse_double(value, d)) return bad(); cfg.bee.z_momentum = d; }
    else if (key == "car.min_fill") { if (!parse_size(value, n)) return bad(); cfg.bee.min_fill = n; }
    else if (key == "car.mode") {
        if (value == "trigger") cfg.bee.car_mode = CarMode::kTrigger;
        else if (value == "fixed") cfg.bee.car_mode = CarMode::kFixedInterval;
        else return bad();
    }
    else if (key == "car.fixed_interval") { if (!parse_u64(value, u)) return bad(); cfg.bee.fixed_interval = u; }
    else if (key == "car.action") {
        if (value == "weighted") cfg.bee.car_action = CarAction::kWeighted;
        else if (value == "average") cfg.bee.car_action = CarAction::kAverage;
        else if (value == "source_reset") cfg.bee.car_action = CarAction::kSourceReset;
        else return bad();
    }
    else if (key == "run.adapt") { if (!parse_bool(value, b)) return bad(); cfg.bee.adapt = b; }
    else if (key == "run.seed") { if (!parse_u64(value, u)) return bad(); cfg.bee.seed = u; }
    else if (key == "task.dim") { if (!parse_size(value, n)) return bad(); cfg.dim = n; }
    else if (key == "task.classes") { if (!parse_size(value, n)) return bad(); cfg.classes = n; }
    else if (key == "task.sigma0") { if (!parse_double(value, d)) return bad(); cfg.sigma0 = d; }
    else if (key == "task.center_scale") { if (!parse_double(value, d)) return bad(); cfg.center_scale = d; }
    else if (key == "task.train_n") { if (!parse_size(value, n)) return bad(); cfg.train_n = n; }
    else if (key == "task.holdout_n") { if (!parse_size(value, n)) return bad(); cfg.holdout_n = n; }
    else if (key == "net.widths") { if (!detail::parse_size_list(value, cfg.widths)) return bad(); }
    else if (key == "net.shallow") { if (!detail::parse_size_list(value, cfg.shallow)) return bad(); }
    else if (key == "train.source_epochs") { if (!parse_size(value, n)) return bad(); cfg.source_epochs = n; }
    else if (key == "train.warmup_epochs") { if (!parse_size(value, n)) return bad(); cfg.warmup_epochs = n; }
    else if (key == "stream.domains") { if (!detail::parse_domain_list(value, cfg.domains)) return bad(); }
    else if (key == "stream.batches_per_domain") { if (!parse_size(value, n)) return bad(); cfg.batches_per_domain = n; }
    else return "unknown config key: " + key;
    return "";
}

// Parses key = value lines ('#' comments). All problems are collected and
// reported together; the config only takes effect if there are none.
inline RunConfig parse_config(const std::string& text, std::vector<std::string>& errors) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> seen;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) {
            errors.push_back("line " + std::to_string(lineno) + ": empty key");
            continue;
        }
        if (const auto prev = seen.find(key); prev != seen.end()) {
            errors.push_back("line " + std::to_string(lineno) + ": duplicate key " + key +
                             " (first set on line " + std::to_string(prev->second) + ")");
            continue;
        }
        seen.emplace(key, lineno);
        const std::string err = set_config_key(cfg, key, value);
        if (!err.empty()) errors.push_back("line " + std::to_string(lineno) + ": " + err);
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path, std::vector<std::string>& errors) {
    std::ifstream is(path);
    if (!is) {
        errors.push_back("cannot open config file: " + path);
        return RunConfig{};
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config(buf.str(), errors);
}

// Canonical text form, parseable by parse_config. Used for the manifest
// snapshot and golden files.
inline std::string config_to_text(const RunConfig& cfg) {
    std::ostringstream os;
    auto list = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    os << "loop.lr = " << cfg.bee.lr << "\n";
    os << "loop.batch_size = " << cfg.bee.batch_size << "\n";
    os << "loop.inner_steps = " << cfg.bee.inner_steps << "\n";
    os << "loop.inner_batch = " << cfg.bee.inner_batch << "\n";
    os << "loop.queue_capacity_batches = " << cfg.bee.queue_capacity_batches << "\n";
    os << "loop.teacher_momentum = " << cfg.bee.teacher_momentum << "\n";
    os << "loop.avg_in_prob_space = " << (cfg.bee.avg_in_prob_space ? "true" : "false") << "\n";
    os << "mcr.enabled = " << (cfg.bee.use_mcr ? "true" : "false") << "\n";
    os << "mcr.prototypes = " << cfg.bee.prototypes << "\n";
    os << "mcr.feature_queue_cap = " << cfg.bee.feature_queue_cap << "\n";
    os << "mcr.tau_s = " << cfg.bee.tau_s << "\n";
    os << "mcr.tau_t = " << cfg.bee.tau_t << "\n";
    os << "mcr.sinkhorn_iters = " << cfg.bee.sinkhorn_iters << "\n";
    os << "mcr.active_blocks = " << list(cfg.bee.active_blocks) << "\n";
    os << "loss.entropy = " << (cfg.bee.use_entropy ? "true" : "false") << "\n";
    os << "loss.pred_consistency = " << (cfg.bee.use_pred_consistency ? "true" : "false") << "\n";
    os << "queue.enabled = " << (cfg.bee.use_queue ? "true" : "false") << "\n";
    os << "car.enabled = " << (cfg.bee.use_car ? "true" : "false") << "\n";
    os << "car.top_k = " << cfg.bee.top_k << "\n";
    os << "car.xi = " << cfg.bee.anchor_period << "\n";
    os << "car.capacity = " << cfg.bee.anchor_capacity << "\n";
    os << "car.window = " << cfg.bee.window << "\n";
    os << "car.eta = " << cfg.bee.z_threshold << "\n";
    os << "car.z_momentum = " << cfg.bee.z_momentum << "\n";
    os << "car.min_fill = " << cfg.bee.min_fill << "\n";
    os << "car.mode = " << (cfg.bee.car_mode == CarMode::kTrigger ? "trigger" : "fixed") << "\n";
    os << "car.fixed_interval = " << cfg.bee.fixed_interval << "\n";
    os << "car.action = "
       << (cfg.bee.car_action == CarAction::kWeighted
               ? "weighted"
               : cfg.bee.car_action == CarAction::kAverage ? "average" : "source_reset")
       << "\n";
    os << "run.adapt = " << (cfg.bee.adapt ? "true" : "false") << "\n";
    os << "run.seed = " << cfg.bee.seed << "\n";
    os << "task.dim = " << cfg.dim << "\n";
    os << "task.classes = " << cfg.classes << "\n";
    os << "task.sigma0 = " << cfg.sigma0 << "\n";
    os << "task.center_scale = " << cfg.center_scale << "\n";
    os << "task.train_n = " << cfg.train_n << "\n";
    os << "task.holdout_n = " << cfg.holdout_n << "\n";
    os << "net.widths = " << list(cfg.widths) << "\n";
    os << "net.shallow = " << list(cfg.shallow) << "\n";
    os << "train.source_epochs = " << cfg.source_epochs << "\n";
    os << "train.warmup_epochs = " << cfg.warmup_epochs << "\n";
    std::string doms;
    for (std::size_t i = 0; i < cfg.domains.size(); ++i)
        doms += std::string(i ? "," : "") + corruption_name(cfg.domains[i].first) + ":" +
                std::to_string(cfg.domains[i].second);
    os << "stream.domains = " << doms << "\n";
    os << "stream.batches_per_domain = " << cfg.batches_per_domain << "\n";
    return os.str();
}

}  // namespace bee
