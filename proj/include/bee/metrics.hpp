// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bee/loop.hpp"
#include "bee/util.hpp"

namespace bee {

// One JSON object per adaptation step. Field order is part of the file
// contract, hence ordered_json.
inline nlohmann::ordered_json step_to_json(const StepReport& rep) {
    nlohmann::ordered_json j;
    j["step"] = rep.step;
    j["domain_id"] = rep.domain_id;
    j["batch_error_pct"] = rep.batch_error_pct;
    j["mcr_loss"] = rep.mcr_loss;
    j["ent_loss"] = rep.ent_loss;
    j["trigger"] = rep.trigger;
    if (rep.merge) {
        nlohmann::ordered_json m;
        m["anchors"] = rep.merge->anchor_steps;
        m["weights"] = rep.merge->weights;
        j["merge"] = m;
    }
    j["n_anchors"] = rep.n_anchors;
    return j;
}

inline StepReport step_from_json(const nlohmann::ordered_json& j) {
    StepReport rep;
    rep.step = j.at("step").get<std::uint64_t>();
    rep.domain_id = j.at("domain_id").get<std::uint32_t>();
    rep.batch_error_pct = j.at("batch_error_pct").get<double>();
    rep.mcr_loss = j.at("mcr_loss").get<double>();
    rep.ent_loss = j.at("ent_loss").get<double>();
    rep.trigger = j.at("trigger").get<bool>();
    if (j.contains("merge")) {
        MergeEvent ev;
        ev.anchor_steps = j.at("merge").at("anchors").get<std::vector<std::uint64_t>>();
        ev.weights = j.at("merge").at("weights").get<std::vector<double>>();
        rep.merge = ev;
    }
    rep.n_anchors = j.at("n_anchors").get<std::size_t>();
    return rep;
}

inline void write_metrics_jsonl(const std::string& path,
                                const std::vector<StepReport>& reports) {
    std::ofstream os(path);
    if (!os) fail("cannot write metrics file: " + path);
    for (const StepReport& rep : reports) os << step_to_json(rep).dump() << "\n";
}

inline std::vector<StepReport> read_metrics_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot read metrics file: " + path);
    std::vector<StepReport> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(step_from_json(nlohmann::ordered_json::parse(line)));
    }
    return out;
}

namespace detail {

inline std::string csv_num(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed << v;
    return os.str();
}

}  // namespace detail

// Per-domain error table. Last row is the mean over domains.
inline std::string summary_csv(const std::vector<std::string>& domain_names,
                               const std::vector<double>& domain_error_pct,
                               double mean_error_pct) {
    if (domain_names.size() != domain_error_pct.size())
        fail("summary_csv: name/error count mismatch");
    std::string out = "domain_name,error_pct\n";
    for (std::size_t i = 0; i < domain_names.size(); ++i)
        out += domain_names[i] + "," + detail::csv_num(domain_error_pct[i]) + "\n";
    out += "mean," + detail::csv_num(mean_error_pct) + "\n";
    return out;
}

// Source-holdout accuracy after each domain, for the forgetting plots.
inline std::string forgetting_csv(const std::vector<std::string>& domain_names,
                                  const std::vector<double>& boundary_acc) {
    if (domain_names.size() != boundary_acc.size())
        fail("forgetting_csv: name/accuracy count mismatch");
    std::string out = "after_domain,source_acc_pct\n";
    for (std::size_t i = 0; i < domain_names.size(); ++i)
        out += domain_names[i] + "," + detail::csv_num(100.0 * boundary_acc[i]) + "\n";
    return out;
}

// Variant x seed grid of mean errors, one row per variant with a seed-mean
// column. Rows keep insertion order.
struct AblationTable {
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> variants;
    std::map<std::string, std::vector<double>> mean_error_pct;  // per variant, by seed

    void add(const std::string& variant, double value) {
        if (!mean_error_pct.count(variant)) variants.push_back(variant);
        mean_error_pct[variant].push_back(value);
    }

    std::string csv() const {
        std::string out = "variant";
        for (const std::uint64_t s : seeds) out += ",seed" + std::to_string(s);
        out += ",mean\n";
        for (const std::string& v : variants) {
            const std::vector<double>& row = mean_error_pct.at(v);
            if (row.size() != seeds.size()) fail("ablation table: ragged row " + v);
            double sum = 0;
            out += v;
            for (const double e : row) {
                out += "," + detail::csv_num(e);
                sum += e;
            }
            out += "," + detail::csv_num(sum / static_cast<double>(row.size())) + "\n";
        }
        return out;
    }
};

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) fail("cannot write file: " + path);
    os << text;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot read file: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

// What produced a run directory: config snapshot, seed, inputs and outputs
// with content hashes. Written as manifest.json next to the outputs.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    std::string config_text;
    std::map<std::string, std::string> inputs;    // path -> fnv1a64 hex
    std::map<std::string, std::string> outputs;   // path -> fnv1a64 hex
    double wall_seconds = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["seed"] = seed;
        j["config"] = config_text;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["wall_seconds"] = wall_seconds;
        return j;
    }

    void note_file(std::map<std::string, std::string>& side, const std::string& path) {
        side[path] = to_hex(fnv1a64(read_text_file(path)));
    }
    void note_input(const std::string& path) { note_file(inputs, path); }
    void note_output(const std::string& path) { note_file(outputs, path); }

    void save(const std::string& path) const { write_text_file(path, to_json().dump(2) + "\n"); }
};

}  // namespace bee
