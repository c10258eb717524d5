// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "bee/bee.hpp"

namespace fs = std::filesystem;

namespace {

using Net = bee::Network<double>;
using Data = bee::Dataset<double>;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    bool force = false;
};

void add_common(CLI::App* sub, CommonArgs& a) {
    sub->add_option("--config", a.config_path, "key = value settings file");
    sub->add_option("--seed", a.seed, "root seed (overrides the config file)");
    sub->add_option("--out", a.out, "output directory")->capture_default_str();
    sub->add_flag("--force", a.force, "overwrite existing outputs");
}

void print_errors(const std::vector<std::string>& errs) {
    for (const std::string& e : errs) std::fprintf(stderr, "error: %s\n", e.c_str());
}

// Config file first, CLI overrides second; all problems reported together.
bee::RunConfig resolve_config(const CommonArgs& a, std::vector<std::string>& errs) {
    bee::RunConfig cfg;
    if (!a.config_path.empty()) cfg = bee::load_config(a.config_path, errs);
    if (a.seed) cfg.bee.seed = *a.seed;
    return cfg;
}

// Existing outputs are refused unless --force; the directory is created.
bool claim_outputs(const fs::path& out, const std::vector<std::string>& names, bool force) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        std::fprintf(stderr, "error: cannot create %s: %s\n", out.string().c_str(),
                     ec.message().c_str());
        return false;
    }
    if (force) return true;
    bool ok = true;
    for (const std::string& name : names) {
        if (fs::exists(out / name)) {
            std::fprintf(stderr, "error: %s exists (use --force to overwrite)\n",
                         (out / name).string().c_str());
            ok = false;
        }
    }
    return ok;
}

Net build_network(const bee::RunConfig& cfg) {
    Net net = bee::make_network<double>(cfg.dim, cfg.widths, cfg.classes, cfg.shallow);
    bee::Rng rng = bee::derive_rng(cfg.bee.seed, "init");
    bee::init_params(net, rng);
    return net;
}

Net train_source_net(const bee::RunConfig& cfg, const Data& train) {
    Net net = build_network(cfg);
    bee::train_source(net, train, cfg.source_epochs, cfg.bee.lr, cfg.bee.batch_size,
                      cfg.bee.seed);
    return net;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const CommonArgs& common, std::size_t domain_count) {
    std::vector<std::string> errs;
    bee::RunConfig cfg = resolve_config(common, errs);
    if (domain_count > 0) {
        if (domain_count > cfg.domains.size())
            errs.push_back("--domains asks for " + std::to_string(domain_count) +
                           " domains but the schedule defines " +
                           std::to_string(cfg.domains.size()));
        else
            cfg.domains.resize(domain_count);
    }
    for (const std::string& e : cfg.validate()) errs.push_back(e);
    if (!errs.empty()) {
        print_errors(errs);
        return 1;
    }

    const fs::path out = common.out;
    const std::vector<std::string> files{"source_train.beed", "source_holdout.beed",
                                         "stream.beed", "manifest_gen-data.json"};
    if (!claim_outputs(out, files, common.force)) return 1;
    const auto t0 = std::chrono::steady_clock::now();

    const auto task = cfg.task<double>();
    const auto [train, holdout] = bee::gen_source(task);
    bee::save_dataset((out / "source_train.beed").string(), train);
    bee::save_dataset((out / "source_holdout.beed").string(), holdout);
    const Data stream = bee::materialize_stream(task, cfg.schedule(), cfg.bee.seed);
    bee::save_dataset((out / "stream.beed").string(), stream);

    const auto names = cfg.domain_names();
    std::printf("source: %zu train / %zu holdout samples, %zu classes, dim %zu\n",
                train.size(), holdout.size(), static_cast<std::size_t>(train.classes), cfg.dim);
    for (std::size_t i = 0; i < names.size(); ++i)
        std::printf("domain %zu: %s (%zu batches of %zu)\n", i, names[i].c_str(),
                    cfg.batches_per_domain, cfg.bee.batch_size);
    std::printf("stream total: %zu batches, %zu samples\n", cfg.schedule().total_batches(),
                stream.size());

    bee::RunManifest man;
    man.command = "gen-data";
    man.seed = cfg.bee.seed;
    man.config_text = bee::config_to_text(cfg);
    if (!common.config_path.empty()) man.note_input(common.config_path);
    for (const std::string& f : files)
        if (f.rfind("manifest", 0) != 0) man.note_output((out / f).string());
    man.wall_seconds = seconds_since(t0);
    man.save((out / "manifest_gen-data.json").string());
    return 0;
}

// ------------------------------------------------------------ train-source

int cmd_train_source(const CommonArgs& common) {
    std::vector<std::string> errs;
    const bee::RunConfig cfg = resolve_config(common, errs);
    for (const std::string& e : cfg.validate()) errs.push_back(e);
    if (!errs.empty()) {
        print_errors(errs);
        return 1;
    }
    const fs::path out = common.out;
    if (!claim_outputs(out, {"source.beec", "manifest_train-source.json"}, common.force))
        return 1;
    const auto t0 = std::chrono::steady_clock::now();

    const auto [train, holdout] = bee::gen_source(cfg.task<double>());
    const Net net = train_source_net(cfg, train);
    const double acc = bee::eval_source_holdout(net, net.params, holdout);
    bee::save_checkpoint((out / "source.beec").string(), net.params);
    std::printf("source model: %zu epochs, holdout accuracy %.4f\n", cfg.source_epochs, acc);

    bee::RunManifest man;
    man.command = "train-source";
    man.seed = cfg.bee.seed;
    man.config_text = bee::config_to_text(cfg);
    if (!common.config_path.empty()) man.note_input(common.config_path);
    man.note_output((out / "source.beec").string());
    man.wall_seconds = seconds_since(t0);
    man.save((out / "manifest_train-source.json").string());
    return 0;
}

// ----------------------------------------------------------------- warmup

int cmd_warmup(const CommonArgs& common) {
    std::vector<std::string> errs;
    const bee::RunConfig cfg = resolve_config(common, errs);
    for (const std::string& e : cfg.validate()) errs.push_back(e);
    if (!errs.empty()) {
        print_errors(errs);
        return 1;
    }
    const fs::path out = common.out;
    const fs::path source_path = out / "source.beec";
    if (!fs::exists(source_path)) {
        std::fprintf(stderr, "error: %s not found (run train-source first)\n",
                     source_path.string().c_str());
        return 1;
    }
    if (!claim_outputs(out, {"warmed.beec", "manifest_warmup.json"}, common.force)) return 1;
    const auto t0 = std::chrono::steady_clock::now();

    const auto [train, holdout] = bee::gen_source(cfg.task<double>());
    Net net = bee::make_network<double>(cfg.dim, cfg.widths, cfg.classes, cfg.shallow);
    const bee::ParamSet<double> loaded = bee::load_checkpoint<double>(source_path.string());
    for (auto& [name, t] : net.params.items) t = loaded.get(name);
    const bee::AdaptState<double> st = bee::warmup(net, train, cfg.bee, cfg.warmup_epochs);
    bee::save_checkpoint((out / "warmed.beec").string(), bee::state_to_params(st));
    std::printf("warm-up: %zu epochs, %zu codebooks of %zu prototypes\n", cfg.warmup_epochs,
                st.bank.blocks(), cfg.bee.prototypes);

    bee::RunManifest man;
    man.command = "warmup";
    man.seed = cfg.bee.seed;
    man.config_text = bee::config_to_text(cfg);
    if (!common.config_path.empty()) man.note_input(common.config_path);
    man.note_input(source_path.string());
    man.note_output((out / "warmed.beec").string());
    man.wall_seconds = seconds_since(t0);
    man.save((out / "manifest_warmup.json").string());
    return 0;
}

// -------------------------------------------------------------------- run

struct RunFlags {
    std::string preset;
    bool no_car = false;
    bool no_queue = false;
    std::string mcr_blocks;
    std::string car_strategy;
    bool dump_anchors = false;
    bool auto_deps = false;
};

// Applies --preset and the override flags on top of the config file values.
std::string apply_run_flags(bee::RunConfig& cfg, const RunFlags& flags) {
    if (!flags.preset.empty()) {
        try {
            bee::apply_preset(cfg.bee, flags.preset);
        } catch (const std::exception& e) {
            return e.what();
        }
    }
    if (flags.no_car) cfg.bee.use_car = false;
    if (flags.no_queue) cfg.bee.use_queue = false;
    if (!flags.mcr_blocks.empty()) {
        const std::string err = bee::set_config_key(cfg, "mcr.active_blocks", flags.mcr_blocks);
        if (!err.empty()) return err;
    }
    if (!flags.car_strategy.empty()) {
        const std::string& s = flags.car_strategy;
        if (s == "trigger") {
            cfg.bee.car_mode = bee::CarMode::kTrigger;
        } else if (s.rfind("fixed:", 0) == 0) {
            cfg.bee.car_mode = bee::CarMode::kFixedInterval;
            const std::string err = bee::set_config_key(cfg, "car.fixed_interval", s.substr(6));
            if (!err.empty()) return err;
        } else if (s == "source-reset") {
            cfg.bee.car_action = bee::CarAction::kSourceReset;
        } else if (s == "average") {
            cfg.bee.car_action = bee::CarAction::kAverage;
        } else if (s == "weighted") {
            cfg.bee.car_action = bee::CarAction::kWeighted;
        } else {
            return "unknown car strategy: " + s + " (trigger, fixed:N, source-reset, average, weighted)";
        }
    }
    return "";
}

int cmd_run(const CommonArgs& common, const RunFlags& flags) {
    std::vector<std::string> errs;
    bee::RunConfig cfg = resolve_config(common, errs);
    const std::string flag_err = apply_run_flags(cfg, flags);
    if (!flag_err.empty()) errs.push_back(flag_err);
    for (const std::string& e : cfg.validate()) errs.push_back(e);
    if (!errs.empty()) {
        print_errors(errs);
        return 1;
    }

    const fs::path out = common.out;
    const std::vector<std::string> files{"metrics.jsonl", "summary.csv", "forgetting.csv",
                                         "manifest_run.json"};
    if (!claim_outputs(out, files, common.force)) return 1;
    const auto t0 = std::chrono::steady_clock::now();

    const auto [train, holdout] = bee::gen_source(cfg.task<double>());
    const fs::path source_path = out / "source.beec";
    const fs::path warmed_path = out / "warmed.beec";

    bee::RunManifest man;
    man.command = "run";
    man.seed = cfg.bee.seed;
    man.config_text = bee::config_to_text(cfg);
    if (!common.config_path.empty()) man.note_input(common.config_path);

    // Fetch or (with --auto) produce the checkpoints this run builds on.
    auto ensure_source = [&]() -> bool {
        if (fs::exists(source_path)) return true;
        if (!flags.auto_deps) {
            std::fprintf(stderr, "error: %s not found (run train-source first or pass --auto)\n",
                         source_path.string().c_str());
            return false;
        }
        const Net net = train_source_net(cfg, train);
        bee::save_checkpoint(source_path.string(), net.params);
        man.note_output(source_path.string());
        return true;
    };

    bee::AdaptState<double> st;
    if (!cfg.bee.adapt) {
        if (!ensure_source()) return 1;
        Net net = bee::make_network<double>(cfg.dim, cfg.widths, cfg.classes, cfg.shallow);
        const auto loaded = bee::load_checkpoint<double>(source_path.string());
        for (auto& [name, t] : net.params.items) t = loaded.get(name);
        if (!man.outputs.count(source_path.string())) man.note_input(source_path.string());
        st = bee::frozen_state(std::move(net), cfg.bee);
    } else {
        if (!fs::exists(warmed_path)) {
            if (!flags.auto_deps) {
                std::fprintf(stderr, "error: %s not found (run warmup first or pass --auto)\n",
                             warmed_path.string().c_str());
                return 1;
            }
            if (!ensure_source()) return 1;
            Net net = bee::make_network<double>(cfg.dim, cfg.widths, cfg.classes, cfg.shallow);
            const auto loaded = bee::load_checkpoint<double>(source_path.string());
            for (auto& [name, t] : net.params.items) t = loaded.get(name);
            const auto warmed = bee::warmup(net, train, cfg.bee, cfg.warmup_epochs);
            bee::save_checkpoint(warmed_path.string(), bee::state_to_params(warmed));
            man.note_output(warmed_path.string());
        }
        Net arch = bee::make_network<double>(cfg.dim, cfg.widths, cfg.classes, cfg.shallow);
        st = bee::state_from_params(std::move(arch),
                                    bee::load_checkpoint<double>(warmed_path.string()), cfg.bee);
        if (!man.outputs.count(warmed_path.string())) man.note_input(warmed_path.string());
    }

    bee::DomainStream<double> stream(cfg.task<double>(), cfg.schedule(), cfg.bee.seed);
    const auto summary = bee::run(st, stream, cfg.domain_names(), &holdout);

    bee::write_metrics_jsonl((out / "metrics.jsonl").string(), summary.reports);
    bee::write_text_file((out / "summary.csv").string(),
                         bee::summary_csv(summary.domain_names, summary.domain_error_pct,
                                          summary.mean_error_pct));
    bee::write_text_file((out / "forgetting.csv").string(),
                         bee::forgetting_csv(summary.domain_names, summary.boundary_source_acc));
    man.note_output((out / "metrics.jsonl").string());
    man.note_output((out / "summary.csv").string());
    man.note_output((out / "forgetting.csv").string());

    if (flags.dump_anchors) {
        for (std::size_t i = 0; i < st.pool.size(); ++i) {
            const auto& anchor = st.pool.at(i);
            const std::string name = "anchor_" + std::to_string(anchor.step) + ".beec";
            bee::save_checkpoint((out / name).string(), anchor.params);
            man.note_output((out / name).string());
        }
        std::printf("dumped %zu anchors\n", st.pool.size());
    }

    std::size_t triggers = 0, merges = 0;
    for (const auto& rep : summary.reports) {
        triggers += rep.trigger ? 1 : 0;
        merges += rep.merge.has_value() ? 1 : 0;
    }
    for (std::size_t i = 0; i < summary.domain_names.size(); ++i)
        std::printf("domain %zu %-22s error %6.2f%%\n", i, summary.domain_names[i].c_str(),
                    summary.domain_error_pct[i]);
    std::printf("mean error %.2f%%  (%zu triggers, %zu merges)\n", summary.mean_error_pct,
                triggers, merges);
    if (!summary.boundary_source_acc.empty()) {
        std::printf("source accuracy after each domain:");
        for (const double a : summary.boundary_source_acc) std::printf(" %.4f", a);
        std::printf("\n");
    }

    man.wall_seconds = seconds_since(t0);
    man.save((out / "manifest_run.json").string());
    return 0;
}

// ----------------------------------------------------------------- ablate

struct AblationRow {
    std::string name;
    std::function<void(bee::BeeConfig&)> tweak;
};

std::vector<AblationRow> ablation_rows(const std::string& table) {
    auto preset = [](const char* p) {
        return [p](bee::BeeConfig& c) { bee::apply_preset(c, p); };
    };
    if (table == "components") {
        return {
            {"source-only", preset("source-only")},
            {"entropy", preset("entropy-only")},
            {"entropy+queue",
             [](bee::BeeConfig& c) {
                 bee::apply_preset(c, "entropy-only");
                 c.use_queue = true;
             }},
            {"entropy+mcr",
             [](bee::BeeConfig& c) {
                 bee::apply_preset(c, "bee");
                 c.use_queue = false;
                 c.use_car = false;
             }},
            {"entropy+mcr+queue",
             [](bee::BeeConfig& c) {
                 bee::apply_preset(c, "bee");
                 c.use_car = false;
             }},
            {"bee", preset("bee")},
        };
    }
    if (table == "anchors") {
        auto fixed = [](std::uint64_t n) {
            return [n](bee::BeeConfig& c) {
                bee::apply_preset(c, "bee");
                c.car_mode = bee::CarMode::kFixedInterval;
                c.fixed_interval = n;
            };
        };
        return {
            {"trigger-weighted", preset("bee")},
            {"fixed-40", fixed(40)},
            {"fixed-80", fixed(80)},
            {"fixed-160", fixed(160)},
            {"fixed-320", fixed(320)},
            {"fixed-640", fixed(640)},
            {"source-reset",
             [](bee::BeeConfig& c) {
                 bee::apply_preset(c, "bee");
                 c.car_action = bee::CarAction::kSourceReset;
             }},
            {"average",
             [](bee::BeeConfig& c) {
                 bee::apply_preset(c, "bee");
                 c.car_action = bee::CarAction::kAverage;
             }},
        };
    }
    return {};
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BEE_THREADS")) {
        std::uint64_t cap = 0;
        std::uint64_t acc = 0;
        bool ok = *env != '\0';
        for (const char* p = env; *p; ++p) {
            if (*p < '0' || *p > '9') {
                ok = false;
                break;
            }
            acc = acc * 10 + static_cast<std::uint64_t>(*p - '0');
        }
        cap = ok ? acc : 0;
        if (cap >= 1) n = std::min<std::size_t>(n, cap);
    }
    return std::min(n, std::max<std::size_t>(1, jobs));
}

// One ablation cell: fresh warm-up and stream on a shared source model.
double ablation_cell(const bee::RunConfig& cfg, const Net& source_net, const Data& train) {
    bee::AdaptState<double> st =
        cfg.bee.adapt ? bee::warmup(source_net, train, cfg.bee, cfg.warmup_epochs)
                      : bee::frozen_state(source_net, cfg.bee);
    bee::DomainStream<double> stream(cfg.task<double>(), cfg.schedule(), cfg.bee.seed);
    const bee::Dataset<double>* no_holdout = nullptr;
    const auto summary = bee::run(st, stream, cfg.domain_names(), no_holdout);
    return summary.mean_error_pct;
}

int cmd_ablate(const CommonArgs& common, const std::string& table,
               const std::string& seeds_text) {
    std::vector<std::string> errs;
    const bee::RunConfig base = resolve_config(common, errs);
    std::vector<std::uint64_t> seeds{base.bee.seed};
    if (!seeds_text.empty()) {
        seeds.clear();
        std::stringstream ss(seeds_text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::uint64_t u = 0;
            bool ok = !item.empty();
            for (const char c : item) {
                if (c < '0' || c > '9') {
                    ok = false;
                    break;
                }
                u = u * 10 + static_cast<std::uint64_t>(c - '0');
            }
            if (!ok) {
                errs.push_back("bad --seeds entry: '" + item + "'");
                break;
            }
            seeds.push_back(u);
        }
        if (seeds.empty()) errs.push_back("--seeds must name at least one seed");
    }
    const std::vector<AblationRow> rows = ablation_rows(table);
    if (rows.empty()) errs.push_back("unknown ablation table: " + table + " (components, anchors)");

    // Row configs share the seed's config; validate each combination up front.
    std::vector<bee::RunConfig> row_cfgs;
    for (const AblationRow& row : rows) {
        bee::RunConfig cfg = base;
        row.tweak(cfg.bee);
        for (const std::string& e : cfg.validate())
            errs.push_back("row " + row.name + ": " + e);
        row_cfgs.push_back(std::move(cfg));
    }
    if (!errs.empty()) {
        print_errors(errs);
        return 1;
    }

    const fs::path out = common.out;
    const std::string csv_name = "ablation_" + table + ".csv";
    if (!claim_outputs(out, {csv_name, "manifest_ablate.json"}, common.force)) return 1;
    const auto t0 = std::chrono::steady_clock::now();

    // The source model depends only on the seed, so every row shares it.
    std::vector<std::pair<Data, Net>> per_seed;
    for (const std::uint64_t seed : seeds) {
        bee::RunConfig cfg = base;
        cfg.bee.seed = seed;
        auto [train, holdout] = bee::gen_source(cfg.task<double>());
        Net net = train_source_net(cfg, train);
        per_seed.emplace_back(std::move(train), std::move(net));
    }

    struct Job {
        std::size_t row, seed;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({r, s});
    std::vector<std::vector<double>> grid(rows.size(), std::vector<double>(seeds.size(), 0.0));

    std::mutex take;
    std::size_t next = 0;
    std::vector<std::string> job_errors;
    auto work = [&]() {
        for (;;) {
            std::size_t j;
            {
                const std::lock_guard<std::mutex> lock(take);
                if (next >= jobs.size()) return;
                j = next++;
            }
            const Job job = jobs[j];
            bee::RunConfig cfg = row_cfgs[job.row];
            cfg.bee.seed = seeds[job.seed];
            try {
                grid[job.row][job.seed] =
                    ablation_cell(cfg, per_seed[job.seed].second, per_seed[job.seed].first);
            } catch (const std::exception& e) {
                const std::lock_guard<std::mutex> lock(take);
                job_errors.push_back("row " + rows[job.row].name + " seed " +
                                     std::to_string(seeds[job.seed]) + ": " + e.what());
            }
        }
    };
    const std::size_t nthreads = worker_count(jobs.size());
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i + 1 < nthreads; ++i) threads.emplace_back(work);
    work();
    for (std::thread& t : threads) t.join();
    if (!job_errors.empty()) {
        print_errors(job_errors);
        return 1;
    }

    bee::AblationTable result;
    result.seeds = seeds;
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t s = 0; s < seeds.size(); ++s)
            result.add(rows[r].name, grid[r][s]);
    const std::string csv = result.csv();
    bee::write_text_file((out / csv_name).string(), csv);
    std::printf("%s", csv.c_str());

    bee::RunManifest man;
    man.command = "ablate";
    man.seed = base.bee.seed;
    man.config_text = bee::config_to_text(base);
    if (!common.config_path.empty()) man.note_input(common.config_path);
    man.note_output((out / csv_name).string());
    man.wall_seconds = seconds_since(t0);
    man.save((out / "manifest_ablate.json").string());
    return 0;
}

// ------------------------------------------------------------ eval-source

int cmd_eval_source(const CommonArgs& common, const std::string& checkpoint) {
    std::vector<std::string> errs;
    const bee::RunConfig cfg = resolve_config(common, errs);
    for (const std::string& e : cfg.validate()) errs.push_back(e);
    std::string path = checkpoint;
    if (path.empty()) {
        const fs::path warmed = fs::path(common.out) / "warmed.beec";
        const fs::path source = fs::path(common.out) / "source.beec";
        if (fs::exists(warmed)) path = warmed.string();
        else if (fs::exists(source)) path = source.string();
        else errs.push_back("no checkpoint found under " + common.out +
                            " (pass --checkpoint PATH)");
    }
    if (!errs.empty()) {
        print_errors(errs);
        return 1;
    }

    const auto [train, holdout] = bee::gen_source(cfg.task<double>());
    Net net = bee::make_network<double>(cfg.dim, cfg.widths, cfg.classes, cfg.shallow);
    const auto loaded = bee::load_checkpoint<double>(path);
    // Works for both plain source checkpoints and warmed states: the student
    // parameters sit under their bare names in either layout.
    for (auto& [name, t] : net.params.items) t = loaded.get(name);
    const double acc = bee::eval_source_holdout(net, net.params, holdout);
    std::printf("source holdout accuracy: %.4f (%s)\n", acc, path.c_str());
    return 0;
}

// ------------------------------------------------------------------- plot

const char* kPalette[] = {"#2266bb", "#cc4444", "#22aa66", "#aa7722",
                          "#7722aa", "#22aabb", "#888888", "#bb2288"};

// Reads a forgetting CSV (after_domain,source_acc_pct) back into a series.
bool read_forgetting_csv(const std::string& path, std::vector<std::string>& names,
                         std::vector<double>& acc_pct) {
    std::istringstream is(bee::read_text_file(path));
    std::string line;
    if (!std::getline(is, line) || line != "after_domain,source_acc_pct") return false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const std::size_t comma = line.rfind(',');
        if (comma == std::string::npos) return false;
        names.push_back(line.substr(0, comma));
        try {
            acc_pct.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            return false;
        }
    }
    return !names.empty();
}

int cmd_plot(const CommonArgs& common, const std::vector<std::string>& inputs) {
    std::vector<std::string> metrics_files, csv_files, errs;
    for (const std::string& p : inputs) {
        if (!fs::exists(p)) {
            errs.push_back("no such file: " + p);
        } else if (fs::path(p).extension() == ".csv") {
            csv_files.push_back(p);
        } else {
            metrics_files.push_back(p);
        }
    }
    if (metrics_files.empty() && csv_files.empty())
        errs.push_back("nothing to plot: pass metrics .jsonl and/or forgetting .csv files");
    if (!errs.empty()) {
        print_errors(errs);
        return 1;
    }

    // Bare stems collide when every run names its file metrics.jsonl, so
    // disambiguate with the parent directory (then an index if still tied).
    auto labels_for = [](const std::vector<std::string>& paths) {
        std::vector<std::string> labels;
        std::map<std::string, std::size_t> seen;
        for (const std::string& p : paths) {
            labels.push_back(fs::path(p).stem().string());
            ++seen[labels.back()];
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (seen[labels[i]] < 2) continue;
            const std::string parent = fs::path(paths[i]).parent_path().filename().string();
            if (!parent.empty()) labels[i] = parent + "_" + labels[i];
        }
        std::map<std::string, std::size_t> still;
        for (const std::string& l : labels) ++still[l];
        std::map<std::string, std::size_t> next;
        for (std::string& l : labels)
            if (still[l] > 1) l += "_" + std::to_string(++next[l]);
        return labels;
    };
    const std::vector<std::string> metric_labels = labels_for(metrics_files);
    const std::vector<std::string> csv_labels = labels_for(csv_files);

    std::vector<std::string> outputs;
    for (const std::string& label : metric_labels) outputs.push_back("loss_" + label + ".svg");
    if (metrics_files.size() > 1) outputs.push_back("loss_overlay.svg");
    if (!csv_files.empty()) outputs.push_back("forgetting.svg");
    std::vector<std::string> claim = outputs;
    claim.push_back("manifest_plot.json");
    const fs::path out = common.out;
    if (!claim_outputs(out, claim, common.force)) return 1;
    const auto t0 = std::chrono::steady_clock::now();

    bee::RunManifest man;
    man.command = "plot";
    man.seed = 0;
    if (!common.config_path.empty()) man.note_input(common.config_path);

    std::vector<bee::svg::Series> overlay;
    for (std::size_t i = 0; i < metrics_files.size(); ++i) {
        const auto reports = bee::read_metrics_jsonl(metrics_files[i]);
        if (reports.empty()) {
            std::fprintf(stderr, "error: %s holds no metrics lines\n", metrics_files[i].c_str());
            return 1;
        }
        const std::string& label = metric_labels[i];
        const std::string svg = bee::plot_loss(reports, "consistency loss: " + label);
        bee::write_text_file((out / ("loss_" + label + ".svg")).string(), svg);
        man.note_input(metrics_files[i]);
        man.note_output((out / ("loss_" + label + ".svg")).string());

        bee::svg::Series s{label, kPalette[i % (sizeof kPalette / sizeof *kPalette)], {}, {}};
        for (const auto& rep : reports) {
            s.x.push_back(static_cast<double>(rep.step));
            s.y.push_back(rep.mcr_loss);
        }
        overlay.push_back(std::move(s));
    }
    if (overlay.size() > 1) {
        const std::string svg =
            bee::svg::line_chart("consistency loss overlay", "step", "loss", overlay);
        bee::write_text_file((out / "loss_overlay.svg").string(), svg);
        man.note_output((out / "loss_overlay.svg").string());
    }

    if (!csv_files.empty()) {
        std::vector<bee::svg::Series> series;
        std::vector<double> marks;
        for (std::size_t i = 0; i < csv_files.size(); ++i) {
            std::vector<std::string> names;
            std::vector<double> acc;
            if (!read_forgetting_csv(csv_files[i], names, acc)) {
                std::fprintf(stderr, "error: %s is not a forgetting table\n",
                             csv_files[i].c_str());
                return 1;
            }
            bee::svg::Series s{csv_labels[i],
                               kPalette[i % (sizeof kPalette / sizeof *kPalette)], {}, {}};
            for (std::size_t k = 0; k < acc.size(); ++k) {
                s.x.push_back(static_cast<double>(k + 1));
                s.y.push_back(acc[k]);
                if (i == 0) marks.push_back(static_cast<double>(k + 1));
            }
            series.push_back(std::move(s));
            man.note_input(csv_files[i]);
        }
        const std::string svg = bee::svg::line_chart("source accuracy over the stream",
                                                     "domains seen", "accuracy %", series, marks);
        bee::write_text_file((out / "forgetting.svg").string(), svg);
        man.note_output((out / "forgetting.svg").string());
    }

    man.wall_seconds = seconds_since(t0);
    man.save((out / "manifest_plot.json").string());
    std::printf("wrote %zu charts to %s\n", outputs.size(), out.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continual test-time adaptation workbench for drifting streams"};
    app.require_subcommand(1);

    CommonArgs gen_common;
    std::size_t gen_domains = 0;
    CLI::App* gen = app.add_subcommand("gen-data", "write source splits and the drift stream");
    add_common(gen, gen_common);
    gen->add_option("--domains", gen_domains, "use only the first N scheduled domains");

    CommonArgs train_common;
    CLI::App* train = app.add_subcommand("train-source", "train the source model");
    add_common(train, train_common);

    CommonArgs warm_common;
    CLI::App* warm = app.add_subcommand("warmup", "build the adaptation state");
    add_common(warm, warm_common);

    CommonArgs run_common;
    RunFlags run_flags;
    CLI::App* runc = app.add_subcommand("run", "adapt over the drift stream");
    add_common(runc, run_common);
    runc->add_option("--preset", run_flags.preset,
                     "bee, entropy-only, source-only, pred-consistency");
    runc->add_flag("--no-car", run_flags.no_car, "disable anchor replay");
    runc->add_flag("--no-queue", run_flags.no_queue, "disable the sample queue");
    runc->add_option("--mcr-blocks", run_flags.mcr_blocks, "active codebook blocks, e.g. 2,3,4");
    runc->add_option("--car-strategy", run_flags.car_strategy,
                     "trigger, fixed:N, source-reset, average, weighted");
    runc->add_flag("--dump-anchors", run_flags.dump_anchors, "save the anchor pool");
    runc->add_flag("--auto", run_flags.auto_deps, "produce missing checkpoints first");

    CommonArgs abl_common;
    std::string abl_table = "components";
    std::string abl_seeds;
    CLI::App* abl = app.add_subcommand("ablate", "sweep switch combinations");
    add_common(abl, abl_common);
    abl->add_option("--table", abl_table, "components or anchors")->capture_default_str();
    abl->add_option("--seeds", abl_seeds, "comma-separated seeds (default: the root seed)");

    CommonArgs eval_common;
    std::string eval_checkpoint;
    CLI::App* eval = app.add_subcommand("eval-source", "holdout accuracy of a checkpoint");
    add_common(eval, eval_common);
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path (default: out dir)");

    CommonArgs plot_common;
    std::vector<std::string> plot_inputs;
    CLI::App* plot = app.add_subcommand("plot", "render metrics and forgetting charts");
    add_common(plot, plot_common);
    plot->add_option("files", plot_inputs, "metrics .jsonl and forgetting .csv files");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_common, gen_domains);
        if (train->parsed()) return cmd_train_source(train_common);
        if (warm->parsed()) return cmd_warmup(warm_common);
        if (runc->parsed()) return cmd_run(run_common, run_flags);
        if (abl->parsed()) return cmd_ablate(abl_common, abl_table, abl_seeds);
        if (eval->parsed()) return cmd_eval_source(eval_common, eval_checkpoint);
        if (plot->parsed()) return cmd_plot(plot_common, plot_inputs);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
