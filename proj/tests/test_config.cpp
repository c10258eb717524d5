// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bee/config.hpp"

using bee::CarAction;
using bee::CarMode;
using bee::CorruptionKind;
using bee::RunConfig;

namespace {

bool mentions(const std::vector<std::string>& errs, const std::string& part) {
    return std::any_of(errs.begin(), errs.end(), [&](const std::string& e) {
        return e.find(part) != std::string::npos;
    });
}

}  // namespace

TEST_CASE("the default run configuration is valid and self-consistent") {
    const RunConfig cfg;
    CHECK(cfg.validate().empty());

    const auto task = cfg.task<double>();
    CHECK(task.dim == cfg.dim);
    CHECK(task.classes == cfg.classes);
    CHECK(task.sigma0 == cfg.sigma0);
    CHECK(task.train_n == cfg.train_n);
    CHECK(task.seed == cfg.bee.seed);

    const auto sched = cfg.schedule();
    CHECK(sched.domains.size() == cfg.domains.size());
    CHECK(sched.batches_per_domain == cfg.batches_per_domain);
    CHECK(sched.batch_size == cfg.bee.batch_size);

    const auto names = cfg.domain_names();
    REQUIRE(names.size() == 8);
    CHECK(names[0] == "additive_noise:2");
    CHECK(names[7] == "coordinate_mask:5");
}

TEST_CASE("setting a key routes the value to the right field") {
    RunConfig cfg;
    CHECK(bee::set_config_key(cfg, "loop.lr", "0.05").empty());
    CHECK(cfg.bee.lr == 0.05);
    CHECK(bee::set_config_key(cfg, "mcr.active_blocks", "1,3").empty());
    CHECK(cfg.bee.active_blocks == std::vector<std::size_t>{1, 3});
    CHECK(bee::set_config_key(cfg, "car.mode", "fixed").empty());
    CHECK(cfg.bee.car_mode == CarMode::kFixedInterval);
    CHECK(bee::set_config_key(cfg, "car.action", "source_reset").empty());
    CHECK(cfg.bee.car_action == CarAction::kSourceReset);
    CHECK(bee::set_config_key(cfg, "car.action", "average").empty());
    CHECK(cfg.bee.car_action == CarAction::kAverage);
    CHECK(bee::set_config_key(cfg, "queue.enabled", "no").empty());
    CHECK_FALSE(cfg.bee.use_queue);
    CHECK(bee::set_config_key(cfg, "net.widths", "8, 16").empty());
    CHECK(cfg.widths == std::vector<std::size_t>{8, 16});
    CHECK(bee::set_config_key(cfg, "stream.domains", "rotation:1, mean_shift:4").empty());
    REQUIRE(cfg.domains.size() == 2);
    CHECK(cfg.domains[0] == std::pair<CorruptionKind, int>{CorruptionKind::kRotation, 1});
    CHECK(cfg.domains[1] == std::pair<CorruptionKind, int>{CorruptionKind::kMeanShift, 4});
    CHECK(bee::set_config_key(cfg, "run.seed", "12345678901").empty());
    CHECK(cfg.bee.seed == 12345678901ull);
}

TEST_CASE("unknown keys and malformed values are reported, not applied") {
    RunConfig cfg;
    const std::string unknown = bee::set_config_key(cfg, "loop.gamma", "2");
    CHECK(unknown.find("unknown config key: loop.gamma") != std::string::npos);

    CHECK(bee::set_config_key(cfg, "loop.lr", "fast").find("invalid value") != std::string::npos);
    CHECK(cfg.bee.lr == 1e-3);
    CHECK_FALSE(bee::set_config_key(cfg, "loop.batch_size", "-3").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "loop.batch_size", "3.5").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "queue.enabled", "maybe").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "car.mode", "sometimes").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "car.action", "blend").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "mcr.active_blocks", "1,a").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "stream.domains", "rotation").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "stream.domains", "rotation:9").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "stream.domains", "fog:2").empty());
    CHECK_FALSE(bee::set_config_key(cfg, "stream.domains", "").empty());
}

TEST_CASE("config files parse with comments and report every problem with line numbers") {
    const std::string text =
        "# experiment settings\n"
        "loop.lr = 0.01\n"
        "\n"
        "mcr.prototypes = 32   # inline comment\n"
        "loop.batch_size 64\n"
        "loop.gamma = 2\n"
        "mcr.tau_s = warm\n"
        "loop.lr = 0.02\n"
        "= 7\n";
    std::vector<std::string> errors;
    const RunConfig cfg = bee::parse_config(text, errors);

    CHECK(cfg.bee.lr == 0.01);
    CHECK(cfg.bee.prototypes == 32);

    REQUIRE(errors.size() == 5);
    CHECK(mentions(errors, "line 5: expected key = value"));
    CHECK(mentions(errors, "line 6: unknown config key: loop.gamma"));
    CHECK(mentions(errors, "line 7: invalid value for mcr.tau_s"));
    CHECK(mentions(errors, "line 8: duplicate key loop.lr (first set on line 2)"));
    CHECK(mentions(errors, "line 9: empty key"));
}

TEST_CASE("a clean config file parses with no errors") {
    const std::string text =
        "loop.lr = 0.005\n"
        "car.eta = 2.5\n"
        "net.shallow = 1,2\n"
        "run.adapt = false\n";
    std::vector<std::string> errors;
    const RunConfig cfg = bee::parse_config(text, errors);
    CHECK(errors.empty());
    CHECK(cfg.bee.lr == 0.005);
    CHECK(cfg.bee.z_threshold == 2.5);
    CHECK(cfg.shallow == std::vector<std::size_t>{1, 2});
    CHECK_FALSE(cfg.bee.adapt);
}

TEST_CASE("the canonical text form round trips exactly") {
    RunConfig cfg;
    cfg.bee.lr = 0.05;
    cfg.bee.active_blocks = {1, 3};
    cfg.bee.car_mode = CarMode::kFixedInterval;
    cfg.bee.fixed_interval = 80;
    cfg.bee.car_action = CarAction::kSourceReset;
    cfg.bee.use_mcr = false;
    cfg.bee.use_pred_consistency = true;
    cfg.bee.avg_in_prob_space = false;
    cfg.bee.seed = 99;
    cfg.dim = 16;
    cfg.classes = 5;
    cfg.widths = {8, 16};
    cfg.shallow = {2};
    cfg.domains = {{CorruptionKind::kScaling, 2}, {CorruptionKind::kCoordinateMask, 5}};
    cfg.batches_per_domain = 7;

    const std::string text = bee::config_to_text(cfg);
    std::vector<std::string> errors;
    const RunConfig back = bee::parse_config(text, errors);
    REQUIRE(errors.empty());
    CHECK(bee::config_to_text(back) == text);

    CHECK(back.bee.lr == cfg.bee.lr);
    CHECK(back.bee.active_blocks == cfg.bee.active_blocks);
    CHECK(back.bee.car_mode == cfg.bee.car_mode);
    CHECK(back.bee.fixed_interval == cfg.bee.fixed_interval);
    CHECK(back.bee.car_action == cfg.bee.car_action);
    CHECK(back.bee.use_mcr == cfg.bee.use_mcr);
    CHECK(back.bee.use_pred_consistency == cfg.bee.use_pred_consistency);
    CHECK(back.bee.avg_in_prob_space == cfg.bee.avg_in_prob_space);
    CHECK(back.bee.seed == cfg.bee.seed);
    CHECK(back.dim == cfg.dim);
    CHECK(back.classes == cfg.classes);
    CHECK(back.widths == cfg.widths);
    CHECK(back.shallow == cfg.shallow);
    CHECK(back.domains == cfg.domains);
    CHECK(back.batches_per_domain == cfg.batches_per_domain);

    const std::string default_text = bee::config_to_text(RunConfig{});
    std::vector<std::string> errors2;
    const RunConfig dback = bee::parse_config(default_text, errors2);
    REQUIRE(errors2.empty());
    CHECK(bee::config_to_text(dback) == default_text);
}

TEST_CASE("config files load from disk and missing files are reported") {
    const std::string path = "test_config_tmp.cfg";
    {
        std::ofstream os(path);
        os << "loop.lr = 0.25\ntask.dim = 12\n";
    }
    std::vector<std::string> errors;
    const RunConfig cfg = bee::load_config(path, errors);
    CHECK(errors.empty());
    CHECK(cfg.bee.lr == 0.25);
    CHECK(cfg.dim == 12);
    std::remove(path.c_str());

    std::vector<std::string> missing;
    bee::load_config("does_not_exist.cfg", missing);
    REQUIRE(missing.size() == 1);
    CHECK(missing[0].find("cannot open config file") != std::string::npos);
}

TEST_CASE("run configuration validation covers the task, network and stream") {
    RunConfig cfg;
    cfg.classes = 40;  // exceeds dim
    cfg.dim = 32;
    cfg.sigma0 = -0.5;
    cfg.widths = {};
    cfg.domains.push_back({CorruptionKind::kRotation, 7});
    cfg.batches_per_domain = 0;
    cfg.bee.lr = -1;

    const auto errs = cfg.validate();
    CHECK(mentions(errs, "task.classes must not exceed task.dim"));
    CHECK(mentions(errs, "task.sigma0 must be nonnegative"));
    CHECK(mentions(errs, "net.widths must not be empty"));
    CHECK(mentions(errs, "domain severity must be 0..5"));
    CHECK(mentions(errs, "stream.batches_per_domain must be >= 1"));
    CHECK(mentions(errs, "lr must be positive"));  // loop errors bubble up

    RunConfig shallow_bad;
    shallow_bad.widths = {8, 8};
    shallow_bad.shallow = {3};
    CHECK(mentions(shallow_bad.validate(), "net.shallow index 3 out of range"));

    RunConfig tiny;
    tiny.train_n = 10;  // smaller than one stream batch
    CHECK(mentions(tiny.validate(), "task.train_n must cover at least one batch"));
}
