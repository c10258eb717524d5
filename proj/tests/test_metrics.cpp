// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bee/metrics.hpp"
#include "bee/svg.hpp"

using bee::AblationTable;
using bee::MergeEvent;
using bee::RunManifest;
using bee::StepReport;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t count = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++count;
    return count;
}

// Minimal structural XML check: tags nest, attribute quotes pair up, and no
// bare angle brackets appear in text (the writer escapes them).
bool well_formed_xml(const std::string& s) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '>') return false;
        if (s[i] != '<') {
            ++i;
            continue;
        }
        const std::size_t close = s.find('>', i);
        if (close == std::string::npos) return false;
        const std::string tag = s.substr(i + 1, close - i - 1);
        i = close + 1;
        if (tag.empty()) return false;
        if (tag.front() == '?') {
            if (tag.back() != '?') return false;
            continue;
        }
        if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
        if (tag.front() == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) return false;
            stack.pop_back();
        } else if (tag.back() != '/') {
            stack.push_back(tag.substr(0, tag.find_first_of(" \t\n/")));
        }
    }
    return stack.empty();
}

StepReport plain_report() {
    StepReport rep;
    rep.step = 1;
    return rep;
}

StepReport merged_report() {
    StepReport rep;
    rep.step = 3;
    rep.domain_id = 1;
    rep.batch_error_pct = 12.5;
    rep.mcr_loss = 0.25;
    rep.ent_loss = 1.5;
    rep.trigger = true;
    MergeEvent ev;
    ev.anchor_steps = {30, 60};
    ev.weights = {0.5, 0.25, 0.25};
    rep.merge = ev;
    rep.n_anchors = 2;
    return rep;
}

}  // namespace

TEST_CASE("step reports serialize to the documented JSON shape") {
    CHECK(bee::step_to_json(plain_report()).dump() ==
          "{\"step\":1,\"domain_id\":0,\"batch_error_pct\":-1.0,\"mcr_loss\":0.0,"
          "\"ent_loss\":0.0,\"trigger\":false,\"n_anchors\":0}");
    CHECK(bee::step_to_json(merged_report()).dump() ==
          "{\"step\":3,\"domain_id\":1,\"batch_error_pct\":12.5,\"mcr_loss\":0.25,"
          "\"ent_loss\":1.5,\"trigger\":true,\"merge\":{\"anchors\":[30,60],"
          "\"weights\":[0.5,0.25,0.25]},\"n_anchors\":2}");
}

TEST_CASE("step reports parse back from their JSON form") {
    const StepReport rep =
        bee::step_from_json(bee::step_to_json(merged_report()));
    CHECK(rep.step == 3);
    CHECK(rep.domain_id == 1);
    CHECK(rep.batch_error_pct == 12.5);
    CHECK(rep.mcr_loss == 0.25);
    CHECK(rep.ent_loss == 1.5);
    CHECK(rep.trigger);
    REQUIRE(rep.merge.has_value());
    CHECK(rep.merge->anchor_steps == std::vector<std::uint64_t>{30, 60});
    CHECK(rep.merge->weights == std::vector<double>{0.5, 0.25, 0.25});
    CHECK(rep.n_anchors == 2);

    const StepReport bare = bee::step_from_json(bee::step_to_json(plain_report()));
    CHECK_FALSE(bare.merge.has_value());
    CHECK(bare.batch_error_pct == -1.0);
}

TEST_CASE("metrics files round trip line by line") {
    const std::string path = "test_metrics_tmp.jsonl";
    std::vector<StepReport> reports{plain_report(), merged_report()};
    reports[0].batch_error_pct = 31.25;
    bee::write_metrics_jsonl(path, reports);

    const auto back = bee::read_metrics_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].step == 1);
    CHECK(back[0].batch_error_pct == 31.25);
    CHECK_FALSE(back[0].merge.has_value());
    CHECK(back[1].step == 3);
    REQUIRE(back[1].merge.has_value());
    CHECK(back[1].merge->weights == std::vector<double>{0.5, 0.25, 0.25});
    std::remove(path.c_str());

    CHECK_THROWS(bee::read_metrics_jsonl("no_such_metrics.jsonl"));
    CHECK_THROWS(bee::write_metrics_jsonl("no_such_dir/metrics.jsonl", reports));

    {
        std::ofstream os(path);
        os << "{not json}\n";
    }
    CHECK_THROWS(bee::read_metrics_jsonl(path));
    std::remove(path.c_str());
}

TEST_CASE("the summary table lists each domain and closes with the mean") {
    const std::string csv =
        bee::summary_csv({"additive_noise:2", "rotation:3"}, {25.0, 12.5}, 18.75);
    CHECK(csv ==
          "domain_name,error_pct\n"
          "additive_noise:2,25.000000\n"
          "rotation:3,12.500000\n"
          "mean,18.750000\n");
    CHECK_THROWS(bee::summary_csv({"a"}, {1.0, 2.0}, 1.5));
}

TEST_CASE("the forgetting table reports accuracy in percent") {
    const std::string csv = bee::forgetting_csv({"noise", "mask"}, {0.9875, 1.0});
    CHECK(csv ==
          "after_domain,source_acc_pct\n"
          "noise,98.750000\n"
          "mask,100.000000\n");
    CHECK_THROWS(bee::forgetting_csv({"noise"}, {0.5, 0.5}));
}

TEST_CASE("the ablation table keeps insertion order and averages across seeds") {
    AblationTable table;
    table.seeds = {1, 2};
    table.add("full", 10.0);
    table.add("full", 20.0);
    table.add("ablated", 30.0);
    table.add("ablated", 50.0);
    CHECK(table.csv() ==
          "variant,seed1,seed2,mean\n"
          "full,10.000000,20.000000,15.000000\n"
          "ablated,30.000000,50.000000,40.000000\n");

    AblationTable ragged;
    ragged.seeds = {1, 2};
    ragged.add("short", 5.0);
    CHECK_THROWS(ragged.csv());
}

TEST_CASE("run manifests record the config and hash every file they touch") {
    const std::string in_path = "test_manifest_in.txt";
    const std::string out_path = "test_manifest_out.txt";
    const std::string manifest_path = "test_manifest.json";
    bee::write_text_file(in_path, "hello\n");
    bee::write_text_file(out_path, "result,1\n");

    RunManifest man;
    man.command = "run";
    man.seed = 42;
    man.config_text = "loop.lr = 0.001\n";
    man.wall_seconds = 1.25;
    man.note_input(in_path);
    man.note_output(out_path);
    CHECK(man.inputs.at(in_path) == bee::to_hex(bee::fnv1a64("hello\n")));
    CHECK(man.outputs.at(out_path) == bee::to_hex(bee::fnv1a64("result,1\n")));

    man.save(manifest_path);
    const auto j = nlohmann::ordered_json::parse(bee::read_text_file(manifest_path));
    CHECK(j.at("command") == "run");
    CHECK(j.at("seed") == 42);
    CHECK(j.at("config") == "loop.lr = 0.001\n");
    CHECK(j.at("inputs").at(in_path) == man.inputs.at(in_path));
    CHECK(j.at("outputs").at(out_path) == man.outputs.at(out_path));
    CHECK(j.at("wall_seconds") == 1.25);
    // field order is part of the format
    const std::string raw = bee::read_text_file(manifest_path);
    CHECK(raw.find("\"command\"") < raw.find("\"seed\""));
    CHECK(raw.find("\"seed\"") < raw.find("\"config\""));
    CHECK(raw.find("\"inputs\"") < raw.find("\"outputs\""));

    std::remove(in_path.c_str());
    std::remove(out_path.c_str());
    std::remove(manifest_path.c_str());
    CHECK_THROWS(bee::read_text_file("no_such_text_file.txt"));
    CHECK_THROWS(bee::write_text_file("no_such_dir/file.txt", "x"));
}

TEST_CASE("svg text escaping covers the reserved characters") {
    CHECK(bee::svg::escape("a<b>&\"c") == "a&lt;b&gt;&amp;&quot;c");
    CHECK(bee::svg::escape("plain") == "plain");
}

TEST_CASE("line charts are well-formed and mark only in-range positions") {
    bee::svg::Series up{"up & away", "#2266bb", {0, 5, 10}, {1, 2, 3}};
    bee::svg::Series down{"down", "#22aa66", {0, 5, 10}, {3, 2, 1}};
    const std::string chart =
        bee::svg::line_chart("test <chart>", "step", "loss", {up, down}, {2.0, 5.0, 99.0});

    CHECK(chart.rfind("<?xml", 0) == 0);
    CHECK(well_formed_xml(chart));
    CHECK(count_of(chart, "<polyline") == 2);
    CHECK(count_of(chart, "stroke=\"#cc4444\"") == 2);  // the mark at 99 is off-scale
    CHECK(chart.find("up &amp; away") != std::string::npos);
    CHECK(chart.find("test &lt;chart&gt;") != std::string::npos);
    CHECK(chart.find(">step<") != std::string::npos);
    CHECK(chart.find(">loss<") != std::string::npos);

    bee::svg::Series empty{"none", "#000000", {}, {}};
    const std::string no_lines = bee::svg::line_chart("t", "x", "y", {empty});
    CHECK(well_formed_xml(no_lines));
    CHECK(count_of(no_lines, "<polyline") == 0);

    bee::svg::Series ragged{"bad", "#000000", {1, 2}, {1}};
    CHECK_THROWS(bee::svg::line_chart("t", "x", "y", {ragged}));
}

TEST_CASE("the loss plot marks triggers and names both loss series") {
    std::vector<StepReport> reports;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        StepReport rep;
        rep.step = s;
        rep.mcr_loss = 1.0 + 0.1 * static_cast<double>(s);
        rep.ent_loss = 0.5;
        rep.trigger = (s == 2 || s == 4);
        reports.push_back(rep);
    }
    const std::string chart = bee::plot_loss(reports);
    CHECK(well_formed_xml(chart));
    CHECK(count_of(chart, "stroke=\"#cc4444\"") == 2);
    CHECK(chart.find("mcr loss") != std::string::npos);
    CHECK(chart.find("entropy loss") != std::string::npos);
}

TEST_CASE("the forgetting plot marks every domain boundary") {
    const std::string chart =
        bee::plot_forgetting({"noise", "rotation", "mask"}, {1.0, 0.95, 0.875});
    CHECK(well_formed_xml(chart));
    CHECK(count_of(chart, "stroke=\"#cc4444\"") == 3);
    CHECK(chart.find("source acc %") != std::string::npos);
    CHECK_THROWS(bee::plot_forgetting({"noise"}, {0.5, 0.6}));
}
