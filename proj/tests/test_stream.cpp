// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bee/stream.hpp"

using bee::CorruptionKind;
using bee::CorruptionSpec;
using bee::Dataset;
using bee::DomainSchedule;
using bee::DomainStream;
using bee::SourceTask;
using bee::StreamBatch;
using bee::Tensor;

namespace {

SourceTask<double> small_task() {
    SourceTask<double> t;
    t.dim = 8;
    t.classes = 4;
    t.sigma0 = 0.5;
    t.center_scale = 3.0;
    t.train_n = 40;
    t.holdout_n = 40;
    t.seed = 7;
    return t;
}

// Nearest class center by squared distance.
double nearest_center_accuracy(const Tensor<double>& centers, const Tensor<double>& x,
                               const std::vector<std::uint32_t>& y) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < x.shape[0]; ++i) {
        double best = 0.0;
        std::size_t arg = 0;
        for (std::size_t c = 0; c < centers.shape[0]; ++c) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < x.shape[1]; ++j) {
                const double d = x.at(i, j) - centers.at(c, j);
                d2 += d * d;
            }
            if (c == 0 || d2 < best) {
                best = d2;
                arg = c;
            }
        }
        if (arg == y[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(x.shape[0]);
}

std::string tmp_path(const char* name) { return std::string("/tmp/bee_stream_") + name; }

}  // namespace

TEST_CASE("class centers are orthogonal with the requested scale") {
    SourceTask<double> t = small_task();
    Tensor<double> c = bee::class_centers(t);
    REQUIRE(c.shape[0] == 4);
    REQUIRE(c.shape[1] == 8);
    for (std::size_t i = 0; i < 4; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < 8; ++j) norm += c.at(i, j) * c.at(i, j);
        CHECK(std::sqrt(norm) == Catch::Approx(3.0).margin(1e-9));
        for (std::size_t k = 0; k < i; ++k) {
            double dot = 0.0;
            for (std::size_t j = 0; j < 8; ++j) dot += c.at(i, j) * c.at(k, j);
            CHECK(dot == Catch::Approx(0.0).margin(1e-9));
        }
    }

    SECTION("the draw is a pure function of the seed") {
        Tensor<double> again = bee::class_centers(t);
        CHECK(again.data == c.data);
        t.seed = 8;
        Tensor<double> other = bee::class_centers(t);
        CHECK(other.data != c.data);
    }
    SECTION("more classes than dimensions is rejected") {
        t.classes = 9;
        CHECK_THROWS(bee::class_centers(t));
    }
}

TEST_CASE("source generation is deterministic, labeled, and balanced") {
    SourceTask<double> t = small_task();
    auto [train, holdout] = bee::gen_source(t);
    REQUIRE(train.size() == 40);
    REQUIRE(holdout.size() == 40);
    REQUIRE(train.x.shape[1] == 8);
    CHECK(train.classes == 4);
    CHECK(train.domain.empty());

    std::vector<int> counts(4, 0);
    for (std::uint32_t label : train.y) {
        REQUIRE(label < 4);
        ++counts[label];
    }
    for (int c : counts) CHECK(c == 10);  // 40 samples over 4 classes

    auto [train2, holdout2] = bee::gen_source(t);
    CHECK(train2.x.data == train.x.data);
    CHECK(train2.y == train.y);
    CHECK(holdout2.x.data == holdout.x.data);

    SECTION("train and holdout are different draws") {
        CHECK(train.x.data != holdout.x.data);
    }
    SECTION("degenerate tasks are rejected") {
        SourceTask<double> bad = t;
        bad.dim = 1;
        CHECK_THROWS(bee::gen_source(bad));
        bad = t;
        bad.classes = 1;
        CHECK_THROWS(bee::gen_source(bad));
        bad = t;
        bad.sigma0 = -0.5;
        CHECK_THROWS(bee::gen_source(bad));
    }
}

TEST_CASE("zero spread collapses every sample onto its class center") {
    SourceTask<double> t = small_task();
    t.sigma0 = 0.0;
    Tensor<double> centers = bee::class_centers(t);
    auto [train, holdout] = bee::gen_source(t);
    for (std::size_t i = 0; i < train.size(); ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(train.x.at(i, j) == centers.at(train.y[i], j));
}

TEST_CASE("a nearest-center classifier nails the clean source task") {
    SourceTask<double> t = small_task();
    t.holdout_n = 400;
    Tensor<double> centers = bee::class_centers(t);
    auto [train, holdout] = bee::gen_source(t);
    CHECK(nearest_center_accuracy(centers, holdout.x, holdout.y) >= 0.95);
}

TEST_CASE("every corruption at severity zero is the identity") {
    SourceTask<double> t = small_task();
    auto [train, holdout] = bee::gen_source(t);
    const CorruptionKind kinds[5] = {CorruptionKind::kAdditiveNoise, CorruptionKind::kRotation,
                                     CorruptionKind::kScaling, CorruptionKind::kCoordinateMask,
                                     CorruptionKind::kMeanShift};
    for (const CorruptionKind k : kinds) {
        CorruptionSpec spec;
        spec.kind = k;
        spec.severity = 0;
        spec.seed = 11;
        Tensor<double> out = bee::corrupt(train.x, spec, t.sigma0);
        INFO(bee::corruption_name(k));
        CHECK(out.data == train.x.data);
    }
}

TEST_CASE("corruption output is a pure function of the spec") {
    SourceTask<double> t = small_task();
    auto [train, holdout] = bee::gen_source(t);
    CorruptionSpec spec;
    spec.kind = CorruptionKind::kAdditiveNoise;
    spec.severity = 3;
    spec.seed = 5;
    Tensor<double> a = bee::corrupt(train.x, spec, t.sigma0);
    Tensor<double> b = bee::corrupt(train.x, spec, t.sigma0);
    CHECK(a.data == b.data);
    CHECK(a.data != train.x.data);
    spec.seed = 6;
    Tensor<double> c = bee::corrupt(train.x, spec, t.sigma0);
    CHECK(c.data != a.data);
}

TEST_CASE("rotation preserves row norms") {
    SourceTask<double> t = small_task();
    auto [train, holdout] = bee::gen_source(t);
    CorruptionSpec spec;
    spec.kind = CorruptionKind::kRotation;
    spec.severity = 3;
    spec.seed = 19;
    Tensor<double> out = bee::corrupt(train.x, spec, t.sigma0);
    CHECK(out.data != train.x.data);
    for (std::size_t i = 0; i < train.x.shape[0]; ++i) {
        double before = 0.0, after = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
            before += train.x.at(i, j) * train.x.at(i, j);
            after += out.at(i, j) * out.at(i, j);
        }
        CHECK(std::sqrt(after) == Catch::Approx(std::sqrt(before)).margin(1e-9));
    }
}

TEST_CASE("scaling multiplies every entry by the severity factor") {
    Tensor<double> x = Tensor<double>::zeros(2, 8);
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = 0.25 * static_cast<double>(i) - 0.5;
    CorruptionSpec spec;
    spec.kind = CorruptionKind::kScaling;
    spec.severity = 2;  // factor 1.5
    Tensor<double> out = bee::corrupt(x, spec, 0.5);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.data[i] == x.data[i] * 1.5);
}

TEST_CASE("masking zeroes the same coordinate subset in every row") {
    Tensor<double> x = Tensor<double>::full(5, 10, 3.7);
    CorruptionSpec spec;
    spec.kind = CorruptionKind::kCoordinateMask;
    spec.severity = 2;  // fraction 0.2 of 10 coordinates
    spec.seed = 23;
    Tensor<double> out = bee::corrupt(x, spec, 0.5);
    std::vector<std::size_t> zeroed;
    for (std::size_t j = 0; j < 10; ++j)
        if (out.at(0, j) == 0.0) zeroed.push_back(j);
    REQUIRE(zeroed.size() == 2);
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            CHECK((out.at(i, j) == 0.0) == (out.at(0, j) == 0.0));
}

TEST_CASE("mean shift adds one constant vector of the advertised length") {
    SourceTask<double> t = small_task();
    auto [train, holdout] = bee::gen_source(t);
    CorruptionSpec spec;
    spec.kind = CorruptionKind::kMeanShift;
    spec.severity = 4;  // magnitude 2 sigma
    spec.seed = 29;
    Tensor<double> out = bee::corrupt(train.x, spec, t.sigma0);
    std::vector<double> delta(8);
    for (std::size_t j = 0; j < 8; ++j) delta[j] = out.at(0, j) - train.x.at(0, j);
    double norm = 0.0;
    for (double v : delta) norm += v * v;
    CHECK(std::sqrt(norm) == Catch::Approx(2.0 * 0.5).margin(1e-9));
    for (std::size_t i = 1; i < train.x.shape[0]; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(out.at(i, j) - train.x.at(i, j) == Catch::Approx(delta[j]).margin(1e-12));
}

TEST_CASE("additive noise matches its advertised spread") {
    Tensor<double> x = Tensor<double>::zeros(400, 8);
    CorruptionSpec spec;
    spec.kind = CorruptionKind::kAdditiveNoise;
    spec.severity = 4;  // magnitude 2 sigma
    spec.seed = 31;
    const double sigma0 = 0.5;
    Tensor<double> out = bee::corrupt(x, spec, sigma0);
    double mean = 0.0, var = 0.0;
    for (double v : out.data) mean += v;
    mean /= static_cast<double>(out.size());
    for (double v : out.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out.size());
    CHECK(std::sqrt(var) == Catch::Approx(2.0 * sigma0).epsilon(0.1));
}

TEST_CASE("heavy noise wrecks the nearest-center classifier") {
    SourceTask<double> t;  // default benchmark geometry
    t.train_n = 10;
    t.holdout_n = 1000;
    t.seed = 3;
    Tensor<double> centers = bee::class_centers(t);
    auto [train, holdout] = bee::gen_source(t);
    const double clean = nearest_center_accuracy(centers, holdout.x, holdout.y);
    REQUIRE(clean >= 0.95);

    CorruptionSpec spec;
    spec.kind = CorruptionKind::kAdditiveNoise;
    spec.severity = 5;
    spec.seed = 37;
    Tensor<double> noisy = bee::corrupt(holdout.x, spec, t.sigma0);
    const double hurt = nearest_center_accuracy(centers, noisy, holdout.y);
    CHECK(clean - hurt >= 0.30);
}

TEST_CASE("corruption construction rejects bad severities and batch widths") {
    CorruptionSpec spec;
    spec.severity = 6;
    CHECK_THROWS(bee::Corruptor<double>(spec, 8, 0.5));
    spec.severity = -1;
    CHECK_THROWS(bee::Corruptor<double>(spec, 8, 0.5));

    spec.severity = 2;
    bee::Corruptor<double> op(spec, 8, 0.5);
    Tensor<double> narrow = Tensor<double>::zeros(2, 4);
    bee::Rng noise(1);
    CHECK_THROWS(op.apply(narrow, noise));
}

TEST_CASE("corruption names round trip") {
    const CorruptionKind kinds[5] = {CorruptionKind::kAdditiveNoise, CorruptionKind::kRotation,
                                     CorruptionKind::kScaling, CorruptionKind::kCoordinateMask,
                                     CorruptionKind::kMeanShift};
    for (const CorruptionKind k : kinds)
        CHECK(bee::parse_corruption(bee::corruption_name(k)) == k);
    CHECK_THROWS(bee::parse_corruption("gaussian_blur"));
}

TEST_CASE("schedules derive one seed per domain from the root") {
    const auto domains = bee::default_domain_list();
    REQUIRE(domains.size() == 8);
    CHECK(domains[0].first == CorruptionKind::kAdditiveNoise);
    CHECK(domains[0].second == 2);
    CHECK(domains[7].first == CorruptionKind::kCoordinateMask);
    CHECK(domains[7].second == 5);

    DomainSchedule s = bee::make_schedule(99, domains, 50, 64);
    CHECK(s.total_batches() == 400);
    REQUIRE(s.domains.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(s.domains[i].kind == domains[i].first);
        CHECK(s.domains[i].severity == domains[i].second);
        for (std::size_t j = 0; j < i; ++j) CHECK(s.domains[i].seed != s.domains[j].seed);
    }

    DomainSchedule again = bee::make_schedule(99, domains, 50, 64);
    for (std::size_t i = 0; i < 8; ++i) CHECK(again.domains[i].seed == s.domains[i].seed);
    DomainSchedule other = bee::make_schedule(100, domains, 50, 64);
    CHECK(other.domains[0].seed != s.domains[0].seed);
}

TEST_CASE("the domain stream walks the schedule in order") {
    SourceTask<double> t = small_task();
    DomainSchedule sched = bee::make_schedule(
        5, {{CorruptionKind::kAdditiveNoise, 2}, {CorruptionKind::kRotation, 3}}, 3, 8);
    DomainStream<double> stream(t, sched, 5);
    REQUIRE(stream.total_batches() == 6);

    StreamBatch<double> b;
    std::size_t count = 0;
    std::uint32_t last_domain = 0;
    std::vector<Tensor<double>> batches;
    while (stream.next(b)) {
        REQUIRE(b.x.shape[0] == 8);
        REQUIRE(b.x.shape[1] == 8);
        REQUIRE(b.y.size() == 8);
        for (std::uint32_t label : b.y) REQUIRE(label < 4);
        CHECK(b.domain_id >= last_domain);
        CHECK(b.domain_id == count / 3);
        last_domain = b.domain_id;
        batches.push_back(b.x);
        ++count;
    }
    CHECK(count == 6);
    CHECK_FALSE(stream.next(b));

    SECTION("replaying the stream is bitwise identical") {
        DomainStream<double> replay(t, sched, 5);
        StreamBatch<double> rb;
        for (std::size_t i = 0; i < 6; ++i) {
            REQUIRE(replay.next(rb));
            CHECK(rb.x.data == batches[i].data);
        }
    }
    SECTION("an empty schedule is rejected") {
        DomainSchedule none;
        CHECK_THROWS(DomainStream<double>(t, none, 5));
    }
}

TEST_CASE("a materialized stream replays exactly like the online generator") {
    SourceTask<double> t = small_task();
    DomainSchedule sched = bee::make_schedule(
        13, {{CorruptionKind::kMeanShift, 3}, {CorruptionKind::kScaling, 2}}, 2, 8);

    Dataset<double> ds = bee::materialize_stream(t, sched, 13);
    REQUIRE(ds.size() == 32);
    REQUIRE(ds.domain.size() == 32);
    CHECK(ds.classes == 4);
    CHECK(ds.domain.front() == 0);
    CHECK(ds.domain.back() == 1);

    DomainStream<double> live(t, sched, 13);
    bee::DatasetReplay<double> replay(&ds, 8);
    REQUIRE(replay.total_batches() == 4);
    StreamBatch<double> a, b;
    while (live.next(a)) {
        REQUIRE(replay.next(b));
        CHECK(a.x.data == b.x.data);
        CHECK(a.y == b.y);
        CHECK(a.domain_id == b.domain_id);
    }
    CHECK_FALSE(replay.next(b));

    SECTION("replay batch size must divide the dataset") {
        CHECK_THROWS(bee::DatasetReplay<double>(&ds, 7));
        CHECK_THROWS(bee::DatasetReplay<double>(&ds, 0));
    }
}

TEST_CASE("datasets round trip through their binary file format") {
    SourceTask<double> t = small_task();
    DomainSchedule sched =
        bee::make_schedule(17, {{CorruptionKind::kAdditiveNoise, 1}}, 2, 8);
    Dataset<double> ds = bee::materialize_stream(t, sched, 17);

    const std::string path = tmp_path("roundtrip.beed");
    bee::save_dataset(path, ds);
    Dataset<double> back = bee::load_dataset<double>(path);
    CHECK(back.x.data == ds.x.data);
    CHECK(back.x.shape == ds.x.shape);
    CHECK(back.y == ds.y);
    CHECK(back.domain == ds.domain);
    CHECK(back.classes == ds.classes);
    std::remove(path.c_str());

    SECTION("domain ids are optional") {
        auto [train, holdout] = bee::gen_source(t);
        const std::string p2 = tmp_path("plain.beed");
        bee::save_dataset(p2, train);
        Dataset<double> b2 = bee::load_dataset<double>(p2);
        CHECK(b2.domain.empty());
        CHECK(b2.x.data == train.x.data);
        CHECK(b2.y == train.y);
        std::remove(p2.c_str());
    }
}

TEST_CASE("damaged dataset files are rejected") {
    SourceTask<double> t = small_task();
    auto [train, holdout] = bee::gen_source(t);
    const std::string path = tmp_path("damage.beed");
    bee::save_dataset(path, train);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    auto write_bytes = [&](const std::string& s) {
        std::ofstream out(path, std::ios::binary);
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
    };

    SECTION("bad magic") {
        std::string bad = bytes;
        bad[0] = 'X';
        write_bytes(bad);
        CHECK_THROWS(bee::load_dataset<double>(path));
    }
    SECTION("unsupported version") {
        std::string bad = bytes;
        bad[4] = 9;
        write_bytes(bad);
        CHECK_THROWS(bee::load_dataset<double>(path));
    }
    SECTION("truncation") {
        write_bytes(bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS(bee::load_dataset<double>(path));
    }
    SECTION("trailing bytes") {
        write_bytes(bytes + "z");
        CHECK_THROWS(bee::load_dataset<double>(path));
    }
    SECTION("missing file") {
        CHECK_THROWS(bee::load_dataset<double>(tmp_path("missing.beed")));
    }
    std::remove(path.c_str());
}
