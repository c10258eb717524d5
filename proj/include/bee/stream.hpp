// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bee/checkpoint.hpp"
#include "bee/rng.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {

// Gaussian-blob classification source. Class centers are orthonormal seeded
// directions scaled by center_scale, so pairwise center distance is
// center_scale * sqrt(2) and separation is controlled directly.
template <typename Real>
struct SourceTask {
    std::size_t dim = 32;
    std::size_t classes = 10;
    Real sigma0 = Real(0.5);
    Real center_scale = Real(3.0);
    std::size_t train_n = 4000;
    std::size_t holdout_n = 2000;
    std::uint64_t seed = 1;
};

template <typename Real>
struct Dataset {
    Tensor<Real> x;
    std::vector<std::uint32_t> y;
    std::vector<std::uint32_t> domain;  // empty unless the set spans domains
    std::uint32_t classes = 0;

    std::size_t size() const { return y.size(); }
};

// Rows are orthonormalized by Gram-Schmidt; needs classes <= dim.
template <typename Real>
Tensor<Real> class_centers(const SourceTask<Real>& task) {
    if (task.classes > task.dim) fail_arg("class_centers: more classes than dimensions");
    Rng rng = derive_rng(task.seed, "centers");
    const std::size_t c = task.classes, d = task.dim;
    Tensor<Real> centers = Tensor<Real>::zeros(c, d);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            centers.at(i, j) = static_cast<Real>(rng.normal());
        for (std::size_t k = 0; k < i; ++k) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                dot += static_cast<double>(centers.at(i, j)) * centers.at(k, j);
            for (std::size_t j = 0; j < d; ++j)
                centers.at(i, j) -= static_cast<Real>(dot) * centers.at(k, j);
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            norm += static_cast<double>(centers.at(i, j)) * centers.at(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-9) fail("class_centers: degenerate direction draw");
        for (std::size_t j = 0; j < d; ++j)
            centers.at(i, j) = static_cast<Real>(centers.at(i, j) / norm);
    }
    for (Real& v : centers.data) v *= task.center_scale;
    return centers;
}

namespace detail {

template <typename Real>
Dataset<Real> blob_split(const SourceTask<Real>& task, const Tensor<Real>& centers, std::size_t n,
                         Rng& rng) {
    Dataset<Real> ds;
    ds.classes = static_cast<std::uint32_t>(task.classes);
    ds.y.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        ds.y[i] = static_cast<std::uint32_t>(i % task.classes);
    for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(ds.y[i], ds.y[j]);
    }
    ds.x = Tensor<Real>::zeros(n, task.dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < task.dim; ++j)
            ds.x.at(i, j) = centers.at(ds.y[i], j) + task.sigma0 * static_cast<Real>(rng.normal());
    return ds;
}

}  // namespace detail

// Balanced (within one sample), shuffled train and holdout splits; the two
// are disjoint draws from the same blobs.
template <typename Real>
std::pair<Dataset<Real>, Dataset<Real>> gen_source(const SourceTask<Real>& task) {
    if (task.dim < 2 || task.classes < 2) fail_arg("gen_source: need dim >= 2 and classes >= 2");
    if (task.sigma0 < Real(0)) fail_arg("gen_source: negative sigma0");
    const Tensor<Real> centers = class_centers(task);
    Rng rng = derive_rng(task.seed, "data");
    Dataset<Real> train = detail::blob_split(task, centers, task.train_n, rng);
    Dataset<Real> holdout = detail::blob_split(task, centers, task.holdout_n, rng);
    return {std::move(train), std::move(holdout)};
}

enum class CorruptionKind {
    kAdditiveNoise,
    kRotation,
    kScaling,
    kCoordinateMask,
    kMeanShift,
};

inline const char* corruption_name(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::kAdditiveNoise: return "additive_noise";
        case CorruptionKind::kRotation: return "rotation";
        case CorruptionKind::kScaling: return "scaling";
        case CorruptionKind::kCoordinateMask: return "coordinate_mask";
        case CorruptionKind::kMeanShift: return "mean_shift";
    }
    return "?";
}

inline CorruptionKind parse_corruption(const std::string& s) {
    if (s == "additive_noise") return CorruptionKind::kAdditiveNoise;
    if (s == "rotation") return CorruptionKind::kRotation;
    if (s == "scaling") return CorruptionKind::kScaling;
    if (s == "coordinate_mask") return CorruptionKind::kCoordinateMask;
    if (s == "mean_shift") return CorruptionKind::kMeanShift;
    fail_arg("unknown corruption kind: " + s);
}

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::kAdditiveNoise;
    int severity = 1;  // 0 = identity row of the magnitude tables
    std::uint64_t seed = 0;
};

// Severity magnitude tables, row 0 = identity. Noise and shift are in units
// of the source within-class sigma; rotation is degrees applied in every
// seeded orthonormal 2-plane.
inline constexpr double kNoiseMag[6] = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0};
inline constexpr double kRotationDeg[6] = {0.0, 10.0, 20.0, 35.0, 50.0, 70.0};
inline constexpr double kScaleFactor[6] = {1.0, 1.2, 1.5, 2.0, 3.0, 4.0};
inline constexpr double kMaskFraction[6] = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
inline constexpr double kShiftMag[6] = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0};

// One domain's corruption, with the deterministic pieces (rotation matrix,
// mask, shift direction) fixed at construction from the spec seed. Additive
// noise draws from the stream passed to apply.
template <typename Real>
class Corruptor {
public:
    Corruptor(const CorruptionSpec& spec, std::size_t dim, Real sigma0)
        : spec_(spec), dim_(dim), sigma0_(sigma0) {
        if (spec.severity < 0 || spec.severity > 5) fail_arg("Corruptor: severity must be 0..5");
        switch (spec_.kind) {
            case CorruptionKind::kAdditiveNoise:
                noise_sigma_ = static_cast<Real>(kNoiseMag[spec_.severity]) * sigma0_;
                break;
            case CorruptionKind::kRotation:
                build_rotation();
                break;
            case CorruptionKind::kScaling:
                factor_ = static_cast<Real>(kScaleFactor[spec_.severity]);
                break;
            case CorruptionKind::kCoordinateMask:
                build_mask();
                break;
            case CorruptionKind::kMeanShift:
                build_shift();
                break;
        }
    }

    const CorruptionSpec& spec() const { return spec_; }

    void apply(Tensor<Real>& batch, Rng& noise) const {
        if (batch.rank() != 2 || batch.shape[1] != dim_) fail("Corruptor: batch dim mismatch");
        switch (spec_.kind) {
            case CorruptionKind::kAdditiveNoise: {
                if (noise_sigma_ == Real(0)) return;
                for (Real& v : batch.data)
                    v += noise_sigma_ * static_cast<Real>(noise.normal());
                return;
            }
            case CorruptionKind::kRotation: {
                if (spec_.severity == 0) return;
                Tensor<Real> out;
                matmul_a_bt(batch, rot_, out);
                batch = std::move(out);
                return;
            }
            case CorruptionKind::kScaling: {
                for (Real& v : batch.data) v *= factor_;
                return;
            }
            case CorruptionKind::kCoordinateMask: {
                for (std::size_t i = 0; i < batch.shape[0]; ++i)
                    for (const std::size_t j : mask_) batch.at(i, j) = Real(0);
                return;
            }
            case CorruptionKind::kMeanShift: {
                for (std::size_t i = 0; i < batch.shape[0]; ++i)
                    for (std::size_t j = 0; j < dim_; ++j) batch.at(i, j) += shift_.data[j];
                return;
            }
        }
    }

private:
    CorruptionSpec spec_;
    std::size_t dim_;
    Real sigma0_;
    Real noise_sigma_ = Real(0);
    Real factor_ = Real(1);
    Tensor<Real> rot_;            // dim x dim, applied as x * rot^T
    std::vector<std::size_t> mask_;
    Tensor<Real> shift_;

    // Rotation by the severity angle in every 2-plane of a seeded
    // orthonormal basis B: R = B^T pairRot B.
    void build_rotation() {
        Rng rng = derive_rng(spec_.seed, "rot-basis");
        Tensor<Real> b = Tensor<Real>::zeros(dim_, dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
            for (std::size_t j = 0; j < dim_; ++j)
                b.at(i, j) = static_cast<Real>(rng.normal());
            for (std::size_t k = 0; k < i; ++k) {
                double dot = 0.0;
                for (std::size_t j = 0; j < dim_; ++j)
                    dot += static_cast<double>(b.at(i, j)) * b.at(k, j);
                for (std::size_t j = 0; j < dim_; ++j)
                    b.at(i, j) -= static_cast<Real>(dot) * b.at(k, j);
            }
            double norm = 0.0;
            for (std::size_t j = 0; j < dim_; ++j)
                norm += static_cast<double>(b.at(i, j)) * b.at(i, j);
            norm = std::sqrt(norm);
            if (norm < 1e-9) fail("Corruptor: degenerate rotation basis");
            for (std::size_t j = 0; j < dim_; ++j)
                b.at(i, j) = static_cast<Real>(b.at(i, j) / norm);
        }
        const double angle = kRotationDeg[spec_.severity] * std::numbers::pi / 180.0;
        const Real c = static_cast<Real>(std::cos(angle)), s = static_cast<Real>(std::sin(angle));
        Tensor<Real> pr = Tensor<Real>::zeros(dim_, dim_);
        for (std::size_t k = 0; k + 1 < dim_; k += 2) {
            pr.at(k, k) = c;
            pr.at(k, k + 1) = -s;
            pr.at(k + 1, k) = s;
            pr.at(k + 1, k + 1) = c;
        }
        if (dim_ % 2 == 1) pr.at(dim_ - 1, dim_ - 1) = Real(1);
        Tensor<Real> tmp;
        matmul_at_b(b, pr, tmp);  // B^T * pr
        matmul(tmp, b, rot_);     // * B
    }

    void build_mask() {
        const std::size_t count = static_cast<std::size_t>(
            std::llround(kMaskFraction[spec_.severity] * static_cast<double>(dim_)));
        Rng rng = derive_rng(spec_.seed, "mask");
        mask_ = rng.sample_without_replacement(dim_, count);
    }

    void build_shift() {
        Rng rng = derive_rng(spec_.seed, "shift");
        shift_ = Tensor<Real>::zeros(dim_);
        shift_.shape = {dim_};
        double norm = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            shift_.data[j] = static_cast<Real>(rng.normal());
            norm += static_cast<double>(shift_.data[j]) * shift_.data[j];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-9) fail("Corruptor: degenerate shift direction");
        const Real mag = static_cast<Real>(kShiftMag[spec_.severity]) * sigma0_;
        for (std::size_t j = 0; j < dim_; ++j)
            shift_.data[j] = static_cast<Real>(shift_.data[j] / norm) * mag;
    }
};

// Convenience for tests: corrupt a copy of one batch with a fresh noise
// stream from the spec seed.
template <typename Real>
Tensor<Real> corrupt(const Tensor<Real>& batch, const CorruptionSpec& spec, Real sigma0) {
    Corruptor<Real> op(spec, batch.shape[1], sigma0);
    Rng noise = derive_rng(spec.seed, "noise");
    Tensor<Real> out = batch;
    op.apply(out, noise);
    return out;
}

struct DomainSchedule {
    std::vector<CorruptionSpec> domains;
    std::size_t batches_per_domain = 50;
    std::size_t batch_size = 64;

    std::size_t total_batches() const { return domains.size() * batches_per_domain; }
};

// Per-domain seeds are derived from the root so any domain replays in
// isolation.
inline DomainSchedule make_schedule(std::uint64_t root_seed,
                                    const std::vector<std::pair<CorruptionKind, int>>& domains,
                                    std::size_t batches_per_domain, std::size_t batch_size) {
    DomainSchedule s;
    s.batches_per_domain = batches_per_domain;
    s.batch_size = batch_size;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        CorruptionSpec spec;
        spec.kind = domains[i].first;
        spec.severity = domains[i].second;
        spec.seed = derive_rng(root_seed, "domain", i).next_u64();
        s.domains.push_back(spec);
    }
    return s;
}

// Default drift sequence: alternates corruption families and ramps severity.
inline std::vector<std::pair<CorruptionKind, int>> default_domain_list() {
    return {
        {CorruptionKind::kAdditiveNoise, 2}, {CorruptionKind::kRotation, 3},
        {CorruptionKind::kCoordinateMask, 3}, {CorruptionKind::kMeanShift, 4},
        {CorruptionKind::kScaling, 3},       {CorruptionKind::kAdditiveNoise, 5},
        {CorruptionKind::kRotation, 5},      {CorruptionKind::kCoordinateMask, 5},
    };
}

// One test batch. Labels and domain id are for the evaluator only; the
// adaptation loop receives just the feature tensor.
template <typename Real>
struct StreamBatch {
    Tensor<Real> x;
    std::vector<std::uint32_t> y;
    std::uint32_t domain_id = 0;
};

// Sequential batch source over the schedule. Fresh samples are drawn from
// the source blobs and pushed through the domain's corruption; everything is
// a pure function of the root seed.
template <typename Real>
class DomainStream {
public:
    DomainStream(const SourceTask<Real>& task, DomainSchedule schedule, std::uint64_t root_seed)
        : task_(task),
          schedule_(std::move(schedule)),
          root_(root_seed),
          centers_(class_centers(task)),
          clean_rng_(0),
          noise_rng_(0) {
        if (schedule_.domains.empty()) fail_arg("DomainStream: empty schedule");
        enter_domain(0);
    }

    std::size_t total_batches() const { return schedule_.total_batches(); }
    const DomainSchedule& schedule() const { return schedule_; }

    bool next(StreamBatch<Real>& out) {
        if (domain_ >= schedule_.domains.size()) return false;
        const std::size_t n = schedule_.batch_size;
        out.domain_id = static_cast<std::uint32_t>(domain_);
        out.y.resize(n);
        out.x = Tensor<Real>::zeros(n, task_.dim);
        for (std::size_t i = 0; i < n; ++i) {
            out.y[i] = static_cast<std::uint32_t>(clean_rng_.below(task_.classes));
            for (std::size_t j = 0; j < task_.dim; ++j)
                out.x.at(i, j) =
                    centers_.at(out.y[i], j) + task_.sigma0 * static_cast<Real>(clean_rng_.normal());
        }
        corruptor_->apply(out.x, noise_rng_);
        if (++batch_in_domain_ == schedule_.batches_per_domain) enter_domain(domain_ + 1);
        return true;
    }

private:
    SourceTask<Real> task_;
    DomainSchedule schedule_;
    std::uint64_t root_;
    Tensor<Real> centers_;
    std::size_t domain_ = 0;
    std::size_t batch_in_domain_ = 0;
    std::optional<Corruptor<Real>> corruptor_;
    Rng clean_rng_;
    Rng noise_rng_;

    void enter_domain(std::size_t d) {
        domain_ = d;
        batch_in_domain_ = 0;
        if (d >= schedule_.domains.size()) return;
        corruptor_.emplace(schedule_.domains[d], task_.dim, task_.sigma0);
        clean_rng_ = derive_rng(root_, "stream", d);
        noise_rng_ = derive_rng(root_, "stream-noise", d);
    }
};

// Materializes the full stream into one dataset with domain ids, in exactly
// the order the online loop would see.
template <typename Real>
Dataset<Real> materialize_stream(const SourceTask<Real>& task, const DomainSchedule& schedule,
                                 std::uint64_t root_seed) {
    DomainStream<Real> stream(task, schedule, root_seed);
    Dataset<Real> ds;
    ds.classes = static_cast<std::uint32_t>(task.classes);
    ds.x = Tensor<Real>::zeros(schedule.total_batches() * schedule.batch_size, task.dim);
    StreamBatch<Real> b;
    std::size_t row = 0;
    while (stream.next(b)) {
        for (std::size_t i = 0; i < b.y.size(); ++i) {
            for (std::size_t j = 0; j < task.dim; ++j) ds.x.at(row, j) = b.x.at(i, j);
            ds.y.push_back(b.y[i]);
            ds.domain.push_back(b.domain_id);
            ++row;
        }
    }
    return ds;
}

// Replays a materialized stream file batch by batch, reproducing exactly
// what the online generator would emit.
template <typename Real>
class DatasetReplay {
public:
    DatasetReplay(const Dataset<Real>* ds, std::size_t batch_size)
        : ds_(ds), batch_size_(batch_size) {
        if (batch_size == 0) fail_arg("DatasetReplay: batch size positive");
        if (ds->size() % batch_size != 0)
            fail("DatasetReplay: dataset size is not a whole number of batches");
    }

    std::size_t total_batches() const { return ds_->size() / batch_size_; }

    bool next(StreamBatch<Real>& out) {
        if (row_ >= ds_->size()) return false;
        const std::size_t d = ds_->x.shape[1];
        out.x = Tensor<Real>::zeros(batch_size_, d);
        out.y.resize(batch_size_);
        for (std::size_t i = 0; i < batch_size_; ++i) {
            for (std::size_t j = 0; j < d; ++j) out.x.at(i, j) = ds_->x.at(row_ + i, j);
            out.y[i] = ds_->y[row_ + i];
        }
        out.domain_id = ds_->domain.empty() ? 0 : ds_->domain[row_];
        row_ += batch_size_;
        return true;
    }

private:
    const Dataset<Real>* ds_;
    std::size_t batch_size_;
    std::size_t row_ = 0;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

template <typename Real>
void save_dataset(const std::string& path, const Dataset<Real>& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("dataset: cannot open for write: " + path);
    os.write("BEED", 4);
    io::put_u32(os, kDatasetVersion);
    io::put_u32(os, static_cast<std::uint32_t>(ds.size()));
    io::put_u32(os, static_cast<std::uint32_t>(ds.x.shape[1]));
    io::put_u32(os, ds.classes);
    for (const Real v : ds.x.data) io::put_f64(os, static_cast<double>(v));
    for (const std::uint32_t v : ds.y) io::put_u32(os, v);
    if (!ds.domain.empty()) {
        if (ds.domain.size() != ds.size()) fail("dataset: domain id count mismatch");
        for (const std::uint32_t v : ds.domain) io::put_u32(os, v);
    }
    if (!os) fail("dataset: write failed: " + path);
}

template <typename Real>
Dataset<Real> load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("dataset: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "BEED", 4) != 0) fail("dataset: bad magic: " + path);
    if (io::get_u32(is) != kDatasetVersion) fail("dataset: unsupported version in " + path);
    const std::uint32_t n = io::get_u32(is);
    const std::uint32_t d = io::get_u32(is);
    Dataset<Real> ds;
    ds.classes = io::get_u32(is);
    ds.x = Tensor<Real>::zeros(n, d);
    for (Real& v : ds.x.data) v = static_cast<Real>(io::get_f64(is));
    ds.y.resize(n);
    for (std::uint32_t& v : ds.y) v = io::get_u32(is);
    // Domain ids are present iff bytes remain.
    is.peek();
    if (!is.eof()) {
        ds.domain.resize(n);
        for (std::uint32_t& v : ds.domain) v = io::get_u32(is);
        is.peek();
    }
    if (!is.eof()) fail("dataset: trailing bytes in " + path);
    return ds;
}

}  // namespace bee
