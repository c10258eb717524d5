// Copyright (c) 2026 the bee authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bee/paramset.hpp"
#include "bee/tensor.hpp"
#include "bee/util.hpp"

namespace bee {
namespace io {

// Little-endian scalar writes; payloads are always stored as f64 so a float
// build can read a double build's files and vice versa.

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) fail("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) fail("checkpoint: truncated file");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace io

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
void save_checkpoint(const std::string& path, const ParamSet<Real>& ps) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("checkpoint: cannot open for write: " + path);
    os.write("BEEC", 4);
    io::put_u32(os, kCheckpointVersion);
    io::put_u32(os, static_cast<std::uint32_t>(ps.items.size()));
    for (const auto& [name, t] : ps.items) {
        io::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
        for (const std::size_t d : t.shape) io::put_u32(os, static_cast<std::uint32_t>(d));
        for (const Real v : t.data) io::put_f64(os, static_cast<double>(v));
    }
    if (!os) fail("checkpoint: write failed: " + path);
}

template <typename Real>
ParamSet<Real> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "BEEC", 4) != 0) fail("checkpoint: bad magic: " + path);
    const std::uint32_t version = io::get_u32(is);
    if (version != kCheckpointVersion) fail("checkpoint: unsupported version in " + path);
    const std::uint32_t count = io::get_u32(is);
    ParamSet<Real> ps;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = io::get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) fail("checkpoint: truncated name in " + path);
        const std::uint32_t rank = io::get_u32(is);
        Tensor<Real> t;
        std::size_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t d = io::get_u32(is);
            t.shape.push_back(d);
            total *= d;
        }
        t.data.resize(total);
        for (std::size_t j = 0; j < total; ++j) t.data[j] = static_cast<Real>(io::get_f64(is));
        if (ps.contains(name)) fail("checkpoint: duplicate tensor name " + name);
        ps.put(name, std::move(t));
    }
    // Trailing bytes mean the file was not produced by this writer.
    is.peek();
    if (!is.eof()) fail("checkpoint: trailing bytes in " + path);
    return ps;
}

}  // namespace bee
