/*
 * Copyright 2026 The dydiff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Little-endian encoding helpers and atomic file replacement.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dydiff/common.hpp"

namespace dydiff::binio {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

inline void put_f64(std::string& out, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(out, bits);
}

inline void put_f64s(std::string& out, std::span<const double> xs) {
    out.reserve(out.size() + xs.size() * 8);
    for (double x : xs) put_f64(out, x);
}

inline std::uint64_t get_u64(std::string_view in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(in[pos + i])} << (8 * i);
    return v;
}

inline std::uint16_t get_u16(std::string_view in, std::size_t pos) {
    return static_cast<std::uint16_t>(static_cast<unsigned char>(in[pos]) |
                                      (static_cast<unsigned char>(in[pos + 1]) << 8));
}

inline double get_f64(std::string_view in, std::size_t pos) {
    const std::uint64_t bits = get_u64(in, pos);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

inline std::vector<double> get_f64s(std::string_view in, std::size_t pos, std::size_t count) {
    std::vector<double> xs(count);
    for (std::size_t i = 0; i < count; ++i) xs[i] = get_f64(in, pos + 8 * i);
    return xs;
}

/// Sequential reader over a byte buffer with bounds checks.
class Reader {
public:
    explicit Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

    std::uint64_t u64() {
        need(8);
        const auto v = get_u64(data_, pos_);
        pos_ += 8;
        return v;
    }
    std::vector<double> f64s(std::size_t n) {
        if (n > (data_.size() - pos_) / 8) throw IoError("truncated " + what_);
        auto xs = get_f64s(data_, pos_, n);
        pos_ += 8 * n;
        return xs;
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto v = data_.substr(pos_, n);
        pos_ += n;
        return v;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw IoError("truncated " + what_);
    }
    std::string_view data_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Writes to `<path>.tmp` then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace dydiff::binio
