#pragma once

// Dataset files (AEAN) and truth CSV files.
//
// Dataset layout, all little-endian:
//   magic "AEAN" | version u8 = 1 | n u32 | d u32 | p f64 | n*d f64 row-major

#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "avgann/detail/binary.hpp"
#include "avgann/errors.hpp"
#include "avgann/eval.hpp"
#include "avgann/metric.hpp"

namespace avgann {

inline constexpr std::string_view kDatasetMagic = "AEAN";
inline constexpr std::uint8_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 4 + 1 + 4 + 4 + 8;

inline std::vector<char> encode_dataset(const Dataset& ds) {
    detail::ByteWriter w;
    w.bytes(kDatasetMagic);
    w.u8(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.size()));
    w.u32(static_cast<std::uint32_t>(ds.dim()));
    w.f64(ds.p_exp());
    for (double v : ds.flat()) {
        w.f64(v);
    }
    return std::move(w.buffer());
}

inline Dataset decode_dataset(const std::vector<char>& bytes, const std::string& name = "dataset") {
    if (bytes.size() < 4 || std::string_view(bytes.data(), 4) != kDatasetMagic) {
        throw BadMagic(name + ": bad magic, expected \"AEAN\"");
    }
    detail::ByteReader r(bytes.data(), bytes.size(), name);
    r.bytes(4);
    const auto version = r.u8();
    if (version != kDatasetVersion) {
        throw VersionMismatch(name + ": unsupported version " + std::to_string(version) + " (expected " +
                              std::to_string(kDatasetVersion) + ")");
    }
    const std::uint64_t n = r.u32();
    const std::uint64_t d = r.u32();
    const double p = r.f64();
    if (d == 0) {
        throw ParseError(name + ": dimension must be >= 1");
    }
    if (!(p >= 2.0) || !std::isfinite(p)) {
        throw ParseError(name + ": exponent p must be finite and >= 2");
    }
    const std::uint64_t expected = n * d * 8;
    if (r.remaining() < expected) {
        throw Truncated(name + ": truncated payload, expected " + std::to_string(expected) + " bytes but found " +
                        std::to_string(r.remaining()));
    }
    if (r.remaining() > expected) {
        throw ParseError(name + ": " + std::to_string(r.remaining() - expected) + " trailing bytes after payload");
    }
    std::vector<double> coords(n * d);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        coords[i] = r.f64();
        if (!std::isfinite(coords[i])) {
            throw NonFiniteValue(name + ": non-finite value at point " + std::to_string(i / d) + ", coordinate " +
                                 std::to_string(i % d));
        }
    }
    return Dataset::from_flat(std::move(coords), d, p);
}

inline void write_dataset(const Dataset& ds, const std::string& path) { detail::write_file(path, encode_dataset(ds)); }

inline Dataset read_dataset(const std::string& path) { return decode_dataset(detail::read_file(path), path); }

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, end};
}

template <typename T>
T parse_number(std::string_view field, const std::string& where) {
    T v{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError(where + ": cannot parse '" + std::string(field) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace detail

inline constexpr std::string_view kTruthHeader = "query_id,nn_id,distance";

inline std::string encode_truth(const std::vector<TruthEntry>& truth) {
    std::string out(kTruthHeader);
    out += "\r\n";
    for (const auto& t : truth) {
        out += std::to_string(t.query_id) + "," + std::to_string(t.nn_id) + "," + detail::format_double(t.distance) +
               "\r\n";
    }
    return out;
}

/// Strict parse; ids are range-checked when the bounds are non-zero.
inline std::vector<TruthEntry> decode_truth(std::string_view text, std::size_t n_queries = 0,
                                            std::size_t n_points = 0, const std::string& name = "truth") {
    std::vector<TruthEntry> out;
    std::size_t line_no = 0;
    bool header = true;
    while (!text.empty()) {
        auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        ++line_no;
        const std::string where = name + ":" + std::to_string(line_no);
        if (header) {
            if (line != kTruthHeader) {
                throw ParseError(where + ": expected header '" + std::string(kTruthHeader) + "'");
            }
            header = false;
            continue;
        }
        if (line.empty()) {
            if (!text.empty()) {
                throw ParseError(where + ": empty row");
            }
            break;
        }
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 3) {
            throw ParseError(where + ": expected 3 fields, got " + std::to_string(fields.size()));
        }
        TruthEntry t;
        t.query_id = detail::parse_number<std::uint32_t>(fields[0], where);
        t.nn_id = detail::parse_number<std::uint32_t>(fields[1], where);
        t.distance = detail::parse_number<double>(fields[2], where);
        if (!(t.distance >= 0.0) || !std::isfinite(t.distance)) {
            throw ParseError(where + ": distance must be finite and >= 0");
        }
        if ((n_queries != 0 && t.query_id >= n_queries) || (n_points != 0 && t.nn_id >= n_points)) {
            throw ParseError(where + ": id out of range");
        }
        out.push_back(t);
    }
    if (header) {
        throw ParseError(name + ": missing header");
    }
    return out;
}

inline void write_truth(const std::vector<TruthEntry>& truth, const std::string& path) {
    const auto s = encode_truth(truth);
    detail::write_file(path, std::vector<char>(s.begin(), s.end()));
}

inline std::vector<TruthEntry> read_truth(const std::string& path, std::size_t n_queries = 0,
                                          std::size_t n_points = 0) {
    const auto bytes = detail::read_file(path);
    return decode_truth(std::string_view(bytes.data(), bytes.size()), n_queries, n_points, path);
}

} // namespace avgann
