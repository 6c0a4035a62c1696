#pragma once

// Binary dataset file:
//
//   offset  size  field
//   0       8     magic "RKTRDS01"
//   8       8     d_x  (uint64, little-endian)
//   16      8     d_y  (uint64, little-endian)
//   24      8     m    (uint64, little-endian)
//   32      8*d_x*m   X, float64 little-endian, column-major
//   ...     8*d_y*m   Y, float64 little-endian, column-major
//
// No padding, no trailer. The file size is exactly 32 + 8*(d_x + d_y)*m.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "ranktrace/error.hpp"
#include "ranktrace/netcore.hpp"

namespace ranktrace {

inline constexpr std::array<char, 8> dataset_magic{'R', 'K', 'T', 'R', 'D', 'S', '0', '1'};
inline constexpr std::size_t dataset_header_size = 32;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
}

inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8U) | p[b];
    return v;
}

inline void put_matrix(std::string& out, const DenseMatrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
        }
    }
}

inline DenseMatrix get_matrix(const unsigned char* p, Eigen::Index rows, Eigen::Index cols) {
    DenseMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = std::bit_cast<double>(get_u64(p));
            p += 8;
        }
    }
    return m;
}

} // namespace detail

inline std::string encode_dataset(const Dataset& d) {
    d.validate();
    std::string out;
    out.reserve(dataset_header_size + 8 * static_cast<std::size_t>(d.x.size() + d.y.size()));
    out.append(dataset_magic.data(), dataset_magic.size());
    detail::put_u64(out, static_cast<std::uint64_t>(d.input_dim()));
    detail::put_u64(out, static_cast<std::uint64_t>(d.output_dim()));
    detail::put_u64(out, static_cast<std::uint64_t>(d.samples()));
    detail::put_matrix(out, d.x);
    detail::put_matrix(out, d.y);
    return out;
}

inline Dataset decode_dataset(std::string_view bytes) {
    if (bytes.size() < dataset_header_size || std::memcmp(bytes.data(), dataset_magic.data(), 8) != 0) {
        throw InvalidInput("not a dataset file (bad magic)");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t dx = detail::get_u64(p + 8);
    const std::uint64_t dy = detail::get_u64(p + 16);
    const std::uint64_t m = detail::get_u64(p + 24);
    constexpr std::uint64_t limit = std::uint64_t{1} << 31U;
    if (dx == 0 || dy == 0 || m == 0 || dx > limit || dy > limit || m > limit) {
        throw InvalidInput("dataset header has invalid dimensions");
    }
    if (bytes.size() != dataset_header_size + 8 * (dx + dy) * m) {
        throw InvalidInput("dataset file size does not match its header");
    }
    Dataset d;
    d.x = detail::get_matrix(p + dataset_header_size, static_cast<Eigen::Index>(dx), static_cast<Eigen::Index>(m));
    d.y = detail::get_matrix(p + dataset_header_size + 8 * dx * m, static_cast<Eigen::Index>(dy),
                             static_cast<Eigen::Index>(m));
    d.validate();
    return d;
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw Error("cannot open " + tmp.string() + " for writing");
        }
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) {
            throw Error("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& d) {
    write_file_atomic(path, encode_dataset(d));
}

inline Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

/// FNV-1a over raw bytes; used to show that recipe arms share data and init.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t weights_checksum(const NetworkWeights& w) {
    std::string bytes;
    for (const auto& layer : w.layers()) detail::put_matrix(bytes, layer);
    return fnv1a64(bytes);
}

} // namespace ranktrace
