#pragma once

#include <cstdint>
#include <random>

#include "ranktrace/linalg.hpp"

namespace ranktrace {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31U);
}

} // namespace detail

/// Reproducible random source identified by (seed, stream). Two streams
/// with the same pair produce bit-identical draws. Not thread-safe; give
/// each thread its own stream.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream),
          engine_(detail::splitmix64(seed ^ detail::splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t stream() const noexcept { return stream_; }

    /// Independent child stream derived from this stream's identity.
    [[nodiscard]] RngStream fork(std::uint64_t child) const {
        return RngStream(detail::splitmix64(seed_ ^ (stream_ * 0xd1342543de82ef95ULL)), child);
    }

    double normal(double mean = 0.0, double stddev = 1.0) { return mean + stddev * std_normal_(engine_); }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    /// Uniform integer in [lo, hi].
    long uniform_int(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }

    bool bernoulli(double p_true) { return uniform() < p_true; }

    DenseMatrix gaussian(Eigen::Index rows, Eigen::Index cols, double mean = 0.0, double stddev = 1.0) {
        DenseMatrix m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (Eigen::Index i = 0; i < rows; ++i) {
                m(i, j) = normal(mean, stddev);
            }
        }
        return m;
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> std_normal_{0.0, 1.0};
};

} // namespace ranktrace
