#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace yoeo::nn {

/// Seeded pseudo-random stream. Identical (seed, stream) pairs replay identical draws.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Uniform in [0, 1).
    double uniform();
    double uniform(double low, double high);
    /// Uniform in the open interval (0, 1).
    double uniform_open();
    double normal(double mean = 0.0, double stddev = 1.0);
    bool bernoulli(double p);
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    /// Independent child stream; the parent's state is not advanced.
    RngStream derive(std::uint64_t sub_stream) const;

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace yoeo::nn
