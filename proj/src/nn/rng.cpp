#include "yoeo/nn/rng.hpp"

namespace yoeo::nn {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream + 0x51ed270b27f1a3c5ULL))) {}

double RngStream::uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::uniform(double low, double high) {
    return low + (high - low) * uniform();
}

double RngStream::uniform_open() {
    double u = 0.0;
    do {
        u = uniform();
    } while (u <= 0.0);
    return u;
}

double RngStream::normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
}

bool RngStream::bernoulli(double p) {
    return uniform() < p;
}

std::size_t RngStream::index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

RngStream RngStream::derive(std::uint64_t sub_stream) const {
    return RngStream(splitmix64(seed_ ^ (stream_ * 0x2545f4914f6cdd1dULL)), sub_stream);
}

}  // namespace yoeo::nn
