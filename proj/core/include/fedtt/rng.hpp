#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "fedtt/mat.hpp"

namespace fedtt {

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// uniform/normal draws below are hand-rolled rather than taken from
// std::*_distribution so that streams are identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; second value is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n). Rejection-free modulo bias is irrelevant at
    // desk scale but rejection keeps the stream well defined.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = eng_();
        while (x >= limit) x = eng_();
        return x % n;
    }

    Mat gaussian_mat(std::size_t rows, std::size_t cols, double stddev) {
        Mat m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = normal() * stddev;
        return m;
    }

    // Derive an independent child stream; used to give every city/client its
    // own generator while keeping the whole experiment a function of one seed.
    Rng fork(std::uint64_t salt) {
        return Rng(mix(eng_(), salt));
    }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fedtt
