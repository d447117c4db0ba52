#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gslb {

// mt19937_64 is specified bit-exactly by the standard; the distributions below
// are written out so draws do not depend on the standard library vendor.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);

    double normal(double mean, double stddev);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// FNV-1a, stable across platforms and runs.
std::uint64_t stable_hash(std::string_view s);

}  // namespace gslb
