#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace beaconopt {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Seeded random stream. The engine is std::mt19937_64 (fully specified by the
// standard) and the uniform/normal transforms are hand-rolled, so a given seed
// produces the same draws on every platform. Standard-library distributions
// are implementation-defined and must not be used on this stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n >= 1.
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(gen_()) * n) >> 64);
    }

    // Standard normal via Box-Muller, cosine branch only. Consumes exactly
    // two uniforms per call.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0,1], keeps the log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derives an independent substream seed from (seed, index); splitmix64 mix.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Engine state as text, for resumable checkpoints.
    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    static Rng from_state(const std::string& s) {
        Rng r(0);
        std::istringstream is(s);
        is >> r.gen_;
        return r;
    }

    bool operator==(const Rng& other) const { return gen_ == other.gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace beaconopt
