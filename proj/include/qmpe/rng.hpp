#ifndef QMPE_RNG_HPP
#define QMPE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace qmpe {

/// Counter-based deterministic stream: the state is derived from
/// (seed, stream id) by splitmix64 mixing, so sample k of stream s is
/// independent of scheduling. One stream per Monte Carlo sample keeps
/// results bitwise reproducible under any thread partition.
class RngStream {
public:
    RngStream(uint64_t seed, uint64_t stream) {
        state_ = mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ull));
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (platform-stable, no libm dependence on
    /// distribution internals).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace qmpe

#endif
