#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ccac {

// splitmix64 finalizer, used to derive independent engine seeds from
// (master seed, iteration, trajectory index) tuples.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(master ^ 0x5851f42d4c957f2dULL);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

// mt19937_64 with hand-rolled draw transforms so sequences are identical
// across standard library implementations (std::normal_distribution and
// friends are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform in (0,1), endpoints excluded
    double uniform01() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; the spare draw is discarded so every call consumes
    // exactly two engine outputs
    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    std::uint64_t raw() { return eng_(); }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 eng_;
};

}  // namespace ccac
