#ifndef VECFOLD_RANDOM_HPP
#define VECFOLD_RANDOM_HPP

#include <cstdint>
#include <random>

namespace vecfold {

/**
 * @brief Seeded random stream with platform-independent draws.
 *
 * The standard distributions are implementation-defined, so every draw the
 * library makes goes through these helpers on top of the raw 64-bit
 * Mersenne Twister output. Identical seeds give identical streams with any
 * compiler and standard library.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). Unbiased (rejection on the top range).
    std::uint64_t uniform_index(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal draw (Box-Muller, one value per call).
    double normal();

private:
    std::mt19937_64 engine_;
};

/// Mix a base seed with a stream number, used to derive restart and worker seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

} // namespace vecfold

#endif
