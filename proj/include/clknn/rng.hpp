#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace clknn {

// splitmix64 step; used to derive independent per-stage seeds from one
// top-level seed so that adding a stage never shifts another stage's stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// mt19937_64 with hand-rolled uniform/gaussian draws. The standard
// distributions are not bit-portable across library implementations, so
// everything that feeds frozen artifacts goes through these instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1) with 53 random bits
    double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // unbiased uniform index in [0, n)
    std::size_t uniform_index(std::size_t n);

    // standard normal via Box-Muller, spare value cached
    double next_gaussian();

    // child stream derived from the construction seed, not the current state
    Rng split(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace clknn
