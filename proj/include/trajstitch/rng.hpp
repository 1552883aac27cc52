#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace trajstitch {

// Derives an independent child seed from (seed, stream) via splitmix64.
// Used for per-episode / per-rollout / per-layer streams so that work can be
// parallelized without sharing generator state.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. All distributions are implemented on top of
// the raw 64-bit stream (not std::*_distribution) so that sequences are
// identical across standard libraries and serialize exactly.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform();
    double uniform(double lo, double hi);

    // Uniform integer in [lo, hi], inclusive. Unbiased (rejection sampling).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
    // so the generator state alone determines the sequence.
    double normal();

    // Geometric on {1, 2, ...} with success probability p; mean 1/p.
    int geometric(double p);

    std::string serialize() const;
    void deserialize(const std::string& text);

  private:
    std::mt19937_64 engine_;
};

}  // namespace trajstitch
