#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vitforge {

uint64_t fnv1a64(std::string_view s);
uint64_t splitmix64(uint64_t x);

// Deterministic generator on top of std::mt19937_64. All distributions are
// implemented here rather than via <random> distribution classes, whose
// algorithms the standard leaves unspecified; this keeps draws reproducible
// across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1) with 53 random bits.
  double uniform01();

  // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
  // so the draw count is a fixed function of the call count.
  double normal();

  // Normal(0, stddev) conditioned on [lo, hi], by rejection.
  double trunc_normal(double stddev, double lo, double hi);

  // Uniform over {0, ..., n-1}.
  int uniform_int(int n);

  // Index distributed per `probs` (assumed to sum to 1).
  int categorical(const std::vector<double>& probs);

 private:
  std::mt19937_64 gen_;
};

// Named sub-stream keyed by the global seed. Streams used by the toolkit:
// "policy", "init", "basis", "data", "scaling-ties". The index picks
// independent members within a stream (e.g. per-seed inits).
Rng stream_rng(uint64_t global_seed, std::string_view stream, uint64_t index = 0);

}  // namespace vitforge
