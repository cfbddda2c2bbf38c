#include "vitforge/rng.hpp"

#include <cmath>

#include "vitforge/errors.hpp"

namespace vitforge {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double Rng::uniform01() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

double Rng::trunc_normal(double stddev, double lo, double hi) {
  for (int i = 0; i < 10000; ++i) {
    double x = normal() * stddev;
    if (x >= lo && x <= hi) return x;
  }
  throw EvalError("trunc_normal: rejection sampling failed; bounds too tight");
}

int Rng::uniform_int(int n) {
  return static_cast<int>(gen_() % static_cast<uint64_t>(n));
}

int Rng::categorical(const std::vector<double>& probs) {
  double u = uniform01();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

Rng stream_rng(uint64_t global_seed, std::string_view stream, uint64_t index) {
  uint64_t s = splitmix64(global_seed ^ fnv1a64(stream));
  s = splitmix64(s + 0x9e3779b97f4a7c15ull * (index + 1));
  return Rng(s);
}

}  // namespace vitforge
