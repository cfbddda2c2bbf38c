#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vitforge/rng.hpp"

namespace vitforge {

// Stage-level design of a four-stage ViT. Stage s has projection kernel
// kernel[s], attention window split split[s] (stage 4 is fixed at 1 and not
// searched), FFN expansion expansion[s], and heads[s] attention heads where
// `heads` stores the stage-4 count and earlier stages halve it per stage.
struct TopologySpec {
  std::array<int, 4> kernel{8, 4, 4, 4};
  std::array<int, 3> split{2, 1, 1};
  std::array<int, 4> expansion{3, 2, 4, 6};
  int heads = 32;

  int split_at(int stage) const { return stage < 3 ? split[stage] : 1; }
  int heads_at(int stage) const { return heads >> (3 - stage); }

  bool operator==(const TopologySpec&) const = default;
};

// Depths per stage plus the stage-1 width; stage s runs at width * 2^s.
struct ScaleSpec {
  std::array<int, 4> depth{1, 1, 1, 1};
  int width = 32;

  bool operator==(const ScaleSpec&) const = default;
};

// The seed design used as the starting point for auto-scaling.
TopologySpec seed_topology();

// Empty result means valid; otherwise the names of out-of-range fields.
std::vector<std::string> validate(const TopologySpec& t);

// Joint checks for building a network: depths >= 1, width >= heads/8 and
// divisible by the stage-1 head count (so per-head dims stay integral).
// Throws ConfigError naming the violated field.
void validate_pair(const TopologySpec& t, const ScaleSpec& s);

// A categorical product space. dims are ordered; `full()` is the searched
// 12-dimension space (K1 S1 E1 K2 S2 E2 K3 S3 E3 K4 E4 heads).
struct SearchSpace {
  struct Dim {
    std::string name;
    std::vector<int> choices;
  };
  std::vector<Dim> dims;

  static SearchSpace full();
  uint64_t size() const;
  // Sum over dims of ln(cardinality): the entropy of the uniform policy.
  double uniform_entropy() const;
  TopologySpec decode(const std::vector<int>& indices) const;
  std::vector<int> encode(const TopologySpec& t) const;
};

TopologySpec sample_uniform(const SearchSpace& space, Rng& rng);

// Architecture document codec: JSON with top-level keys topology / scale /
// meta{seed, schema_version}. decode rejects unknown fields, missing fields,
// wrong types, and out-of-range values (ConfigError).
std::string encode_document(const TopologySpec& t, const ScaleSpec& s, uint64_t seed);
struct ArchDocument {
  TopologySpec topology;
  ScaleSpec scale;
  uint64_t seed = 0;
};
ArchDocument decode_document(const std::string& text);

// Stable 64-bit id of (topology, scale): FNV-1a over the canonical encoding.
uint64_t spec_hash(const TopologySpec& t, const ScaleSpec& s);
std::string spec_hash_hex(const TopologySpec& t, const ScaleSpec& s);

}  // namespace vitforge
