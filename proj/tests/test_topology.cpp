#include <doctest.h>

#include <cmath>
#include <set>

#include "vitforge/errors.hpp"
#include "vitforge/rng.hpp"
#include "vitforge/topology.hpp"

using namespace vitforge;

TEST_CASE("search space: dimension list, cardinality, entropy") {
  SearchSpace sp = SearchSpace::full();
  REQUIRE(sp.dims.size() == 12);
  CHECK(sp.dims[0].name == "K1");
  CHECK(sp.dims[0].choices == std::vector<int>{4, 5, 6, 7, 8});
  CHECK(sp.dims[1].name == "S1");
  CHECK(sp.dims[1].choices == std::vector<int>{2, 4, 8});
  CHECK(sp.dims[11].name == "heads");
  CHECK(sp.dims[11].choices == std::vector<int>{16, 32, 64});

  CHECK(sp.size() == 4556250ULL);
  CHECK(std::abs(sp.uniform_entropy() - std::log(4556250.0)) < 1e-12);
  CHECK(sp.uniform_entropy() == doctest::Approx(15.33).epsilon(0.001));

  SUBCASE("cardinality equals brute-force enumeration on sub-spaces") {
    // First three dimensions enumerated exhaustively.
    SearchSpace sub;
    sub.dims.assign(sp.dims.begin(), sp.dims.begin() + 3);
    size_t count = 0;
    for (int a = 0; a < (int)sub.dims[0].choices.size(); ++a)
      for (int b = 0; b < (int)sub.dims[1].choices.size(); ++b)
        for (int c = 0; c < (int)sub.dims[2].choices.size(); ++c) ++count;
    CHECK(sub.size() == count);
    CHECK(count == 5u * 3u * 5u);

    SearchSpace sub2;
    sub2.dims.assign(sp.dims.begin() + 3, sp.dims.begin() + 6);
    std::set<std::vector<int>> seen;
    for (int a : sub2.dims[0].choices)
      for (int b : sub2.dims[1].choices)
        for (int c : sub2.dims[2].choices) seen.insert({a, b, c});
    CHECK(sub2.size() == seen.size());
  }
}

TEST_CASE("seed topology matches the published starting point") {
  TopologySpec t = seed_topology();
  CHECK(t.kernel[0] == 8);
  CHECK(t.kernel[1] == 4);
  CHECK(t.kernel[2] == 4);
  CHECK(t.kernel[3] == 4);
  CHECK(t.split[0] == 2);
  CHECK(t.split[1] == 1);
  CHECK(t.split[2] == 1);
  CHECK(t.split_at(3) == 1);  // final stage always unsplit
  CHECK(t.expansion[0] == 3);
  CHECK(t.expansion[1] == 2);
  CHECK(t.expansion[2] == 4);
  CHECK(t.expansion[3] == 6);
  CHECK(t.heads == 32);
  CHECK(t.heads_at(0) == 4);
  CHECK(t.heads_at(1) == 8);
  CHECK(t.heads_at(2) == 16);
  CHECK(t.heads_at(3) == 32);
  CHECK(validate(t).empty());
}

TEST_CASE("encode/decode round trip and validation") {
  SearchSpace sp = SearchSpace::full();
  Rng rng = stream_rng(7, "topo-test");
  for (int i = 0; i < 50; ++i) {
    TopologySpec t = sample_uniform(sp, rng);
    CHECK(validate(t).empty());
    auto idx = sp.encode(t);
    REQUIRE(idx.size() == 12);
    TopologySpec back = sp.decode(idx);
    CHECK(back == t);
  }

  TopologySpec bad = seed_topology();
  bad.kernel[0] = 9;
  auto errs = validate(bad);
  REQUIRE(errs.size() == 1);
  CHECK(errs[0] == "K1");

  bad = seed_topology();
  bad.heads = 48;
  errs = validate(bad);
  REQUIRE(errs.size() == 1);
  CHECK(errs[0] == "heads");
}

TEST_CASE("uniform sampling hits every choice at the expected rate") {
  SearchSpace sp = SearchSpace::full();
  const int n = 20000;
  Rng rng = stream_rng(99, "topo-freq");
  std::vector<std::vector<int>> counts(sp.dims.size());
  for (size_t d = 0; d < sp.dims.size(); ++d) counts[d].assign(sp.dims[d].choices.size(), 0);
  for (int i = 0; i < n; ++i) {
    TopologySpec t = sample_uniform(sp, rng);
    auto idx = sp.encode(t);
    for (size_t d = 0; d < idx.size(); ++d) ++counts[d][idx[d]];
  }
  // K1 has 5 choices; each should land near 0.2.
  for (int c : counts[0]) CHECK(std::abs(c / double(n) - 0.2) < 0.02);
  for (size_t d = 0; d < counts.size(); ++d) {
    const double want = 1.0 / sp.dims[d].choices.size();
    for (int c : counts[d]) CHECK(std::abs(c / double(n) - want) < 0.03);
  }
}

TEST_CASE("document codec: round trip and strict rejection") {
  TopologySpec t = seed_topology();
  ScaleSpec s;
  s.depth = {3, 1, 4, 2};
  s.width = 88;
  const std::string doc = encode_document(t, s, 42);
  auto [t2, s2, seed] = decode_document(doc);
  CHECK(t2 == t);
  CHECK(s2.depth == s.depth);
  CHECK(s2.width == s.width);
  CHECK(seed == 42);

  CHECK_THROWS_AS(decode_document("{"), ConfigError);
  CHECK_THROWS_AS(decode_document("[]"), ConfigError);

  auto corrupt = [&](const std::string& from, const std::string& to) {
    std::string d = doc;
    auto at = d.find(from);
    REQUIRE(at != std::string::npos);
    d.replace(at, from.size(), to);
    return d;
  };
  // unknown key
  CHECK_THROWS_AS(decode_document(corrupt("\"K1\"", "\"K9\"")), ConfigError);
  // wrong type
  CHECK_THROWS_AS(decode_document(corrupt("\"K1\": 8", "\"K1\": \"8\"")), ConfigError);
  // out-of-space value
  CHECK_THROWS_AS(decode_document(corrupt("\"K1\": 8", "\"K1\": 9")), ConfigError);
  // wrong schema version
  CHECK_THROWS_AS(decode_document(corrupt("\"schema_version\": 1", "\"schema_version\": 2")),
                  ConfigError);
}

TEST_CASE("spec hash: stable, canonical, sensitive to content") {
  TopologySpec t = seed_topology();
  ScaleSpec s;
  CHECK(spec_hash(t, s) == spec_hash(t, s));
  CHECK(spec_hash_hex(t, s).size() == 16);

  TopologySpec t2 = t;
  t2.kernel[0] = 7;
  CHECK(spec_hash(t, s) != spec_hash(t2, s));
  ScaleSpec s2 = s;
  s2.width += 16;
  CHECK(spec_hash(t, s) != spec_hash(t, s2));
}

TEST_CASE("topology/scale pair validation") {
  TopologySpec t = seed_topology();  // heads 32 -> stage-1 head count 4
  ScaleSpec s;
  s.width = 32;
  CHECK_NOTHROW(validate_pair(t, s));

  ScaleSpec bad = s;
  bad.width = 30;  // not divisible by 4
  CHECK_THROWS_AS(validate_pair(t, bad), ConfigError);

  bad = s;
  bad.depth[2] = 0;
  CHECK_THROWS_AS(validate_pair(t, bad), ConfigError);

  bad = s;
  bad.width = 2;  // below one channel per stage-1 head
  CHECK_THROWS_AS(validate_pair(t, bad), ConfigError);
}
