#include "vitforge/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "vitforge/errors.hpp"

namespace vitforge {

using nlohmann::json;

TopologySpec seed_topology() { return TopologySpec{}; }

namespace {

bool in_choices(int v, const std::vector<int>& c) {
  return std::find(c.begin(), c.end(), v) != c.end();
}

const std::vector<int> kKernel1{4, 5, 6, 7, 8};
const std::vector<int> kSplit1{2, 4, 8};
const std::vector<int> kKernelLater{2, 3, 4};
const std::vector<int> kSplit2{1, 2, 4};
const std::vector<int> kSplit3{1, 2};
const std::vector<int> kExpansion{2, 3, 4, 5, 6};
const std::vector<int> kHeads{16, 32, 64};

}  // namespace

std::vector<std::string> validate(const TopologySpec& t) {
  std::vector<std::string> bad;
  if (!in_choices(t.kernel[0], kKernel1)) bad.push_back("K1");
  if (!in_choices(t.split[0], kSplit1)) bad.push_back("S1");
  if (!in_choices(t.kernel[1], kKernelLater)) bad.push_back("K2");
  if (!in_choices(t.split[1], kSplit2)) bad.push_back("S2");
  if (!in_choices(t.kernel[2], kKernelLater)) bad.push_back("K3");
  if (!in_choices(t.split[2], kSplit3)) bad.push_back("S3");
  if (!in_choices(t.kernel[3], kKernelLater)) bad.push_back("K4");
  for (int s = 0; s < 4; ++s) {
    if (!in_choices(t.expansion[s], kExpansion)) bad.push_back("E" + std::to_string(s + 1));
  }
  if (!in_choices(t.heads, kHeads)) bad.push_back("heads");
  return bad;
}

void validate_pair(const TopologySpec& t, const ScaleSpec& s) {
  auto bad = validate(t);
  if (!bad.empty()) {
    std::string msg = "topology fields out of range:";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg);
  }
  for (int i = 0; i < 4; ++i) {
    if (s.depth[i] < 1) throw ConfigError("L" + std::to_string(i + 1) + " must be >= 1");
  }
  const int stage1_heads = t.heads / 8;
  if (s.width < stage1_heads) {
    throw ConfigError("C must be >= heads/8 (" + std::to_string(stage1_heads) + ")");
  }
  if (s.width % stage1_heads != 0) {
    throw ConfigError("C must be a multiple of the stage-1 head count (" +
                      std::to_string(stage1_heads) + ")");
  }
}

SearchSpace SearchSpace::full() {
  SearchSpace s;
  s.dims = {
      {"K1", kKernel1},     {"S1", kSplit1},      {"E1", kExpansion},
      {"K2", kKernelLater}, {"S2", kSplit2},      {"E2", kExpansion},
      {"K3", kKernelLater}, {"S3", kSplit3},      {"E3", kExpansion},
      {"K4", kKernelLater}, {"E4", kExpansion},   {"heads", kHeads},
  };
  return s;
}

uint64_t SearchSpace::size() const {
  uint64_t n = 1;
  for (const auto& d : dims) n *= d.choices.size();
  return n;
}

double SearchSpace::uniform_entropy() const {
  double h = 0.0;
  for (const auto& d : dims) h += std::log(static_cast<double>(d.choices.size()));
  return h;
}

TopologySpec SearchSpace::decode(const std::vector<int>& indices) const {
  if (indices.size() != dims.size()) throw ConfigError("index vector length mismatch");
  TopologySpec t;
  for (size_t i = 0; i < dims.size(); ++i) {
    const auto& d = dims[i];
    if (indices[i] < 0 || indices[i] >= static_cast<int>(d.choices.size())) {
      throw ConfigError("index out of range for dimension " + d.name);
    }
    const int v = d.choices[indices[i]];
    if (d.name == "K1") t.kernel[0] = v;
    else if (d.name == "K2") t.kernel[1] = v;
    else if (d.name == "K3") t.kernel[2] = v;
    else if (d.name == "K4") t.kernel[3] = v;
    else if (d.name == "S1") t.split[0] = v;
    else if (d.name == "S2") t.split[1] = v;
    else if (d.name == "S3") t.split[2] = v;
    else if (d.name == "E1") t.expansion[0] = v;
    else if (d.name == "E2") t.expansion[1] = v;
    else if (d.name == "E3") t.expansion[2] = v;
    else if (d.name == "E4") t.expansion[3] = v;
    else if (d.name == "heads") t.heads = v;
    else throw ConfigError("unknown search dimension " + d.name);
  }
  return t;
}

std::vector<int> SearchSpace::encode(const TopologySpec& t) const {
  std::vector<int> idx(dims.size());
  for (size_t i = 0; i < dims.size(); ++i) {
    const auto& d = dims[i];
    int v = 0;
    if (d.name == "K1") v = t.kernel[0];
    else if (d.name == "K2") v = t.kernel[1];
    else if (d.name == "K3") v = t.kernel[2];
    else if (d.name == "K4") v = t.kernel[3];
    else if (d.name == "S1") v = t.split[0];
    else if (d.name == "S2") v = t.split[1];
    else if (d.name == "S3") v = t.split[2];
    else if (d.name == "E1") v = t.expansion[0];
    else if (d.name == "E2") v = t.expansion[1];
    else if (d.name == "E3") v = t.expansion[2];
    else if (d.name == "E4") v = t.expansion[3];
    else if (d.name == "heads") v = t.heads;
    auto it = std::find(d.choices.begin(), d.choices.end(), v);
    if (it == d.choices.end()) throw ConfigError("value not in space for dimension " + d.name);
    idx[i] = static_cast<int>(it - d.choices.begin());
  }
  return idx;
}

TopologySpec sample_uniform(const SearchSpace& space, Rng& rng) {
  std::vector<int> idx(space.dims.size());
  for (size_t i = 0; i < space.dims.size(); ++i) {
    idx[i] = rng.uniform_int(static_cast<int>(space.dims[i].choices.size()));
  }
  return space.decode(idx);
}

namespace {

json topology_json(const TopologySpec& t) {
  return json{{"K1", t.kernel[0]}, {"K2", t.kernel[1]}, {"K3", t.kernel[2]},
              {"K4", t.kernel[3]}, {"S1", t.split[0]},  {"S2", t.split[1]},
              {"S3", t.split[2]},  {"E1", t.expansion[0]}, {"E2", t.expansion[1]},
              {"E3", t.expansion[2]}, {"E4", t.expansion[3]}, {"heads", t.heads}};
}

json scale_json(const ScaleSpec& s) {
  return json{{"L1", s.depth[0]}, {"L2", s.depth[1]}, {"L3", s.depth[2]},
              {"L4", s.depth[3]}, {"C", s.width}};
}

int take_int(const json& obj, const char* section, const char* key) {
  if (!obj.contains(key)) {
    throw ConfigError(std::string("missing field ") + section + "." + key);
  }
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError(std::string("field ") + section + "." + key + " must be an integer");
  }
  return v.get<int>();
}

void reject_unknown(const json& obj, const char* section,
                    std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(std::string("unknown field ") + section + "." + it.key());
  }
}

}  // namespace

std::string encode_document(const TopologySpec& t, const ScaleSpec& s, uint64_t seed) {
  json doc{{"topology", topology_json(t)},
           {"scale", scale_json(s)},
           {"meta", json{{"seed", seed}, {"schema_version", 1}}}};
  return doc.dump(2) + "\n";
}

ArchDocument decode_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("document root must be an object");
  reject_unknown(doc, "", {"topology", "scale", "meta"});
  for (const char* k : {"topology", "scale", "meta"}) {
    if (!doc.contains(k)) throw ConfigError(std::string("missing section ") + k);
    if (!doc.at(k).is_object()) throw ConfigError(std::string(k) + " must be an object");
  }
  const json& tj = doc.at("topology");
  reject_unknown(tj, "topology",
                 {"K1", "K2", "K3", "K4", "S1", "S2", "S3", "E1", "E2", "E3", "E4", "heads"});
  ArchDocument out;
  out.topology.kernel = {take_int(tj, "topology", "K1"), take_int(tj, "topology", "K2"),
                         take_int(tj, "topology", "K3"), take_int(tj, "topology", "K4")};
  out.topology.split = {take_int(tj, "topology", "S1"), take_int(tj, "topology", "S2"),
                        take_int(tj, "topology", "S3")};
  out.topology.expansion = {take_int(tj, "topology", "E1"), take_int(tj, "topology", "E2"),
                            take_int(tj, "topology", "E3"), take_int(tj, "topology", "E4")};
  out.topology.heads = take_int(tj, "topology", "heads");
  const json& sj = doc.at("scale");
  reject_unknown(sj, "scale", {"L1", "L2", "L3", "L4", "C"});
  out.scale.depth = {take_int(sj, "scale", "L1"), take_int(sj, "scale", "L2"),
                     take_int(sj, "scale", "L3"), take_int(sj, "scale", "L4")};
  out.scale.width = take_int(sj, "scale", "C");
  const json& mj = doc.at("meta");
  reject_unknown(mj, "meta", {"seed", "schema_version"});
  if (!mj.contains("schema_version")) throw ConfigError("missing field meta.schema_version");
  if (take_int(mj, "meta", "schema_version") != 1) {
    throw ConfigError("unsupported meta.schema_version (expected 1)");
  }
  if (!mj.contains("seed")) throw ConfigError("missing field meta.seed");
  if (!mj.at("seed").is_number_unsigned() && !mj.at("seed").is_number_integer()) {
    throw ConfigError("meta.seed must be an integer");
  }
  out.seed = mj.at("seed").get<uint64_t>();

  auto bad = validate(out.topology);
  if (!bad.empty()) {
    std::string msg = "topology fields out of range:";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg);
  }
  validate_pair(out.topology, out.scale);
  return out;
}

uint64_t spec_hash(const TopologySpec& t, const ScaleSpec& s) {
  json j{{"topology", topology_json(t)}, {"scale", scale_json(s)}};
  return fnv1a64(j.dump());
}

std::string spec_hash_hex(const TopologySpec& t, const ScaleSpec& s) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(spec_hash(t, s)));
  return buf;
}

}  // namespace vitforge
