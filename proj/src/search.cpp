#include "vitforge/search.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>

#include "vitforge/errors.hpp"

namespace vitforge {

using json = nlohmann::json;

Policy::Policy(const SearchSpace& space) {
  if (space.dims.empty()) throw ConfigError("cannot build a policy over an empty space");
  logits.resize(space.dims.size());
  for (size_t d = 0; d < space.dims.size(); ++d) {
    logits[d].assign(space.dims[d].choices.size(), 0.0);
  }
}

std::vector<std::vector<double>> Policy::probs() const {
  std::vector<std::vector<double>> out(logits.size());
  for (size_t d = 0; d < logits.size(); ++d) {
    const auto& l = logits[d];
    const double mx = *std::max_element(l.begin(), l.end());
    double sum = 0.0;
    out[d].resize(l.size());
    for (size_t c = 0; c < l.size(); ++c) {
      out[d][c] = std::exp(l[c] - mx);
      sum += out[d][c];
    }
    for (auto& p : out[d]) p /= sum;
  }
  return out;
}

double Policy::entropy() const {
  double h = 0.0;
  for (const auto& head : probs()) {
    for (double p : head) {
      if (p > 0.0) h -= p * std::log(p);
    }
  }
  return h;
}

std::vector<int> Policy::sample(Rng& rng) const {
  auto p = probs();
  std::vector<int> idx(p.size());
  for (size_t d = 0; d < p.size(); ++d) idx[d] = rng.categorical(p[d]);
  return idx;
}

std::vector<int> Policy::argmax() const {
  std::vector<int> idx(logits.size());
  for (size_t d = 0; d < logits.size(); ++d) {
    idx[d] = static_cast<int>(
        std::max_element(logits[d].begin(), logits[d].end()) - logits[d].begin());
  }
  return idx;
}

std::pair<double, double> normalize_reward(const RewardHistory& h, int t, double range_eps) {
  if (t < 1 || t > h.size()) throw ConfigError("normalize_reward: step out of range");
  if (t == 1) return {0.0, 0.0};
  auto norm = [&](const std::vector<double>& v) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.begin() + t);
    const double range = std::max(*mx - *mn, range_eps);
    return (v[t - 1] - v[t - 2]) / range;
  };
  return {norm(h.LE), norm(h.kappa_theta)};
}

StepRecord search_step(SearchState& st, const SearchSpace& space, const SearchEvaluator& ev,
                       const SearchConfig& cfg, Rng& rng) {
  StepRecord rec;
  auto idx = st.policy.sample(rng);
  rec.spec = space.decode(idx);

  std::pair<double, double> metrics;
  try {
    metrics = ev(rec.spec);
  } catch (const EvalError&) {
    rec.failed = true;
    rec.entropy = st.policy.entropy();
    return rec;
  }
  rec.LE = metrics.first;
  rec.kappa_theta = metrics.second;

  st.history.push(rec.LE, rec.kappa_theta);
  const int t = st.history.size();
  auto [le_hat, kt_hat] = normalize_reward(st.history, t, cfg.range_eps);
  rec.reward = le_hat - kt_hat;

  const double advantage = rec.reward - st.baseline;
  auto p = st.policy.probs();
  for (size_t d = 0; d < idx.size(); ++d) {
    for (size_t c = 0; c < p[d].size(); ++c) {
      const double onehot = static_cast<int>(c) == idx[d] ? 1.0 : 0.0;
      st.policy.logits[d][c] += cfg.lr * advantage * (onehot - p[d][c]);
    }
  }
  st.baseline = cfg.baseline_decay * st.baseline + (1.0 - cfg.baseline_decay) * rec.reward;
  st.policy.t = t;
  rec.entropy = st.policy.entropy();
  return rec;
}

SearchResult run_search_from(SearchState& st, const SearchSpace& space,
                             const SearchEvaluator& ev, const SearchConfig& cfg, Rng& rng) {
  if (cfg.steps < 1) throw ConfigError("search needs at least one step");
  SearchResult res;
  res.initial_entropy = st.policy.entropy();
  bool any_ok = false;
  for (int i = 1; i <= cfg.steps; ++i) {
    StepRecord rec = search_step(st, space, ev, cfg, rng);
    rec.attempt = i;
    any_ok = any_ok || !rec.failed;
    res.trajectory.push_back(std::move(rec));
  }
  if (!any_ok) throw EvalError("every candidate evaluation failed during search");
  res.final_entropy = st.policy.entropy();
  res.best = space.decode(st.policy.argmax());
  return res;
}

SearchResult run_search(const SearchSpace& space, const SearchEvaluator& ev,
                        const SearchConfig& cfg, Rng& rng) {
  SearchState st(space);
  return run_search_from(st, space, ev, cfg, rng);
}

std::vector<TopologySpec> top_candidates(const SearchSpace& space, const Policy& policy,
                                         const std::vector<StepRecord>& trajectory, int k) {
  if (k < 1) throw ConfigError("need k >= 1 candidates");
  std::vector<TopologySpec> out;
  std::set<uint64_t> seen;
  ScaleSpec unit;  // hashes only distinguish topology here; scale held fixed
  auto push = [&](const TopologySpec& t) {
    if (static_cast<int>(out.size()) >= k) return;
    if (seen.insert(spec_hash(t, unit)).second) out.push_back(t);
  };
  push(space.decode(policy.argmax()));

  std::vector<const StepRecord*> ok;
  for (const auto& r : trajectory) {
    if (!r.failed) ok.push_back(&r);
  }
  std::stable_sort(ok.begin(), ok.end(),
                   [](const StepRecord* a, const StepRecord* b) { return a->LE > b->LE; });
  for (const StepRecord* r : ok) push(r->spec);
  return out;
}

std::string encode_policy(const SearchState& st, const SearchSpace& space) {
  json j;
  j["schema_version"] = 1;
  j["t"] = st.policy.t;
  j["baseline"] = st.baseline;
  json dims = json::array();
  for (size_t d = 0; d < space.dims.size(); ++d) {
    json jd;
    jd["name"] = space.dims[d].name;
    jd["logits"] = st.policy.logits[d];
    dims.push_back(jd);
  }
  j["dims"] = dims;
  j["history"] = {{"LE", st.history.LE}, {"kappa_theta", st.history.kappa_theta}};
  return j.dump(2) + "\n";
}

SearchState decode_policy(const std::string& text, const SearchSpace& space) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad policy checkpoint: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1) {
      throw ConfigError("unsupported policy checkpoint version");
    }
    SearchState st(space);
    const auto& dims = j.at("dims");
    if (dims.size() != space.dims.size()) {
      throw ConfigError("policy checkpoint dimension count mismatch");
    }
    for (size_t d = 0; d < space.dims.size(); ++d) {
      if (dims[d].at("name").get<std::string>() != space.dims[d].name) {
        throw ConfigError("policy checkpoint dimension order mismatch");
      }
      auto l = dims[d].at("logits").get<std::vector<double>>();
      if (l.size() != space.dims[d].choices.size()) {
        throw ConfigError("policy checkpoint logit count mismatch");
      }
      st.policy.logits[d] = std::move(l);
    }
    st.policy.t = j.at("t").get<int>();
    st.baseline = j.at("baseline").get<double>();
    st.history.LE = j.at("history").at("LE").get<std::vector<double>>();
    st.history.kappa_theta = j.at("history").at("kappa_theta").get<std::vector<double>>();
    if (st.history.LE.size() != st.history.kappa_theta.size()) {
      throw ConfigError("policy checkpoint history length mismatch");
    }
    return st;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad policy checkpoint: ") + e.what());
  }
}

}  // namespace vitforge
