#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vitforge/rng.hpp"
#include "vitforge/topology.hpp"

namespace vitforge {

// Factorized categorical distribution over a SearchSpace: one softmax head per
// dimension, logits starting at zero (the uniform policy).
struct Policy {
  std::vector<std::vector<double>> logits;
  int t = 0;  // completed (successful) update steps

  explicit Policy(const SearchSpace& space);
  std::vector<std::vector<double>> probs() const;
  double entropy() const;  // nats, summed over independent heads
  std::vector<int> sample(Rng& rng) const;
  std::vector<int> argmax() const;
};

// Raw metric sequences over successful steps; normalization happens on read.
struct RewardHistory {
  std::vector<double> LE;
  std::vector<double> kappa_theta;

  void push(double le, double kt) {
    LE.push_back(le);
    kappa_theta.push_back(kt);
  }
  int size() const { return static_cast<int>(LE.size()); }
};

// Normalized deltas at 1-based step t: (value_t - value_{t-1}) divided by the
// min/max range over steps 1..t (current included). Step 1 has no predecessor
// and returns zeros. Zero ranges are guarded by range_eps.
std::pair<double, double> normalize_reward(const RewardHistory& h, int t,
                                           double range_eps = 1e-8);

struct SearchConfig {
  int steps = 500;
  double lr = 0.05;
  double baseline_decay = 0.9;  // EMA baseline over rewards, initialized at 0
  double range_eps = 1e-8;
};

// Returns (L^E, kappa_Theta) for a candidate; throws EvalError on failure.
using SearchEvaluator = std::function<std::pair<double, double>(const TopologySpec&)>;

struct StepRecord {
  int attempt = 0;  // 1-based attempt index, failures included
  TopologySpec spec;
  bool failed = false;
  double LE = 0, kappa_theta = 0;
  double reward = 0;
  double entropy = 0;  // policy entropy after this attempt
};

struct SearchState {
  Policy policy;
  RewardHistory history;
  double baseline = 0;

  explicit SearchState(const SearchSpace& space) : policy(space) {}
};

// One sample/evaluate/update cycle. On evaluator failure the record is marked
// failed and policy, history and baseline are left untouched.
StepRecord search_step(SearchState& st, const SearchSpace& space, const SearchEvaluator& ev,
                       const SearchConfig& cfg, Rng& rng);

struct SearchResult {
  TopologySpec best;  // argmax-probability topology from the final policy
  std::vector<StepRecord> trajectory;
  double initial_entropy = 0;
  double final_entropy = 0;
};

// Runs cfg.steps attempts starting from (and mutating) an existing state;
// used both for fresh searches and checkpoint resumes.
SearchResult run_search_from(SearchState& st, const SearchSpace& space,
                             const SearchEvaluator& ev, const SearchConfig& cfg, Rng& rng);

SearchResult run_search(const SearchSpace& space, const SearchEvaluator& ev,
                        const SearchConfig& cfg, Rng& rng);

// The argmax spec followed by the best distinct successful candidates ranked
// by raw L^E, at most k entries in total.
std::vector<TopologySpec> top_candidates(const SearchSpace& space, const Policy& policy,
                                         const std::vector<StepRecord>& trajectory, int k);

// Checkpoint codec (JSON): logits, step count, baseline, metric history.
std::string encode_policy(const SearchState& st, const SearchSpace& space);
SearchState decode_policy(const std::string& text, const SearchSpace& space);

}  // namespace vitforge
