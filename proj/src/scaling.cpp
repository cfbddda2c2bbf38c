#include "vitforge/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vitforge/errors.hpp"
#include "vitforge/nn.hpp"

namespace vitforge {

namespace {

constexpr double kRatios[4] = {1.05, 1.10, 1.15, 1.20};

// Fractional ranks over `keys`, rank 1 for the smallest key. Tied values share
// the average of the positions they span.
std::vector<double> fractional_ranks(const std::vector<double>& keys) {
  const int n = static_cast<int>(keys.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return keys[a] < keys[b]; });
  std::vector<double> ranks(n, 0.0);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && keys[order[j + 1]] == keys[order[i]]) ++j;
    const double shared = (i + j) / 2.0 + 1.0;  // positions are 0-based
    for (int k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

ScaleSpec snapped_candidate(const TopologySpec& topology, const ScaleSpec& scale,
                            const ScalingChoice& choice) {
  ScaleSpec next = apply_choice(scale, choice);
  next.width = snap_width(next.width, std::max(topology.heads / 8, 1));
  return next;
}

ScalingStep make_step(const TopologySpec& topology, const ScaleSpec& scale,
                      const ScalingChoice& choice, double le, double kt) {
  ScalingStep st;
  st.scale = scale;
  st.params = count_params(topology, scale);
  st.LE = le;
  st.kappa_theta = kt;
  st.choice = choice;
  return st;
}

}  // namespace

std::vector<ScalingChoice> enumerate_choices() {
  std::vector<ScalingChoice> out;
  out.reserve(16);
  for (double r : kRatios) {
    for (int stage = 0; stage < 4; ++stage) out.push_back({r, stage});
  }
  return out;
}

ScaleSpec apply_choice(const ScaleSpec& scale, const ScalingChoice& choice) {
  bool known = false;
  for (double r : kRatios) known = known || r == choice.width_ratio;
  if (!known) throw ConfigError("unknown width ratio " + std::to_string(choice.width_ratio));
  if (choice.depth_stage < 0 || choice.depth_stage > 3) {
    throw ConfigError("depth stage must be 0..3");
  }
  ScaleSpec next = scale;
  next.width = std::max(static_cast<int>(std::lround(scale.width * choice.width_ratio)),
                        scale.width + 1);
  next.depth[choice.depth_stage] += 1;
  return next;
}

int snap_width(int width, int multiple) {
  if (multiple <= 0) throw ConfigError("snap multiple must be positive");
  const int rem = width % multiple;
  return rem == 0 ? width : width + (multiple - rem);
}

int rank_and_select(const std::vector<RankedCandidate>& candidates) {
  if (candidates.empty()) throw ConfigError("rank_and_select needs at least one candidate");
  const int n = static_cast<int>(candidates.size());
  std::vector<double> neg_le(n), kt(n);
  for (int i = 0; i < n; ++i) {
    neg_le[i] = -candidates[i].LE;  // descending L^E
    kt[i] = candidates[i].kappa_theta;
  }
  const std::vector<double> r_le = fractional_ranks(neg_le);
  const std::vector<double> r_kt = fractional_ranks(kt);
  int best = 0;
  auto better = [&](int a, int b) {
    const double sa = r_le[a] + r_kt[a];
    const double sb = r_le[b] + r_kt[b];
    if (sa != sb) return sa < sb;
    if (candidates[a].LE != candidates[b].LE) return candidates[a].LE > candidates[b].LE;
    if (candidates[a].choice.depth_stage != candidates[b].choice.depth_stage) {
      return candidates[a].choice.depth_stage < candidates[b].choice.depth_stage;
    }
    return candidates[a].choice.width_ratio < candidates[b].choice.width_ratio;
  };
  for (int i = 1; i < n; ++i) {
    if (better(i, best)) best = i;
  }
  return best;
}

ScalingTrajectory run_autoscale(const TopologySpec& topology, const ScaleSpec& seed,
                                size_t param_budget, const ScaleEvaluator& ev) {
  ScalingTrajectory traj;
  traj.seed = seed;
  traj.seed_params = count_params(topology, seed);
  if (param_budget <= traj.seed_params) {
    throw ConfigError("parameter budget " + std::to_string(param_budget) +
                      " does not exceed the seed's " + std::to_string(traj.seed_params));
  }
  auto [sle, skt] = ev(seed);
  traj.seed_LE = sle;
  traj.seed_kappa_theta = skt;

  const std::vector<ScalingChoice> choices = enumerate_choices();
  ScaleSpec current = seed;
  while (count_params(topology, current) < param_budget) {
    std::vector<RankedCandidate> ranked;
    std::vector<ScaleSpec> scales;
    ranked.reserve(choices.size());
    scales.reserve(choices.size());
    std::string failures;
    for (const ScalingChoice& c : choices) {
      const ScaleSpec cand = snapped_candidate(topology, current, c);
      try {
        auto [le, kt] = ev(cand);
        ranked.push_back({c, le, kt});
        scales.push_back(cand);
      } catch (const EvalError& e) {
        failures += failures.empty() ? e.what() : std::string("; ") + e.what();
      }
    }
    if (ranked.empty()) {
      throw EvalError("all 16 scaling candidates failed: " + failures);
    }
    const int pick = rank_and_select(ranked);
    current = scales[pick];
    traj.steps.push_back(
        make_step(topology, current, ranked[pick].choice, ranked[pick].LE,
                  ranked[pick].kappa_theta));
  }
  return traj;
}

ScalingTrajectory run_random_scaling(const TopologySpec& topology, const ScaleSpec& seed,
                                     size_t param_budget, const ScaleEvaluator& ev, Rng& rng) {
  ScalingTrajectory traj;
  traj.seed = seed;
  traj.seed_params = count_params(topology, seed);
  if (param_budget <= traj.seed_params) {
    throw ConfigError("parameter budget " + std::to_string(param_budget) +
                      " does not exceed the seed's " + std::to_string(traj.seed_params));
  }
  auto [sle, skt] = ev(seed);
  traj.seed_LE = sle;
  traj.seed_kappa_theta = skt;

  const std::vector<ScalingChoice> choices = enumerate_choices();
  ScaleSpec current = seed;
  while (count_params(topology, current) < param_budget) {
    const ScalingChoice& c = choices[rng.uniform_int(16)];
    current = snapped_candidate(topology, current, c);
    auto [le, kt] = ev(current);
    traj.steps.push_back(make_step(topology, current, c, le, kt));
  }
  return traj;
}

double trend_fraction(const ScalingTrajectory& traj) {
  if (traj.steps.empty()) return 0.0;
  int good = 0;
  double prev_le = traj.seed_LE;
  double prev_kt = traj.seed_kappa_theta;
  for (const ScalingStep& st : traj.steps) {
    if (st.LE >= prev_le && st.kappa_theta <= prev_kt) ++good;
    prev_le = st.LE;
    prev_kt = st.kappa_theta;
  }
  return static_cast<double>(good) / traj.steps.size();
}

}  // namespace vitforge
