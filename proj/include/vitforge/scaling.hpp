#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "vitforge/rng.hpp"
#include "vitforge/topology.hpp"

namespace vitforge {

// One grow step: multiply the base width and add a block to one stage.
struct ScalingChoice {
  double width_ratio = 1.05;  // one of 1.05, 1.10, 1.15, 1.20
  int depth_stage = 0;        // stage receiving the extra block, 0..3

  bool operator==(const ScalingChoice&) const = default;
};

// The full 4x4 ratio/stage product in ratio-major order.
std::vector<ScalingChoice> enumerate_choices();

// Pure arithmetic on the scale: C' = round(C * ratio), bumped by at least 1 so
// small widths cannot stall; depth gains one block at the chosen stage. Head
// divisibility is not enforced here, the runner snaps afterwards.
ScaleSpec apply_choice(const ScaleSpec& scale, const ScalingChoice& choice);

// Smallest multiple of `multiple` at or above `width`.
int snap_width(int width, int multiple);

struct RankedCandidate {
  ScalingChoice choice;
  double LE = 0;
  double kappa_theta = 0;
};

// Fractional ranks (ties averaged) by descending L^E and ascending kappa_Theta,
// rank 1 best in each; returns the index with the minimal rank sum. Rank-sum
// ties prefer the larger raw L^E, then the smaller stage, then the smaller
// ratio.
int rank_and_select(const std::vector<RankedCandidate>& candidates);

// Returns (L^E, kappa_Theta) for a candidate scale of the fixed topology;
// throws EvalError on numerical failure.
using ScaleEvaluator = std::function<std::pair<double, double>(const ScaleSpec&)>;

struct ScalingStep {
  ScaleSpec scale;  // after applying the choice (width already snapped)
  size_t params = 0;
  double LE = 0;
  double kappa_theta = 0;
  ScalingChoice choice;
};

struct ScalingTrajectory {
  ScaleSpec seed;
  size_t seed_params = 0;
  double seed_LE = 0;
  double seed_kappa_theta = 0;
  std::vector<ScalingStep> steps;  // param counts strictly increasing
};

// Greedy growth: every step evaluates all 16 snapped candidates, keeps the
// rank-sum winner and repeats until the parameter count reaches the budget.
// Candidates whose evaluation throws EvalError drop out of that step's
// ranking; a step with no survivors aborts the run.
ScalingTrajectory run_autoscale(const TopologySpec& topology, const ScaleSpec& seed,
                                size_t param_budget, const ScaleEvaluator& ev);

// Baseline: a uniformly random choice per step, same snapping and stop rule.
// Only the selected candidate is evaluated.
ScalingTrajectory run_random_scaling(const TopologySpec& topology, const ScaleSpec& seed,
                                     size_t param_budget, const ScaleEvaluator& ev, Rng& rng);

// Fraction of trajectory transitions (seed->first step included) where L^E
// did not drop and kappa_Theta did not rise.
double trend_fraction(const ScalingTrajectory& traj);

}  // namespace vitforge
