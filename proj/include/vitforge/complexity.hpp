#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "vitforge/rng.hpp"
#include "vitforge/topology.hpp"

namespace vitforge {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Orthonormal pair spanning the 2-plane the probe circle lives in.
struct CircleBasis {
  std::vector<double> u0, u1;
  int n = 0;
};

CircleBasis make_circle_basis(int n, Rng& rng);

// h(theta) = sqrt(N) * (u0 cos(theta) + u1 sin(theta)).
std::vector<double> circle_point(const CircleBasis& b, double theta);

// The length integrands as printed take the square root of the Jacobian norm;
// the conventional arc-length form integrates the norm itself.
enum class LengthForm { as_printed, conventional };

struct Protocol {
  int theta_samples = 10;  // M
  int seeds = 5;
  int ntk_batch = 8;
  double step_scale = 1e-3;  // finite-difference half-width, relative to spacing
  LengthForm length_form = LengthForm::as_printed;

  double step() const { return step_scale * (kTwoPi / theta_samples); }
};

// A network under evaluation, reduced to the two callables the metrics need.
using NetFn = std::function<std::vector<double>(std::span<const double>)>;
using GradFn = std::function<std::vector<double>(std::span<const double>)>;

// Central differences along theta: v = dN(h(theta))/dtheta, a = dv/dtheta.
std::pair<std::vector<double>, std::vector<double>> jacobians_theta(const NetFn& f,
                                                                    const CircleBasis& basis,
                                                                    double theta, double step);

struct ManifoldMetrics {
  double kappa = 0;     // integrated osculating-circle curvature
  double LE = 0;        // length distortion
  double LE_kappa = 0;  // distortion of the normalized tangent
};

// One sweep over the M theta samples computing all three integrals (five
// network evaluations per sample). Throws EvalError on degenerate tangents or
// non-finite outputs.
ManifoldMetrics manifold_metrics(const NetFn& f, const CircleBasis& basis, const Protocol& p);

double curvature(const NetFn& f, const CircleBasis& basis, const Protocol& p);
double length_distortion(const NetFn& f, const CircleBasis& basis, const Protocol& p);
double length_distortion_curv(const NetFn& f, const CircleBasis& basis, const Protocol& p);

// Gram matrix of per-sample gradient vectors, row-major B x B.
std::vector<double> ntk_matrix(const GradFn& grad,
                               const std::vector<std::vector<double>>& batch);

// lambda_max / lambda_min of the Gram matrix. Throws EvalError when the
// smallest eigenvalue is 1e-10 * lambda_max or below (singular kernel).
double ntk_condition(const GradFn& grad, const std::vector<std::vector<double>>& batch);

struct SeedMetrics {
  int seed_index = 0;
  double kappa = 0, LE = 0, LE_kappa = 0, kappa_theta = 0;
  double wall_ms = 0;
};

struct ComplexityReport {
  double kappa = 0, LE = 0, LE_kappa = 0, kappa_theta = 0;  // means over seeds
  std::vector<SeedMetrics> per_seed;
  double wall_ms = 0;
};

struct SeedNet {
  NetFn f;
  GradFn grad;
};
using NetFactory = std::function<SeedNet(int seed_index)>;

// Probe fixtures shared across every candidate in a run, so that metric
// comparisons between architectures are paired: same basis, same NTK batch.
struct EvalFixtures {
  CircleBasis basis;
  std::vector<std::vector<double>> ntk_batch;
};

EvalFixtures make_fixtures(uint64_t global_seed, int input_dim, int batch_size);

ComplexityReport evaluate(const NetFactory& factory, const EvalFixtures& fx,
                          const Protocol& p);

// Builds and scores real networks, one fresh initialization per seed.
ComplexityReport evaluate_topology(const TopologySpec& t, const ScaleSpec& s, int input_res,
                                   uint64_t global_seed, const EvalFixtures& fx,
                                   const Protocol& p);

}  // namespace vitforge
