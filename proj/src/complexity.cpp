#include "vitforge/complexity.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <memory>

#include "vitforge/errors.hpp"
#include "vitforge/kernels.hpp"
#include "vitforge/nn.hpp"

namespace vitforge {

namespace {

double norm2(const std::vector<double>& v) {
  return kernels::dot(v.data(), v.data(), static_cast<int64_t>(v.size()));
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw EvalError(std::string("non-finite ") + what);
  }
}

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

}  // namespace

CircleBasis make_circle_basis(int n, Rng& rng) {
  if (n < 2) throw ConfigError("circle basis needs dimension >= 2");
  CircleBasis b;
  b.n = n;
  b.u0.resize(n);
  b.u1.resize(n);
  for (int tries = 0; tries < 100; ++tries) {
    for (auto& x : b.u0) x = rng.normal();
    for (auto& x : b.u1) x = rng.normal();
    double n0 = std::sqrt(norm2(b.u0));
    if (n0 < 1e-8) continue;
    for (auto& x : b.u0) x /= n0;
    const double proj = kernels::dot(b.u1.data(), b.u0.data(), n);
    for (int i = 0; i < n; ++i) b.u1[i] -= proj * b.u0[i];
    double n1 = std::sqrt(norm2(b.u1));
    if (n1 < 1e-8) continue;
    for (auto& x : b.u1) x /= n1;
    return b;
  }
  throw EvalError("failed to draw an orthonormal circle basis");
}

std::vector<double> circle_point(const CircleBasis& b, double theta) {
  const double r = std::sqrt(static_cast<double>(b.n));
  const double c = r * std::cos(theta), s = r * std::sin(theta);
  std::vector<double> h(b.n);
  for (int i = 0; i < b.n; ++i) h[i] = c * b.u0[i] + s * b.u1[i];
  return h;
}

std::pair<std::vector<double>, std::vector<double>> jacobians_theta(const NetFn& f,
                                                                    const CircleBasis& basis,
                                                                    double theta, double step) {
  if (step <= 0) throw ConfigError("finite-difference step must be positive");
  auto fp = f(circle_point(basis, theta + step));
  auto fm = f(circle_point(basis, theta - step));
  auto f0 = f(circle_point(basis, theta));
  check_finite(fp, "network output");
  check_finite(fm, "network output");
  check_finite(f0, "network output");
  const size_t d = f0.size();
  if (fp.size() != d || fm.size() != d) throw EvalError("output dimension changed with theta");
  std::vector<double> v(d), a(d);
  const double inv2s = 1.0 / (2.0 * step), invss = 1.0 / (step * step);
  for (size_t i = 0; i < d; ++i) {
    v[i] = (fp[i] - fm[i]) * inv2s;
    a[i] = (fp[i] - 2.0 * f0[i] + fm[i]) * invss;
  }
  return {std::move(v), std::move(a)};
}

ManifoldMetrics manifold_metrics(const NetFn& f, const CircleBasis& basis, const Protocol& p) {
  if (p.theta_samples < 1) throw ConfigError("theta_samples must be >= 1");
  const int M = p.theta_samples;
  const double s = p.step();
  const double dtheta = kTwoPi / M;
  const bool printed = p.length_form == LengthForm::as_printed;

  ManifoldMetrics out;
  std::vector<double> vhat_p, vhat_m;
  for (int j = 0; j < M; ++j) {
    const double theta = j * dtheta;
    auto fm2 = f(circle_point(basis, theta - 2 * s));
    auto fm1 = f(circle_point(basis, theta - s));
    auto f0 = f(circle_point(basis, theta));
    auto fp1 = f(circle_point(basis, theta + s));
    auto fp2 = f(circle_point(basis, theta + 2 * s));
    check_finite(fm2, "network output");
    check_finite(fm1, "network output");
    check_finite(f0, "network output");
    check_finite(fp1, "network output");
    check_finite(fp2, "network output");
    const size_t d = f0.size();

    std::vector<double> v(d), a(d), vp(d), vm(d);
    const double inv2s = 1.0 / (2.0 * s), invss = 1.0 / (s * s);
    for (size_t i = 0; i < d; ++i) {
      v[i] = (fp1[i] - fm1[i]) * inv2s;
      a[i] = (fp1[i] - 2.0 * f0[i] + fm1[i]) * invss;
      vp[i] = (fp2[i] - f0[i]) * inv2s;  // tangent at theta + s
      vm[i] = (f0[i] - fm2[i]) * inv2s;  // tangent at theta - s
    }

    const double vv = norm2(v);
    const double vnorm = std::sqrt(vv);
    if (vnorm < 1e-12) throw EvalError("degenerate tangent: |v| below 1e-12");
    const double aa = norm2(a);
    const double va = kernels::dot(v.data(), a.data(), static_cast<int64_t>(d));
    const double disc = std::max(vv * aa - va * va, 0.0);
    out.kappa += std::pow(vv, -1.5) * std::sqrt(disc) * dtheta;
    out.LE += (printed ? std::sqrt(vnorm) : vnorm) * dtheta;

    const double np = std::sqrt(norm2(vp)), nm = std::sqrt(norm2(vm));
    if (np < 1e-12 || nm < 1e-12) throw EvalError("degenerate tangent: |v| below 1e-12");
    double acc = 0.0;
    for (size_t i = 0; i < d; ++i) {
      const double dv = (vp[i] / np - vm[i] / nm) * inv2s;
      acc += dv * dv;
    }
    const double dvhat = std::sqrt(acc);
    out.LE_kappa += (printed ? std::sqrt(dvhat) : dvhat) * dtheta;
  }
  if (!std::isfinite(out.kappa) || !std::isfinite(out.LE) || !std::isfinite(out.LE_kappa)) {
    throw EvalError("non-finite complexity metric");
  }
  return out;
}

double curvature(const NetFn& f, const CircleBasis& basis, const Protocol& p) {
  return manifold_metrics(f, basis, p).kappa;
}

// Unlike the curvature-flavoured metrics, plain length distortion is well
// defined for a vanishing tangent (a constant map has length 0), so this one
// runs without the degeneracy guard.
double length_distortion(const NetFn& f, const CircleBasis& basis, const Protocol& p) {
  if (p.theta_samples < 1) throw ConfigError("theta_samples must be >= 1");
  const int M = p.theta_samples;
  const double s = p.step();
  const double dtheta = kTwoPi / M;
  const bool printed = p.length_form == LengthForm::as_printed;
  double out = 0.0;
  for (int j = 0; j < M; ++j) {
    const double theta = j * dtheta;
    auto fp = f(circle_point(basis, theta + s));
    auto fm = f(circle_point(basis, theta - s));
    check_finite(fp, "network output");
    check_finite(fm, "network output");
    std::vector<double> v(fp.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = (fp[i] - fm[i]) / (2.0 * s);
    const double vnorm = std::sqrt(norm2(v));
    out += (printed ? std::sqrt(vnorm) : vnorm) * dtheta;
  }
  return out;
}
double length_distortion_curv(const NetFn& f, const CircleBasis& basis, const Protocol& p) {
  return manifold_metrics(f, basis, p).LE_kappa;
}

std::vector<double> ntk_matrix(const GradFn& grad,
                               const std::vector<std::vector<double>>& batch) {
  const size_t B = batch.size();
  if (B < 2) throw ConfigError("NTK batch must hold at least 2 samples");
  std::vector<std::vector<double>> g(B);
  for (size_t i = 0; i < B; ++i) {
    g[i] = grad(batch[i]);
    check_finite(g[i], "gradient");
    if (g[i].size() != g[0].size()) throw EvalError("gradient length varies across batch");
  }
  std::vector<double> theta(B * B);
  for (size_t i = 0; i < B; ++i) {
    for (size_t j = i; j < B; ++j) {
      const double d =
          kernels::dot(g[i].data(), g[j].data(), static_cast<int64_t>(g[i].size()));
      theta[i * B + j] = d;
      theta[j * B + i] = d;
    }
  }
  return theta;
}

double ntk_condition(const GradFn& grad, const std::vector<std::vector<double>>& batch) {
  const size_t B = batch.size();
  std::vector<double> theta = ntk_matrix(grad, batch);
  Eigen::MatrixXd m(B, B);
  for (size_t i = 0; i < B; ++i)
    for (size_t j = 0; j < B; ++j) m(i, j) = theta[i * B + j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw EvalError("NTK eigendecomposition failed");
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(B - 1);
  if (!(lmax > 0)) throw EvalError("NTK matrix is not positive");
  if (lmin <= 1e-10 * lmax) throw EvalError("singular NTK matrix (lambda_min ~ 0)");
  return lmax / lmin;
}

EvalFixtures make_fixtures(uint64_t global_seed, int input_dim, int batch_size) {
  if (batch_size < 2) throw ConfigError("NTK batch must hold at least 2 samples");
  Rng rng = stream_rng(global_seed, "basis");
  EvalFixtures fx;
  fx.basis = make_circle_basis(input_dim, rng);
  fx.ntk_batch.resize(batch_size);
  for (auto& x : fx.ntk_batch) {
    x.resize(input_dim);
    for (auto& v : x) v = rng.normal();
  }
  return fx;
}

ComplexityReport evaluate(const NetFactory& factory, const EvalFixtures& fx,
                          const Protocol& p) {
  if (p.seeds < 1) throw ConfigError("seed count must be >= 1");
  ComplexityReport rep;
  const double t_start = now_ms();
  for (int i = 0; i < p.seeds; ++i) {
    const double t0 = now_ms();
    try {
      SeedNet sn = factory(i);
      ManifoldMetrics m = manifold_metrics(sn.f, fx.basis, p);
      SeedMetrics row;
      row.seed_index = i;
      row.kappa = m.kappa;
      row.LE = m.LE;
      row.LE_kappa = m.LE_kappa;
      row.kappa_theta = ntk_condition(sn.grad, fx.ntk_batch);
      row.wall_ms = now_ms() - t0;
      rep.per_seed.push_back(row);
    } catch (const EvalError& e) {
      throw EvalError("seed " + std::to_string(i) + ": " + e.what());
    }
  }
  for (const SeedMetrics& r : rep.per_seed) {
    rep.kappa += r.kappa;
    rep.LE += r.LE;
    rep.LE_kappa += r.LE_kappa;
    rep.kappa_theta += r.kappa_theta;
  }
  const double inv = 1.0 / rep.per_seed.size();
  rep.kappa *= inv;
  rep.LE *= inv;
  rep.LE_kappa *= inv;
  rep.kappa_theta *= inv;
  rep.wall_ms = now_ms() - t_start;
  return rep;
}

ComplexityReport evaluate_topology(const TopologySpec& t, const ScaleSpec& s, int input_res,
                                   uint64_t global_seed, const EvalFixtures& fx,
                                   const Protocol& p) {
  const int want_dim = 3 * input_res * input_res;
  if (fx.basis.n != want_dim) throw ConfigError("fixture dimension does not match input_res");
  NetFactory factory = [&](int seed_index) {
    const uint64_t net_seed =
        stream_rng(global_seed, "net-seed", static_cast<uint64_t>(seed_index)).next_u64();
    auto net = std::make_shared<VitNetwork>(build_network(t, s, net_seed, input_res));
    SeedNet sn;
    sn.f = [net](std::span<const double> x) { return forward(*net, x); };
    sn.grad = [net](std::span<const double> x) { return param_gradients(*net, x); };
    return sn;
  };
  return evaluate(factory, fx, p);
}

}  // namespace vitforge
