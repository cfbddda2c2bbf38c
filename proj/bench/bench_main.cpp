#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "vitforge/kernels.hpp"
#include "vitforge/nn.hpp"
#include "vitforge/rng.hpp"
#include "vitforge/topology.hpp"

using namespace vitforge;
namespace K = vitforge::kernels;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::vector<double> random_vec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Runs fn under both backends, timing best-of-reps, and checks that the
// outputs written into `out` agree bit for bit.
struct Result {
  double serial_ms = 0;
  double openmp_ms = 0;
  bool identical = false;
};

template <typename Fn>
Result compare(Fn&& fn, std::vector<double>& out, int reps) {
  Result r;
  std::vector<double> serial_out;
  for (int pass = 0; pass < 2; ++pass) {
    K::set_backend(pass == 0 ? K::Backend::serial : K::Backend::openmp);
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
      const double t0 = now_ms();
      fn();
      best = std::min(best, now_ms() - t0);
    }
    if (pass == 0) {
      r.serial_ms = best;
      serial_out = out;
    } else {
      r.openmp_ms = best;
      r.identical = serial_out.size() == out.size() &&
                    std::memcmp(serial_out.data(), out.data(),
                                out.size() * sizeof(double)) == 0;
    }
  }
  K::set_backend(K::Backend::openmp);
  return r;
}

bool g_all_identical = true;

void report(const char* name, const char* size, const Result& r) {
  g_all_identical = g_all_identical && r.identical;
  std::printf("%-16s %-22s %10.2f %10.2f %7.2fx  %s\n", name, size, r.serial_ms, r.openmp_ms,
              r.serial_ms / (r.openmp_ms > 0 ? r.openmp_ms : 1e-9),
              r.identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--quick") quick = true;
  }
  const int reps = quick ? 2 : 5;

  std::printf("openmp available: %s, max threads: %d, reps: best of %d\n",
              K::openmp_available() ? "yes" : "no", K::max_threads(), reps);
  std::printf("%-16s %-22s %10s %10s %8s\n", "kernel", "size", "serial ms", "openmp ms",
              "speedup");

  {
    const int n = quick ? 128 : 384;
    auto A = random_vec(static_cast<size_t>(n) * n, 11);
    auto B = random_vec(static_cast<size_t>(n) * n, 12);
    std::vector<double> C(static_cast<size_t>(n) * n);
    char label[64];
    std::snprintf(label, sizeof(label), "%dx%dx%d", n, n, n);
    report("matmul_nn", label,
           compare([&] { K::matmul_nn(A.data(), B.data(), C.data(), n, n, n); }, C, reps));
  }

  {
    const int res = quick ? 64 : 160;
    const int out_c = 64;
    const K::ConvGeom g = K::conv_geometry(res, res, 8, 4, 1);
    auto x = random_vec(static_cast<size_t>(3) * res * res, 21);
    auto w = random_vec(static_cast<size_t>(out_c) * 3 * 8 * 8, 22);
    auto b = random_vec(out_c, 23);
    std::vector<double> y(static_cast<size_t>(out_c) * g.out_h * g.out_w);
    char label[64];
    std::snprintf(label, sizeof(label), "3->%d %dx%d k8s4", out_c, res, res);
    report("conv2d", label,
           compare([&] { K::conv2d(x.data(), w.data(), b.data(), y.data(), 3, out_c, g); }, y,
                   reps));
  }

  {
    const int nw = quick ? 4 : 16, n = 64, heads = 4, hd = 32;
    const size_t td = static_cast<size_t>(nw) * n * heads * hd;
    auto Q = random_vec(td, 31);
    auto Kk = random_vec(td, 32);
    auto V = random_vec(td, 33);
    std::vector<double> probs(static_cast<size_t>(nw) * heads * n * n);
    std::vector<double> out(td);
    char label[64];
    std::snprintf(label, sizeof(label), "%dw x %dt x %dh x %d", nw, n, heads, hd);
    report("attention", label,
           compare(
               [&] {
                 K::attention_forward(Q.data(), Kk.data(), V.data(), probs.data(), out.data(),
                                      nw, n, heads, hd);
               },
               out, reps));
  }

  {
    const int res = quick ? 32 : 64;
    ScaleSpec s;
    s.width = quick ? 16 : 32;
    const VitNetwork net = build_network(seed_topology(), s, 5, res);
    const auto x = random_vec(static_cast<size_t>(3) * res * res, 41);
    std::vector<double> feat(net.feature_dim());
    char label[64];
    std::snprintf(label, sizeof(label), "seed C=%d R=%d", s.width, res);
    report("forward", label, compare([&] {
             auto f = forward(net, x);
             std::copy(f.begin(), f.end(), feat.begin());
           },
           feat, reps));

    std::vector<double> grad(net.param_count());
    const auto dfeat = random_vec(net.feature_dim(), 42);
    report("fwd+backward", label, compare([&] {
             std::fill(grad.begin(), grad.end(), 0.0);
             const CachedForward fwd = forward_cached(net, x);
             backward_into(net, fwd, dfeat, grad.data());
           },
           grad, reps));
  }

  std::printf("%s\n", g_all_identical ? "all kernels bit-identical across backends"
                                      : "BACKEND MISMATCH DETECTED");
  return g_all_identical ? 0 : 1;
}
