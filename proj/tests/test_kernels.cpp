#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "vitforge/kernels.hpp"
#include "vitforge/rng.hpp"

using namespace vitforge;
namespace k = kernels;

namespace {

std::vector<double> randv(size_t n, uint64_t salt) {
  Rng rng = stream_rng(1234, "kernel-test", salt);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

struct BackendGuard {
  k::Backend saved = k::backend();
  int threads = k::max_threads();
  ~BackendGuard() {
    k::set_backend(saved);
    k::set_max_threads(threads);
  }
};

void naive_matmul_nn(const double* A, const double* B, double* C, int m, int kk, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int p = 0; p < kk; ++p) s += A[i * kk + p] * B[p * n + j];
      C[i * n + j] = s;
    }
}

}  // namespace

TEST_CASE("matmul variants against a naive reference") {
  const int m = 7, kk = 5, n = 6;
  auto A = randv(m * kk, 1), B = randv(kk * n, 2);
  std::vector<double> want(m * n), got(m * n);
  naive_matmul_nn(A.data(), B.data(), want.data(), m, kk, n);

  k::matmul_nn(A.data(), B.data(), got.data(), m, kk, n);
  for (int i = 0; i < m * n; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // nt: B stored transposed (n, kk)
  std::vector<double> Bt(kk * n);
  for (int p = 0; p < kk; ++p)
    for (int j = 0; j < n; ++j) Bt[j * kk + p] = B[p * n + j];
  k::matmul_nt(A.data(), Bt.data(), got.data(), m, kk, n);
  for (int i = 0; i < m * n; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // tn: A stored transposed (kk, m)
  std::vector<double> At(m * kk);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < kk; ++p) At[p * m + i] = A[i * kk + p];
  k::matmul_tn(At.data(), B.data(), got.data(), m, kk, n);
  for (int i = 0; i < m * n; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  SUBCASE("accumulate flag adds instead of overwriting") {
    std::vector<double> acc(m * n, 1.5);
    k::matmul_nn(A.data(), B.data(), acc.data(), m, kk, n, true);
    for (int i = 0; i < m * n; ++i) CHECK(acc[i] == doctest::Approx(1.5 + want[i]).epsilon(1e-12));
  }
}

TEST_CASE("serial and OpenMP backends produce bit-identical results") {
  BackendGuard guard;
  const int m = 13, kk = 9, n = 11;
  auto A = randv(m * kk, 3), B = randv(kk * n, 4);

  auto run = [&](k::Backend b, int threads) {
    k::set_backend(b);
    k::set_max_threads(threads);
    std::vector<double> C(m * n);
    k::matmul_nn(A.data(), B.data(), C.data(), m, kk, n);
    return C;
  };
  auto serial = run(k::Backend::serial, 1);
  if (k::openmp_available()) {
    CHECK(bit_equal(serial, run(k::Backend::openmp, 1)));
    CHECK(bit_equal(serial, run(k::Backend::openmp, 2)));
    CHECK(bit_equal(serial, run(k::Backend::openmp, k::max_threads() > 0 ? 4 : 1)));
  }

  SUBCASE("layernorm and attention too") {
    const int rows = 10, dim = 16;
    auto X = randv(rows * dim, 5), G = randv(dim, 6), Bta = randv(dim, 7);
    auto run_ln = [&](k::Backend b, int threads) {
      k::set_backend(b);
      k::set_max_threads(threads);
      std::vector<double> Y(rows * dim), mean(rows), rstd(rows);
      k::layernorm(X.data(), G.data(), Bta.data(), Y.data(), mean.data(), rstd.data(), rows,
                   dim, 1e-12);
      return Y;
    };
    auto ln_serial = run_ln(k::Backend::serial, 1);
    if (k::openmp_available()) {
      CHECK(bit_equal(ln_serial, run_ln(k::Backend::openmp, 3)));
    }

    const int nw = 4, nn2 = 9, heads = 2, hd = 4, d = heads * hd;
    auto Q = randv(nw * nn2 * d, 8), K = randv(nw * nn2 * d, 9), V = randv(nw * nn2 * d, 10);
    auto run_attn = [&](k::Backend b, int threads) {
      k::set_backend(b);
      k::set_max_threads(threads);
      std::vector<double> probs(static_cast<size_t>(nw) * heads * nn2 * nn2), out(nw * nn2 * d);
      k::attention_forward(Q.data(), K.data(), V.data(), probs.data(), out.data(), nw, nn2,
                           heads, hd);
      return out;
    };
    auto at_serial = run_attn(k::Backend::serial, 1);
    if (k::openmp_available()) {
      CHECK(bit_equal(at_serial, run_attn(k::Backend::openmp, 4)));
    }
  }
}

TEST_CASE("softmax rows: normalization, shift invariance, large-input stability") {
  const int rows = 6, cols = 9;
  auto X = randv(rows * cols, 11);
  auto Y = X;
  k::softmax_rows(Y.data(), rows, cols);
  for (int r = 0; r < rows; ++r) {
    double s = 0;
    for (int c = 0; c < cols; ++c) {
      CHECK(Y[r * cols + c] > 0.0);
      s += Y[r * cols + c];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  auto shifted = X;
  for (auto& v : shifted) v += 1000.0;
  k::softmax_rows(shifted.data(), rows, cols);
  for (size_t i = 0; i < shifted.size(); ++i) {
    CHECK(shifted[i] == doctest::Approx(Y[i]).epsilon(1e-9));
    CHECK(std::isfinite(shifted[i]));
  }
}

TEST_CASE("layernorm forward invariants and backward vs finite differences") {
  const int rows = 4, dim = 8;
  auto X = randv(rows * dim, 12), G = randv(dim, 13), B = randv(dim, 14);
  std::vector<double> Y(rows * dim), mean(rows), rstd(rows);
  std::vector<double> ones(dim, 1.0), zeros(dim, 0.0);
  k::layernorm(X.data(), ones.data(), zeros.data(), Y.data(), mean.data(), rstd.data(), rows,
               dim, 1e-12);
  for (int r = 0; r < rows; ++r) {
    double m = 0, var = 0;
    for (int c = 0; c < dim; ++c) m += Y[r * dim + c];
    m /= dim;
    for (int c = 0; c < dim; ++c) var += (Y[r * dim + c] - m) * (Y[r * dim + c] - m);
    var /= dim;
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-8);
  }

  k::layernorm(X.data(), G.data(), B.data(), Y.data(), mean.data(), rstd.data(), rows, dim,
               1e-12);
  auto W = randv(rows * dim, 15);  // loss = sum(Y * W)
  std::vector<double> dx(rows * dim), dgamma(dim, 0.0), dbeta(dim, 0.0);
  k::layernorm_backward(X.data(), G.data(), mean.data(), rstd.data(), W.data(), dx.data(),
                        dgamma.data(), dbeta.data(), rows, dim);

  auto loss = [&](const std::vector<double>& x, const std::vector<double>& g,
                  const std::vector<double>& b) {
    std::vector<double> y(rows * dim), mm(rows), rs(rows);
    k::layernorm(x.data(), g.data(), b.data(), y.data(), mm.data(), rs.data(), rows, dim,
                 1e-12);
    double s = 0;
    for (size_t i = 0; i < y.size(); ++i) s += y[i] * W[i];
    return s;
  };
  const double h = 1e-6;
  for (size_t i = 0; i < X.size(); ++i) {
    auto xp = X, xm = X;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss(xp, G, B) - loss(xm, G, B)) / (2 * h);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (int c = 0; c < dim; ++c) {
    auto gp = G, gm = G;
    gp[c] += h;
    gm[c] -= h;
    CHECK(dgamma[c] == doctest::Approx((loss(X, gp, B) - loss(X, gm, B)) / (2 * h)).epsilon(1e-5));
    auto bp = B, bm = B;
    bp[c] += h;
    bm[c] -= h;
    CHECK(dbeta[c] == doctest::Approx((loss(X, G, bp) - loss(X, G, bm)) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("gelu endpoint behaviour and derivative") {
  std::vector<double> x = {-8.0, -1.0, 0.0, 0.5, 1.0, 8.0};
  std::vector<double> y(x.size());
  k::gelu(x.data(), y.data(), static_cast<int64_t>(x.size()));
  CHECK(y[2] == 0.0);
  CHECK(y[5] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(std::abs(y[0]) < 1e-12);
  // gelu(1) = 0.5 * (1 + erf(1/sqrt(2)))
  CHECK(y[4] == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))).epsilon(1e-12));

  std::vector<double> dy(x.size(), 1.0), dx(x.size());
  k::gelu_backward(x.data(), dy.data(), dx.data(), static_cast<int64_t>(x.size()));
  const double h = 1e-6;
  for (size_t i = 0; i < x.size(); ++i) {
    double xp = x[i] + h, xm = x[i] - h, yp, ym;
    k::gelu(&xp, &yp, 1);
    k::gelu(&xm, &ym, 1);
    CHECK(dx[i] == doctest::Approx((yp - ym) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("conv geometry: ceil output size and centered padding") {
  auto g = k::conv_geometry(32, 32, 8, 4, 1);
  CHECK(g.out_h == 8);
  CHECK(g.out_w == 8);
  CHECK(g.pad_top == 2);  // total (8-1)*4+8-32 = 4, split 2/2
  CHECK(g.pad_left == 2);

  auto g2 = k::conv_geometry(32, 32, 8, 16, 5);  // dilated coarse phase
  CHECK(g2.extent() == 36);
  CHECK(g2.out_h == 2);  // ceil(32/16)
  // total pad = (2-1)*16 + 36 - 32 = 20 -> top 10
  CHECK(g2.pad_top == 10);

  auto g3 = k::conv_geometry(7, 6, 3, 2, 1);
  CHECK(g3.out_h == 4);
  CHECK(g3.out_w == 3);

  auto g4 = k::conv_geometry(1, 1, 4, 2, 1);  // deep stage on a collapsed grid
  CHECK(g4.out_h == 1);
  CHECK(g4.out_w == 1);
}

TEST_CASE("conv2d: identity kernel and finite-difference gradients") {
  SUBCASE("1x1 stride-1 kernel copies channels") {
    const int c = 2, H = 4, W = 3;
    auto x = randv(c * H * W, 16);
    std::vector<double> w = {1.0, 0.0, 0.0, 1.0};  // (oc=2, ic=2, 1, 1) identity mix
    std::vector<double> b = {0.25, -0.5};
    auto g = k::conv_geometry(H, W, 1, 1, 1);
    std::vector<double> y(c * H * W);
    k::conv2d(x.data(), w.data(), b.data(), y.data(), c, c, g);
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < H * W; ++i)
        CHECK(y[ch * H * W + i] == doctest::Approx(x[ch * H * W + i] + b[ch]).epsilon(1e-12));
  }

  SUBCASE("gradients match finite differences, including dilation") {
    const int ic = 2, oc = 3, kk = 3, H = 7, W = 6;
    for (int dil : {1, 2}) {
      auto g = k::conv_geometry(H, W, kk, 2, dil);
      auto x = randv(ic * H * W, 17 + dil);
      auto w = randv(oc * ic * kk * kk, 18 + dil);
      auto b = randv(oc, 19 + dil);
      auto lossW = randv(static_cast<size_t>(oc) * g.out_h * g.out_w, 20 + dil);

      auto loss = [&](const std::vector<double>& xx, const std::vector<double>& ww,
                      const std::vector<double>& bb) {
        std::vector<double> y(lossW.size());
        k::conv2d(xx.data(), ww.data(), bb.data(), y.data(), ic, oc, g);
        double s = 0;
        for (size_t i = 0; i < y.size(); ++i) s += y[i] * lossW[i];
        return s;
      };

      std::vector<double> dx(x.size()), dw(w.size(), 0.0), db(b.size(), 0.0);
      k::conv2d_backward_input(w.data(), lossW.data(), dx.data(), ic, oc, g);
      k::conv2d_backward_params(x.data(), lossW.data(), dw.data(), db.data(), ic, oc, g);

      const double h = 1e-6;
      for (size_t i = 0; i < x.size(); i += 5) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        CHECK(dx[i] == doctest::Approx((loss(xp, w, b) - loss(xm, w, b)) / (2 * h))
                           .epsilon(1e-5));
      }
      for (size_t i = 0; i < w.size(); i += 7) {
        auto wp = w, wm = w;
        wp[i] += h;
        wm[i] -= h;
        CHECK(dw[i] == doctest::Approx((loss(x, wp, b) - loss(x, wm, b)) / (2 * h))
                           .epsilon(1e-5));
      }
      for (size_t i = 0; i < b.size(); ++i) {
        auto bp = b, bm = b;
        bp[i] += h;
        bm[i] -= h;
        CHECK(db[i] == doctest::Approx((loss(x, w, bp) - loss(x, w, bm)) / (2 * h))
                           .epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("attention: hand-checkable cases and finite-difference gradients") {
  SUBCASE("uniform values pass through") {
    const int nw = 2, n = 3, heads = 2, hd = 2, d = heads * hd;
    auto Q = randv(nw * n * d, 21), K = randv(nw * n * d, 22);
    std::vector<double> V(nw * n * d);
    for (int t = 0; t < nw * n; ++t)
      for (int c = 0; c < d; ++c) V[t * d + c] = 3.5 - c;  // same row everywhere
    std::vector<double> probs(static_cast<size_t>(nw) * heads * n * n), out(nw * n * d);
    k::attention_forward(Q.data(), K.data(), V.data(), probs.data(), out.data(), nw, n, heads,
                         hd);
    for (int t = 0; t < nw * n; ++t)
      for (int c = 0; c < d; ++c) CHECK(out[t * d + c] == doctest::Approx(3.5 - c).epsilon(1e-12));
  }

  SUBCASE("single head matches an explicit softmax computation") {
    const int n = 2, hd = 2;
    std::vector<double> Q = {1.0, 0.0, 0.0, 1.0};
    std::vector<double> K = {2.0, 0.0, 0.0, 2.0};
    std::vector<double> V = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> probs(n * n), out(n * hd);
    k::attention_forward(Q.data(), K.data(), V.data(), probs.data(), out.data(), 1, n, 1, hd);
    const double s = 2.0 / std::sqrt(2.0);  // q.k / sqrt(hd) for the matching pair
    const double p_match = std::exp(s) / (std::exp(s) + 1.0);
    CHECK(probs[0] == doctest::Approx(p_match).epsilon(1e-12));
    CHECK(out[0] == doctest::Approx(p_match * 1.0 + (1 - p_match) * 3.0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(p_match * 2.0 + (1 - p_match) * 4.0).epsilon(1e-12));
  }

  SUBCASE("backward matches finite differences") {
    const int nw = 2, n = 3, heads = 2, hd = 2, d = heads * hd;
    auto Q = randv(nw * n * d, 23), K = randv(nw * n * d, 24), V = randv(nw * n * d, 25);
    auto W = randv(nw * n * d, 26);

    auto loss = [&](const std::vector<double>& q, const std::vector<double>& kk2,
                    const std::vector<double>& v) {
      std::vector<double> probs(static_cast<size_t>(nw) * heads * n * n), out(nw * n * d);
      k::attention_forward(q.data(), kk2.data(), v.data(), probs.data(), out.data(), nw, n,
                           heads, hd);
      double s = 0;
      for (size_t i = 0; i < out.size(); ++i) s += out[i] * W[i];
      return s;
    };

    std::vector<double> probs(static_cast<size_t>(nw) * heads * n * n), out(nw * n * d);
    k::attention_forward(Q.data(), K.data(), V.data(), probs.data(), out.data(), nw, n, heads,
                         hd);
    std::vector<double> dQ(Q.size()), dK(K.size()), dV(V.size());
    k::attention_backward(Q.data(), K.data(), V.data(), probs.data(), W.data(), dQ.data(),
                          dK.data(), dV.data(), nw, n, heads, hd);

    const double h = 1e-6;
    for (size_t i = 0; i < Q.size(); ++i) {
      auto p = Q, m = Q;
      p[i] += h;
      m[i] -= h;
      CHECK(dQ[i] == doctest::Approx((loss(p, K, V) - loss(m, K, V)) / (2 * h)).epsilon(2e-5));
      auto pk = K, mk = K;
      pk[i] += h;
      mk[i] -= h;
      CHECK(dK[i] == doctest::Approx((loss(Q, pk, V) - loss(Q, mk, V)) / (2 * h)).epsilon(2e-5));
      auto pv = V, mv = V;
      pv[i] += h;
      mv[i] -= h;
      CHECK(dV[i] == doctest::Approx((loss(Q, K, pv) - loss(Q, K, mv)) / (2 * h)).epsilon(2e-5));
    }
  }
}

TEST_CASE("reductions: col_sums_acc, mean_over_rows, dot") {
  const int rows = 5, cols = 4;
  auto X = randv(rows * cols, 27);
  std::vector<double> sums(cols, 1.0);
  k::col_sums_acc(X.data(), sums.data(), rows, cols);
  for (int c = 0; c < cols; ++c) {
    double want = 1.0;
    for (int r = 0; r < rows; ++r) want += X[r * cols + c];
    CHECK(sums[c] == doctest::Approx(want).epsilon(1e-12));
  }

  std::vector<double> mean(cols);
  k::mean_over_rows(X.data(), mean.data(), rows, cols);
  for (int c = 0; c < cols; ++c) {
    double want = 0;
    for (int r = 0; r < rows; ++r) want += X[r * cols + c];
    CHECK(mean[c] == doctest::Approx(want / rows).epsilon(1e-12));
  }

  auto a = randv(37, 28), b = randv(37, 29);
  const double want = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  CHECK(k::dot(a.data(), b.data(), 37) == doctest::Approx(want).epsilon(1e-12));

  BackendGuard guard;
  k::set_backend(k::Backend::serial);
  const double serial = k::dot(a.data(), b.data(), 37);
  if (k::openmp_available()) {
    k::set_backend(k::Backend::openmp);
    CHECK(k::dot(a.data(), b.data(), 37) == serial);  // bit-identical by design
  }
}
