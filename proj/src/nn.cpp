#include "vitforge/nn.hpp"

#include <cmath>
#include <cstring>

#include "vitforge/errors.hpp"
#include "vitforge/rng.hpp"

namespace vitforge {

namespace k = kernels;

namespace {

struct StageGeom {
  k::ConvGeom conv;
  int g = 0, T = 0, d = 0;
  int S = 1, w = 0, G = 0, Tp = 0, nw = 1, n = 0;
  int heads = 1, head_dim = 1;
  int hidden = 0;
  bool padded() const { return G != g; }
};

StageGeom stage_geometry(const VitNetwork& net, int s, int in_grid, const TokenOverride* ov) {
  const StageRef& st = net.stages[s];
  StageGeom geo;
  int stride = st.conv.stride;
  int dilation = 1;
  if (s == 0 && ov != nullptr) {
    stride = ov->stride;
    dilation = ov->dilation;
  }
  geo.conv = k::conv_geometry(in_grid, in_grid, st.conv.k, stride, dilation);
  geo.g = geo.conv.out_h;
  geo.T = geo.g * geo.g;
  geo.d = st.width;
  geo.S = st.split;
  geo.w = (geo.g + geo.S - 1) / geo.S;
  geo.G = geo.w * geo.S;
  geo.Tp = geo.G * geo.G;
  geo.nw = geo.S * geo.S;
  geo.n = geo.w * geo.w;
  geo.heads = st.heads;
  geo.head_dim = geo.d / geo.heads;
  geo.hidden = net.topology.expansion[s] * geo.d;
  return geo;
}

// Row permutation between grid-major (padded G x G) and window-major layouts.
std::vector<int> window_to_grid_perm(const StageGeom& geo) {
  std::vector<int> perm(geo.Tp);
  int wi = 0;
  for (int wy = 0; wy < geo.S; ++wy) {
    for (int wx = 0; wx < geo.S; ++wx) {
      for (int ly = 0; ly < geo.w; ++ly) {
        for (int lx = 0; lx < geo.w; ++lx) {
          perm[wi++] = (wy * geo.w + ly) * geo.G + (wx * geo.w + lx);
        }
      }
    }
  }
  return perm;
}

// Zero-pads a g x g token grid to G x G (rows below/right of the grid).
void pad_grid(const double* x, double* xp, int g, int G, int d) {
  std::memset(xp, 0, sizeof(double) * static_cast<size_t>(G) * G * d);
  for (int y = 0; y < g; ++y) {
    std::memcpy(xp + static_cast<size_t>(y) * G * d, x + static_cast<size_t>(y) * g * d,
                sizeof(double) * static_cast<size_t>(g) * d);
  }
}

void crop_grid(const double* xp, double* x, int g, int G, int d) {
  for (int y = 0; y < g; ++y) {
    std::memcpy(x + static_cast<size_t>(y) * g * d, xp + static_cast<size_t>(y) * G * d,
                sizeof(double) * static_cast<size_t>(g) * d);
  }
}

void tokens_from_planar(const double* p, double* t, int c, int g) {
  const int T = g * g;
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < T; ++i) t[static_cast<size_t>(i) * c + ch] = p[static_cast<size_t>(ch) * T + i];
  }
}

void planar_from_tokens(const double* t, double* p, int c, int g) {
  const int T = g * g;
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < T; ++i) p[static_cast<size_t>(ch) * T + i] = t[static_cast<size_t>(i) * c + ch];
  }
}

void add_into(double* dst, const double* src, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace

struct BlockCache {
  std::vector<double> x_in, ln1_mean, ln1_rstd, y1;
  std::vector<double> Qw, Kw, Vw, probs, attn_merged;
  std::vector<double> x2, ln2_mean, ln2_rstd, y2, f1, g1;
};

struct StageCache {
  StageGeom geom;
  std::vector<int> perm;
  std::vector<double> conv_in;
  std::vector<double> x_out;
  std::vector<BlockCache> blocks;
};

struct ForwardCache {
  std::array<StageCache, 4> stages;
  TokenOverride ov;
  bool has_ov = false;
};

void VitNetwork::unpack_parameters(std::span<const double> p) {
  if (p.size() != params.size()) throw ConfigError("parameter vector length mismatch");
  std::copy(p.begin(), p.end(), params.begin());
}

VitNetwork build_network(const TopologySpec& t, const ScaleSpec& s, uint64_t seed,
                         int input_res) {
  validate_pair(t, s);
  if (input_res < 32 || input_res % 32 != 0) {
    throw ConfigError("input_res must be a positive multiple of 32");
  }
  VitNetwork net;
  net.topology = t;
  net.scale = s;
  net.input_res = input_res;
  net.seed = seed;

  size_t off = 0;
  auto add = [&](const std::string& name, size_t count, ParamInfo::Init init) {
    net.layout.push_back({name, off, count, init});
    size_t at = off;
    off += count;
    return at;
  };
  auto add_linear = [&](const std::string& name, int in, int out) {
    LinearRef l;
    l.in = in;
    l.out = out;
    l.w = add(name + ".w", static_cast<size_t>(in) * out, ParamInfo::Init::trunc_normal);
    l.b = add(name + ".b", out, ParamInfo::Init::zeros);
    return l;
  };
  auto add_norm = [&](const std::string& name, int dim) {
    NormRef n2;
    n2.dim = dim;
    n2.gamma = add(name + ".gamma", dim, ParamInfo::Init::ones);
    n2.beta = add(name + ".beta", dim, ParamInfo::Init::zeros);
    return n2;
  };

  int in_c = 3;
  for (int st = 0; st < 4; ++st) {
    StageRef& stage = net.stages[st];
    stage.width = s.width << st;
    stage.split = t.split_at(st);
    stage.heads = t.heads_at(st);
    const std::string base = "stage" + std::to_string(st + 1);
    ConvRef conv;
    conv.in_c = in_c;
    conv.out_c = stage.width;
    conv.k = t.kernel[st];
    conv.stride = st == 0 ? kFullStride : kStageStride;
    conv.w = add(base + ".proj.w",
                 static_cast<size_t>(conv.out_c) * conv.in_c * conv.k * conv.k,
                 ParamInfo::Init::trunc_normal);
    conv.b = add(base + ".proj.b", conv.out_c, ParamInfo::Init::zeros);
    stage.conv = conv;
    const int d = stage.width;
    const int hidden = t.expansion[st] * d;
    for (int b = 0; b < s.depth[st]; ++b) {
      const std::string bb = base + ".b" + std::to_string(b);
      BlockRef blk;
      blk.ln1 = add_norm(bb + ".ln1", d);
      blk.qkv = add_linear(bb + ".qkv", d, 3 * d);
      blk.proj = add_linear(bb + ".proj", d, d);
      blk.ln2 = add_norm(bb + ".ln2", d);
      blk.fc1 = add_linear(bb + ".fc1", d, hidden);
      blk.fc2 = add_linear(bb + ".fc2", hidden, d);
      stage.blocks.push_back(blk);
    }
    in_c = stage.width;
  }

  net.params.assign(off, 0.0);
  Rng rng = stream_rng(seed, "init");
  for (const ParamInfo& p : net.layout) {
    double* dst = net.params.data() + p.offset;
    switch (p.init) {
      case ParamInfo::Init::trunc_normal:
        for (size_t i = 0; i < p.count; ++i) dst[i] = rng.trunc_normal(0.02, -0.04, 0.04);
        break;
      case ParamInfo::Init::ones:
        for (size_t i = 0; i < p.count; ++i) dst[i] = 1.0;
        break;
      case ParamInfo::Init::zeros:
        break;
    }
  }
  return net;
}

namespace {

constexpr double kLnEps = 1e-12;

// tokens -> tokens through one pre-norm block; saves everything backward needs.
void block_forward(const VitNetwork& net, const BlockRef& blk, const StageGeom& geo,
                   const std::vector<int>& perm, std::vector<double>& tokens,
                   BlockCache& bc) {
  const double* P = net.params.data();
  const int T = geo.T, d = geo.d, G = geo.G, Tp = geo.Tp;
  bc.x_in = tokens;
  bc.ln1_mean.resize(T);
  bc.ln1_rstd.resize(T);
  bc.y1.resize(static_cast<size_t>(T) * d);
  k::layernorm(bc.x_in.data(), P + blk.ln1.gamma, P + blk.ln1.beta, bc.y1.data(),
               bc.ln1_mean.data(), bc.ln1_rstd.data(), T, d, kLnEps);

  std::vector<double> xp;
  const double* xp_ptr = bc.y1.data();
  if (geo.padded()) {
    xp.resize(static_cast<size_t>(Tp) * d);
    pad_grid(bc.y1.data(), xp.data(), geo.g, G, d);
    xp_ptr = xp.data();
  }
  std::vector<double> qkv(static_cast<size_t>(Tp) * 3 * d);
  k::matmul_nt(xp_ptr, P + blk.qkv.w, qkv.data(), Tp, d, 3 * d);
  k::add_bias_rows(qkv.data(), P + blk.qkv.b, Tp, 3 * d);

  bc.Qw.resize(static_cast<size_t>(Tp) * d);
  bc.Kw.resize(static_cast<size_t>(Tp) * d);
  bc.Vw.resize(static_cast<size_t>(Tp) * d);
  for (int wi = 0; wi < Tp; ++wi) {
    const double* src = qkv.data() + static_cast<size_t>(perm[wi]) * 3 * d;
    std::memcpy(bc.Qw.data() + static_cast<size_t>(wi) * d, src, sizeof(double) * d);
    std::memcpy(bc.Kw.data() + static_cast<size_t>(wi) * d, src + d, sizeof(double) * d);
    std::memcpy(bc.Vw.data() + static_cast<size_t>(wi) * d, src + 2 * d, sizeof(double) * d);
  }

  bc.probs.resize(static_cast<size_t>(geo.nw) * geo.heads * geo.n * geo.n);
  std::vector<double> outw(static_cast<size_t>(Tp) * d);
  k::attention_forward(bc.Qw.data(), bc.Kw.data(), bc.Vw.data(), bc.probs.data(),
                       outw.data(), geo.nw, geo.n, geo.heads, geo.head_dim);

  // Back to grid order, dropping padded rows.
  std::vector<double> outg(static_cast<size_t>(Tp) * d);
  for (int wi = 0; wi < Tp; ++wi) {
    std::memcpy(outg.data() + static_cast<size_t>(perm[wi]) * d,
                outw.data() + static_cast<size_t>(wi) * d, sizeof(double) * d);
  }
  bc.attn_merged.resize(static_cast<size_t>(T) * d);
  if (geo.padded()) {
    crop_grid(outg.data(), bc.attn_merged.data(), geo.g, G, d);
  } else {
    std::memcpy(bc.attn_merged.data(), outg.data(), sizeof(double) * static_cast<size_t>(T) * d);
  }

  std::vector<double> o(static_cast<size_t>(T) * d);
  k::matmul_nt(bc.attn_merged.data(), P + blk.proj.w, o.data(), T, d, d);
  k::add_bias_rows(o.data(), P + blk.proj.b, T, d);

  bc.x2.resize(static_cast<size_t>(T) * d);
  for (size_t i = 0; i < bc.x2.size(); ++i) bc.x2[i] = bc.x_in[i] + o[i];

  bc.ln2_mean.resize(T);
  bc.ln2_rstd.resize(T);
  bc.y2.resize(static_cast<size_t>(T) * d);
  k::layernorm(bc.x2.data(), P + blk.ln2.gamma, P + blk.ln2.beta, bc.y2.data(),
               bc.ln2_mean.data(), bc.ln2_rstd.data(), T, d, kLnEps);

  const int hidden = geo.hidden;
  bc.f1.resize(static_cast<size_t>(T) * hidden);
  k::matmul_nt(bc.y2.data(), P + blk.fc1.w, bc.f1.data(), T, d, hidden);
  k::add_bias_rows(bc.f1.data(), P + blk.fc1.b, T, hidden);
  bc.g1.resize(bc.f1.size());
  k::gelu(bc.f1.data(), bc.g1.data(), static_cast<int64_t>(bc.f1.size()));

  std::vector<double> f2(static_cast<size_t>(T) * d);
  k::matmul_nt(bc.g1.data(), P + blk.fc2.w, f2.data(), T, hidden, d);
  k::add_bias_rows(f2.data(), P + blk.fc2.b, T, d);

  tokens.resize(static_cast<size_t>(T) * d);
  for (size_t i = 0; i < tokens.size(); ++i) tokens[i] = bc.x2[i] + f2[i];
}

// d(tokens_out) -> d(tokens_in), accumulating parameter gradients.
std::vector<double> block_backward(const VitNetwork& net, const BlockRef& blk,
                                   const StageGeom& geo, const std::vector<int>& perm,
                                   const BlockCache& bc, const std::vector<double>& dout,
                                   double* grad) {
  const double* P = net.params.data();
  const int T = geo.T, d = geo.d, G = geo.G, Tp = geo.Tp, hidden = geo.hidden;

  // FFN path: x3 = x2 + fc2(gelu(fc1(ln2(x2))))
  std::vector<double> dg1(static_cast<size_t>(T) * hidden);
  k::matmul_nn(dout.data(), P + blk.fc2.w, dg1.data(), T, d, hidden);
  k::matmul_tn(dout.data(), bc.g1.data(), grad + blk.fc2.w, d, T, hidden, true);
  k::col_sums_acc(dout.data(), grad + blk.fc2.b, T, d);

  std::vector<double> df1(dg1.size());
  k::gelu_backward(bc.f1.data(), dg1.data(), df1.data(), static_cast<int64_t>(df1.size()));

  std::vector<double> dy2(static_cast<size_t>(T) * d);
  k::matmul_nn(df1.data(), P + blk.fc1.w, dy2.data(), T, hidden, d);
  k::matmul_tn(df1.data(), bc.y2.data(), grad + blk.fc1.w, hidden, T, d, true);
  k::col_sums_acc(df1.data(), grad + blk.fc1.b, T, hidden);

  std::vector<double> dx2(static_cast<size_t>(T) * d);
  k::layernorm_backward(bc.x2.data(), P + blk.ln2.gamma, bc.ln2_mean.data(),
                        bc.ln2_rstd.data(), dy2.data(), dx2.data(), grad + blk.ln2.gamma,
                        grad + blk.ln2.beta, T, d);
  add_into(dx2.data(), dout.data(), dx2.size());  // residual

  // Attention path: x2 = x_in + proj(attn(qkv(ln1(x_in))))
  std::vector<double> dmerged(static_cast<size_t>(T) * d);
  k::matmul_nn(dx2.data(), P + blk.proj.w, dmerged.data(), T, d, d);
  k::matmul_tn(dx2.data(), bc.attn_merged.data(), grad + blk.proj.w, d, T, d, true);
  k::col_sums_acc(dx2.data(), grad + blk.proj.b, T, d);

  std::vector<double> doutg(static_cast<size_t>(Tp) * d, 0.0);
  if (geo.padded()) {
    pad_grid(dmerged.data(), doutg.data(), geo.g, G, d);
  } else {
    std::memcpy(doutg.data(), dmerged.data(), sizeof(double) * dmerged.size());
  }
  std::vector<double> doutw(static_cast<size_t>(Tp) * d);
  for (int wi = 0; wi < Tp; ++wi) {
    std::memcpy(doutw.data() + static_cast<size_t>(wi) * d,
                doutg.data() + static_cast<size_t>(perm[wi]) * d, sizeof(double) * d);
  }

  std::vector<double> dQw(static_cast<size_t>(Tp) * d), dKw(dQw.size()), dVw(dQw.size());
  k::attention_backward(bc.Qw.data(), bc.Kw.data(), bc.Vw.data(), bc.probs.data(),
                        doutw.data(), dQw.data(), dKw.data(), dVw.data(), geo.nw, geo.n,
                        geo.heads, geo.head_dim);

  std::vector<double> dqkv(static_cast<size_t>(Tp) * 3 * d);
  for (int wi = 0; wi < Tp; ++wi) {
    double* dst = dqkv.data() + static_cast<size_t>(perm[wi]) * 3 * d;
    std::memcpy(dst, dQw.data() + static_cast<size_t>(wi) * d, sizeof(double) * d);
    std::memcpy(dst + d, dKw.data() + static_cast<size_t>(wi) * d, sizeof(double) * d);
    std::memcpy(dst + 2 * d, dVw.data() + static_cast<size_t>(wi) * d, sizeof(double) * d);
  }

  std::vector<double> xp;
  const double* xp_ptr = bc.y1.data();
  if (geo.padded()) {
    xp.resize(static_cast<size_t>(Tp) * d);
    pad_grid(bc.y1.data(), xp.data(), geo.g, G, d);
    xp_ptr = xp.data();
  }
  std::vector<double> dxp(static_cast<size_t>(Tp) * d);
  k::matmul_nn(dqkv.data(), P + blk.qkv.w, dxp.data(), Tp, 3 * d, d);
  k::matmul_tn(dqkv.data(), xp_ptr, grad + blk.qkv.w, 3 * d, Tp, d, true);
  k::col_sums_acc(dqkv.data(), grad + blk.qkv.b, Tp, 3 * d);

  std::vector<double> dy1(static_cast<size_t>(T) * d);
  if (geo.padded()) {
    crop_grid(dxp.data(), dy1.data(), geo.g, G, d);
  } else {
    std::memcpy(dy1.data(), dxp.data(), sizeof(double) * dy1.size());
  }

  std::vector<double> dx(static_cast<size_t>(T) * d);
  k::layernorm_backward(bc.x_in.data(), P + blk.ln1.gamma, bc.ln1_mean.data(),
                        bc.ln1_rstd.data(), dy1.data(), dx.data(), grad + blk.ln1.gamma,
                        grad + blk.ln1.beta, T, d);
  add_into(dx.data(), dx2.data(), dx.size());  // residual
  return dx;
}

CachedForward run_forward(const VitNetwork& net, std::span<const double> x,
                          const TokenOverride* ov, bool keep) {
  const int R = net.input_res;
  if (static_cast<int64_t>(x.size()) != static_cast<int64_t>(3) * R * R) {
    throw ConfigError("input size must be 3 * input_res^2");
  }
  const double* P = net.params.data();
  auto cache = std::make_shared<ForwardCache>();
  if (ov) {
    cache->ov = *ov;
    cache->has_ov = true;
  }

  std::vector<double> planar(x.begin(), x.end());
  int in_grid = R;
  std::vector<double> tokens;
  for (int s = 0; s < 4; ++s) {
    StageCache& sc = cache->stages[s];
    sc.geom = stage_geometry(net, s, in_grid, ov);
    const StageGeom& geo = sc.geom;
    sc.perm = window_to_grid_perm(geo);
    const StageRef& st = net.stages[s];
    sc.conv_in = std::move(planar);
    std::vector<double> conv_out(static_cast<size_t>(st.width) * geo.T);
    k::conv2d(sc.conv_in.data(), P + st.conv.w, P + st.conv.b, conv_out.data(),
              st.conv.in_c, st.conv.out_c, geo.conv);
    tokens.resize(static_cast<size_t>(geo.T) * geo.d);
    tokens_from_planar(conv_out.data(), tokens.data(), geo.d, geo.g);

    sc.blocks.resize(st.blocks.size());
    for (size_t b = 0; b < st.blocks.size(); ++b) {
      block_forward(net, st.blocks[b], geo, sc.perm, tokens, sc.blocks[b]);
      if (!keep) {
        // Only the final features matter; drop per-block saves eagerly.
        sc.blocks[b] = BlockCache{};
      }
    }
    sc.x_out = tokens;
    if (!keep) sc.conv_in.clear();
    if (s < 3) {
      planar.resize(tokens.size());
      planar_from_tokens(tokens.data(), planar.data(), geo.d, geo.g);
      in_grid = geo.g;
    }
  }

  const StageGeom& last = cache->stages[3].geom;
  CachedForward out;
  out.features.resize(last.d);
  k::mean_over_rows(cache->stages[3].x_out.data(), out.features.data(), last.T, last.d);
  out.cache = keep ? cache : nullptr;
  return out;
}

}  // namespace

std::vector<double> forward(const VitNetwork& net, std::span<const double> x,
                            const TokenOverride* ov) {
  return run_forward(net, x, ov, false).features;
}

CachedForward forward_cached(const VitNetwork& net, std::span<const double> x,
                             const TokenOverride* ov) {
  return run_forward(net, x, ov, true);
}

void backward_into(const VitNetwork& net, const CachedForward& fwd,
                   std::span<const double> dfeatures, double* grad) {
  if (!fwd.cache) throw ConfigError("backward_into needs a cached forward");
  const ForwardCache& cache = *fwd.cache;
  const double* P = net.params.data();
  const StageGeom& last = cache.stages[3].geom;
  if (static_cast<int>(dfeatures.size()) != last.d) {
    throw ConfigError("dfeatures length must equal feature_dim()");
  }

  // Pooling: every token row receives dfeatures / T.
  std::vector<double> dtokens(static_cast<size_t>(last.T) * last.d);
  const double invT = 1.0 / last.T;
  for (int t = 0; t < last.T; ++t) {
    for (int c = 0; c < last.d; ++c) {
      dtokens[static_cast<size_t>(t) * last.d + c] = dfeatures[c] * invT;
    }
  }

  for (int s = 3; s >= 0; --s) {
    const StageCache& sc = cache.stages[s];
    const StageGeom& geo = sc.geom;
    const StageRef& st = net.stages[s];
    for (int b = static_cast<int>(st.blocks.size()) - 1; b >= 0; --b) {
      dtokens = block_backward(net, st.blocks[b], geo, sc.perm, sc.blocks[b], dtokens, grad);
    }
    std::vector<double> dconv_out(static_cast<size_t>(geo.d) * geo.T);
    planar_from_tokens(dtokens.data(), dconv_out.data(), geo.d, geo.g);
    k::conv2d_backward_params(sc.conv_in.data(), dconv_out.data(), grad + st.conv.w,
                              grad + st.conv.b, st.conv.in_c, st.conv.out_c, geo.conv);
    if (s > 0) {
      const StageGeom& prev = cache.stages[s - 1].geom;
      std::vector<double> dplanar(static_cast<size_t>(st.conv.in_c) * geo.conv.in_h *
                                  geo.conv.in_w);
      k::conv2d_backward_input(P + st.conv.w, dconv_out.data(), dplanar.data(),
                               st.conv.in_c, st.conv.out_c, geo.conv);
      dtokens.resize(static_cast<size_t>(prev.T) * prev.d);
      tokens_from_planar(dplanar.data(), dtokens.data(), prev.d, prev.g);
    }
  }
}

std::vector<double> param_gradients(const VitNetwork& net, std::span<const double> x,
                                    const TokenOverride* ov) {
  CachedForward fwd = forward_cached(net, x, ov);
  std::vector<double> ones(net.feature_dim(), 1.0);
  std::vector<double> grad(net.param_count(), 0.0);
  backward_into(net, fwd, ones, grad.data());
  return grad;
}

size_t count_params(const VitNetwork& net) { return net.param_count(); }

size_t count_params(const TopologySpec& topology, const ScaleSpec& scale) {
  validate_pair(topology, scale);
  size_t total = 0;
  size_t in_c = 3;
  for (int s = 0; s < 4; ++s) {
    const size_t d = static_cast<size_t>(scale.width) << s;
    const size_t kk = static_cast<size_t>(topology.kernel[s]) * topology.kernel[s];
    const size_t E = topology.expansion[s];
    total += d * in_c * kk + d;
    total += static_cast<size_t>(scale.depth[s]) * (d * d * (4 + 2 * E) + d * (9 + E));
    in_c = d;
  }
  return total;
}

FlopsBreakdown flops_breakdown(const VitNetwork& net, int input_res, double token_divisor) {
  if (input_res <= 0 || input_res % kFullStride != 0) {
    throw ConfigError("input_res must be a positive multiple of 4");
  }
  if (token_divisor < 1.0) throw ConfigError("token divisor must be >= 1");
  FlopsBreakdown fb;
  int g = input_res / kFullStride;
  int in_c = 3;
  for (int s = 0; s < 4; ++s) {
    const StageRef& st = net.stages[s];
    const double d = st.width;
    const double T = static_cast<double>(g) * g / token_divisor;
    const double n = T / (static_cast<double>(st.split) * st.split);
    const double L = net.scale.depth[s];
    const double kk = static_cast<double>(st.conv.k) * st.conv.k;
    fb.conv += T * d * (in_c * kk);
    fb.attn_linear += L * 4.0 * T * d * d;
    fb.attn_quad += L * 2.0 * T * n * d;
    fb.ffn += L * 2.0 * net.topology.expansion[s] * T * d * d;
    in_c = st.width;
    g = (g + 1) / 2;
  }
  return fb;
}

uint64_t count_flops(const VitNetwork& net, int input_res, std::optional<int> stride_override) {
  double divisor = 1.0;
  if (stride_override) {
    const int st = *stride_override;
    if (st != kFullStride && st != 2 * kFullStride && st != 4 * kFullStride) {
      throw ConfigError("stride override must be one of {4, 8, 16}");
    }
    divisor = static_cast<double>(st) / kFullStride;
  }
  return static_cast<uint64_t>(std::llround(flops_breakdown(net, input_res, divisor).total()));
}

}  // namespace vitforge
