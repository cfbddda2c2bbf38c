#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vitforge/kernels.hpp"
#include "vitforge/topology.hpp"

namespace vitforge {

// Stage-1 projection stride at full token resolution. Re-tokenization phases
// override it with a multiple of this value.
inline constexpr int kFullStride = 4;
// Strides of the re-embedding projections between stages.
inline constexpr int kStageStride = 2;

inline constexpr size_t linear_param_count(int in, int out) {
  return static_cast<size_t>(in) * out + out;
}
inline constexpr size_t layernorm_param_count(int dim) { return 2 * static_cast<size_t>(dim); }

// Layers address their weights as offsets into the network's flat parameter
// vector; gradients use the same offsets into an equally sized vector.
struct LinearRef {
  int in = 0, out = 0;
  size_t w = 0, b = 0;  // offsets
};
struct NormRef {
  int dim = 0;
  size_t gamma = 0, beta = 0;
};
struct ConvRef {
  int in_c = 0, out_c = 0, k = 0, stride = 1;
  size_t w = 0, b = 0;
};
struct BlockRef {
  NormRef ln1;
  LinearRef qkv, proj;
  NormRef ln2;
  LinearRef fc1, fc2;
};
struct StageRef {
  ConvRef conv;
  int width = 0, split = 1, heads = 1;
  std::vector<BlockRef> blocks;
};

struct ParamInfo {
  std::string name;
  size_t offset = 0, count = 0;
  enum class Init { trunc_normal, zeros, ones } init = Init::zeros;
};

// A four-stage ViT: overlapping strided projection into stage 1, re-embedding
// convs between stages (channel doubling, spatial halving), and pre-norm
// blocks of windowed softmax attention plus GELU FFN with residuals. The
// output is the final-stage token features pooled over tokens. Immutable
// after construction except through unpack_parameters (used by the trainer).
struct VitNetwork {
  TopologySpec topology;
  ScaleSpec scale;
  int input_res = 0;
  uint64_t seed = 0;
  std::array<StageRef, 4> stages;
  std::vector<ParamInfo> layout;
  std::vector<double> params;

  size_t param_count() const { return params.size(); }
  int feature_dim() const { return scale.width * 8; }
  std::vector<double> pack_parameters() const { return params; }
  void unpack_parameters(std::span<const double> p);
};

// Validates the pair, the resolution (divisible by the cumulative
// downsampling, i.e. by 32), builds the layer plan, and initializes
// parameters deterministically from the "init" stream of `seed`
// (truncated normal std 0.02 for weights, zeros for biases, ones/zeros
// for the norms).
VitNetwork build_network(const TopologySpec& t, const ScaleSpec& s, uint64_t seed,
                         int input_res);

// First-projection override used by re-tokenization phases.
struct TokenOverride {
  int stride = kFullStride;
  int dilation = 1;
};

struct ForwardCache;  // defined in nn.cpp; opaque to callers

// x is the flattened (3, input_res, input_res) image, channel-major. Returns
// the pooled feature vector of length feature_dim().
std::vector<double> forward(const VitNetwork& net, std::span<const double> x,
                            const TokenOverride* ov = nullptr);

// Forward keeping activations for a later backward pass. The cache is
// per-call state, so concurrent evaluations on the same network are safe.
struct CachedForward {
  std::vector<double> features;
  std::shared_ptr<ForwardCache> cache;
};
CachedForward forward_cached(const VitNetwork& net, std::span<const double> x,
                             const TokenOverride* ov = nullptr);

// Accumulates d(loss)/d(params) into grad (length param_count()) given
// d(loss)/d(features).
void backward_into(const VitNetwork& net, const CachedForward& fwd,
                   std::span<const double> dfeatures, double* grad);

// Gradient of sum(features) with respect to every parameter: the scalar
// reduction used by the NTK probes and the finite-difference oracle.
std::vector<double> param_gradients(const VitNetwork& net, std::span<const double> x,
                                    const TokenOverride* ov = nullptr);

size_t count_params(const VitNetwork& net);

// Closed-form count for a (topology, scale) pair without building the network.
size_t count_params(const TopologySpec& topology, const ScaleSpec& scale);

// Multiply-accumulate counts: projections (conv and attention out-proj), QKV,
// attention matrices, weighted sums, and FFN. Token counts scale with the
// reduction factor stride_override / kFullStride (window-quadratic terms with
// its square): the accounting convention the re-tokenization schedule uses.
struct FlopsBreakdown {
  double conv = 0, attn_linear = 0, attn_quad = 0, ffn = 0;
  double total() const { return conv + attn_linear + attn_quad + ffn; }
};
FlopsBreakdown flops_breakdown(const VitNetwork& net, int input_res, double token_divisor);
uint64_t count_flops(const VitNetwork& net, int input_res,
                     std::optional<int> stride_override = std::nullopt);

}  // namespace vitforge
