#pragma once

#include <string>
#include <vector>

#include "vitforge/nn.hpp"

namespace vitforge {

// One sampling-granularity phase of the first projection. Epochs are 1-based
// and inclusive on both ends.
struct TokenPhase {
  int stride = kFullStride;
  int dilation = 1;
  int epoch_start = 1;
  int epoch_end = 1;
};

// Coarse-to-fine phase list covering epochs 1..total_epochs with no gaps or
// overlaps; the last phase runs at full resolution.
struct TokenSchedule {
  std::vector<TokenPhase> phases;
  int total_epochs = 0;
};

// Kernel dilation that keeps a stride-enlarged first projection sampling the
// same receptive span per token. Rounds half away from zero.
int dilation_for_stride(int stride, int k1, int s1);

// stride = s1 * factor for token-count reduction `factor`.
int stride_for_factor(int factor, int s1);
int reduction_factor(int stride, int s1);

// Relative training cost of running at a reduced token count, from the FLOPs
// model: linear terms scale with 1/factor, the window-attention quadratic term
// with 1/factor^2. factor must be 1, 2 or 4.
double flops_ratio(const VitNetwork& net, int reduction_factor);

// Epoch-weighted 1 - cost, as a percentage of full-resolution training.
double schedule_savings(const TokenSchedule& schedule, int total_epochs,
                        const VitNetwork& net);

// Validates the phase against the network (legal stride, matching dilation)
// and returns the first-projection override implementing it. Weights are
// untouched; only the sampling pattern changes.
TokenOverride apply_phase(const VitNetwork& net, const TokenPhase& phase);

// Throws ConfigError on gaps, overlaps, increasing strides, or a schedule not
// ending at full resolution.
void validate_schedule(const TokenSchedule& schedule);

const TokenPhase& phase_for_epoch(const TokenSchedule& schedule, int epoch);

// "1-40:4x,41-70:2x,71-300:full" -> three phases; dilations come from the
// network's first-stage kernel.
TokenSchedule parse_schedule(const std::string& text, const VitNetwork& net);

// Single full-resolution phase over total_epochs.
TokenSchedule full_schedule(int total_epochs);

std::string schedule_to_string(const TokenSchedule& schedule);

}  // namespace vitforge
