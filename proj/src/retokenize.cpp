#include "vitforge/retokenize.hpp"

#include <algorithm>
#include <cmath>

#include "vitforge/errors.hpp"
#include "vitforge/kernels.hpp"

namespace vitforge {

int dilation_for_stride(int stride, int k1, int s1) {
  if (k1 <= 1) throw ConfigError("dilation formula needs a kernel larger than 1");
  if (s1 <= 0 || stride <= 0 || stride % s1 != 0) {
    throw ConfigError("stride must be a positive multiple of the base stride");
  }
  const double raw = (static_cast<double>(stride) / s1 - 1.0) * k1 / (k1 - 1);
  return static_cast<int>(std::round(raw)) + 1;
}

int stride_for_factor(int factor, int s1) {
  if (factor != 1 && factor != 2 && factor != 4) {
    throw ConfigError("token reduction factor must be 1, 2 or 4");
  }
  return s1 * factor;
}

int reduction_factor(int stride, int s1) {
  if (s1 <= 0 || stride % s1 != 0) throw ConfigError("stride not a multiple of base stride");
  const int f = stride / s1;
  if (f != 1 && f != 2 && f != 4) throw ConfigError("stride implies an unsupported factor");
  return f;
}

double flops_ratio(const VitNetwork& net, int factor) {
  const int stride = stride_for_factor(factor, kFullStride);
  const double reduced = static_cast<double>(count_flops(net, net.input_res, stride));
  const double full = static_cast<double>(count_flops(net, net.input_res, kFullStride));
  return reduced / full;
}

double schedule_savings(const TokenSchedule& schedule, int total_epochs,
                        const VitNetwork& net) {
  if (total_epochs <= 0) throw ConfigError("total_epochs must be positive");
  if (schedule.total_epochs != total_epochs) {
    throw ConfigError("schedule does not cover the requested epoch count");
  }
  validate_schedule(schedule);
  double weighted = 0.0;
  for (const TokenPhase& p : schedule.phases) {
    const int span = p.epoch_end - p.epoch_start + 1;
    weighted += span * flops_ratio(net, reduction_factor(p.stride, kFullStride));
  }
  return (1.0 - weighted / total_epochs) * 100.0;
}

TokenOverride apply_phase(const VitNetwork& net, const TokenPhase& phase) {
  const int k1 = net.topology.kernel[0];
  const int s1 = kFullStride;
  if (phase.stride != s1 && phase.stride != 2 * s1 && phase.stride != 4 * s1) {
    throw ConfigError("phase stride must be the base stride or 2x/4x it");
  }
  const int want = dilation_for_stride(phase.stride, k1, s1);
  if (phase.dilation != want) {
    throw ConfigError("phase dilation " + std::to_string(phase.dilation) +
                      " does not match the formula value " + std::to_string(want));
  }
  // The projection pads to ceil(in/stride) outputs, so the dilated kernel
  // always fits; check anyway in case the geometry rule ever changes.
  kernels::ConvGeom g =
      kernels::conv_geometry(net.input_res, net.input_res, k1, phase.stride, phase.dilation);
  const int pad_total = std::max((g.out_h - 1) * g.stride + g.extent() - g.in_h, 0);
  if (g.extent() > g.in_h + pad_total) {
    throw EvalError("dilated kernel extent exceeds the padded input");
  }
  TokenOverride ov;
  ov.stride = phase.stride;
  ov.dilation = phase.dilation;
  return ov;
}

void validate_schedule(const TokenSchedule& schedule) {
  if (schedule.phases.empty()) throw ConfigError("schedule has no phases");
  int expect_start = 1;
  int prev_stride = 0;
  for (const TokenPhase& p : schedule.phases) {
    if (p.epoch_start != expect_start) {
      throw ConfigError("schedule phases must tile epochs without gaps or overlaps");
    }
    if (p.epoch_end < p.epoch_start) throw ConfigError("phase epoch range is empty");
    if (prev_stride != 0 && p.stride > prev_stride) {
      throw ConfigError("phase strides must be non-increasing (coarse to fine)");
    }
    prev_stride = p.stride;
    expect_start = p.epoch_end + 1;
  }
  if (expect_start != schedule.total_epochs + 1) {
    throw ConfigError("schedule does not cover epochs 1.." +
                      std::to_string(schedule.total_epochs));
  }
  if (schedule.phases.back().stride != kFullStride) {
    throw ConfigError("schedule must end at full resolution");
  }
}

const TokenPhase& phase_for_epoch(const TokenSchedule& schedule, int epoch) {
  for (const TokenPhase& p : schedule.phases) {
    if (epoch >= p.epoch_start && epoch <= p.epoch_end) return p;
  }
  throw ConfigError("epoch " + std::to_string(epoch) + " outside the schedule");
}

TokenSchedule parse_schedule(const std::string& text, const VitNetwork& net) {
  TokenSchedule s;
  const int k1 = net.topology.kernel[0];
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                   : comma - pos);
    pos = comma == std::string::npos ? text.size() : comma + 1;
    size_t colon = part.find(':');
    size_t dash = part.find('-');
    if (colon == std::string::npos || dash == std::string::npos || dash > colon) {
      throw ConfigError("bad schedule phase '" + part + "' (want start-end:factor)");
    }
    TokenPhase p;
    try {
      p.epoch_start = std::stoi(part.substr(0, dash));
      p.epoch_end = std::stoi(part.substr(dash + 1, colon - dash - 1));
    } catch (const std::exception&) {
      throw ConfigError("bad epoch range in schedule phase '" + part + "'");
    }
    std::string tag = part.substr(colon + 1);
    int factor = 0;
    if (tag == "full" || tag == "1x") {
      factor = 1;
    } else if (tag == "2x") {
      factor = 2;
    } else if (tag == "4x") {
      factor = 4;
    } else {
      throw ConfigError("bad schedule factor '" + tag + "' (want 4x, 2x or full)");
    }
    p.stride = stride_for_factor(factor, kFullStride);
    p.dilation = dilation_for_stride(p.stride, k1, kFullStride);
    s.phases.push_back(p);
  }
  if (s.phases.empty()) throw ConfigError("empty schedule");
  s.total_epochs = s.phases.back().epoch_end;
  validate_schedule(s);
  return s;
}

TokenSchedule full_schedule(int total_epochs) {
  if (total_epochs <= 0) throw ConfigError("total_epochs must be positive");
  TokenSchedule s;
  TokenPhase p;
  p.stride = kFullStride;
  p.dilation = 1;
  p.epoch_start = 1;
  p.epoch_end = total_epochs;
  s.phases.push_back(p);
  s.total_epochs = total_epochs;
  return s;
}

std::string schedule_to_string(const TokenSchedule& schedule) {
  std::string out;
  for (size_t i = 0; i < schedule.phases.size(); ++i) {
    const TokenPhase& p = schedule.phases[i];
    if (i) out += ',';
    out += std::to_string(p.epoch_start) + "-" + std::to_string(p.epoch_end) + ":";
    const int f = p.stride / kFullStride;
    out += f == 1 ? "full" : std::to_string(f) + "x";
  }
  return out;
}

}  // namespace vitforge
