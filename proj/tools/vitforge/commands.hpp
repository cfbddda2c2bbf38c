#pragma once

#include <cstdint>
#include <string>

#include "vitforge/config.hpp"

namespace vitforge::cli {

// Settings shared by every command. Precedence: built-in default, then the
// --config file, then explicit flags (flags win). out_dir falls back to the
// VITFORGE_OUT_DIR environment variable before the current directory.
struct CommonOpts {
  ConfigMap config;
  uint64_t seed = 1;
  int jobs = 0;  // 0 keeps the library default
  std::string out_dir = ".";
};

// Flag presence markers: -1 / empty string mean "not given on the command line".
struct FlagOverrides {
  int64_t seeds = -1;     // evaluate
  int64_t steps = -1;     // search
  int64_t budget = -1;    // scale
  int64_t n = -1;         // correlate
  int64_t epochs = -1;    // correlate
  std::string phases;     // schedule
  std::string resume;     // search / correlate
  bool random_scaling = false;
};

int cmd_evaluate(const std::string& arch_file, const CommonOpts& opts, const FlagOverrides& fl);
int cmd_search(const CommonOpts& opts, const FlagOverrides& fl);
int cmd_scale(const std::string& arch_file, const CommonOpts& opts, const FlagOverrides& fl);
int cmd_schedule(const std::string& arch_file, const CommonOpts& opts, const FlagOverrides& fl);
int cmd_correlate(const CommonOpts& opts, const FlagOverrides& fl);

// Rejects config keys that no command understands (typo guard).
void check_known_keys(const ConfigMap& config);

}  // namespace vitforge::cli
