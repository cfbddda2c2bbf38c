#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vitforge/complexity.hpp"
#include "vitforge/nn.hpp"
#include "vitforge/retokenize.hpp"
#include "vitforge/topology.hpp"

namespace vitforge {

// Tiny labeled image set, pixels in [-1, 1], channel-major (3, R, R) per
// image. Generation is deterministic in the seed and class-balanced; the
// train/val split is 80/20 within every class.
struct ToyDataset {
  int res = 32;
  int classes = 4;
  std::vector<std::vector<double>> images;
  std::vector<int> labels;
  std::vector<int> train_idx;
  std::vector<int> val_idx;

  int size() const { return static_cast<int>(images.size()); }
};

// Procedural shape classes (disk, box outline, stripes, cross, ...) with
// jittered placement, per-sample tint and additive noise. classes in 2..8,
// n divisible by classes.
ToyDataset make_shape_dataset(uint64_t seed, int res, int classes, int n);

// Loads root/<class-name>/*.ppm|*.pgm (P2/P3/P5/P6), nearest-resampled to
// res x res and normalized to [-1, 1]. Class ids follow sorted directory
// names.
ToyDataset ingest_directory(const std::string& root, int res);

// Multinomial regression on raw pixels, plain SGD; a floor any real network
// should clear on learnable data.
double linear_probe_accuracy(const ToyDataset& data, int steps, double lr, uint64_t seed);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.05;  // decoupled, weight matrices only
  uint64_t seed = 1;           // head init and batch shuffling
  const TokenSchedule* schedule = nullptr;  // optional re-tokenization plan
};

struct TrainResult {
  double final_val_accuracy = 0;
  std::vector<double> train_loss;         // one entry per epoch
  std::vector<double> val_accuracy;       // one entry per epoch
  std::vector<double> epoch_flops_ratio;  // relative per-step cost that epoch
  bool diverged = false;
  double wall_ms = 0;
};

// Cross-entropy training of the backbone plus a local linear head, adaptive
// moments with decoupled weight decay and cosine learning-rate decay. The
// network's parameters are updated in place; a non-finite loss stops the run
// and flags divergence instead of throwing.
TrainResult train(VitNetwork& net, const ToyDataset& data, const TrainConfig& cfg);

// Tie-corrected rank correlation (the tau-b variant). Throws ConfigError on
// length mismatch or fewer than two points, EvalError when one input is
// entirely tied (undefined correlation).
double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y);

struct StudyRow {
  uint64_t spec_hash = 0;
  TopologySpec spec;
  double kappa = 0, LE = 0, LE_kappa = 0, kappa_theta = 0;
  double val_acc = 0;
  uint64_t params = 0;
  double flops = 0;
  bool failed = false;
  std::string error;
};

struct TauSummary {
  double tau_kappa = 0, tau_LE = 0, tau_LE_kappa = 0, tau_kappa_theta = 0;
  int n_used = 0;
  int n_failed = 0;
};

TauSummary study_taus(const std::vector<StudyRow>& rows);

struct StudyConfig {
  int n_topologies = 16;
  uint64_t seed = 1;
  ScaleSpec scale;      // shared training scale for every topology
  int input_res = 32;
  Protocol protocol;    // init-time metric protocol (defaults to seeds = 1)
  TrainConfig train;

  StudyConfig() {
    scale.depth = {1, 1, 1, 1};
    scale.width = 16;
    protocol.seeds = 1;
  }
};

// Samples n distinct topologies, measures all four init-time metrics, trains
// each one on the dataset and reports rank correlations against the reached
// accuracy. Per-topology failures are recorded in their row and excluded from
// the taus. Rows whose spec hash appears in `precomputed` are reused verbatim
// (resume support).
std::vector<StudyRow> correlation_study(const SearchSpace& space, const ToyDataset& data,
                                        const StudyConfig& cfg,
                                        const std::vector<StudyRow>* precomputed = nullptr,
                                        const std::function<void(const StudyRow&)>& on_row = {});

}  // namespace vitforge
