#include "vitforge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <utility>

#include "vitforge/errors.hpp"
#include "vitforge/rng.hpp"

namespace vitforge {

namespace {

namespace fs = std::filesystem;

void render_shape(int cls, int res, Rng& rng, std::vector<double>& out) {
  const double cx = 0.35 + 0.3 * rng.uniform01();
  const double cy = 0.35 + 0.3 * rng.uniform01();
  const double scale = 0.15 + 0.2 * rng.uniform01();
  const double thick = 0.03 + 0.03 * rng.uniform01();
  const double phase = rng.uniform01();
  const int freq = 4 + rng.uniform_int(6);
  const int block = 2 + rng.uniform_int(3);
  const double ink = 0.35 + 0.45 * rng.uniform01();
  double tint[3];
  for (double& t : tint) t = 0.6 + 0.4 * rng.uniform01();

  std::vector<double> mask(static_cast<size_t>(res) * res, 0.0);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double u = (x + 0.5) / res - cx;
      const double v = (y + 0.5) / res - cy;
      const double r = std::sqrt(u * u + v * v);
      bool on = false;
      switch (cls) {
        case 0: on = r <= scale; break;
        case 1: on = std::abs(std::max(std::abs(u), std::abs(v)) - scale) <= thick; break;
        case 2: {
          double s = (y + 0.5) / res * freq + phase;
          on = s - std::floor(s) < 0.5;
          break;
        }
        case 3:
          on = (std::abs(u - v) <= thick || std::abs(u + v) <= thick) &&
               std::max(std::abs(u), std::abs(v)) <= 1.4 * scale;
          break;
        case 4: {
          double s = (x + 0.5) / res * freq + phase;
          on = s - std::floor(s) < 0.5;
          break;
        }
        case 5: on = std::abs(r - scale) <= thick; break;
        case 6: on = ((x / block) + (y / block)) % 2 == 0; break;
        case 7: on = std::abs(u - v) <= thick; break;
        default: break;
      }
      if (on) mask[static_cast<size_t>(y) * res + x] = 1.0;
    }
  }

  out.assign(static_cast<size_t>(3) * res * res, 0.0);
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < mask.size(); ++i) {
      const double bg = -1.0 + 0.2 * rng.uniform01();
      const double noise = 1.1 * (rng.uniform01() - 0.5);
      double p = bg + ink * tint[c] * 1.6 * mask[i] + noise;
      out[c * mask.size() + i] = std::clamp(p, -1.0, 1.0);
    }
  }
}

void split_by_class(ToyDataset& d) {
  std::vector<std::vector<int>> per_class(d.classes);
  for (int i = 0; i < d.size(); ++i) per_class[d.labels[i]].push_back(i);
  for (const auto& idx : per_class) {
    const int n_train = static_cast<int>(idx.size() * 8 / 10);
    for (size_t j = 0; j < idx.size(); ++j) {
      (static_cast<int>(j) < n_train ? d.train_idx : d.val_idx).push_back(idx[j]);
    }
  }
}

struct PnmImage {
  int w = 0, h = 0, channels = 1;
  std::vector<double> pix;  // interleaved, [0, 1]
};

long pnm_token(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    } else {
      c = in.get();
    }
  }
  if (c == EOF) throw ConfigError("truncated image header: " + path);
  long value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw ConfigError("malformed image header: " + path);
  if (c != EOF) in.unget();
  return value;
}

PnmImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image: " + path);
  char m0 = static_cast<char>(in.get());
  char m1 = static_cast<char>(in.get());
  if (m0 != 'P' || (m1 != '2' && m1 != '3' && m1 != '5' && m1 != '6')) {
    throw ConfigError("unsupported image encoding (want P2/P3/P5/P6): " + path);
  }
  const bool binary = m1 == '5' || m1 == '6';
  const int channels = (m1 == '3' || m1 == '6') ? 3 : 1;
  PnmImage img;
  img.channels = channels;
  img.w = static_cast<int>(pnm_token(in, path));
  img.h = static_cast<int>(pnm_token(in, path));
  const long maxval = pnm_token(in, path);
  if (img.w <= 0 || img.h <= 0 || maxval <= 0) throw ConfigError("bad image dimensions: " + path);
  if (maxval > 255) throw ConfigError("16-bit samples not supported: " + path);
  const size_t count = static_cast<size_t>(img.w) * img.h * channels;
  img.pix.resize(count);
  if (binary) {
    in.get();  // the single whitespace byte after maxval
    std::vector<unsigned char> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(in.gcount()) != count) {
      throw ConfigError("truncated image data: " + path);
    }
    for (size_t i = 0; i < count; ++i) img.pix[i] = raw[i] / static_cast<double>(maxval);
  } else {
    for (size_t i = 0; i < count; ++i) {
      img.pix[i] = pnm_token(in, path) / static_cast<double>(maxval);
    }
  }
  return img;
}

std::vector<double> resample_to_planes(const PnmImage& img, int res) {
  std::vector<double> out(static_cast<size_t>(3) * res * res);
  for (int c = 0; c < 3; ++c) {
    const int src_c = img.channels == 3 ? c : 0;
    for (int y = 0; y < res; ++y) {
      const int sy = std::min(static_cast<int>(static_cast<int64_t>(y) * img.h / res),
                              img.h - 1);
      for (int x = 0; x < res; ++x) {
        const int sx = std::min(static_cast<int>(static_cast<int64_t>(x) * img.w / res),
                                img.w - 1);
        const double v = img.pix[(static_cast<size_t>(sy) * img.w + sx) * img.channels + src_c];
        out[(static_cast<size_t>(c) * res + y) * res + x] = v * 2.0 - 1.0;
      }
    }
  }
  return out;
}

// Decoupled-decay adaptive-moment updates over one flat parameter vector.
struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;

  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void update(std::vector<double>& theta, const std::vector<double>& grad, double lr,
              double weight_decay, const std::vector<std::pair<size_t, size_t>>& decay_ranges) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    for (const auto& [off, count] : decay_ranges) {
      for (size_t i = off; i < off + count; ++i) theta[i] -= lr * weight_decay * theta[i];
    }
  }
};

struct Head {
  int classes = 0, feat = 0;
  std::vector<double> w;  // classes x feat
  std::vector<double> b;
};

// Returns per-sample loss; fills dlogits (probabilities minus one-hot).
double cross_entropy(const std::vector<double>& logits, int label,
                     std::vector<double>& dlogits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  dlogits.resize(logits.size());
  for (size_t c = 0; c < logits.size(); ++c) dlogits[c] = std::exp(logits[c] - lse);
  dlogits[static_cast<size_t>(label)] -= 1.0;
  return lse - logits[static_cast<size_t>(label)];
}

std::vector<double> head_logits(const Head& head, const std::vector<double>& feat) {
  std::vector<double> z(head.classes);
  for (int c = 0; c < head.classes; ++c) {
    double acc = head.b[c];
    const double* row = head.w.data() + static_cast<size_t>(c) * head.feat;
    for (int f = 0; f < head.feat; ++f) acc += row[f] * feat[f];
    z[c] = acc;
  }
  return z;
}

double eval_accuracy(const VitNetwork& net, const Head& head, const ToyDataset& data,
                     const std::vector<int>& idx, const TokenOverride* ov) {
  if (idx.empty()) throw ConfigError("empty evaluation split");
  int hits = 0;
  for (int i : idx) {
    const std::vector<double> feat = forward(net, data.images[i], ov);
    const std::vector<double> z = head_logits(head, feat);
    const int pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (pred == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / idx.size();
}

}  // namespace

ToyDataset make_shape_dataset(uint64_t seed, int res, int classes, int n) {
  if (res < 8 || res > 64) throw ConfigError("dataset resolution must be in 8..64");
  if (classes < 2 || classes > 8) throw ConfigError("classes must be in 2..8");
  if (n <= 0 || n % classes != 0) {
    throw ConfigError("sample count must be a positive multiple of the class count");
  }
  ToyDataset d;
  d.res = res;
  d.classes = classes;
  Rng rng = stream_rng(seed, "data");
  const int per_class = n / classes;
  for (int cls = 0; cls < classes; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      std::vector<double> img;
      render_shape(cls, res, rng, img);
      d.images.push_back(std::move(img));
      d.labels.push_back(cls);
    }
  }
  split_by_class(d);
  return d;
}

ToyDataset ingest_directory(const std::string& root, int res) {
  if (res < 8 || res > 64) throw ConfigError("dataset resolution must be in 8..64");
  if (!fs::is_directory(root)) throw ConfigError("not a directory: " + root);
  std::vector<std::string> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2 || class_dirs.size() > 8) {
    throw ConfigError("expected 2..8 class subdirectories under " + root);
  }
  ToyDataset d;
  d.res = res;
  d.classes = static_cast<int>(class_dirs.size());
  size_t per_class = 0;
  for (int cls = 0; cls < d.classes; ++cls) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / class_dirs[cls])) {
      const std::string ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) {
        files.push_back(e.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw ConfigError("class directory has no .ppm/.pgm files: " + class_dirs[cls]);
    }
    if (cls == 0) {
      per_class = files.size();
    } else if (files.size() != per_class) {
      throw ConfigError("unbalanced class directories: " + class_dirs[cls] + " has " +
                        std::to_string(files.size()) + " images, expected " +
                        std::to_string(per_class));
    }
    for (const std::string& f : files) {
      d.images.push_back(resample_to_planes(read_pnm(f), res));
      d.labels.push_back(cls);
    }
  }
  split_by_class(d);
  return d;
}

double linear_probe_accuracy(const ToyDataset& data, int steps, double lr, uint64_t seed) {
  if (steps <= 0 || lr <= 0) throw ConfigError("probe needs positive steps and rate");
  const size_t dim = data.images.at(0).size();
  Head head;
  head.classes = data.classes;
  head.feat = static_cast<int>(dim);
  head.w.assign(static_cast<size_t>(data.classes) * dim, 0.0);
  head.b.assign(data.classes, 0.0);
  Rng rng = stream_rng(seed, "data", 1);
  std::vector<double> dlogits;
  for (int s = 0; s < steps; ++s) {
    const int i = data.train_idx[rng.uniform_int(static_cast<int>(data.train_idx.size()))];
    const std::vector<double>& x = data.images[i];
    const std::vector<double> z = head_logits(head, x);
    cross_entropy(z, data.labels[i], dlogits);
    for (int c = 0; c < head.classes; ++c) {
      double* row = head.w.data() + static_cast<size_t>(c) * dim;
      for (size_t f = 0; f < dim; ++f) row[f] -= lr * dlogits[c] * x[f];
      head.b[c] -= lr * dlogits[c];
    }
  }
  int hits = 0;
  for (int i : data.val_idx) {
    const std::vector<double> z = head_logits(head, data.images[i]);
    const int pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (pred == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / data.val_idx.size();
}

TrainResult train(VitNetwork& net, const ToyDataset& data, const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (cfg.lr <= 0) throw ConfigError("learning rate must be positive");
  if (data.res != net.input_res) {
    throw ConfigError("dataset resolution " + std::to_string(data.res) +
                      " does not match the network's " + std::to_string(net.input_res));
  }
  if (data.train_idx.empty() || data.val_idx.empty()) {
    throw ConfigError("dataset has an empty split");
  }
  if (cfg.schedule) {
    validate_schedule(*cfg.schedule);
    if (cfg.schedule->total_epochs != cfg.epochs) {
      throw ConfigError("schedule covers " + std::to_string(cfg.schedule->total_epochs) +
                        " epochs, training runs " + std::to_string(cfg.epochs));
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;

  Head head;
  head.classes = data.classes;
  head.feat = static_cast<int>(net.feature_dim());
  head.w.resize(static_cast<size_t>(head.classes) * head.feat);
  head.b.assign(head.classes, 0.0);
  {
    Rng hr = stream_rng(cfg.seed, "init", 1);
    for (double& w : head.w) w = hr.trunc_normal(0.02, -0.04, 0.04);
  }

  std::vector<std::pair<size_t, size_t>> net_decay;
  for (const ParamInfo& p : net.layout) {
    if (p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".w") == 0) {
      net_decay.push_back({p.offset, p.count});
    }
  }
  const std::vector<std::pair<size_t, size_t>> head_decay = {{0, head.w.size()}};

  AdamState net_adam(net.params.size());
  AdamState head_adam(head.w.size() + head.b.size());

  const int train_n = static_cast<int>(data.train_idx.size());
  const int batches_per_epoch = (train_n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = static_cast<int64_t>(cfg.epochs) * batches_per_epoch;
  int64_t step = 0;

  std::vector<double> net_grad(net.params.size());
  std::vector<double> head_flat(head.w.size() + head.b.size());
  std::vector<double> head_grad(head_flat.size());
  std::vector<double> dlogits, dfeat;
  std::vector<int> order;

  for (int epoch = 1; epoch <= cfg.epochs && !res.diverged; ++epoch) {
    TokenOverride ov_storage;
    const TokenOverride* ov = nullptr;
    double phase_cost = 1.0;
    if (cfg.schedule) {
      const TokenPhase& phase = phase_for_epoch(*cfg.schedule, epoch);
      ov_storage = apply_phase(net, phase);
      ov = &ov_storage;
      phase_cost = flops_ratio(net, reduction_factor(phase.stride, kFullStride));
    }
    res.epoch_flops_ratio.push_back(phase_cost);

    order = data.train_idx;
    Rng shuffle_rng = stream_rng(cfg.seed, "data", static_cast<uint64_t>(epoch));
    for (int i = train_n - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    }

    double epoch_loss = 0.0;
    for (int b = 0; b < batches_per_epoch && !res.diverged; ++b) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(lo + cfg.batch_size, train_n);
      const int bn = hi - lo;
      const double lr_t =
          cfg.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
      ++step;

      std::fill(net_grad.begin(), net_grad.end(), 0.0);
      std::fill(head_grad.begin(), head_grad.end(), 0.0);
      double batch_loss = 0.0;
      for (int s = lo; s < hi; ++s) {
        const int i = order[s];
        CachedForward fwd = forward_cached(net, data.images[i], ov);
        const std::vector<double> z = head_logits(head, fwd.features);
        batch_loss += cross_entropy(z, data.labels[i], dlogits);
        dfeat.assign(head.feat, 0.0);
        for (int c = 0; c < head.classes; ++c) {
          const double g = dlogits[c];
          double* wrow = head.w.data() + static_cast<size_t>(c) * head.feat;
          double* grow = head_grad.data() + static_cast<size_t>(c) * head.feat;
          for (int f = 0; f < head.feat; ++f) {
            grow[f] += g * fwd.features[f];
            dfeat[f] += g * wrow[f];
          }
          head_grad[head.w.size() + c] += g;
        }
        backward_into(net, fwd, dfeat, net_grad.data());
      }
      batch_loss /= bn;
      if (!std::isfinite(batch_loss)) {
        res.diverged = true;
        break;
      }
      const double inv = 1.0 / bn;
      for (double& g : net_grad) g *= inv;
      for (double& g : head_grad) g *= inv;
      epoch_loss += batch_loss * bn;

      net_adam.update(net.params, net_grad, lr_t, cfg.weight_decay, net_decay);
      std::copy(head.w.begin(), head.w.end(), head_flat.begin());
      std::copy(head.b.begin(), head.b.end(), head_flat.begin() + head.w.size());
      head_adam.update(head_flat, head_grad, lr_t, cfg.weight_decay, head_decay);
      std::copy(head_flat.begin(), head_flat.begin() + head.w.size(), head.w.begin());
      std::copy(head_flat.begin() + head.w.size(), head_flat.end(), head.b.begin());
    }
    if (res.diverged) break;
    res.train_loss.push_back(epoch_loss / train_n);
    res.val_accuracy.push_back(eval_accuracy(net, head, data, data.val_idx, ov));
  }

  res.final_val_accuracy = res.val_accuracy.empty()
                               ? eval_accuracy(net, head, data, data.val_idx, nullptr)
                               : res.val_accuracy.back();
  res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
  return res;
}

double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("rank correlation needs equal lengths");
  const int n = static_cast<int>(x.size());
  if (n < 2) throw ConfigError("rank correlation needs at least two points");
  int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0) ++ties_x;
      if (dy == 0) ++ties_y;
      if (dx != 0 && dy != 0) {
        if ((dx > 0) == (dy > 0)) {
          ++concordant;
        } else {
          ++discordant;
        }
      }
    }
  }
  const int64_t n0 = static_cast<int64_t>(n) * (n - 1) / 2;
  const double denom = std::sqrt(static_cast<double>(n0 - ties_x) *
                                 static_cast<double>(n0 - ties_y));
  if (denom == 0) throw EvalError("rank correlation undefined: an input is fully tied");
  return static_cast<double>(concordant - discordant) / denom;
}

TauSummary study_taus(const std::vector<StudyRow>& rows) {
  std::vector<double> kappa, le, lek, kt, acc;
  TauSummary s;
  for (const StudyRow& r : rows) {
    if (r.failed) {
      ++s.n_failed;
      continue;
    }
    kappa.push_back(r.kappa);
    le.push_back(r.LE);
    lek.push_back(r.LE_kappa);
    kt.push_back(r.kappa_theta);
    acc.push_back(r.val_acc);
  }
  s.n_used = static_cast<int>(acc.size());
  if (s.n_used < 2) {
    throw ConfigError("correlation needs at least two successful rows, have " +
                      std::to_string(s.n_used));
  }
  s.tau_kappa = kendall_tau_b(kappa, acc);
  s.tau_LE = kendall_tau_b(le, acc);
  s.tau_LE_kappa = kendall_tau_b(lek, acc);
  s.tau_kappa_theta = kendall_tau_b(kt, acc);
  return s;
}

std::vector<StudyRow> correlation_study(const SearchSpace& space, const ToyDataset& data,
                                        const StudyConfig& cfg,
                                        const std::vector<StudyRow>* precomputed,
                                        const std::function<void(const StudyRow&)>& on_row) {
  if (cfg.n_topologies < 10) throw ConfigError("correlation study needs >= 10 topologies");
  if (data.res != cfg.input_res) {
    throw ConfigError("dataset resolution does not match the study's input_res");
  }

  Rng sampler = stream_rng(cfg.seed, "policy");
  std::vector<TopologySpec> specs;
  std::set<uint64_t> seen;
  for (int tries = 0; static_cast<int>(specs.size()) < cfg.n_topologies; ++tries) {
    if (tries > 1000 * cfg.n_topologies) {
      throw ConfigError("could not sample enough distinct topologies");
    }
    TopologySpec t = sample_uniform(space, sampler);
    if (seen.insert(spec_hash(t, cfg.scale)).second) specs.push_back(t);
  }

  EvalFixtures fx = make_fixtures(cfg.seed, 3 * cfg.input_res * cfg.input_res,
                                  cfg.protocol.ntk_batch);
  std::vector<StudyRow> rows;
  for (const TopologySpec& t : specs) {
    StudyRow row;
    row.spec = t;
    row.spec_hash = spec_hash(t, cfg.scale);
    if (precomputed) {
      bool reused = false;
      for (const StudyRow& p : *precomputed) {
        if (p.spec_hash == row.spec_hash) {
          rows.push_back(p);
          if (on_row) on_row(p);
          reused = true;
          break;
        }
      }
      if (reused) continue;
    }
    try {
      const ComplexityReport rep =
          evaluate_topology(t, cfg.scale, cfg.input_res, cfg.seed, fx, cfg.protocol);
      row.kappa = rep.kappa;
      row.LE = rep.LE;
      row.LE_kappa = rep.LE_kappa;
      row.kappa_theta = rep.kappa_theta;
      row.params = count_params(t, cfg.scale);
      VitNetwork net = build_network(t, cfg.scale, cfg.train.seed, cfg.input_res);
      row.flops = static_cast<double>(count_flops(net, cfg.input_res));
      const TrainResult tr = train(net, data, cfg.train);
      if (tr.diverged) {
        row.failed = true;
        row.error = "training diverged";
      } else {
        row.val_acc = tr.final_val_accuracy;
      }
    } catch (const EvalError& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

}  // namespace vitforge
