#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vitforge/complexity.hpp"
#include "vitforge/csv.hpp"
#include "vitforge/errors.hpp"
#include "vitforge/kernels.hpp"
#include "vitforge/nn.hpp"
#include "vitforge/retokenize.hpp"
#include "vitforge/rng.hpp"
#include "vitforge/scaling.hpp"
#include "vitforge/search.hpp"
#include "vitforge/topology.hpp"
#include "vitforge/trainer.hpp"

namespace vitforge::cli {
namespace {

constexpr const char* kToolVersion = "0.1.0";

using Snapshot = std::map<std::string, std::string>;

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string iso_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << text;
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir + "/" + name;
}

ArchDocument read_arch(const std::string& path) { return decode_document(slurp(path)); }

// Effective-setting helpers: config file value if present, else the default.
int64_t cfg_int(const CommonOpts& o, const std::string& key, int64_t dflt) {
  return o.config.get_int(key, dflt);
}
double cfg_double(const CommonOpts& o, const std::string& key, double dflt) {
  return o.config.get_double(key, dflt);
}
std::string cfg_str(const CommonOpts& o, const std::string& key, const std::string& dflt) {
  return o.config.get_str(key, dflt);
}

LengthForm parse_length_form(const std::string& s) {
  if (s == "as_printed") return LengthForm::as_printed;
  if (s == "conventional") return LengthForm::conventional;
  throw ConfigError("length_form must be as_printed or conventional, got '" + s + "'");
}

std::vector<std::string> snapshot_preamble(const std::string& command, const Snapshot& snap) {
  std::vector<std::string> lines;
  lines.push_back("vitforge " + command + " v" + kToolVersion);
  for (const auto& [k, v] : snap) lines.push_back(k + " = " + v);
  return lines;
}

void add_common(Snapshot& snap, const CommonOpts& o) {
  snap["seed"] = std::to_string(o.seed);
  snap["jobs"] = std::to_string(o.jobs);
  snap["out_dir"] = o.out_dir;
}

void write_manifest(const CommonOpts& o, const std::string& command, const Snapshot& snap,
                    const std::vector<std::string>& outputs,
                    const std::map<std::string, std::string>& inputs,
                    const std::string& started) {
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["schema_version"] = 1;
  j["config"] = nlohmann::json::object();
  for (const auto& [k, v] : snap) j["config"][k] = v;
  j["inputs"] = nlohmann::json::object();
  for (const auto& [p, d] : inputs) j["inputs"][p] = d;
  j["outputs"] = nlohmann::json::object();
  for (const auto& name : outputs) {
    j["outputs"][name] = hex16(file_digest(join_path(o.out_dir, name)));
  }
  j["started"] = started;
  j["finished"] = iso_now();
  spill(join_path(o.out_dir, "manifest.json"), j.dump(2) + "\n");
}

void prepare_out_dir(const CommonOpts& o) {
  if (!o.out_dir.empty() && o.out_dir != ".") {
    std::error_code ec;
    std::filesystem::create_directories(o.out_dir, ec);
    if (ec) throw ConfigError("cannot create out dir '" + o.out_dir + "': " + ec.message());
  }
}

void apply_jobs(const CommonOpts& o) {
  if (o.jobs > 0) kernels::set_max_threads(o.jobs);
}

}  // namespace

void check_known_keys(const ConfigMap& config) {
  static const std::vector<std::string> known = {
      "seed", "jobs", "out_dir",
      // evaluate
      "evaluate.theta_samples", "evaluate.seeds", "evaluate.ntk_batch", "evaluate.input_res",
      "evaluate.length_form",
      // search
      "search.steps", "search.lr", "search.baseline_decay", "search.theta_samples",
      "search.seeds", "search.ntk_batch", "search.input_res", "search.width",
      "search.length_form", "search.top_k", "search.rescore_seeds", "search.resume",
      // scale
      "scale.budget", "scale.theta_samples", "scale.seeds", "scale.ntk_batch",
      "scale.input_res", "scale.length_form", "scale.random",
      // schedule
      "schedule.phases", "schedule.input_res",
      // correlate
      "correlate.n", "correlate.classes", "correlate.samples", "correlate.epochs",
      "correlate.batch", "correlate.lr", "correlate.width", "correlate.input_res",
      "correlate.theta_samples", "correlate.ntk_batch", "correlate.resume"};
  config.require_known(known);
}

int cmd_evaluate(const std::string& arch_file, const CommonOpts& opts, const FlagOverrides& fl) {
  const std::string started = iso_now();
  prepare_out_dir(opts);
  apply_jobs(opts);

  const ArchDocument doc = read_arch(arch_file);
  Protocol p;
  p.theta_samples = static_cast<int>(cfg_int(opts, "evaluate.theta_samples", 10));
  p.seeds = static_cast<int>(fl.seeds >= 0 ? fl.seeds : cfg_int(opts, "evaluate.seeds", 5));
  p.ntk_batch = static_cast<int>(cfg_int(opts, "evaluate.ntk_batch", 8));
  p.length_form = parse_length_form(cfg_str(opts, "evaluate.length_form", "as_printed"));
  const int res = static_cast<int>(cfg_int(opts, "evaluate.input_res", 32));

  Snapshot snap;
  add_common(snap, opts);
  snap["evaluate.theta_samples"] = std::to_string(p.theta_samples);
  snap["evaluate.seeds"] = std::to_string(p.seeds);
  snap["evaluate.ntk_batch"] = std::to_string(p.ntk_batch);
  snap["evaluate.input_res"] = std::to_string(res);
  snap["evaluate.length_form"] =
      p.length_form == LengthForm::as_printed ? "as_printed" : "conventional";

  const EvalFixtures fx = make_fixtures(opts.seed, 3 * res * res, p.ntk_batch);
  const ComplexityReport rep =
      evaluate_topology(doc.topology, doc.scale, res, opts.seed, fx, p);
  const std::string hash = spec_hash_hex(doc.topology, doc.scale);

  CsvWriter w(join_path(opts.out_dir, "report.csv"), snapshot_preamble("evaluate", snap),
              {"spec_hash", "seed", "kappa", "LE", "LE_kappa", "kappa_theta", "wall_ms"});
  for (const SeedMetrics& m : rep.per_seed) {
    w.row({hash, cell(m.seed_index), cell(m.kappa), cell(m.LE), cell(m.LE_kappa),
           cell(m.kappa_theta), cell(m.wall_ms)});
  }
  w.row({hash, "mean", cell(rep.kappa), cell(rep.LE), cell(rep.LE_kappa), cell(rep.kappa_theta),
         cell(rep.wall_ms)});
  w.flush();

  write_manifest(opts, "evaluate", snap, {"report.csv"},
                 {{arch_file, hex16(file_digest(arch_file))}}, started);
  std::printf("evaluate %s: kappa=%s LE=%s LE_kappa=%s kappa_theta=%s (%d seeds, %.0f ms)\n",
              hash.c_str(), format_double(rep.kappa).c_str(), format_double(rep.LE).c_str(),
              format_double(rep.LE_kappa).c_str(), format_double(rep.kappa_theta).c_str(),
              p.seeds, rep.wall_ms);
  std::printf("wrote %s and manifest.json\n", join_path(opts.out_dir, "report.csv").c_str());
  return 0;
}

int cmd_search(const CommonOpts& opts, const FlagOverrides& fl) {
  const std::string started = iso_now();
  prepare_out_dir(opts);
  apply_jobs(opts);

  SearchConfig scfg;
  scfg.steps = static_cast<int>(fl.steps >= 0 ? fl.steps : cfg_int(opts, "search.steps", 500));
  scfg.lr = cfg_double(opts, "search.lr", scfg.lr);
  scfg.baseline_decay = cfg_double(opts, "search.baseline_decay", scfg.baseline_decay);

  Protocol p;
  p.theta_samples = static_cast<int>(cfg_int(opts, "search.theta_samples", 10));
  p.seeds = static_cast<int>(cfg_int(opts, "search.seeds", 1));
  p.ntk_batch = static_cast<int>(cfg_int(opts, "search.ntk_batch", 8));
  p.length_form = parse_length_form(cfg_str(opts, "search.length_form", "as_printed"));
  const int res = static_cast<int>(cfg_int(opts, "search.input_res", 32));
  const int width = static_cast<int>(cfg_int(opts, "search.width", 32));
  const int top_k = static_cast<int>(cfg_int(opts, "search.top_k", 5));
  const int rescore_seeds = static_cast<int>(cfg_int(opts, "search.rescore_seeds", 5));
  const std::string resume =
      !fl.resume.empty() ? fl.resume : cfg_str(opts, "search.resume", "");

  Snapshot snap;
  add_common(snap, opts);
  snap["search.steps"] = std::to_string(scfg.steps);
  snap["search.lr"] = format_double(scfg.lr);
  snap["search.baseline_decay"] = format_double(scfg.baseline_decay);
  snap["search.theta_samples"] = std::to_string(p.theta_samples);
  snap["search.seeds"] = std::to_string(p.seeds);
  snap["search.ntk_batch"] = std::to_string(p.ntk_batch);
  snap["search.input_res"] = std::to_string(res);
  snap["search.width"] = std::to_string(width);
  snap["search.top_k"] = std::to_string(top_k);
  snap["search.rescore_seeds"] = std::to_string(rescore_seeds);
  snap["search.length_form"] =
      p.length_form == LengthForm::as_printed ? "as_printed" : "conventional";
  if (!resume.empty()) snap["search.resume"] = resume;

  const SearchSpace space = SearchSpace::full();
  ScaleSpec eval_scale;  // single block per stage at the seed width
  eval_scale.width = width;

  const EvalFixtures fx = make_fixtures(opts.seed, 3 * res * res, p.ntk_batch);
  std::unordered_map<uint64_t, std::pair<double, double>> memo_ok;
  std::unordered_map<uint64_t, std::string> memo_fail;
  auto ev = [&](const TopologySpec& t) -> std::pair<double, double> {
    const uint64_t h = spec_hash(t, eval_scale);
    if (auto it = memo_ok.find(h); it != memo_ok.end()) return it->second;
    if (auto it = memo_fail.find(h); it != memo_fail.end()) throw EvalError(it->second);
    try {
      const ComplexityReport rep = evaluate_topology(t, eval_scale, res, opts.seed, fx, p);
      return memo_ok[h] = {rep.LE, rep.kappa_theta};
    } catch (const EvalError& e) {
      memo_fail[h] = e.what();
      throw;
    }
  };

  SearchState st = resume.empty() ? SearchState(space) : decode_policy(slurp(resume), space);
  Rng rng = stream_rng(opts.seed, "policy");
  const SearchResult result = run_search_from(st, space, ev, scfg, rng);

  const auto preamble = snapshot_preamble("search", snap);
  CsvWriter traj(join_path(opts.out_dir, "trajectory.csv"), preamble,
                 {"t", "spec_hash", "LE", "kappa_theta", "reward", "entropy"});
  int failed = 0;
  for (const StepRecord& r : result.trajectory) {
    const std::string hash = spec_hash_hex(r.spec, eval_scale);
    if (r.failed) {
      ++failed;
      traj.row({cell(r.attempt), hash, "", "", "", cell(r.entropy)});
    } else {
      traj.row({cell(r.attempt), hash, cell(r.LE), cell(r.kappa_theta), cell(r.reward),
                cell(r.entropy)});
    }
  }
  traj.flush();

  spill(join_path(opts.out_dir, "best.json"),
        encode_document(result.best, eval_scale, opts.seed));
  spill(join_path(opts.out_dir, "policy.json"), encode_policy(st, space));

  Protocol rescore = p;
  rescore.seeds = rescore_seeds;
  const std::vector<TopologySpec> cands =
      top_candidates(space, st.policy, result.trajectory, top_k);
  CsvWriter top(join_path(opts.out_dir, "top_candidates.csv"), preamble,
                {"rank", "spec_hash", "kappa", "LE", "LE_kappa", "kappa_theta"});
  for (size_t i = 0; i < cands.size(); ++i) {
    const std::string hash = spec_hash_hex(cands[i], eval_scale);
    try {
      const ComplexityReport rep =
          evaluate_topology(cands[i], eval_scale, res, opts.seed, fx, rescore);
      top.row({cell(static_cast<int>(i + 1)), hash, cell(rep.kappa), cell(rep.LE),
               cell(rep.LE_kappa), cell(rep.kappa_theta)});
    } catch (const EvalError&) {
      top.row({cell(static_cast<int>(i + 1)), hash, "", "", "", ""});
    }
  }
  top.flush();

  std::map<std::string, std::string> inputs;
  if (!resume.empty()) inputs[resume] = hex16(fnv1a64(slurp(resume)));
  write_manifest(opts, "search",  snap,
                 {"trajectory.csv", "best.json", "policy.json", "top_candidates.csv"}, inputs,
                 started);
  std::printf("search: %d steps (%d failed), entropy %s -> %s, best %s\n", scfg.steps, failed,
              format_double(result.initial_entropy).c_str(),
              format_double(result.final_entropy).c_str(),
              spec_hash_hex(result.best, eval_scale).c_str());
  std::printf("wrote trajectory.csv, best.json, policy.json, top_candidates.csv in %s\n",
              opts.out_dir.c_str());
  return 0;
}

int cmd_scale(const std::string& arch_file, const CommonOpts& opts, const FlagOverrides& fl) {
  const std::string started = iso_now();
  prepare_out_dir(opts);
  apply_jobs(opts);

  const ArchDocument doc = read_arch(arch_file);
  const uint64_t budget = static_cast<uint64_t>(
      fl.budget >= 0 ? fl.budget : cfg_int(opts, "scale.budget", 2000000));
  Protocol p;
  p.theta_samples = static_cast<int>(cfg_int(opts, "scale.theta_samples", 10));
  p.seeds = static_cast<int>(cfg_int(opts, "scale.seeds", 1));
  p.ntk_batch = static_cast<int>(cfg_int(opts, "scale.ntk_batch", 8));
  p.length_form = parse_length_form(cfg_str(opts, "scale.length_form", "as_printed"));
  const int res = static_cast<int>(cfg_int(opts, "scale.input_res", 32));
  const bool random_mode = fl.random_scaling || opts.config.get_bool("scale.random", false);

  Snapshot snap;
  add_common(snap, opts);
  snap["scale.budget"] = std::to_string(budget);
  snap["scale.theta_samples"] = std::to_string(p.theta_samples);
  snap["scale.seeds"] = std::to_string(p.seeds);
  snap["scale.ntk_batch"] = std::to_string(p.ntk_batch);
  snap["scale.input_res"] = std::to_string(res);
  snap["scale.random"] = random_mode ? "true" : "false";
  snap["scale.length_form"] =
      p.length_form == LengthForm::as_printed ? "as_printed" : "conventional";

  const EvalFixtures fx = make_fixtures(opts.seed, 3 * res * res, p.ntk_batch);
  auto ev = [&](const ScaleSpec& s) -> std::pair<double, double> {
    const ComplexityReport rep = evaluate_topology(doc.topology, s, res, opts.seed, fx, p);
    return {rep.LE, rep.kappa_theta};
  };

  ScalingTrajectory traj;
  if (random_mode) {
    Rng rng = stream_rng(opts.seed, "scaling-ties");
    traj = run_random_scaling(doc.topology, doc.scale, budget, ev, rng);
  } else {
    traj = run_autoscale(doc.topology, doc.scale, budget, ev);
  }

  const auto preamble = snapshot_preamble("scale", snap);
  CsvWriter w(join_path(opts.out_dir, "trajectory.csv"), preamble,
              {"step", "L1", "L2", "L3", "L4", "C", "params", "ratio", "stage", "LE",
               "kappa_theta"});
  std::vector<std::string> outputs = {"trajectory.csv"};
  auto arch_name = [](size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%03zu.json", step);
    return std::string(buf);
  };
  auto emit_arch = [&](size_t step, const ScaleSpec& s) {
    const std::string name = arch_name(step);
    spill(join_path(opts.out_dir, name), encode_document(doc.topology, s, opts.seed));
    outputs.push_back(name);
  };

  w.row({cell(0), cell(traj.seed.depth[0]), cell(traj.seed.depth[1]), cell(traj.seed.depth[2]),
         cell(traj.seed.depth[3]), cell(traj.seed.width), cell(traj.seed_params), "", "",
         cell(traj.seed_LE), cell(traj.seed_kappa_theta)});
  emit_arch(0, traj.seed);
  for (size_t i = 0; i < traj.steps.size(); ++i) {
    const ScalingStep& s = traj.steps[i];
    w.row({cell(static_cast<int>(i + 1)), cell(s.scale.depth[0]), cell(s.scale.depth[1]),
           cell(s.scale.depth[2]), cell(s.scale.depth[3]), cell(s.scale.width), cell(s.params),
           cell(s.choice.width_ratio), cell(s.choice.depth_stage), cell(s.LE),
           cell(s.kappa_theta)});
    emit_arch(i + 1, s.scale);
  }
  w.flush();
  const ScaleSpec final_scale = traj.steps.empty() ? traj.seed : traj.steps.back().scale;
  spill(join_path(opts.out_dir, "final.json"),
        encode_document(doc.topology, final_scale, opts.seed));
  outputs.push_back("final.json");

  write_manifest(opts, "scale", snap, outputs, {{arch_file, hex16(file_digest(arch_file))}},
                 started);
  const uint64_t final_params =
      traj.steps.empty() ? traj.seed_params : traj.steps.back().params;
  std::printf("scale (%s): %zu steps, params %llu -> %llu (budget %llu), trend %.2f\n",
              random_mode ? "random" : "ranked", traj.steps.size(),
              static_cast<unsigned long long>(traj.seed_params),
              static_cast<unsigned long long>(final_params),
              static_cast<unsigned long long>(budget), trend_fraction(traj));
  std::printf("wrote trajectory.csv and %zu architecture documents in %s\n",
              traj.steps.size() + 2, opts.out_dir.c_str());
  return 0;
}

int cmd_schedule(const std::string& arch_file, const CommonOpts& opts, const FlagOverrides& fl) {
  const std::string started = iso_now();
  prepare_out_dir(opts);
  apply_jobs(opts);

  const ArchDocument doc = read_arch(arch_file);
  const std::string phases =
      !fl.phases.empty() ? fl.phases : cfg_str(opts, "schedule.phases", "");
  if (phases.empty()) throw ConfigError("schedule needs --phases (or schedule.phases)");
  const int res = static_cast<int>(cfg_int(opts, "schedule.input_res", 224));

  Snapshot snap;
  add_common(snap, opts);
  snap["schedule.phases"] = phases;
  snap["schedule.input_res"] = std::to_string(res);

  const VitNetwork net = build_network(doc.topology, doc.scale, opts.seed, res);
  const TokenSchedule sched = parse_schedule(phases, net);
  const double saving = schedule_savings(sched, sched.total_epochs, net);
  const std::string canonical = schedule_to_string(sched);
  const std::string hash =
      hex16(fnv1a64(canonical + ":" + std::to_string(sched.total_epochs)));

  nlohmann::json j;
  j["schedule"] = canonical;
  j["total_epochs"] = sched.total_epochs;
  j["phases"] = nlohmann::json::array();
  for (const TokenPhase& ph : sched.phases) {
    j["phases"].push_back({{"stride", ph.stride},
                           {"dilation", ph.dilation},
                           {"epoch_start", ph.epoch_start},
                           {"epoch_end", ph.epoch_end}});
  }
  spill(join_path(opts.out_dir, "schedule.json"), j.dump(2) + "\n");

  CsvWriter w(join_path(opts.out_dir, "savings.csv"), snapshot_preamble("schedule", snap),
              {"schedule_hash", "saving_pct", "ratio_4x", "ratio_2x", "ratio_full"});
  w.row({hash, cell(saving), cell(flops_ratio(net, 4)), cell(flops_ratio(net, 2)),
         cell(flops_ratio(net, 1))});
  w.flush();

  write_manifest(opts, "schedule", snap, {"schedule.json", "savings.csv"},
                 {{arch_file, hex16(file_digest(arch_file))}}, started);
  std::printf("schedule %s: saving %.2f%% over %d epochs (%s)\n", hash.c_str(), saving,
              sched.total_epochs, canonical.c_str());
  std::printf("wrote schedule.json and savings.csv in %s\n", opts.out_dir.c_str());
  return 0;
}

namespace {

// Resume file sanity: a partial CSV written under different data or training
// settings must not be spliced into this run.
void check_resume_compatible(const CsvContent& prev, const Snapshot& snap) {
  static const std::vector<std::string> pinned = {
      "seed", "correlate.classes", "correlate.samples", "correlate.epochs",
      "correlate.batch", "correlate.lr", "correlate.width", "correlate.input_res",
      "correlate.theta_samples", "correlate.ntk_batch"};
  for (const std::string& line : prev.preamble) {
    const size_t at = line.find(" = ");
    if (at == std::string::npos) continue;
    const std::string key = line.substr(0, at);
    const std::string value = line.substr(at + 3);
    for (const std::string& k : pinned) {
      if (k == key) {
        auto it = snap.find(key);
        if (it != snap.end() && it->second != value) {
          throw ConfigError("resume file disagrees on " + key + " (" + value + " vs " +
                            it->second + ")");
        }
      }
    }
  }
}

}  // namespace

int cmd_correlate(const CommonOpts& opts, const FlagOverrides& fl) {
  const std::string started = iso_now();
  prepare_out_dir(opts);
  apply_jobs(opts);

  StudyConfig sc;
  sc.n_topologies = static_cast<int>(fl.n >= 0 ? fl.n : cfg_int(opts, "correlate.n", 16));
  sc.seed = opts.seed;
  sc.scale.width = static_cast<int>(cfg_int(opts, "correlate.width", 8));
  sc.input_res = static_cast<int>(cfg_int(opts, "correlate.input_res", 32));
  sc.protocol.theta_samples = static_cast<int>(cfg_int(opts, "correlate.theta_samples", 10));
  sc.protocol.ntk_batch = static_cast<int>(cfg_int(opts, "correlate.ntk_batch", 8));
  sc.train.epochs =
      static_cast<int>(fl.epochs >= 0 ? fl.epochs : cfg_int(opts, "correlate.epochs", 60));
  sc.train.batch_size = static_cast<int>(cfg_int(opts, "correlate.batch", 32));
  sc.train.lr = cfg_double(opts, "correlate.lr", 2e-3);
  sc.train.seed = opts.seed;
  const int classes = static_cast<int>(cfg_int(opts, "correlate.classes", 8));
  const int samples = static_cast<int>(cfg_int(opts, "correlate.samples", 2048));
  const std::string resume =
      !fl.resume.empty() ? fl.resume : cfg_str(opts, "correlate.resume", "");

  Snapshot snap;
  add_common(snap, opts);
  snap["correlate.n"] = std::to_string(sc.n_topologies);
  snap["correlate.classes"] = std::to_string(classes);
  snap["correlate.samples"] = std::to_string(samples);
  snap["correlate.epochs"] = std::to_string(sc.train.epochs);
  snap["correlate.batch"] = std::to_string(sc.train.batch_size);
  snap["correlate.lr"] = format_double(sc.train.lr);
  snap["correlate.width"] = std::to_string(sc.scale.width);
  snap["correlate.input_res"] = std::to_string(sc.input_res);
  snap["correlate.theta_samples"] = std::to_string(sc.protocol.theta_samples);
  snap["correlate.ntk_batch"] = std::to_string(sc.protocol.ntk_batch);
  if (!resume.empty()) snap["correlate.resume"] = resume;

  std::vector<StudyRow> pre;
  if (!resume.empty()) {
    const CsvContent prev = read_csv(resume);
    check_resume_compatible(prev, snap);
    for (const auto& r : prev.rows) {
      if (r.size() != 8) continue;
      StudyRow row;
      row.spec_hash = std::strtoull(r[0].c_str(), nullptr, 16);
      row.kappa = std::strtod(r[1].c_str(), nullptr);
      row.LE = std::strtod(r[2].c_str(), nullptr);
      row.LE_kappa = std::strtod(r[3].c_str(), nullptr);
      row.kappa_theta = std::strtod(r[4].c_str(), nullptr);
      row.val_acc = std::strtod(r[5].c_str(), nullptr);
      row.params = std::strtoull(r[6].c_str(), nullptr, 10);
      row.flops = std::strtod(r[7].c_str(), nullptr);
      pre.push_back(row);
    }
    // Failed rows live in the sidecar so the raw CSV keeps pure study columns.
    const std::string failures = join_path(
        std::filesystem::path(resume).parent_path().string(), "failures.csv");
    if (std::filesystem::exists(failures)) {
      for (const auto& r : read_csv(failures).rows) {
        if (r.size() != 2) continue;
        StudyRow row;
        row.spec_hash = std::strtoull(r[0].c_str(), nullptr, 16);
        row.failed = true;
        row.error = r[1];
        pre.push_back(row);
      }
    }
  }

  const ToyDataset data = make_shape_dataset(opts.seed, sc.input_res, classes, samples);

  const auto preamble = snapshot_preamble("correlate", snap);
  CsvWriter w(join_path(opts.out_dir, "study.csv"), preamble,
              {"spec_hash", "kappa", "LE", "LE_kappa", "kappa_theta", "val_acc", "params",
               "flops"});
  std::vector<std::pair<std::string, std::string>> failures;
  auto on_row = [&](const StudyRow& row) {
    if (row.failed) {
      std::string msg = row.error;
      for (char& c : msg) {
        if (c == ',' || c == '\n') c = ';';
      }
      failures.emplace_back(hex16(row.spec_hash), msg);
      return;
    }
    w.row({hex16(row.spec_hash), cell(row.kappa), cell(row.LE), cell(row.LE_kappa),
           cell(row.kappa_theta), cell(row.val_acc), cell(static_cast<uint64_t>(row.params)),
           cell(row.flops)});
    w.flush();
  };

  const std::vector<StudyRow> rows = correlation_study(
      SearchSpace::full(), data, sc, pre.empty() ? nullptr : &pre, on_row);
  const TauSummary taus = study_taus(rows);

  std::vector<std::string> outputs = {"study.csv"};
  if (!failures.empty()) {
    CsvWriter fw(join_path(opts.out_dir, "failures.csv"), preamble, {"spec_hash", "error"});
    for (const auto& [h, e] : failures) fw.row({h, e});
    fw.flush();
    outputs.push_back("failures.csv");
  }

  nlohmann::json j;
  j["tau_kappa"] = taus.tau_kappa;
  j["tau_LE"] = taus.tau_LE;
  j["tau_LE_kappa"] = taus.tau_LE_kappa;
  j["tau_kappa_theta"] = taus.tau_kappa_theta;
  j["n_used"] = taus.n_used;
  j["n_failed"] = taus.n_failed;
  spill(join_path(opts.out_dir, "taus.json"), j.dump(2) + "\n");
  outputs.push_back("taus.json");

  std::map<std::string, std::string> inputs;
  if (!resume.empty()) inputs[resume] = hex16(fnv1a64(slurp(resume)));
  write_manifest(opts, "correlate", snap, outputs, inputs, started);
  std::printf(
      "correlate: %d topologies (%d failed), tau(kappa)=%s tau(LE)=%s tau(LE_kappa)=%s "
      "tau(kappa_theta)=%s\n",
      sc.n_topologies, taus.n_failed, format_double(taus.tau_kappa).c_str(),
      format_double(taus.tau_LE).c_str(), format_double(taus.tau_LE_kappa).c_str(),
      format_double(taus.tau_kappa_theta).c_str());
  std::printf("wrote study.csv and taus.json in %s\n", opts.out_dir.c_str());
  return 0;
}

}  // namespace vitforge::cli
