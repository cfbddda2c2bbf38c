#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "vitforge/errors.hpp"
#include "vitforge/nn.hpp"
#include "vitforge/retokenize.hpp"
#include "vitforge/topology.hpp"
#include "vitforge/trainer.hpp"

using namespace vitforge;

namespace {

ScaleSpec small_scale(int width = 8) {
  ScaleSpec s;
  s.depth = {1, 1, 1, 1};
  s.width = width;
  return s;
}

VitNetwork fresh_net(uint64_t seed = 5) {
  return build_network(seed_topology(), small_scale(), seed, 32);
}

int count_label(const ToyDataset& d, const std::vector<int>& idx, int cls) {
  int n = 0;
  for (int i : idx) n += d.labels[i] == cls ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("shape dataset: balance, determinism, splits, pixel range") {
  ToyDataset d = make_shape_dataset(3, 32, 4, 2048);
  CHECK(d.size() == 2048);
  CHECK(d.classes == 4);
  for (int cls = 0; cls < 4; ++cls) {
    int n = 0;
    for (int l : d.labels) n += l == cls ? 1 : 0;
    CHECK(n == 512);
    CHECK(count_label(d, d.train_idx, cls) == 409);  // 80% of 512, floor
    CHECK(count_label(d, d.val_idx, cls) == 103);
  }
  CHECK(d.train_idx.size() + d.val_idx.size() == 2048);

  for (double p : d.images[0]) {
    CHECK(p >= -1.0);
    CHECK(p <= 1.0);
  }

  ToyDataset d2 = make_shape_dataset(3, 32, 4, 2048);
  CHECK(d.images[100] == d2.images[100]);
  CHECK(d.images[2000] == d2.images[2000]);
  ToyDataset d3 = make_shape_dataset(4, 32, 4, 2048);
  CHECK(d.images[100] != d3.images[100]);

  CHECK_THROWS_AS(make_shape_dataset(1, 32, 4, 2047), ConfigError);
  CHECK_THROWS_AS(make_shape_dataset(1, 32, 1, 100), ConfigError);
  CHECK_THROWS_AS(make_shape_dataset(1, 32, 9, 90), ConfigError);
  CHECK_THROWS_AS(make_shape_dataset(1, 4, 4, 100), ConfigError);
  CHECK_THROWS_AS(make_shape_dataset(1, 128, 4, 100), ConfigError);
}

TEST_CASE("linear probe beats chance on the synthetic classes") {
  ToyDataset d = make_shape_dataset(7, 32, 4, 512);
  const double acc = linear_probe_accuracy(d, 2000, 0.01, 3);
  CHECK(acc > 0.5);  // chance is 0.25
  CHECK_THROWS_AS(linear_probe_accuracy(d, 0, 0.01, 3), ConfigError);
}

TEST_CASE("image directory ingestion") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "vitforge_ingest_test";
  fs::remove_all(root);
  fs::create_directories(root / "circle");
  fs::create_directories(root / "stripe");

  // 2x2 P6: red, green / blue, white.
  {
    std::ofstream f(root / "circle" / "a.ppm", std::ios::binary);
    f << "P6\n2 2\n255\n";
    const unsigned char px[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255};
    f.write(reinterpret_cast<const char*>(px), sizeof(px));
  }
  // Ascii P2 grayscale with a comment line.
  {
    std::ofstream f(root / "circle" / "b.pgm");
    f << "P2\n# test image\n2 1\n100\n0 100\n";
  }
  {
    std::ofstream f(root / "stripe" / "a.ppm", std::ios::binary);
    f << "P6\n1 1\n255\n";
    const unsigned char px[] = {128, 128, 128};
    f.write(reinterpret_cast<const char*>(px), sizeof(px));
  }
  {
    std::ofstream f(root / "stripe" / "b.pgm");
    f << "P2\n1 1\n255\n255\n";
  }

  ToyDataset d = ingest_directory(root.string(), 8);
  CHECK(d.size() == 4);
  CHECK(d.classes == 2);
  CHECK(d.res == 8);
  // Sorted class names: circle -> 0, stripe -> 1.
  CHECK(d.labels == std::vector<int>{0, 0, 1, 1});

  // Nearest resampling of the 2x2 P6: top-left quadrant is pure red.
  const std::vector<double>& img = d.images[0];
  CHECK(img[0 * 64 + 0 * 8 + 0] == doctest::Approx(1.0));    // R channel on
  CHECK(img[1 * 64 + 0 * 8 + 0] == doctest::Approx(-1.0));   // G channel off
  CHECK(img[1 * 64 + 0 * 8 + 7] == doctest::Approx(1.0));    // top-right green
  CHECK(img[2 * 64 + 7 * 8 + 0] == doctest::Approx(1.0));    // bottom-left blue
  // Grayscale replicates channels: left half 0 -> -1, right half 100/100 -> 1.
  const std::vector<double>& gray = d.images[1];
  CHECK(gray[0] == doctest::Approx(-1.0));
  CHECK(gray[7] == doctest::Approx(1.0));
  CHECK(gray[0] == gray[64]);
  CHECK(gray[7] == gray[2 * 64 + 7]);

  SUBCASE("structural errors") {
    CHECK_THROWS_AS(ingest_directory((root / "nope").string(), 8), ConfigError);
    fs::create_directories(root / "only" / "one");
    CHECK_THROWS_AS(ingest_directory((root / "only").string(), 8), ConfigError);

    fs::create_directories(root / "empty_class");
    CHECK_THROWS_AS(ingest_directory(root.string(), 8), ConfigError);
    fs::remove_all(root / "empty_class");

    std::ofstream f(root / "stripe" / "c.ppm", std::ios::binary);
    f << "P6\n1 1\n255\n";
    const unsigned char px[] = {1, 2, 3};
    f.write(reinterpret_cast<const char*>(px), sizeof(px));
    f.close();
    CHECK_THROWS_AS(ingest_directory(root.string(), 8), ConfigError);  // unbalanced
    fs::remove(root / "stripe" / "c.ppm");
  }

  SUBCASE("encoding errors") {
    // Counts stay balanced throughout so the encoding error is what fires;
    // classes are read in sorted order, circle first.
    auto put = [&](const char* cls, const char* body) {
      std::ofstream f(root / cls / "bad.ppm", std::ios::binary);
      f << body;
    };
    put("circle", "P6\n4 4\n255\nxx");  // truncated pixel data
    put("stripe", "P6\n1 1\n255\nabc");
    CHECK_THROWS_AS(ingest_directory(root.string(), 8), ConfigError);

    put("circle", "P7\n1 1\n255\n");  // unknown magic
    CHECK_THROWS_AS(ingest_directory(root.string(), 8), ConfigError);

    put("circle", "P2\n1 1\n65535\n1234\n");  // 16-bit depth
    CHECK_THROWS_AS(ingest_directory(root.string(), 8), ConfigError);

    fs::remove(root / "circle" / "bad.ppm");
    fs::remove(root / "stripe" / "bad.ppm");
  }

  fs::remove_all(root);
}

TEST_CASE("training: zero epochs stays near chance, a few epochs learn") {
  ToyDataset d = make_shape_dataset(7, 32, 4, 512);

  VitNetwork untrained = fresh_net();
  TrainConfig zero;
  zero.epochs = 0;
  TrainResult rz = train(untrained, d, zero);
  CHECK(rz.train_loss.empty());
  CHECK(rz.val_accuracy.empty());
  CHECK(rz.epoch_flops_ratio.empty());
  CHECK_FALSE(rz.diverged);
  CHECK(rz.final_val_accuracy >= 0.0);
  CHECK(rz.final_val_accuracy <= 0.6);  // far from the trained regime

  VitNetwork net = fresh_net();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 32;
  const std::vector<double> before = net.params;
  TrainResult r = train(net, d, cfg);
  CHECK_FALSE(r.diverged);
  REQUIRE(r.train_loss.size() == 4);
  REQUIRE(r.val_accuracy.size() == 4);
  CHECK(r.epoch_flops_ratio == std::vector<double>{1.0, 1.0, 1.0, 1.0});
  CHECK(std::min(r.train_loss[1], r.train_loss.back()) < r.train_loss[0]);
  CHECK(r.final_val_accuracy == r.val_accuracy.back());
  CHECK(r.final_val_accuracy > 0.45);  // chance is 0.25
  CHECK(r.final_val_accuracy > rz.final_val_accuracy);
  CHECK(net.params != before);  // trained in place
  CHECK(r.wall_ms > 0);
}

TEST_CASE("training is deterministic in the seed") {
  ToyDataset d = make_shape_dataset(9, 32, 4, 256);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;

  VitNetwork a = fresh_net(11);
  TrainResult ra = train(a, d, cfg);
  VitNetwork b = fresh_net(11);
  TrainResult rb = train(b, d, cfg);
  CHECK(ra.train_loss == rb.train_loss);
  CHECK(ra.val_accuracy == rb.val_accuracy);
  CHECK(a.params == b.params);

  TrainConfig other = cfg;
  other.seed = 2;
  VitNetwork c = fresh_net(11);
  TrainResult rc = train(c, d, other);
  CHECK(ra.train_loss != rc.train_loss);
}

TEST_CASE("divergence is flagged, not thrown") {
  ToyDataset d = make_shape_dataset(9, 32, 4, 256);
  VitNetwork net = fresh_net();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 1e10;
  TrainResult r = train(net, d, cfg);
  CHECK(r.diverged);
  CHECK(r.train_loss.size() < 3);
  CHECK(r.final_val_accuracy >= 0.0);
  CHECK(r.final_val_accuracy <= 1.0);
}

TEST_CASE("training config validation") {
  ToyDataset d = make_shape_dataset(9, 32, 4, 256);
  VitNetwork net = fresh_net();
  TrainConfig cfg;

  TrainConfig bad = cfg;
  bad.epochs = -1;
  CHECK_THROWS_AS(train(net, d, bad), ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(net, d, bad), ConfigError);
  bad = cfg;
  bad.lr = 0;
  CHECK_THROWS_AS(train(net, d, bad), ConfigError);

  ToyDataset wrong_res = make_shape_dataset(9, 16, 4, 64);
  CHECK_THROWS_AS(train(net, wrong_res, cfg), ConfigError);

  TokenSchedule sched = parse_schedule("1-2:2x,3-4:full", net);
  TrainConfig mismatched = cfg;
  mismatched.epochs = 3;
  mismatched.schedule = &sched;
  CHECK_THROWS_AS(train(net, d, mismatched), ConfigError);
}

TEST_CASE("re-tokenization schedule drives per-epoch cost") {
  ToyDataset d = make_shape_dataset(13, 32, 4, 256);
  VitNetwork net = fresh_net();
  TokenSchedule sched = parse_schedule("1-1:4x,2-2:2x,3-7:full", net);
  TrainConfig cfg;
  cfg.epochs = 7;
  cfg.batch_size = 16;
  cfg.schedule = &sched;
  TrainResult r = train(net, d, cfg);
  CHECK_FALSE(r.diverged);
  REQUIRE(r.epoch_flops_ratio.size() == 7);
  CHECK(r.epoch_flops_ratio[0] == flops_ratio(net, 4));
  CHECK(r.epoch_flops_ratio[1] == flops_ratio(net, 2));
  CHECK(r.epoch_flops_ratio[2] == 1.0);
  CHECK(r.epoch_flops_ratio.back() == 1.0);
  CHECK(r.epoch_flops_ratio[0] < r.epoch_flops_ratio[1]);
  REQUIRE(r.train_loss.size() == 7);
  CHECK(r.final_val_accuracy > 0.3);  // the curriculum still learns; chance is 0.25
}

TEST_CASE("kendall tau-b fixtures") {
  const std::vector<double> x = {3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.6};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(kendall_tau_b(x, x) == doctest::Approx(1.0));
  CHECK(kendall_tau_b(x, neg) == doctest::Approx(-1.0));
  CHECK(kendall_tau_b({1, 2, 3}, {1, 3, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(kendall_tau_b({1, 1, 2}, {1, 2, 3}) == doctest::Approx(2.0 / std::sqrt(6.0)));
  CHECK(kendall_tau_b({1, 2}, {5, 7}) == doctest::Approx(1.0));

  CHECK_THROWS_AS(kendall_tau_b({1, 2}, {1, 2, 3}), ConfigError);
  CHECK_THROWS_AS(kendall_tau_b({1}, {1}), ConfigError);
  CHECK_THROWS_AS(kendall_tau_b({2, 2, 2}, {1, 2, 3}), EvalError);
}

TEST_CASE("tau table over fabricated study rows") {
  auto row = [](double metric, double acc, bool failed = false) {
    StudyRow r;
    r.kappa = metric;
    r.LE = acc;        // LE column mirrors accuracy
    r.LE_kappa = -acc; // LE_kappa column anti-mirrors it
    r.kappa_theta = metric;
    r.val_acc = acc;
    r.failed = failed;
    return r;
  };
  std::vector<StudyRow> rows = {row(5, 0.2), row(3, 0.4), row(8, 0.6), row(1, 0.8),
                                row(99, 0.99, true)};
  TauSummary t = study_taus(rows);
  CHECK(t.n_used == 4);
  CHECK(t.n_failed == 1);
  CHECK(t.tau_LE == doctest::Approx(1.0));
  CHECK(t.tau_LE_kappa == doctest::Approx(-1.0));
  CHECK(t.tau_kappa == t.tau_kappa_theta);
  CHECK(t.tau_kappa >= -1.0);
  CHECK(t.tau_kappa <= 1.0);

  std::vector<StudyRow> starved = {row(1, 0.5), row(2, 0.6, true)};
  CHECK_THROWS_AS(study_taus(starved), ConfigError);
}

TEST_CASE("correlation study: sampling, rows, resume") {
  ToyDataset d = make_shape_dataset(21, 32, 4, 256);
  StudyConfig cfg;
  cfg.n_topologies = 10;
  cfg.seed = 21;
  cfg.scale = small_scale();
  cfg.train.epochs = 1;
  cfg.train.batch_size = 32;

  StudyConfig too_few = cfg;
  too_few.n_topologies = 5;
  CHECK_THROWS_AS(correlation_study(SearchSpace::full(), d, too_few), ConfigError);

  std::vector<StudyRow> rows = correlation_study(SearchSpace::full(), d, cfg);
  REQUIRE(rows.size() == 10);
  std::vector<uint64_t> hashes;
  for (const auto& r : rows) {
    hashes.push_back(r.spec_hash);
    if (!r.failed) {
      CHECK(std::isfinite(r.LE));
      CHECK(std::isfinite(r.kappa_theta));
      CHECK(r.val_acc >= 0.0);
      CHECK(r.val_acc <= 1.0);
      CHECK(r.params > 0);
      CHECK(r.flops > 0);
    }
  }
  std::sort(hashes.begin(), hashes.end());
  CHECK(std::adjacent_find(hashes.begin(), hashes.end()) == hashes.end());

  SUBCASE("precomputed rows are reused verbatim") {
    std::vector<StudyRow> marked = rows;
    for (auto& r : marked) r.val_acc = 0.777;
    std::vector<StudyRow> again = correlation_study(SearchSpace::full(), d, cfg, &marked);
    REQUIRE(again.size() == 10);
    for (size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].spec_hash == rows[i].spec_hash);
      if (!again[i].failed) CHECK(again[i].val_acc == 0.777);
    }
  }
}
