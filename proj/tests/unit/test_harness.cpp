#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "modeconn/dataset.hpp"
#include "modeconn/errors.hpp"
#include "modeconn/experiments.hpp"
#include "modeconn/idx.hpp"
#include "modeconn/manifest.hpp"
#include "modeconn/stats.hpp"
#include "support.hpp"

using namespace modeconn;

namespace {

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

std::string idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols, const std::string& pixels) {
  return be32(0x803) + be32(count) + be32(rows) + be32(cols) + pixels;
}

std::string idx_labels(const std::string& labels) {
  return be32(0x801) + be32(static_cast<std::uint32_t>(labels.size())) + labels;
}

}  // namespace

TEST_CASE("IDX images parse, scale and re-serialize byte for byte") {
  std::string pixels;
  for (int i = 0; i < 2 * 3 * 2; ++i) pixels.push_back(static_cast<char>(i * 23));
  const std::string bytes = idx_images(2, 3, 2, pixels);
  std::istringstream in(bytes);
  const auto images = read_idx_images(in);
  REQUIRE(images.size() == 2);
  CHECK(images[0].shape() == Shape{1, 3, 2});
  CHECK(images[0][1] == doctest::Approx(23.0 / 255.0));
  CHECK(images[1][5] == doctest::Approx(253.0 / 255.0));
  std::ostringstream out;
  write_idx_images(out, images);
  CHECK(out.str() == bytes);

  const std::string lbytes = idx_labels(std::string{"\x03\x00\x09", 3});
  std::istringstream lin(lbytes);
  CHECK(read_idx_labels(lin) == std::vector<std::size_t>{3, 0, 9});
  std::ostringstream lout;
  write_idx_labels(lout, {3, 0, 9});
  CHECK(lout.str() == lbytes);
}

TEST_CASE("malformed IDX input is rejected") {
  std::istringstream bad_magic(be32(0x804) + be32(0) + be32(1) + be32(1));
  CHECK_THROWS_AS(read_idx_images(bad_magic), FormatError);
  std::istringstream truncated(idx_images(2, 2, 2, "abcd"));
  CHECK_THROWS_AS(read_idx_images(truncated), FormatError);
  std::istringstream short_header(std::string("\0\0\x08", 3));
  CHECK_THROWS_AS(read_idx_images(short_header), FormatError);
  std::istringstream labels_as_images(idx_labels("ab"));
  CHECK_THROWS_AS(read_idx_images(labels_as_images), FormatError);

  const auto dir = std::filesystem::temp_directory_path() / "modeconn_idx_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "img", std::ios::binary) << idx_images(2, 1, 1, "ab");
    std::ofstream(dir / "lbl", std::ios::binary) << idx_labels("\x01\x02\x01");
  }
  CHECK_THROWS_AS(ingest_idx(dir / "img", dir / "lbl"), FormatError);
  {
    std::ofstream(dir / "lbl", std::ios::binary) << idx_labels(std::string{"\x01\x00", 2});
  }
  const LabeledDataset d = ingest_idx(dir / "img", dir / "lbl");
  CHECK(d.num_classes == 2);
  write_idx_dataset(d, dir / "img2", dir / "lbl2");
  CHECK(git_blob_hash_file(dir / "img2") == git_blob_hash_file(dir / "img"));
  CHECK_THROWS_AS(ingest_idx(dir / "nope", dir / "lbl"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic data is seeded, bounded and balanced") {
  const LabeledDataset a = synth_dataset(4, 5, 1.0, 3);
  const LabeledDataset b = synth_dataset(4, 5, 1.0, 3);
  REQUIRE(a.size() == 20);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  for (std::size_t y = 0; y < 4; ++y) CHECK(a.indices_of(y).size() == 5);
  for (const auto& x : a.inputs) {
    CHECK(x.shape() == Shape{1, 28, 28});
    for (double v : x.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK_FALSE(synth_dataset(4, 5, 1.0, 4).inputs == a.inputs);

  // Without spread every sample is one of the class prototypes.
  const LabeledDataset flat = synth_dataset(2, 6, 0.0, 1, 12);
  for (std::size_t y = 0; y < 2; ++y) {
    std::vector<Tensor> distinct;
    for (auto i : flat.indices_of(y))
      if (std::find(distinct.begin(), distinct.end(), flat.inputs[i]) == distinct.end()) distinct.push_back(flat.inputs[i]);
    CHECK(distinct.size() == 3);
  }
  const auto [head, tail] = split_dataset(a, 7);
  CHECK(head.size() == 7);
  CHECK(tail.size() == 13);
  CHECK(tail.inputs.front() == a.inputs[7]);
}

TEST_CASE("summaries use the sample deviation and interpolated quantiles") {
  const Summary s = summarize({4, 1, 3, 2, 5});
  CHECK(s.mean == 3.0);
  CHECK(s.stddev == doctest::Approx(std::sqrt(2.5)));
  CHECK(s.median == 3.0);
  CHECK(s.q1 == 2.0);
  CHECK(quantile_sorted({0, 10}, 0.25) == 2.5);
  CHECK(summarize({7}).stddev == 0.0);
  CHECK_THROWS_AS(summarize({}), InvalidArgument);
}

TEST_CASE("rank-sum statistic agrees with pairwise counting") {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(3 + rng.below(30)), b(3 + rng.below(30));
    for (auto& v : a) v = static_cast<double>(rng.below(8));
    for (auto& v : b) v = static_cast<double>(rng.below(8)) - 1.0;
    double u = 0.0;
    for (double x : a)
      for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    const auto r = rank_sum_test(a, b);
    CHECK(r.u == doctest::Approx(u).epsilon(1e-12));
    CHECK(r.p_greater == doctest::Approx(0.5 * std::erfc(r.z / std::sqrt(2.0))));
    CHECK(r.p_two_sided <= std::min(1.0, 2.0 * std::min(r.p_greater, 1.0 - r.p_greater)) + 1e-12);
  }
  // Untied, well separated samples: U = n1 n2, z from the exact moments.
  const auto r = rank_sum_test({10, 11, 12, 13}, {1, 2, 3});
  CHECK(r.u == 12.0);
  CHECK(r.z == doctest::Approx((12.0 - 6.0) / std::sqrt(12.0 * 8.0 / 12.0)));
  CHECK(r.p_greater < 0.05);
  const auto same = rank_sum_test({1, 1}, {1, 1, 1});
  CHECK(same.p_greater == 1.0);
}

TEST_CASE("git blob hashes match git") {
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST_CASE("manifest records inputs, outputs and timings") {
  const auto dir = std::filesystem::temp_directory_path() / "modeconn_manifest_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "in.txt") << "hello\n";
  Manifest m("curve", {{"points", 5}}, 9);
  m.add_input(dir / "in.txt");
  m.add_output(dir / "out.csv");
  m.start("work");
  m.stop("work");
  const auto j = m.to_json();
  CHECK(j["seed"] == 9);
  CHECK(j["inputs"][0]["sha1"] == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(j["timings_seconds"].contains("work"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("barrier statistics aggregate their rows") {
  Network net = Network::reference_mlp({1, 8, 8}, 3, 16);
  net.initialize(1);
  const LabeledDataset data = synth_dataset(3, 8, 1.0, 2, 8);
  BarrierStatsConfig cfg;
  cfg.pairs_per_class = 7;
  cfg.drop_per_class = 2;
  cfg.curve_points = 20;
  cfg.low_loss_threshold = 100.0;
  cfg.identity_attack = true;
  const auto [real, adv] = run_barrier_stats(net, data, cfg);
  CHECK(real.rows.size() == 3 * 5);
  CHECK(real.scenario == "real_real");
  CHECK(adv.scenario == "real_adversarial");
  for (std::size_t i = 0; i < real.rows.size(); ++i) {
    CHECK(real.rows[i].max_loss == adv.rows[i].max_loss);
    CHECK(real.rows[i].gap >= 0.0);
    CHECK(real.rows[i].max_loss >= std::max(real.rows[i].loss_anchor, real.rows[i].loss_partner));
  }
  std::vector<double> maxes;
  for (const auto& r : real.rows) maxes.push_back(r.max_loss);
  const double mean = std::accumulate(maxes.begin(), maxes.end(), 0.0) / static_cast<double>(maxes.size());
  CHECK(std::abs(real.max_summary.mean - mean) < 1e-12);
  CHECK(real.max_summary.n == 15);

  std::ostringstream csv;
  write_barrier_rows_csv(csv, real);
  const std::string text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 16);
  CHECK(to_json(real)["pairs"] == 15);

  cfg.low_loss_threshold = 1e-9;
  CHECK_THROWS_AS(run_barrier_stats(net, data, cfg), InsufficientData);
  cfg.drop_per_class = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("barrier statistics run the targeted attack") {
  Network net = Network::reference_mlp({1, 8, 8}, 2, 16);
  net.initialize(3);
  const LabeledDataset data = synth_dataset(2, 4, 1.0, 4, 8);
  BarrierStatsConfig cfg;
  cfg.pairs_per_class = 2;
  cfg.drop_per_class = 0;
  cfg.curve_points = 10;
  cfg.low_loss_threshold = 100.0;
  cfg.targeted.iters = 20;
  const auto [real, adv] = run_barrier_stats(net, data, cfg);
  REQUIRE(adv.rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(adv.rows[i].anchor == real.rows[i].anchor);
    CHECK(data.labels[adv.rows[i].partner] != adv.rows[i].class_index);
  }
  const auto again = run_barrier_stats(net, data, cfg);
  CHECK(again.second.rows[0].max_loss == adv.rows[0].max_loss);
}

TEST_CASE("training evolution has one row per checkpoint") {
  const LabeledDataset data = synth_dataset(2, 8, 1.0, 5, 12);
  EvolutionConfig cfg;
  cfg.train.batch_size = 4;
  cfg.batch_checkpoints = 2;
  cfg.epoch_checkpoints = 1;
  cfg.pairs_per_class = 1;
  cfg.curve_points = 10;
  cfg.fvo.max_iters = 300;
  cfg.fvo.loss_threshold = 0.05;
  const auto rows = run_training_evolution(data, cfg);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].phase == "batch");
  CHECK(rows[2].index == 2);
  CHECK(rows[3].phase == "epoch");
  CHECK(rows[4].index == 1);
  for (const auto& r : rows) {
    CHECK(r.pairs + r.failures == 2);
    CHECK(r.std_barrier >= 0.0);
    CHECK(r.mean_curve.size() == 10);
    for (double s : r.std_curve) CHECK(s >= 0.0);
  }
  std::ostringstream a, b;
  write_evolution_csv(a, rows);
  write_evolution_curves_csv(b, rows);
  const std::string summary = a.str(), curves = b.str();
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 6);
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 51);
}

TEST_CASE("untrained connectivity is deterministic") {
  UntrainedConfig cfg;
  cfg.input_shape = {1, 12, 12};
  cfg.num_classes = 2;
  cfg.fvo.max_iters = 400;
  cfg.fvo.loss_threshold = 0.01;
  cfg.connector.delta = 0.02;
  cfg.connector.iters = 40;
  cfg.connector.max_depth = 2;
  cfg.connector.primary_points = 50;
  cfg.connector.points_per_segment = 25;
  cfg.seed = 3;
  const auto a = run_untrained_connectivity(cfg);
  const auto b = run_untrained_connectivity(cfg);
  CHECK(to_json(a) == to_json(b));
  REQUIRE(a.rows.size() == 2);
  CHECK(a.successes <= a.generated);
  for (const auto& r : a.rows)
    if (r.generated) {
      CHECK(r.loss_first <= 0.01);
      CHECK(r.loss_second <= 0.01);
    }
}
