#include <catch_amalgamated.hpp>

#include <cmath>

#include "photocon/error.hpp"
#include "photocon/random.hpp"
#include "photocon/trainer.hpp"
#include "support.hpp"

using namespace photocon;
using Catch::Approx;

namespace {

TripletArchive tiny_archive(int count, std::uint64_t seed) {
  TripletArchive a;
  a.patch_side = 16;
  a.channels = 3;
  for (int i = 0; i < count; ++i) {
    PatchTriplet t;
    t.anchor = testsupport::textured_image(16, 16, 3, derive_seed(seed, 3 * i));
    t.positive = testsupport::textured_image(16, 16, 3, derive_seed(seed, 3 * i + 1));
    t.negative = testsupport::textured_image(16, 16, 3, derive_seed(seed, 3 * i + 2));
    t.scene_id = "s" + std::to_string(i);
    a.triplets.push_back(std::move(t));
  }
  return a;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 3;
  c.epoch_size = 3;
  c.epochs = 2;
  c.learning_rate = 1e-3;
  c.network.levels = 1;
  c.network.base_width = 3;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("Adam update follows the bias-corrected rule", "[trainer]") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  std::vector<float> p{0.5f, -1.0f, 2.0f, 0.0f};
  const std::vector<std::vector<float>> grads{{0.1f, -0.2f, 3.0f, 0.0f}, {-0.4f, 0.2f, 1.0f, 1e-3f}, {0.0f, 0.0f, -2.0f, 5.0f}};
  std::vector<double> rp(p.begin(), p.end()), m(4, 0.0), v(4, 0.0);
  AdamState st;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    adam_update(p, grads[t - 1], st, cfg);
    for (int i = 0; i < 4; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      rp[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    REQUIRE(st.step == static_cast<long long>(t));
    for (int i = 0; i < 4; ++i) CHECK(p[i] == Approx(rp[i]).margin(1e-6));
  }
  // First step moves every parameter with a nonzero gradient by about lr.
  std::vector<float> q{1.0f};
  AdamState s1;
  adam_update(q, {123.0f}, s1, cfg);
  CHECK(q[0] == Approx(0.99).margin(1e-6));
  std::vector<float> bad(3);
  CHECK_THROWS_AS(adam_update(bad, {1.0f}, s1, cfg), FormatError);
}

TEST_CASE("zero loss weights leave the weights unchanged", "[trainer]") {
  const auto archive = tiny_archive(4, 1);
  auto cfg = tiny_config();
  cfg.loss.w_triplet = cfg.loss.w_intra = cfg.loss.w_scale = cfg.loss.w_mc = cfg.loss.w_rot = 0.0;
  const auto w0 = init_weights(cfg.network, 3, 5);
  std::vector<float> grad;
  const auto b = batch_gradient(w0, archive, {0, 1, 2}, {7, 8, 9}, cfg.loss, grad);
  CHECK(b.total == 0.0);
  for (float g : grad) REQUIRE(g == 0.0f);

  testsupport::TempDir d1("zero1"), d2("zero2");
  const auto short_run = train(archive, cfg, d1.path);
  cfg.epochs = 4;
  const auto long_run = train(archive, cfg, d2.path);
  CHECK(short_run.weights.flatten() == long_run.weights.flatten());
  CHECK(long_run.weights.flatten() == initial_weights(cfg, 3).flatten());
  for (float m : long_run.adam.m) REQUIRE(m == 0.0f);
}

TEST_CASE("training is deterministic", "[trainer]") {
  const auto archive = tiny_archive(5, 2);
  const auto cfg = tiny_config();
  testsupport::TempDir d1("det1"), d2("det2");
  const auto r1 = train(archive, cfg, d1.path);
  TrainOptions two;
  two.threads = 2;
  const auto r2 = train(archive, cfg, d2.path, two);
  CHECK(r1.weights.flatten() == r2.weights.flatten());
  CHECK(testsupport::read_bytes(d1 / "weights.phit") == testsupport::read_bytes(d2 / "weights.phit"));
  CHECK(testsupport::read_bytes(d1 / "log.csv") == testsupport::read_bytes(d2 / "log.csv"));
  REQUIRE(r1.log.size() == 6);
  CHECK(r1.adam.step == 6);
  for (const char* f : {"weights_epoch1.phit", "weights_epoch2.phit", "checkpoint.phit", "checkpoint.padm"})
    CHECK(std::filesystem::exists(d1 / f));

  // Another seed gives other weights.
  auto other = cfg;
  other.seed = 12;
  testsupport::TempDir d3("det3");
  CHECK(train(archive, other, d3.path).weights.flatten() != r1.weights.flatten());
}

TEST_CASE("log.csv layout", "[trainer]") {
  const auto archive = tiny_archive(3, 3);
  auto cfg = tiny_config();
  cfg.epochs = 1;
  testsupport::TempDir d("log");
  std::vector<long long> seen;
  TrainOptions opt;
  opt.on_step = [&](const StepLog& s) { seen.push_back(s.step); };
  const auto r = train(archive, cfg, d.path, opt);
  CHECK(seen == std::vector<long long>{1, 2, 3});
  std::ifstream is(d / "log.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "step,loss_total,loss_triplet,loss_intra,loss_scale,loss_mc,loss_rot");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(std::stoll(line) == rows);
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
  }
  CHECK(rows == 3);
  for (const auto& s : r.log) {
    CHECK(std::isfinite(s.loss.total));
    CHECK(s.loss.total == Approx(s.loss.weighted.sum()).margin(1e-6));
  }
}

TEST_CASE("resuming reproduces an uninterrupted run", "[trainer]") {
  const auto archive = tiny_archive(5, 4);
  const auto cfg = tiny_config();
  testsupport::TempDir full("resume_full"), part("resume_part");
  const auto ref = train(archive, cfg, full.path);

  auto first = cfg;
  first.epochs = 1;
  train(archive, first, part.path);
  // A row written after the last checkpoint by a run that then died.
  std::ofstream(part / "log.csv", std::ios::app) << "4,9,9,9,9,9,9\n";
  TrainOptions opt;
  opt.resume = true;
  const auto resumed = train(archive, cfg, part.path, opt);
  CHECK(resumed.log.size() == 3);
  CHECK(resumed.adam == ref.adam);
  CHECK(resumed.weights.flatten() == ref.weights.flatten());
  CHECK(testsupport::read_bytes(part / "log.csv") == testsupport::read_bytes(full / "log.csv"));
  CHECK(testsupport::read_bytes(part / "weights.phit") == testsupport::read_bytes(full / "weights.phit"));

  // Resume without a checkpoint starts fresh; with another network it fails.
  testsupport::TempDir fresh("resume_fresh");
  CHECK(train(archive, cfg, fresh.path, opt).weights.flatten() == ref.weights.flatten());
  auto wider = cfg;
  wider.network.base_width = 6;
  CHECK_THROWS_AS(train(archive, wider, part.path, opt), UsageError);
}

TEST_CASE("Adam state file round trip", "[trainer]") {
  NetworkConfig nc;
  nc.levels = 1;
  nc.base_width = 3;
  const auto w = init_weights(nc, 3, 1);
  AdamState s;
  Rng rng(5);
  for (std::size_t i = 0; i < w.parameter_count(); ++i) {
    s.m.push_back(static_cast<float>(uniform(rng, -1, 1)));
    s.v.push_back(static_cast<float>(uniform(rng, 0, 1)));
  }
  s.step = 75000;
  testsupport::TempDir d("adam");
  save_adam_state(s, w, d / "a.padm");
  CHECK(load_adam_state(d / "a.padm", w) == s);

  auto other = nc;
  other.base_width = 6;
  CHECK_THROWS_AS(load_adam_state(d / "a.padm", init_weights(other, 3, 1)), FormatError);
  s.m.pop_back();
  CHECK_THROWS_AS(save_adam_state(s, w, d / "b.padm"), FormatError);
  std::ofstream(d / "junk.padm") << "PHIT";
  CHECK_THROWS_AS(load_adam_state(d / "junk.padm", w), FormatError);
}

TEST_CASE("evaluate_loss averages every term without training", "[trainer]") {
  const auto archive = tiny_archive(4, 6);
  NetworkConfig nc;
  nc.levels = 1;
  nc.base_width = 3;
  const auto w = init_weights(nc, 3, 2);
  const auto before = w.flatten();
  LossWeights lw;
  lw.w_scale = 0.0;  // still reported
  const auto e = evaluate_loss(archive, w, lw, 9);
  CHECK(w.flatten() == before);
  double total = 0, scale = 0;
  for (std::size_t i = 0; i < archive.triplets.size(); ++i) {
    const auto b = total_loss(w, archive.triplets[i], lw, derive_seed(9, i), true);
    total += b.total / 4;
    scale += b.raw.scale / 4;
  }
  CHECK(e.total == Approx(total).margin(1e-6));
  CHECK(e.raw.scale == Approx(scale).margin(1e-6));
  CHECK(e.raw.scale > 0);
  CHECK(e.weighted.scale == 0.0);
  CHECK(evaluate_loss(archive, w, lw, 9, 2).total == e.total);
  CHECK_THROWS_AS(evaluate_loss(TripletArchive{}, w, lw), DataError);
}

TEST_CASE("invalid training settings", "[trainer]") {
  const auto archive = tiny_archive(2, 7);
  testsupport::TempDir d("invalid");
  auto cfg = tiny_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(archive, cfg, d.path), UsageError);
  cfg = tiny_config();
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(train(archive, cfg, d.path), UsageError);
  cfg = tiny_config();
  cfg.loss.w_mc = -1;
  CHECK_THROWS_AS(train(archive, cfg, d.path), UsageError);
  CHECK_THROWS_AS(train(TripletArchive{}, tiny_config(), d.path), DataError);
}
