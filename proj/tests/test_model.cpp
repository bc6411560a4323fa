#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "mpre/error.hpp"
#include "mpre/model.hpp"
#include "test_util.hpp"

using namespace mpre;
using namespace mpre::model;

namespace {

ModelConfig small_config(std::string_view preset, std::size_t c = 2) {
  ModelConfig cfg;
  cfg.t_max = 8;
  cfg.dynamic_features = c;
  cfg.static_features = 3;
  cfg.classes = 3;
  cfg.symlet_order = 3;
  cfg.ablation = AblationConfig::preset(preset);
  return cfg;
}

Tensor random_visits(std::mt19937_64& rng, const ModelConfig& cfg) {
  return testutil::random_tensor(rng, {cfg.t_max, cfg.dynamic_features}, -2, 2);
}

void fill(Tensor& t, double v) { std::fill(t.values.begin(), t.values.end(), v); }

}  // namespace

TEST_CASE("ablation presets follow the configuration table") {
  struct Row {
    const char* name;
    bool trend, variation, men, fodam;
  };
  const Row rows[] = {{"A1", true, false, false, false}, {"A2", false, true, false, false},
                      {"A3", false, true, false, true},  {"A4", true, true, false, false},
                      {"A5", true, true, false, true},   {"A6", true, true, true, false},
                      {"A7", true, true, true, true}};
  for (const Row& r : rows) {
    const auto cfg = AblationConfig::preset(r.name);
    CHECK(cfg.use_trend == r.trend);
    CHECK(cfg.use_variation == r.variation);
    CHECK(cfg.use_men2d == r.men);
    CHECK(cfg.use_fodam == r.fodam);
    CHECK(cfg.name() == r.name);
    CHECK_NOTHROW(cfg.validate());
  }
  CHECK_THROWS_AS(AblationConfig::preset("A8"), ConfigError);
  CHECK_THROWS_AS((AblationConfig{false, false, false, true}.validate()), ConfigError);
  CHECK_THROWS_AS((AblationConfig{true, false, true, false}.validate()), ConfigError);
}

TEST_CASE("parameter shapes follow the configuration") {
  ModelConfig cfg;
  cfg.t_max = 10;
  cfg.dynamic_features = 2;
  cfg.static_features = 3;
  cfg.classes = 3;
  cfg.symlet_order = 18;
  CHECK(cfg.coefficients() == 22);
  CHECK(cfg.feature_width() == 62);
  std::mt19937_64 rng(1);
  ModelParams p = init_params(cfg, rng);
  CHECK(p.w_static.shape == Shape{3, 3});
  CHECK(p.w_fuse.shape == Shape{2});
  CHECK(p.b_fuse.shape == Shape{1});
  CHECK(p.w_y1.shape == Shape{3, 3});
  CHECK(p.w_y2.shape == Shape{3, 124});
  CHECK(p.w_y3.shape == Shape{3, 21});
  CHECK(p.branches.size() == 2);

  cfg.ablation = AblationConfig::preset("A1");
  p = init_params(cfg, rng);
  CHECK(p.w_fuse.shape == Shape{1});
  CHECK(p.w_y2.shape == Shape{3, 44});
  CHECK(p.w_y3.values.empty());
  CHECK(p.branches.empty());

  cfg.ablation = AblationConfig::preset("A5");
  p = init_params(cfg, rng);
  CHECK(p.w_fuse.shape == Shape{2});
  CHECK(p.w_y2.shape == Shape{3, 44});
  CHECK(p.w_y3.shape == Shape{3, 21});

  cfg.ablation = AblationConfig::preset("A7");
  cfg.share_branches = true;
  CHECK(init_params(cfg, rng).branches.size() == 1);
}

TEST_CASE("initialization is bounded by fan-in with zero biases") {
  const ModelConfig cfg = small_config("A7");
  std::mt19937_64 rng(2);
  ModelParams p = init_params(cfg, rng);
  for (const auto& [name, t] : p.named()) {
    INFO(name);
    if (name.find("bias") != std::string::npos || name.rfind("b_", 0) == 0) {
      for (double v : t->values) CHECK(v == 0.0);
      continue;
    }
    const std::size_t fan_in = t->rank() == 1 ? t->size() : t->size() / t->shape[0];
    for (double v : t->values) CHECK(std::abs(v) <= 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }
}

TEST_CASE("embed_static") {
  ModelConfig cfg = small_config("A7");
  std::mt19937_64 rng(3);
  ModelParams p = init_params(cfg, rng);
  const std::vector<double> s{0.5, -1.0, 2.0};
  ModelParams zero = p;
  fill(zero.w_static, 0.0);
  for (double v : embed_static(s, zero)) CHECK(v == 0.0);
  for (double v : embed_static(std::vector<double>{0, 0, 0}, p)) CHECK(v == 0.0);

  p.b_static = testutil::random_tensor(rng, {3});
  const auto got = embed_static(s, p);
  for (std::size_t r = 0; r < 3; ++r) {
    double acc = p.b_static.values[r];
    for (std::size_t c = 0; c < 3; ++c) acc += p.w_static.at(r, c) * s[c];
    CHECK(std::abs(got[r] - std::tanh(acc)) <= 1e-12);
  }
  CHECK_THROWS_AS(embed_static(std::vector<double>{1, 2}, p), ShapeError);
}

TEST_CASE("fuse_dynamic") {
  ModelConfig cfg = small_config("A7");
  std::mt19937_64 rng(4);
  ModelParams p = init_params(cfg, rng);
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::matrix(2, 3, {-1, -2, -3, 7, 8, 9});
  const Tensor maps[] = {a, b};

  p.w_fuse.values = {1, 0};
  p.b_fuse.values = {0.25};
  const auto h = fuse_dynamic(maps, p);
  REQUIRE(h.size() == 6);
  const double trend_row[] = {1, 2, 3, -1, -2, -3};
  for (int j = 0; j < 6; ++j) CHECK(h[j] == doctest::Approx(std::tanh(trend_row[j] + 0.25)).epsilon(1e-15));

  p.w_fuse.values = {0, 0};
  p.b_fuse.values = {0};
  for (double v : fuse_dynamic(maps, p)) CHECK(v == 0.0);

  const Tensor ragged[] = {a, Tensor::matrix(2, 2, {1, 2, 3, 4})};
  CHECK_THROWS_AS(fuse_dynamic(ragged, p), ShapeError);
}

TEST_CASE("predict") {
  ModelConfig cfg = small_config("A7");
  std::mt19937_64 rng(5);
  ModelParams p = init_params(cfg, rng);
  const std::vector<double> h_st = testutil::random_vector(rng, 3);
  const std::vector<double> h_dy = testutil::random_vector(rng, cfg.dynamic_width());
  const std::vector<double> h_var = testutil::random_vector(rng, cfg.coefficients() - 1);

  ModelParams zero = p;
  for (Tensor* t : {&zero.w_y1, &zero.w_y2, &zero.w_y3, &zero.b_y}) fill(*t, 0.0);
  for (double v : predict(h_st, h_dy, h_var, zero)) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  zero.b_y.values = {std::numbers::ln2, 0, 0};
  const auto half = predict(h_st, h_dy, h_var, zero);
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(half[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(half[2] == doctest::Approx(0.25).epsilon(1e-14));

  // Permuting the class rows of every head tensor permutes the output.
  const std::size_t perm[] = {2, 0, 1};
  ModelParams permuted = p;
  p.b_y = testutil::random_tensor(rng, {3});
  permuted.b_y = p.b_y;
  for (std::size_t r = 0; r < 3; ++r) permuted.b_y.values[r] = p.b_y.values[perm[r]];
  for (auto [src, dst] : {std::pair{&p.w_y1, &permuted.w_y1}, {&p.w_y2, &permuted.w_y2}, {&p.w_y3, &permuted.w_y3}}) {
    const std::size_t cols = src->cols();
    for (std::size_t r = 0; r < 3; ++r) {
      std::copy_n(src->values.begin() + perm[r] * cols, cols, dst->values.begin() + r * cols);
    }
  }
  const auto base = predict(h_st, h_dy, h_var, p);
  const auto moved = predict(h_st, h_dy, h_var, permuted);
  double total = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(moved[r] == doctest::Approx(base[perm[r]]).epsilon(1e-14));
    total += base[r];
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
  CHECK_THROWS_AS(predict(h_st, std::vector<double>{1.0}, h_var, p), ShapeError);
}

TEST_CASE("cross-entropy examples") {
  using Rows = std::vector<std::vector<double>>;
  CHECK(cross_entropy(Rows{{0, 1, 0}}, Rows{{0, 1, 0}}) == 0.0);
  CHECK(cross_entropy(Rows{{0.5, 0.5}}, Rows{{1, 0}}) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(cross_entropy(Rows{{0.5, 0.5, 0}, {0.25, 0.25, 0.5}}, Rows{{1, 0, 0}, {0, 1, 0}}) ==
        doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-15));
  CHECK(cross_entropy(Rows{{1, 0}}, Rows{{0, 1}}) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(Rows{{0.5, 0.5}}, Rows{{1, 1}}), DataError);
  CHECK_THROWS_AS(cross_entropy(Rows{{0.5, 0.5}}, Rows{{0, 0}}), DataError);
}

TEST_CASE("forward yields a simplex for every preset and is deterministic") {
  std::mt19937_64 rng(6);
  for (std::string_view name : kAblationPresets) {
    const ModelConfig cfg = small_config(name);
    const ModelParams p = init_params(cfg, rng);
    const Tensor v = random_visits(rng, cfg);
    const std::vector<double> s{1, 0, 1};
    const auto y = forward(v, s, p, cfg);
    double total = 0.0;
    for (double x : y) {
      CHECK(x >= 0.0);
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(forward(v, s, p, cfg) == y);

    ad::Tape tape;
    ModelParams copy = p;
    const auto bound = bind(tape, copy, cfg);
    const auto tape_y = tape.values(model::forward(tape, bound, prepare_features(v, s, cfg), cfg));
    CHECK(testutil::max_abs_diff(std::vector<double>(tape_y.begin(), tape_y.end()), y) == 0.0);
  }
}

TEST_CASE("without variation content only the trend path carries information") {
  std::mt19937_64 rng(7);
  const ModelConfig a1 = small_config("A1", 1);
  const ModelConfig a2 = small_config("A2", 1);
  const ModelParams p1 = init_params(a1, rng);
  const ModelParams p2 = init_params(a2, rng);
  const std::vector<double> s{0, 1, 0};
  // Constant visits have exactly zero variation; levels differ between patients.
  const Tensor low({8, 1}, std::vector<double>(8, -1.0));
  const Tensor high({8, 1}, std::vector<double>(8, 2.0));
  CHECK(forward(low, s, p2, a2) == forward(high, s, p2, a2));
  CHECK(forward(low, s, p1, a1) != forward(high, s, p1, a1));
}

TEST_CASE("disabled FODAM leaves no h_var term") {
  std::mt19937_64 rng(8);
  const ModelConfig cfg = small_config("A6");
  const ModelParams p = init_params(cfg, rng);
  CHECK(p.w_y3.values.empty());
  for (const auto& [name, t] : p.named()) CHECK(name != "w_y3");
}

TEST_CASE("bind rejects parameters of the wrong shape") {
  std::mt19937_64 rng(9);
  const ModelConfig cfg = small_config("A7");
  ModelParams p = init_params(cfg, rng);
  p.w_y2 = Tensor({3, 5});
  ad::Tape tape;
  CHECK_THROWS_AS(bind(tape, p, cfg), ConfigError);
  CHECK_THROWS_AS(prepare_features(Tensor({7, 2}), std::vector<double>{1, 2, 3}, cfg), ConfigError);
}

TEST_CASE("end-to-end gradients on a small model") {
  std::mt19937_64 rng(10);
  for (std::string_view name : kAblationPresets) {
    for (bool shared : {false, true}) {
      ModelConfig cfg = small_config(name);
      cfg.share_branches = shared && cfg.ablation.use_men2d;
      ModelParams p = init_params(cfg, rng);
      for (auto& [n, t] : p.named()) {
        if (n.find("bias") != std::string::npos || n.rfind("b_", 0) == 0) {
          t->values = testutil::random_vector(rng, t->size(), -0.3, 0.3);
        }
      }
      std::vector<PatientFeatures> batch;
      std::vector<std::size_t> labels;
      for (int i = 0; i < 4; ++i) {
        batch.push_back(prepare_features(random_visits(rng, cfg), testutil::random_vector(rng, 3), cfg));
        labels.push_back(i % 3);
      }
      auto loss = [&](ad::Tape& tape) {
        const auto bound = bind(tape, p, cfg);
        std::vector<ad::Var> probs;
        for (const auto& f : batch) probs.push_back(model::forward(tape, bound, f, cfg));
        return cross_entropy(probs, labels);
      };
      const auto tensors = p.tensors();
      const auto res = ad::finite_diff_check(loss, tensors, 60, 1e-5, rng());
      INFO(name << (shared ? " shared" : ""));
      CHECK(res.checked == 60);
      CHECK(res.max_relative_error <= 1e-4);
    }
  }
}
