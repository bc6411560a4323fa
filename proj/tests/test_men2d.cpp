#include <doctest.h>

#include <cmath>
#include <random>

#include "mpre/error.hpp"
#include "mpre/men2d.hpp"
#include "test_util.hpp"

using namespace mpre;
using namespace mpre::men;

namespace {

// Straight transcription of the branch sum over output row, column, input row and tap.
Tensor oracle_conv(const Tensor& d, const Tensor& kernel, const Tensor& bias, std::size_t b, bool activate) {
  const std::size_t m = d.shape[1], width = kernel.shape[2];
  const std::size_t q = m - b * (width - 1);
  Tensor out({2, q});
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t col = 0; col < q; ++col) {
      double acc = bias.values[p];
      for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t l = 0; l < width; ++l) {
          acc += d.values[k * m + col + b * l] * kernel.values[(p * 2 + k) * width + l];
        }
      }
      out.values[p * q + col] = activate ? std::tanh(acc) : acc;
    }
  }
  return out;
}

BranchParams random_branch(std::mt19937_64& rng, std::size_t width) {
  return {testutil::random_tensor(rng, {2, 2, width}), testutil::random_tensor(rng, {2})};
}

}  // namespace

TEST_CASE("reshape_2d stacks trend over variation") {
  const Tensor d = reshape_2d({{1, 2}, {3, 4}});
  CHECK(d.shape == Shape{2, 2});
  CHECK(d.values == std::vector<double>{1, 2, 3, 4});
  CHECK(reshape_2d({{7}, {8}}).shape == Shape{2, 1});
  CHECK_THROWS_AS(reshape_2d({{1, 2}, {3}}), ShapeError);
}

TEST_CASE("worked convolution examples") {
  const Tensor d = Tensor::matrix(2, 4, {1, 2, 3, 4, 5, 6, 7, 8});
  // Output row 0 uses identity taps (trend at l=0, variation at l=1); row 1 is zero.
  Tensor kernel({2, 2, 2}, {1, 0, 0, 1, 0, 0, 0, 0});
  const Tensor bias({2}, {0, 0});
  const Tensor b1 = dilated_conv_values(d, kernel, bias, 1);
  CHECK(b1.shape == Shape{2, 3});
  CHECK(std::vector<double>(b1.values.begin(), b1.values.begin() + 3) == std::vector<double>{7, 9, 11});
  const Tensor b0 = dilated_conv_values(d, kernel, bias, 0);
  CHECK(b0.shape == Shape{2, 4});
  CHECK(std::vector<double>(b0.values.begin(), b0.values.begin() + 4) == std::vector<double>{6, 8, 10, 12});

  const Tensor zero = dilated_conv_branch(d, {Tensor({2, 2, 2}), Tensor({2})}, 3);
  for (double v : zero.values) CHECK(v == 0.0);
}

TEST_CASE("too-short input names the required length") {
  const Tensor d = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  try {
    dilated_conv_values(d, Tensor({2, 2, 2}), Tensor({2}), 3);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
  CHECK_NOTHROW(dilated_conv_values(Tensor({2, 4}), Tensor({2, 2, 2}), Tensor({2}), 3));
  CHECK(dilated_conv_values(Tensor({2, 4}), Tensor({2, 2, 2}), Tensor({2}), 3).shape == Shape{2, 1});
}

TEST_CASE("branch equals the nested-loop oracle on random instances") {
  std::mt19937_64 rng(31);
  const std::size_t rates[] = {0, 1, 3};
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t width = 1 + rng() % 3;
    const std::size_t b = rates[rng() % 3];
    const std::size_t m = b * (width - 1) + 1 + rng() % 30;
    const Tensor d = testutil::random_tensor(rng, {2, m}, -2, 2);
    const BranchParams p = random_branch(rng, width);
    const Tensor got = dilated_conv_branch(d, p, b);
    const Tensor want = oracle_conv(d, p.kernel, p.bias, b, true);
    REQUIRE(got.shape == want.shape);
    CHECK(testutil::max_abs_diff(got.values, want.values) <= 1e-12);
  }
}

TEST_CASE("output length sweep") {
  for (std::size_t m = 4; m <= 40; ++m) {
    for (std::size_t b : {0u, 1u, 3u}) {
      for (std::size_t width = 1; width <= 3; ++width) {
        if (m < b * (width - 1) + 1) {
          CHECK(output_length(m, b, width) == 0);
          continue;
        }
        const std::size_t q = m - b * (width - 1);
        CHECK(output_length(m, b, width) == q);
        {
          CHECK(dilated_conv_values(Tensor({2, m}), Tensor({2, 2, width}), Tensor({2}), b).shape[1] == q);
        }
      }
    }
  }
}

TEST_CASE("pre-activation output is linear in the input") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor d = testutil::random_tensor(rng, {2, 12});
    const BranchParams p{testutil::random_tensor(rng, {2, 2, 2}), Tensor({2})};
    Tensor scaled = d;
    for (double& v : scaled.values) v *= -2.5;
    const Tensor a = dilated_conv_values(d, p.kernel, p.bias, 1);
    const Tensor b = dilated_conv_values(scaled, p.kernel, p.bias, 1);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b.values[i] == doctest::Approx(-2.5 * a.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("perturbing only the variation row changes the output") {
  std::mt19937_64 rng(13);
  const Tensor d = testutil::random_tensor(rng, {2, 10});
  const BranchParams p = random_branch(rng, 2);
  Tensor bumped = d;
  bumped.at(1, 4) += 0.1;
  const Tensor a = dilated_conv_branch(d, p, 1);
  const Tensor b = dilated_conv_branch(bumped, p, 1);
  // Both output rows see the variation row.
  CHECK(a.at(0, 4) != b.at(0, 4));
  CHECK(a.at(1, 3) != b.at(1, 3));
  CHECK(a.at(0, 0) == b.at(0, 0));
}

TEST_CASE("men_forward concatenates adjacent, short and long branches") {
  std::mt19937_64 rng(14);
  BranchSet set{random_branch(rng, 2), random_branch(rng, 2), random_branch(rng, 2)};
  const Tensor d = testutil::random_tensor(rng, {2, 22});
  const MenOutput out = men_forward(d, set);
  CHECK(out.fused.shape == Shape{2, 62});
  CHECK(out.branches[0].shape[1] == 22);
  CHECK(out.branches[1].shape[1] == 21);
  CHECK(out.branches[2].shape[1] == 19);
  for (std::size_t r = 0; r < 2; ++r) {
    std::size_t col = 0;
    for (const Tensor& br : out.branches) {
      for (std::size_t c = 0; c < br.shape[1]; ++c) CHECK(out.fused.at(r, col++) == br.at(r, c));
    }
  }

  BranchSet same{set[1], set[1], set[1]};
  const MenOutput twins = men_forward(d, same, {1, 1, 1});
  CHECK(twins.branches[0].values == twins.branches[1].values);
  CHECK(twins.branches[1].values == twins.branches[2].values);

  const MenOutput tiny = men_forward(testutil::random_tensor(rng, {2, 4}), set);
  CHECK(tiny.branches[2].shape[1] == 1);
}

TEST_CASE("tape men_forward matches values and central differences") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t width = 1 + trial % 3;
    const std::size_t m = 3 * (width - 1) + 2 + rng() % 6;
    std::vector<Tensor> leaves{testutil::random_tensor(rng, {2, m})};
    for (int b = 0; b < 3; ++b) {
      leaves.push_back(testutil::random_tensor(rng, {2, 2, width}));
      leaves.push_back(testutil::random_tensor(rng, {2}));
    }
    const std::uint64_t proj_seed = rng();
    testutil::Builder build = [&](ad::Tape& tape, std::vector<ad::Var>& v) {
      const std::array<ad::Var, 6> branch{v[1], v[2], v[3], v[4], v[5], v[6]};
      const ad::Var y = men_forward(v[0], std::span<const ad::Var, 6>(branch), kDefaultDilations);
      std::mt19937_64 proj(proj_seed);
      const Tensor w(tape.shape(y), testutil::random_vector(proj, shape_size(tape.shape(y))));
      return ad::sum(ad::mul(y, tape.constant(w)));
    };
    CHECK(testutil::gradient_error(build, leaves) <= 1e-4);

    ad::Tape tape;
    std::vector<ad::Var> v;
    for (auto& t : leaves) v.push_back(tape.constant(t));
    const std::array<ad::Var, 6> branch{v[1], v[2], v[3], v[4], v[5], v[6]};
    const ad::Var y = men_forward(v[0], std::span<const ad::Var, 6>(branch), kDefaultDilations);
    BranchSet set{BranchParams{leaves[1], leaves[2]}, BranchParams{leaves[3], leaves[4]},
                  BranchParams{leaves[5], leaves[6]}};
    const MenOutput ref = men_forward(leaves[0], set);
    const auto got = tape.values(y);
    CHECK(testutil::max_abs_diff(std::vector<double>(got.begin(), got.end()), ref.fused.values) <= 1e-15);
  }
}
