#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mpre/autodiff.hpp"
#include "mpre/tensor.hpp"
#include "mpre/wavelet.hpp"

namespace mpre::men {

// Weights of one dilated branch: kernel [2 outputs x 2 input rows x L taps]
// and one bias per output row.
struct BranchParams {
  Tensor kernel;
  Tensor bias;

  std::size_t width() const { return kernel.shape.at(2); }
};

using BranchSet = std::array<BranchParams, 3>;  // adjacent, short-term, long-term

inline constexpr std::array<std::size_t, 3> kDefaultDilations{0, 1, 3};

// Output columns of a valid dilated convolution; 0 when the input is too short.
std::size_t output_length(std::size_t m, std::size_t dilation, std::size_t width);

// Stacks trend (row 0) over variation (row 1) into a 2 x m tensor.
Tensor reshape_2d(const wavelet::TrendVariationPair& pair);

// out[p, q] = sum_k sum_l input[k, q + b*l] * kernel[p, k, l] + bias[p]
// for l = 0..L-1; no activation.
Tensor dilated_conv_values(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                           std::size_t dilation);

// Differentiable dilated convolution (pre-activation).
ad::Var dilated_conv(ad::Var input, ad::Var kernel, ad::Var bias, std::size_t dilation);

// One branch with Tanh applied to its output.
Tensor dilated_conv_branch(const Tensor& d, const BranchParams& params, std::size_t dilation);

struct MenOutput {
  std::array<Tensor, 3> branches;  // adjacent, short, long
  Tensor fused;                    // 2 x (q_a + q_s + q_l)
};

MenOutput men_forward(const Tensor& d, const BranchSet& params,
                      const std::array<std::size_t, 3>& dilations = kDefaultDilations);

// Tape version used by the model; returns the fused 2 x Q tensor.
ad::Var men_forward(ad::Var d, std::span<const ad::Var, 6> branch_vars,
                    const std::array<std::size_t, 3>& dilations);

}  // namespace mpre::men
