#pragma once

#include <span>
#include <vector>

#include "mpre/autodiff.hpp"

namespace mpre::fodam {

// Attention over first-order differences of a variation series.
struct FodamOutput {
  std::vector<double> delta;  // R[i+1] - R[i]
  std::vector<double> alpha;  // softmax(delta^2 / sqrt(dim))
  std::vector<double> h_var;  // alpha * delta
};

std::vector<double> first_order_diff(std::span<const double> variation);

// `dim` is the length of the variation series the differences came from.
std::vector<double> fodam_attention(std::span<const double> delta, std::size_t dim);

FodamOutput fodam_forward(std::span<const double> variation);

// Elementwise mean of per-feature h_var vectors.
std::vector<double> fodam_pool(std::span<const FodamOutput> outputs);

ad::Var fodam_forward(ad::Var variation);
ad::Var fodam_pool(std::span<const ad::Var> h_vars);

}  // namespace mpre::fodam
