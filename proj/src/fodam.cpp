#include "mpre/fodam.hpp"

#include <cmath>
#include <string>

#include "mpre/error.hpp"

namespace mpre::fodam {

std::vector<double> first_order_diff(std::span<const double> variation) {
  if (variation.size() < 2) {
    throw ShapeError("first_order_diff: need at least 2 values, got " + std::to_string(variation.size()));
  }
  std::vector<double> delta(variation.size() - 1);
  for (std::size_t i = 0; i + 1 < variation.size(); ++i) delta[i] = variation[i + 1] - variation[i];
  return delta;
}

std::vector<double> fodam_attention(std::span<const double> delta, std::size_t dim) {
  if (delta.empty() || dim == 0) throw ShapeError("fodam_attention: empty difference vector");
  const double inv_root = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> scores(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!std::isfinite(delta[i])) {
      throw NumericalError("fodam_attention: non-finite difference at position " + std::to_string(i));
    }
    scores[i] = delta[i] * delta[i] * inv_root;
  }
  return ad::softmax_values(scores);
}

FodamOutput fodam_forward(std::span<const double> variation) {
  FodamOutput out;
  out.delta = first_order_diff(variation);
  out.alpha = fodam_attention(out.delta, variation.size());
  out.h_var.resize(out.delta.size());
  for (std::size_t i = 0; i < out.delta.size(); ++i) out.h_var[i] = out.alpha[i] * out.delta[i];
  return out;
}

std::vector<double> fodam_pool(std::span<const FodamOutput> outputs) {
  if (outputs.empty()) throw ShapeError("fodam_pool: no feature outputs");
  const std::size_t n = outputs.front().h_var.size();
  std::vector<double> pooled(n, 0.0);
  for (const FodamOutput& o : outputs) {
    if (o.h_var.size() != n) {
      throw ShapeError("fodam_pool: h_var length " + std::to_string(o.h_var.size()) +
                       " differs from " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) pooled[i] += o.h_var[i];
  }
  for (double& v : pooled) v /= static_cast<double>(outputs.size());
  return pooled;
}

ad::Var fodam_forward(ad::Var variation) {
  const std::size_t dim = variation.tape->values(variation).size();
  ad::Var delta = ad::diff(variation);
  ad::Var scores = ad::scale(ad::mul(delta, delta), 1.0 / std::sqrt(static_cast<double>(dim)));
  return ad::mul(ad::softmax(scores), delta);
}

ad::Var fodam_pool(std::span<const ad::Var> h_vars) {
  if (h_vars.empty()) throw ShapeError("fodam_pool: no feature outputs");
  ad::Var total = h_vars.front();
  for (std::size_t i = 1; i < h_vars.size(); ++i) total = ad::add(total, h_vars[i]);
  return h_vars.size() == 1 ? total : ad::scale(total, 1.0 / static_cast<double>(h_vars.size()));
}

}  // namespace mpre::fodam
