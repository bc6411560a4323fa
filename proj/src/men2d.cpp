#include "mpre/men2d.hpp"

#include <cmath>
#include <string>

#include "mpre/error.hpp"

namespace mpre::men {

namespace {

void check_conv_shapes(const Shape& input, const Shape& kernel, const Shape& bias,
                       std::size_t dilation) {
  if (input.size() != 2 || input[0] != 2) {
    throw ShapeError("dilated_conv: input must be 2 x m, got " + shape_string(input));
  }
  if (kernel.size() != 3 || kernel[0] != 2 || kernel[1] != 2 || kernel[2] == 0) {
    throw ShapeError("dilated_conv: kernel must be 2 x 2 x L, got " + shape_string(kernel));
  }
  if (bias.size() != 1 || bias[0] != 2) {
    throw ShapeError("dilated_conv: bias must have 2 entries, got " + shape_string(bias));
  }
  const std::size_t needed = dilation * (kernel[2] - 1) + 1;
  if (input[1] < needed) {
    throw ShapeError("dilated_conv: input length " + std::to_string(input[1]) +
                     " too short for dilation " + std::to_string(dilation) + " and width " +
                     std::to_string(kernel[2]) + "; requires at least " + std::to_string(needed));
  }
}

}  // namespace

std::size_t output_length(std::size_t m, std::size_t dilation, std::size_t width) {
  const std::size_t span = dilation * (width - 1);
  return m > span ? m - span : 0;
}

Tensor reshape_2d(const wavelet::TrendVariationPair& pair) {
  const std::size_t m = pair.trend.size();
  if (pair.variation.size() != m) {
    throw ShapeError("reshape_2d: trend has " + std::to_string(m) + " values, variation has " +
                     std::to_string(pair.variation.size()));
  }
  Tensor d({2, m});
  for (std::size_t j = 0; j < m; ++j) {
    d.at(0, j) = pair.trend[j];
    d.at(1, j) = pair.variation[j];
  }
  return d;
}

Tensor dilated_conv_values(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                           std::size_t dilation) {
  check_conv_shapes(input.shape, kernel.shape, bias.shape, dilation);
  const std::size_t m = input.shape[1];
  const std::size_t width = kernel.shape[2];
  const std::size_t q = output_length(m, dilation, width);
  Tensor out({2, q});
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t col = 0; col < q; ++col) {
      double acc = bias.values[p];
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < width; ++l)
          acc += input.values[k * m + col + dilation * l] * kernel.values[(p * 2 + k) * width + l];
      out.values[p * q + col] = acc;
    }
  }
  return out;
}

ad::Var dilated_conv(ad::Var input, ad::Var kernel, ad::Var bias, std::size_t dilation) {
  ad::Tape& t = *input.tape;
  Tensor in = t.value_tensor(input);
  Tensor ker = t.value_tensor(kernel);
  Tensor out = dilated_conv_values(in, ker, t.value_tensor(bias), dilation);
  const std::size_t m = in.shape[1];
  const std::size_t width = ker.shape[2];
  const std::size_t q = out.shape[1];
  const std::size_t ii = input.id, ik = kernel.id, ib = bias.id;
  return t.record("dilated_conv", {ii, ik, ib}, out.shape, std::move(out.values),
                  [ii, ik, ib, m, width, q, dilation](ad::Tape& tp, std::size_t self) {
                    auto g = tp.grad(self);
                    auto in = tp.values(ii);
                    auto ker = tp.values(ik);
                    auto gin = tp.grad_mut(ii);
                    auto gker = tp.grad_mut(ik);
                    auto gb = tp.grad_mut(ib);
                    for (std::size_t p = 0; p < 2; ++p) {
                      for (std::size_t col = 0; col < q; ++col) {
                        const double gv = g[p * q + col];
                        gb[p] += gv;
                        for (std::size_t k = 0; k < 2; ++k) {
                          for (std::size_t l = 0; l < width; ++l) {
                            const std::size_t src = k * m + col + dilation * l;
                            const std::size_t w = (p * 2 + k) * width + l;
                            gker[w] += gv * in[src];
                            gin[src] += gv * ker[w];
                          }
                        }
                      }
                    }
                  });
}

Tensor dilated_conv_branch(const Tensor& d, const BranchParams& params, std::size_t dilation) {
  Tensor out = dilated_conv_values(d, params.kernel, params.bias, dilation);
  for (double& v : out.values) v = std::tanh(v);
  return out;
}

MenOutput men_forward(const Tensor& d, const BranchSet& params,
                      const std::array<std::size_t, 3>& dilations) {
  MenOutput out;
  std::size_t total = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    out.branches[b] = dilated_conv_branch(d, params[b], dilations[b]);
    total += out.branches[b].shape[1];
  }
  out.fused = Tensor({2, total});
  std::size_t offset = 0;
  for (const Tensor& branch : out.branches) {
    const std::size_t q = branch.shape[1];
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < q; ++c) out.fused.at(r, offset + c) = branch.at(r, c);
    offset += q;
  }
  return out;
}

ad::Var men_forward(ad::Var d, std::span<const ad::Var, 6> branch_vars,
                    const std::array<std::size_t, 3>& dilations) {
  std::array<ad::Var, 3> outs;
  for (std::size_t b = 0; b < 3; ++b) {
    outs[b] = ad::tanh(dilated_conv(d, branch_vars[2 * b], branch_vars[2 * b + 1], dilations[b]));
  }
  return ad::concat(outs);
}

}  // namespace mpre::men
