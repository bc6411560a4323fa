#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpre/tensor.hpp"

namespace mpre::wavelet {

inline constexpr int kMinOrder = 2;
inline constexpr int kMaxOrder = 20;

// Orthonormal symlet analysis pair of order K (K vanishing moments, 2K taps).
struct SymletFilterPair {
  int order = 0;
  std::vector<double> lowpass;   // h
  std::vector<double> highpass;  // g[n] = (-1)^n h[F-1-n]

  std::size_t length() const { return lowpass.size(); }
};

struct TrendVariationPair {
  std::vector<double> trend;      // approximation coefficients
  std::vector<double> variation;  // detail coefficients
};

// Built-in table lookup. Every entry is checked against normalization,
// orthonormality, the QMF relation and its vanishing moments on first use.
const SymletFilterPair& symlet_filters(int order);

// Coefficient count per component for a length-t signal.
std::size_t coefficient_count(std::size_t signal_length, int order);

// Half-sample symmetric reflection: ... x1 x0 | x0 x1 ... x(t-1) | x(t-1) x(t-2) ...
std::vector<double> symmetric_extend(std::span<const double> x, std::size_t pad);

TrendVariationPair dwt_single_level(std::span<const double> x, int order);
std::vector<double> idwt_single_level(const TrendVariationPair& pair, int order,
                                      std::size_t signal_length);

// Column-wise decomposition of a visits x features matrix.
std::vector<TrendVariationPair> ftm_decompose(const Tensor& visits, int order);

}  // namespace mpre::wavelet
