#include "mpre/wavelet.hpp"

#include <array>
#include <cmath>
#include <string>

#include "mpre/error.hpp"

namespace mpre::wavelet {

namespace {

#include "mpre/symlet_table.inc"

std::string order_range() {
  return "supported symlet orders are " + std::to_string(kMinOrder) + ".." + std::to_string(kMaxOrder);
}

void validate(const SymletFilterPair& f) {
  const std::size_t taps = f.length();
  const double sqrt2 = std::sqrt(2.0);
  double total = 0.0, energy = 0.0;
  for (double h : f.lowpass) {
    total += h;
    energy += h * h;
  }
  auto fail = [&](const std::string& what) {
    throw ConfigError("sym" + std::to_string(f.order) + " table entry fails " + what);
  };
  if (taps != static_cast<std::size_t>(2 * f.order)) fail("length check");
  if (std::abs(total - sqrt2) > 1e-12) fail("normalization");
  if (std::abs(energy - 1.0) > 1e-12) fail("orthonormality");
  for (std::size_t n = 0; n < taps; ++n) {
    const double sign = n % 2 == 0 ? 1.0 : -1.0;
    if (f.highpass[n] != sign * f.lowpass[taps - 1 - n]) fail("quadrature mirror relation");
  }
  for (int p = 0; p < f.order; ++p) {
    double moment = 0.0;
    for (std::size_t n = 0; n < taps; ++n) moment += std::pow(static_cast<double>(n), p) * f.highpass[n];
    if (std::abs(moment) > 1e-7 * std::pow(static_cast<double>(taps), p)) {
      fail("vanishing moment " + std::to_string(p));
    }
  }
}

std::array<SymletFilterPair, kMaxOrder - kMinOrder + 1> build_bank() {
  std::array<SymletFilterPair, kMaxOrder - kMinOrder + 1> bank;
  for (int k = kMinOrder; k <= kMaxOrder; ++k) {
    SymletFilterPair& f = bank[k - kMinOrder];
    auto coeffs = kSymletTable[k - kMinOrder];
    f.order = k;
    f.lowpass.assign(coeffs.begin(), coeffs.end());
    const std::size_t taps = f.lowpass.size();
    f.highpass.resize(taps);
    for (std::size_t n = 0; n < taps; ++n) {
      f.highpass[n] = (n % 2 == 0 ? 1.0 : -1.0) * f.lowpass[taps - 1 - n];
    }
    validate(f);
  }
  return bank;
}

}  // namespace

const SymletFilterPair& symlet_filters(int order) {
  if (order < kMinOrder || order > kMaxOrder) {
    throw ConfigError("symlet order " + std::to_string(order) + " out of range; " + order_range());
  }
  static const auto bank = build_bank();
  return bank[order - kMinOrder];
}

std::size_t coefficient_count(std::size_t signal_length, int order) {
  return (signal_length + 2 * static_cast<std::size_t>(order) - 1) / 2;
}

std::vector<double> symmetric_extend(std::span<const double> x, std::size_t pad) {
  if (x.empty()) throw DataError("symmetric_extend: empty signal");
  const auto t = static_cast<std::ptrdiff_t>(x.size());
  // Reflection with period 2t; index -1 maps to 0, index t maps to t-1.
  auto reflect = [t](std::ptrdiff_t i) {
    const std::ptrdiff_t period = 2 * t;
    i %= period;
    if (i < 0) i += period;
    return i < t ? i : period - 1 - i;
  };
  std::vector<double> out(x.size() + 2 * pad);
  const auto offset = static_cast<std::ptrdiff_t>(pad);
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(out.size()); ++j) {
    out[j] = x[reflect(j - offset)];
  }
  return out;
}

// Coefficient i correlates taps with extended samples 2i+1 .. 2i+F, where the
// extension pads F-1 samples on each side.
TrendVariationPair dwt_single_level(std::span<const double> x, int order) {
  const SymletFilterPair& f = symlet_filters(order);
  const std::size_t taps = f.length();
  const std::vector<double> ext = symmetric_extend(x, taps - 1);
  const std::size_t m = coefficient_count(x.size(), order);
  TrendVariationPair out{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t i = 0; i < m; ++i) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t j = 0; j < taps; ++j) {
      const double v = ext[2 * i + 1 + j];
      lo += f.lowpass[j] * v;
      hi += f.highpass[j] * v;
    }
    out.trend[i] = lo;
    out.variation[i] = hi;
  }
  return out;
}

std::vector<double> idwt_single_level(const TrendVariationPair& pair, int order,
                                      std::size_t signal_length) {
  const SymletFilterPair& f = symlet_filters(order);
  const std::size_t m = coefficient_count(signal_length, order);
  if (signal_length == 0 || pair.trend.size() != m || pair.variation.size() != m) {
    throw DataError("idwt_single_level: expected " + std::to_string(m) +
                    " coefficients per component for sym" + std::to_string(order) + " and length " +
                    std::to_string(signal_length) + ", got " + std::to_string(pair.trend.size()) +
                    "/" + std::to_string(pair.variation.size()));
  }
  const std::size_t taps = f.length();
  std::vector<double> ext(signal_length + 2 * (taps - 1), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < taps; ++j) {
      ext[2 * i + 1 + j] += pair.trend[i] * f.lowpass[j] + pair.variation[i] * f.highpass[j];
    }
  }
  return {ext.begin() + static_cast<std::ptrdiff_t>(taps - 1),
          ext.begin() + static_cast<std::ptrdiff_t>(taps - 1 + signal_length)};
}

std::vector<TrendVariationPair> ftm_decompose(const Tensor& visits, int order) {
  if (visits.rank() != 2 || visits.shape[0] == 0 || visits.shape[1] == 0) {
    throw DataError("ftm_decompose: expected a non-empty visits x features matrix, got " +
                    shape_string(visits.shape));
  }
  const std::size_t t = visits.shape[0], c = visits.shape[1];
  std::vector<TrendVariationPair> out;
  out.reserve(c);
  std::vector<double> column(t);
  for (std::size_t col = 0; col < c; ++col) {
    for (std::size_t row = 0; row < t; ++row) {
      const double v = visits.at(row, col);
      if (!std::isfinite(v)) {
        throw DataError("ftm_decompose: non-finite value at row " + std::to_string(row) +
                        ", column " + std::to_string(col));
      }
      column[row] = v;
    }
    out.push_back(dwt_single_level(column, order));
  }
  return out;
}

}  // namespace mpre::wavelet
