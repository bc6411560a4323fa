#include "mpre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "mpre/error.hpp"
#include "mpre/wavelet.hpp"

namespace mpre::metrics {

namespace {

void check_sizes(std::string_view what, std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) {
    throw DataError(std::string(what) + ": " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(positive.size()) + " labels");
  }
}

// Indices sorted by descending score.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double auroc_binary(std::span<const double> scores, std::span<const int> positive) {
  check_sizes("auroc", scores, positive);
  const auto pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(), [](int v) { return v != 0; }));
  const std::size_t neg = positive.size() - pos;
  if (pos == 0 || neg == 0) {
    throw DataError("auroc undefined: " + std::to_string(pos) + " positives, " + std::to_string(neg) + " negatives");
  }
  // Walk tie groups from the top; each positive beats every negative below it
  // and ties half of the negatives in its group.
  const auto order = descending_order(scores);
  double wins = 0.0;
  std::size_t neg_below = neg;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, group_pos = 0, group_neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] != 0 ? group_pos : group_neg) += 1;
      ++j;
    }
    neg_below -= group_neg;
    wins += static_cast<double>(group_pos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(group_neg));
    i = j;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc_binary(std::span<const double> scores, std::span<const int> positive) {
  check_sizes("auprc", scores, positive);
  const auto pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(), [](int v) { return v != 0; }));
  if (pos == 0) throw DataError("auprc undefined: no positive labels among " + std::to_string(positive.size()));
  const auto order = descending_order(scores);
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]] != 0) ++tp;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

void ScoredCohort::validate() const {
  if (probabilities.size() != labels.size()) {
    throw DataError("scored cohort: " + std::to_string(probabilities.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const auto& p = probabilities[i];
    if (p.size() != classes) throw DataError("scored cohort: row " + std::to_string(i) + " has wrong class count");
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw DataError("scored cohort: row " + std::to_string(i) + " has a negative probability");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DataError("scored cohort: row " + std::to_string(i) + " is not normalized");
    if (labels[i] >= classes) throw DataError("scored cohort: label out of range in row " + std::to_string(i));
  }
}

MacroResult macro_ovr(const ScoredCohort& scored, BinaryMetric metric) {
  if (scored.classes < 2) throw ConfigError("macro_ovr: need at least two classes");
  scored.validate();
  MacroResult result;
  const std::size_t n = scored.labels.size();
  std::vector<double> scores(n);
  std::vector<int> positive(n);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < scored.classes; ++j) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = scored.probabilities[i][j];
      positive[i] = scored.labels[i] == j ? 1 : 0;
      pos += static_cast<std::size_t>(positive[i]);
    }
    if (pos == 0 || pos == n) {
      result.per_class.push_back(std::numeric_limits<double>::quiet_NaN());
      result.skipped.push_back(j);
      continue;
    }
    const double v = metric == BinaryMetric::kAuroc ? auroc_binary(scores, positive) : auprc_binary(scores, positive);
    result.per_class.push_back(v);
    total += v;
    ++used;
  }
  if (used == 0) throw DataError("macro_ovr: every class lacks positives or negatives");
  result.value = total / static_cast<double>(used);
  return result;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw DataError("pearson: need two equal-length vectors of at least 2 values");
  }
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw DataError("pearson: correlation undefined for a constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<FeatureCorrelation> trend_variation_report(const data::Cohort& cohort, int symlet_order) {
  wavelet::symlet_filters(symlet_order);
  // Components this close to constant carry only rounding noise.
  constexpr double kFlat = 1e-9;
  auto spread = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  std::vector<FeatureCorrelation> report;
  for (std::size_t k = 0; k < cohort.dynamic_count(); ++k) {
    FeatureCorrelation fc;
    fc.feature = cohort.dynamic_names[k];
    double total = 0.0;
    for (const data::Patient& p : cohort.patients) {
      std::vector<double> column(p.visit_count());
      for (std::size_t t = 0; t < column.size(); ++t) column[t] = p.visits.at(t, k);
      const auto pair = wavelet::dwt_single_level(column, symlet_order);
      const double scale = std::max({1.0, spread(pair.trend), spread(pair.variation)});
      if (pair.trend.size() < 2 || spread(pair.trend) <= kFlat * scale || spread(pair.variation) <= kFlat * scale) {
        ++fc.undefined;
        continue;
      }
      total += pearson(pair.trend, pair.variation);
      ++fc.defined;
    }
    fc.mean_r = fc.defined ? total / static_cast<double>(fc.defined) : std::numeric_limits<double>::quiet_NaN();
    report.push_back(std::move(fc));
  }
  std::stable_sort(report.begin(), report.end(), [](const FeatureCorrelation& a, const FeatureCorrelation& b) {
    if (a.is_defined() != b.is_defined()) return a.is_defined();
    return a.is_defined() && a.mean_r > b.mean_r;
  });
  return report;
}

void write_correlation_csv(std::ostream& out, std::span<const FeatureCorrelation> report) {
  out << "rank,feature,mean_r,defined,undefined,top5\n";
  std::size_t rank = 0;
  for (const FeatureCorrelation& fc : report) {
    ++rank;
    out << rank << ',' << fc.feature << ',';
    if (fc.is_defined()) {
      out << fc.mean_r;
    } else {
      out << "undefined";
    }
    out << ',' << fc.defined << ',' << fc.undefined << ',' << (fc.is_defined() && rank <= 5 ? 1 : 0) << '\n';
  }
}

}  // namespace mpre::metrics
