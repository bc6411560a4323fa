#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mpre/cohort.hpp"

namespace mpre::metrics {

// Probability that a random positive outscores a random negative, ties
// counting one half. `positive` entries are nonzero for the positive class.
double auroc_binary(std::span<const double> scores, std::span<const int> positive);

// Step-curve area sum_i (R_i - R_{i-1}) P_i over distinct descending thresholds.
double auprc_binary(std::span<const double> scores, std::span<const int> positive);

struct ScoredCohort {
  std::vector<std::vector<double>> probabilities;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  void validate() const;
};

enum class BinaryMetric { kAuroc, kAuprc };

struct MacroResult {
  double value = 0.0;
  std::vector<double> per_class;        // NaN where skipped
  std::vector<std::size_t> skipped;     // classes lacking a positive or a negative
};

// Unweighted one-vs-rest mean over classes with both polarities present.
MacroResult macro_ovr(const ScoredCohort& scored, BinaryMetric metric);

double pearson(std::span<const double> a, std::span<const double> b);

struct FeatureCorrelation {
  std::string feature;
  double mean_r = 0.0;          // NaN when undefined for every patient
  std::size_t defined = 0;      // patients with a defined coefficient
  std::size_t undefined = 0;
  bool is_defined() const { return defined > 0; }
};

// Mean per-patient Pearson correlation between each feature's trend and
// variation components, ranked descending; undefined features last.
std::vector<FeatureCorrelation> trend_variation_report(const data::Cohort& cohort, int symlet_order);

// rank,feature,mean_r,defined,undefined,top5
void write_correlation_csv(std::ostream& out, std::span<const FeatureCorrelation> report);

}  // namespace mpre::metrics
