#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpre/tensor.hpp"

namespace mpre::data {

// One patient: visits x dynamic features, static vector and class label.
struct Patient {
  std::string id;
  Tensor visits;
  std::vector<double> statics;
  std::size_t label = 0;

  std::size_t visit_count() const { return visits.shape.empty() ? 0 : visits.shape[0]; }
  bool operator==(const Patient&) const = default;
};

struct Cohort {
  std::vector<Patient> patients;
  std::vector<std::string> dynamic_names;
  std::vector<std::string> static_names;
  std::size_t classes = 0;
  std::size_t t_max = 0;  // 0 until padded

  std::size_t dynamic_count() const { return dynamic_names.size(); }
  std::size_t static_count() const { return static_names.size(); }
  std::size_t feature_index(std::string_view name) const;
  Cohort subset(std::span<const std::size_t> indices) const;
  bool operator==(const Cohort&) const = default;
};

struct CohortPaths {
  std::filesystem::path visits;
  std::filesystem::path statics;
  std::filesystem::path labels;

  static CohortPaths in_directory(const std::filesystem::path& dir);
};

// Joins the three CSV files on patient id. Visits are sorted by visit index;
// missing dynamic values are carried forward within a patient, then zero-filled.
// `classes` of 0 infers max(label) + 1.
Cohort load_cohort(const CohortPaths& paths, std::size_t classes = 0);
void write_cohort(const Cohort& cohort, const CohortPaths& paths);

// Keeps the most recent t_max visits, or repeats the last visit up to t_max.
Cohort pad_truncate(const Cohort& cohort, std::size_t t_max);

struct NormalizationStats {
  std::vector<double> dynamic_mean;
  std::vector<double> dynamic_std;
  std::vector<double> static_mean;
  std::vector<double> static_std;
};

// Population statistics over every visit row (dynamic) and every patient
// (static) of the given cohort, which should hold training patients only.
NormalizationStats compute_stats(const Cohort& train);
// z-scores; features with zero spread map to 0.
Cohort normalize(const Cohort& cohort, const NormalizationStats& stats);

struct ClassProfile {
  double slope = 0.0;      // trend per visit
  double amplitude = 0.0;  // alternating visit-to-visit swing
  double coupling = 0.0;   // swing growth per unit of trend; its sign is the correlation sign

  bool operator==(const ClassProfile&) const = default;
};

struct SynthSpec {
  std::size_t patients = 300;
  std::vector<ClassProfile> classes;
  std::size_t dynamic_features = 5;
  std::size_t static_features = 3;
  // Extra dynamic features carrying white noise only, appended after the others.
  std::size_t noise_features = 0;
  double mean_visits = 10.0;
  // Visit counts are uniform in mean_visits +/- visit_jitter (at least 3).
  std::size_t visit_jitter = 3;
  double noise = 0.2;
  double intercept_scale = 1.0;
  // Per-patient random sign on the slope, which hides class information
  // from the trend direction alone.
  bool random_slope_sign = false;
  // Trend follows a half sine that flattens at both ends and the swing
  // envelope vanishes there, so symmetric boundary extension mixes little of
  // either component into the other's wavelet band.
  bool tapered = false;
  double static_signal = 0.3;
  std::uint64_t seed = 7;

  void validate() const;
};

// Named presets: "default" (3 classes differing in slope, swing and coupling),
// "correlation" (2 classes differing only in coupling sign, random slope sign).
SynthSpec synth_preset(std::string_view name);

Cohort synth_generate(const SynthSpec& spec);

}  // namespace mpre::data
