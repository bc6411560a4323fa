#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpre/cohort.hpp"
#include "mpre/metrics.hpp"
#include "mpre/model.hpp"

namespace mpre::train {

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update using each tensor's grad. Aborts with
// NumericalError, leaving every parameter untouched, if any gradient is
// non-finite.
void adam_step(std::span<Tensor* const> params, AdamState& state,
               std::span<const std::string> names = {});

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t epochs = 50;
  std::uint64_t seed = 7;
  model::AblationConfig ablation;
  int symlet_order = 18;
  std::size_t kernel_width = 2;
  std::array<std::size_t, 3> dilations = men::kDefaultDilations;
  bool share_branches = false;

  void validate() const;
  model::ModelConfig model_config(const data::Cohort& cohort) const;
};

struct TrainResult {
  model::ModelConfig config;
  model::ModelParams params;
  model::ModelParams initial_params;
  std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
  std::size_t steps = 0;
};

// Trains on a padded, normalized cohort. `seed` drives initialization and
// per-epoch shuffling.
TrainResult train(const data::Cohort& cohort, const TrainConfig& config, std::uint64_t seed);

// Mean cross-entropy of a model over a cohort.
double evaluate_loss(const model::ModelParams& params, const model::ModelConfig& config,
                     const data::Cohort& cohort);

metrics::ScoredCohort score(const model::ModelParams& params, const model::ModelConfig& config,
                            const data::Cohort& cohort);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  data::NormalizationStats stats;
  TrainResult trained;
  metrics::MacroResult auroc;
  metrics::MacroResult auprc;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  double mean_auroc = 0.0;
  double mean_auprc = 0.0;
};

// Patient-level fold assignment from a seeded shuffle; fold sizes differ by at most one.
std::vector<std::vector<std::size_t>> assign_folds(std::size_t patients, std::size_t k, std::uint64_t seed);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Normalizes with statistics from the training indices only, trains, then
// scores the test indices. `cohort` must already be padded.
FoldResult train_and_evaluate(const data::Cohort& cohort, std::span<const std::size_t> train_indices,
                              std::span<const std::size_t> test_indices, const TrainConfig& config,
                              std::uint64_t seed);

CrossValidationResult cross_validate(const data::Cohort& cohort, std::size_t k, const TrainConfig& config,
                                     bool parallel_folds = false);

}  // namespace mpre::train
