#include "mpre/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "mpre/error.hpp"

namespace mpre::train {

void adam_step(std::span<Tensor* const> params, AdamState& state, std::span<const std::string> names) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), {});
    state.second_moment.assign(params.size(), {});
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    t.ensure_grad();
    for (std::size_t i = 0; i < t.grad.size(); ++i) {
      if (!std::isfinite(t.grad[i])) {
        const std::string name = p < names.size() ? names[p] : "param#" + std::to_string(p);
        throw NumericalError("adam: non-finite gradient in " + name + "[" + std::to_string(i) + "]");
      }
    }
    if (state.first_moment[p].size() != t.size()) {
      state.first_moment[p].assign(t.size(), 0.0);
      state.second_moment[p].assign(t.size(), 0.0);
    }
  }

  ++state.step;
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      t.values[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be non-negative");
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  ablation.validate();
}

model::ModelConfig TrainConfig::model_config(const data::Cohort& cohort) const {
  if (cohort.t_max == 0) throw ConfigError("cohort must be padded to a fixed visit count before training");
  model::ModelConfig mc;
  mc.t_max = cohort.t_max;
  mc.dynamic_features = cohort.dynamic_count();
  mc.static_features = cohort.static_count();
  mc.classes = cohort.classes;
  mc.symlet_order = symlet_order;
  mc.kernel_width = kernel_width;
  mc.dilations = dilations;
  mc.ablation = ablation;
  mc.share_branches = share_branches;
  mc.validate();
  return mc;
}

namespace {

std::vector<model::PatientFeatures> prepare_all(const data::Cohort& cohort, const model::ModelConfig& config) {
  std::vector<model::PatientFeatures> out;
  out.reserve(cohort.patients.size());
  for (const data::Patient& p : cohort.patients) {
    out.push_back(model::prepare_features(p.visits, p.statics, config));
  }
  return out;
}

}  // namespace

TrainResult train(const data::Cohort& cohort, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  if (cohort.patients.empty()) throw DataError("train: empty training set");
  TrainResult result;
  result.config = config.model_config(cohort);
  std::mt19937_64 rng(seed);
  result.params = model::init_params(result.config, rng);
  result.initial_params = result.params;

  const auto features = prepare_all(cohort, result.config);
  std::vector<std::size_t> order(cohort.patients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  AdamState adam;
  adam.lr = config.lr;
  const auto tensors = result.params.tensors();
  const auto names = result.params.names();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      result.params.zero_grad();
      ad::Tape tape;
      const model::BoundParams bound = model::bind(tape, result.params, result.config);
      std::vector<ad::Var> probs;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        probs.push_back(model::forward(tape, bound, features[order[i]], result.config));
        labels.push_back(cohort.patients[order[i]].label);
      }
      ad::Var loss = model::cross_entropy(probs, labels);
      const double value = tape.values(loss)[0];
      if (!std::isfinite(value)) throw NumericalError("train: non-finite loss in epoch " + std::to_string(epoch + 1));
      tape.backward(loss);
      adam_step(tensors, adam, names);
      weighted_loss += value * static_cast<double>(end - start);
      ++result.steps;
    }
    result.epoch_loss.push_back(weighted_loss / static_cast<double>(order.size()));
  }
  return result;
}

double evaluate_loss(const model::ModelParams& params, const model::ModelConfig& config,
                     const data::Cohort& cohort) {
  if (cohort.patients.empty()) throw DataError("evaluate_loss: empty cohort");
  double total = 0.0;
  for (const data::Patient& p : cohort.patients) {
    const auto probs = model::forward(p.visits, p.statics, params, config);
    total -= std::log(std::max(probs[p.label], model::kProbabilityFloor));
  }
  return total / static_cast<double>(cohort.patients.size());
}

metrics::ScoredCohort score(const model::ModelParams& params, const model::ModelConfig& config,
                            const data::Cohort& cohort) {
  metrics::ScoredCohort scored;
  scored.classes = config.classes;
  for (const data::Patient& p : cohort.patients) {
    scored.probabilities.push_back(model::forward(p.visits, p.statics, params, config));
    scored.labels.push_back(p.label);
  }
  return scored;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<std::vector<std::size_t>> assign_folds(std::size_t patients, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (patients < k) {
    throw DataError("cross-validation: " + std::to_string(patients) + " patients for " + std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(patients);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0xF01D));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

FoldResult train_and_evaluate(const data::Cohort& cohort, std::span<const std::size_t> train_indices,
                              std::span<const std::size_t> test_indices, const TrainConfig& config,
                              std::uint64_t seed) {
  if (train_indices.empty()) throw DataError("fold has an empty training partition");
  FoldResult fold;
  fold.train_indices.assign(train_indices.begin(), train_indices.end());
  fold.test_indices.assign(test_indices.begin(), test_indices.end());
  const data::Cohort train_raw = cohort.subset(train_indices);
  fold.stats = data::compute_stats(train_raw);
  const data::Cohort train_set = data::normalize(train_raw, fold.stats);
  const data::Cohort test_set = data::normalize(cohort.subset(test_indices), fold.stats);
  fold.trained = train(train_set, config, seed);
  const metrics::ScoredCohort scored = score(fold.trained.params, fold.trained.config, test_set);
  fold.auroc = metrics::macro_ovr(scored, metrics::BinaryMetric::kAuroc);
  fold.auprc = metrics::macro_ovr(scored, metrics::BinaryMetric::kAuprc);
  return fold;
}

CrossValidationResult cross_validate(const data::Cohort& cohort, std::size_t k, const TrainConfig& config,
                                     bool parallel_folds) {
  config.validate();
  const auto folds = assign_folds(cohort.patients.size(), k, config.seed);
  CrossValidationResult result;
  result.folds.resize(k);

  auto run_fold = [&](std::size_t f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    FoldResult r = train_and_evaluate(cohort, train_idx, folds[f], config, derive_seed(config.seed, f + 1));
    r.fold = f;
    result.folds[f] = std::move(r);
  };

  if (parallel_folds) {
    std::vector<std::exception_ptr> errors(k);
    std::vector<std::thread> workers;
    for (std::size_t f = 0; f < k; ++f) {
      workers.emplace_back([&, f] {
        try {
          run_fold(f);
        } catch (...) {
          errors[f] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  } else {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  }

  for (const FoldResult& r : result.folds) {
    result.mean_auroc += r.auroc.value;
    result.mean_auprc += r.auprc.value;
  }
  result.mean_auroc /= static_cast<double>(k);
  result.mean_auprc /= static_cast<double>(k);
  return result;
}

}  // namespace mpre::train
