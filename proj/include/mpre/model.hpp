#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mpre/autodiff.hpp"
#include "mpre/men2d.hpp"
#include "mpre/tensor.hpp"
#include "mpre/wavelet.hpp"

namespace mpre::model {

// Which parts of the network are active. The seven named presets A1..A7
// reproduce the usual ablation table, A7 being the full model.
struct AblationConfig {
  bool use_trend = true;
  bool use_variation = true;
  bool use_men2d = true;
  bool use_fodam = true;

  static AblationConfig preset(std::string_view name);
  // "A1".."A7" when the flags match a preset, otherwise a flag listing.
  std::string name() const;
  void validate() const;

  bool operator==(const AblationConfig&) const = default;
};

inline constexpr std::array<std::string_view, 7> kAblationPresets{"A1", "A2", "A3", "A4",
                                                                  "A5", "A6", "A7"};

struct ModelConfig {
  std::size_t t_max = 10;
  std::size_t dynamic_features = 1;
  std::size_t static_features = 0;
  std::size_t classes = 2;
  int symlet_order = 18;
  std::size_t kernel_width = 2;
  std::array<std::size_t, 3> dilations = men::kDefaultDilations;
  AblationConfig ablation;
  bool share_branches = false;

  // Wavelet coefficient count per component.
  std::size_t coefficients() const;
  // Columns contributed by one feature to the fused dynamic representation.
  std::size_t feature_width() const;
  std::size_t fusion_rows() const;
  std::size_t dynamic_width() const { return feature_width() * dynamic_features; }
  std::array<std::size_t, 3> branch_lengths() const;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// All trainable tensors. Tensors for disabled parts of the network are left
// empty and are not listed by named().
struct ModelParams {
  Tensor w_static;  // d x s
  Tensor b_static;  // d
  std::vector<men::BranchSet> branches;  // per feature, or one when shared
  Tensor w_fuse;    // fusion rows
  Tensor b_fuse;    // 1, broadcast
  Tensor w_y1;      // d x d
  Tensor w_y2;      // d x dynamic width
  Tensor w_y3;      // d x (m - 1)
  Tensor b_y;       // d

  // Declaration order; also the checkpoint order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> tensors();
  std::vector<std::string> names();
  void zero_grad();
  std::size_t scalar_count();
};

// Weights uniform in +-1/sqrt(fan_in), biases zero.
ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng);

// Shapes each parameter tensor must have for `config`, in named() order.
std::vector<std::pair<std::string, Shape>> expected_shapes(const ModelConfig& config);

// Per-patient model input after the (parameter-free) frequency transform.
struct PatientFeatures {
  std::vector<wavelet::TrendVariationPair> pairs;
  std::vector<double> statics;
};

PatientFeatures prepare_features(const Tensor& visits, std::span<const double> statics,
                                 const ModelConfig& config);

// Parameters registered on one tape.
struct BoundParams {
  ad::Var w_static, b_static;
  std::vector<std::array<ad::Var, 6>> branches;
  ad::Var w_fuse, b_fuse, w_y1, w_y2, w_y3, b_y;
};

BoundParams bind(ad::Tape& tape, ModelParams& params, const ModelConfig& config);
BoundParams bind_constant(ad::Tape& tape, const ModelParams& params, const ModelConfig& config);

// Tape-level building blocks.
ad::Var embed_static(ad::Var w_static, ad::Var b_static, ad::Var statics);
ad::Var fuse_dynamic(std::span<const ad::Var> feature_maps, ad::Var w_fuse, ad::Var b_fuse);
ad::Var forward(ad::Tape& tape, const BoundParams& params, const PatientFeatures& patient,
                const ModelConfig& config);
// Mean negative log-likelihood of the true classes.
ad::Var cross_entropy(std::span<const ad::Var> probabilities, std::span<const std::size_t> labels);

inline constexpr double kProbabilityFloor = 1e-12;

// Value-level wrappers.
std::vector<double> embed_static(std::span<const double> statics, const ModelParams& params);
std::vector<double> fuse_dynamic(std::span<const Tensor> feature_maps, const ModelParams& params);
// Empty h_dy / h_var spans mean the term is absent from the logits.
std::vector<double> predict(std::span<const double> h_st, std::span<const double> h_dy,
                            std::span<const double> h_var, const ModelParams& params);
double cross_entropy(std::span<const std::vector<double>> probabilities,
                     std::span<const std::vector<double>> one_hot);
std::vector<double> predict_patient(const ModelParams& params, const PatientFeatures& patient,
                                    const ModelConfig& config);
std::vector<double> forward(const Tensor& visits, std::span<const double> statics,
                            const ModelParams& params, const ModelConfig& config);

}  // namespace mpre::model
