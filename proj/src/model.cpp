#include "mpre/model.hpp"

#include <cmath>
#include <string>
#include <type_traits>
#include <utility>

#include "mpre/error.hpp"
#include "mpre/fodam.hpp"

namespace mpre::model {

AblationConfig AblationConfig::preset(std::string_view name) {
  //                      trend  variation  men2d  fodam
  if (name == "A1") return {true, false, false, false};
  if (name == "A2") return {false, true, false, false};
  if (name == "A3") return {false, true, false, true};
  if (name == "A4") return {true, true, false, false};
  if (name == "A5") return {true, true, false, true};
  if (name == "A6") return {true, true, true, false};
  if (name == "A7") return {true, true, true, true};
  throw ConfigError("unknown ablation config '" + std::string(name) + "'; expected A1..A7");
}

std::string AblationConfig::name() const {
  for (std::string_view p : kAblationPresets) {
    if (preset(p) == *this) return std::string(p);
  }
  return std::string("trend=") + (use_trend ? "1" : "0") + ",variation=" + (use_variation ? "1" : "0") +
         ",men2d=" + (use_men2d ? "1" : "0") + ",fodam=" + (use_fodam ? "1" : "0");
}

void AblationConfig::validate() const {
  if (!use_trend && !use_variation) throw ConfigError("ablation: trend or variation must be enabled");
  if (use_men2d && !(use_trend && use_variation)) {
    throw ConfigError("ablation: 2D MEN needs both trend and variation");
  }
}

std::size_t ModelConfig::coefficients() const {
  return wavelet::coefficient_count(t_max, symlet_order);
}

std::array<std::size_t, 3> ModelConfig::branch_lengths() const {
  const std::size_t m = coefficients();
  return {men::output_length(m, dilations[0], kernel_width),
          men::output_length(m, dilations[1], kernel_width),
          men::output_length(m, dilations[2], kernel_width)};
}

std::size_t ModelConfig::feature_width() const {
  if (!ablation.use_men2d) return coefficients();
  const auto q = branch_lengths();
  return q[0] + q[1] + q[2];
}

std::size_t ModelConfig::fusion_rows() const {
  return (ablation.use_trend && ablation.use_variation) ? 2 : 1;
}

void ModelConfig::validate() const {
  ablation.validate();
  wavelet::symlet_filters(symlet_order);
  if (t_max == 0) throw ConfigError("t_max must be at least 1");
  if (dynamic_features == 0) throw ConfigError("at least one dynamic feature is required");
  if (classes < 2) throw ConfigError("at least two classes are required");
  if (kernel_width == 0) throw ConfigError("kernel width must be at least 1");
  const std::size_t m = coefficients();
  if (ablation.use_fodam && m < 2) throw ConfigError("FODAM needs at least 2 wavelet coefficients");
  if (ablation.use_men2d) {
    for (std::size_t b : dilations) {
      const std::size_t needed = b * (kernel_width - 1) + 1;
      if (m < needed) {
        throw ConfigError("dilation " + std::to_string(b) + " with kernel width " +
                          std::to_string(kernel_width) + " needs " + std::to_string(needed) +
                          " coefficients, have " + std::to_string(m));
      }
    }
  }
}

namespace {

template <typename Params>
auto collect_named(Params& p) {
  using Ptr = std::conditional_t<std::is_const_v<Params>, const Tensor*, Tensor*>;
  std::vector<std::pair<std::string, Ptr>> out;
  out.emplace_back("w_static", &p.w_static);
  out.emplace_back("b_static", &p.b_static);
  for (std::size_t f = 0; f < p.branches.size(); ++f) {
    for (std::size_t b = 0; b < 3; ++b) {
      const std::string prefix = "men" + std::to_string(f) + ".branch" + std::to_string(b);
      out.emplace_back(prefix + ".kernel", &p.branches[f][b].kernel);
      out.emplace_back(prefix + ".bias", &p.branches[f][b].bias);
    }
  }
  out.emplace_back("w_fuse", &p.w_fuse);
  out.emplace_back("b_fuse", &p.b_fuse);
  out.emplace_back("w_y1", &p.w_y1);
  out.emplace_back("w_y2", &p.w_y2);
  if (!p.w_y3.shape.empty()) out.emplace_back("w_y3", &p.w_y3);
  out.emplace_back("b_y", &p.b_y);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() { return collect_named(*this); }

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  return collect_named(*this);
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::vector<std::string> ModelParams::names() {
  std::vector<std::string> out;
  for (auto& [name, t] : named()) out.push_back(name);
  return out;
}

void ModelParams::zero_grad() {
  for (Tensor* t : tensors()) t->zero_grad();
}

std::size_t ModelParams::scalar_count() {
  std::size_t n = 0;
  for (Tensor* t : tensors()) n += t->size();
  return n;
}

std::vector<std::pair<std::string, Shape>> expected_shapes(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.classes;
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("w_static", Shape{d, config.static_features});
  out.emplace_back("b_static", Shape{d});
  if (config.ablation.use_men2d) {
    const std::size_t sets = config.share_branches ? 1 : config.dynamic_features;
    for (std::size_t f = 0; f < sets; ++f) {
      for (std::size_t b = 0; b < 3; ++b) {
        const std::string prefix = "men" + std::to_string(f) + ".branch" + std::to_string(b);
        out.emplace_back(prefix + ".kernel", Shape{2, 2, config.kernel_width});
        out.emplace_back(prefix + ".bias", Shape{2});
      }
    }
  }
  out.emplace_back("w_fuse", Shape{config.fusion_rows()});
  out.emplace_back("b_fuse", Shape{1});
  out.emplace_back("w_y1", Shape{d, d});
  out.emplace_back("w_y2", Shape{d, config.dynamic_width()});
  if (config.ablation.use_fodam) out.emplace_back("w_y3", Shape{d, config.coefficients() - 1});
  out.emplace_back("b_y", Shape{d});
  return out;
}

ModelParams init_params(const ModelConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.classes;
  auto uniform = [&rng](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    if (fan_in == 0) return t;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.values) v = dist(rng);
    return t;
  };
  ModelParams p;
  p.w_static = uniform({d, config.static_features}, config.static_features);
  p.b_static = Tensor({d});
  if (config.ablation.use_men2d) {
    const std::size_t sets = config.share_branches ? 1 : config.dynamic_features;
    const std::size_t fan_in = 2 * config.kernel_width;
    p.branches.resize(sets);
    for (auto& set : p.branches) {
      for (auto& branch : set) {
        branch.kernel = uniform({2, 2, config.kernel_width}, fan_in);
        branch.bias = Tensor({2});
      }
    }
  }
  p.w_fuse = uniform({config.fusion_rows()}, config.fusion_rows());
  p.b_fuse = Tensor({1});
  p.w_y1 = uniform({d, d}, d);
  p.w_y2 = uniform({d, config.dynamic_width()}, config.dynamic_width());
  if (config.ablation.use_fodam) {
    const std::size_t n = config.coefficients() - 1;
    p.w_y3 = uniform({d, n}, n);
  }
  p.b_y = Tensor({d});
  return p;
}

PatientFeatures prepare_features(const Tensor& visits, std::span<const double> statics,
                                 const ModelConfig& config) {
  if (visits.rank() != 2 || visits.shape[0] != config.t_max ||
      visits.shape[1] != config.dynamic_features) {
    throw ConfigError("model expects visits of shape " +
                      shape_string({config.t_max, config.dynamic_features}) + ", got " +
                      shape_string(visits.shape));
  }
  if (statics.size() != config.static_features) {
    throw ConfigError("model expects " + std::to_string(config.static_features) +
                      " static features, got " + std::to_string(statics.size()));
  }
  return {wavelet::ftm_decompose(visits, config.symlet_order),
          std::vector<double>(statics.begin(), statics.end())};
}

namespace {

template <typename Params, typename Register>
BoundParams bind_with(Params& params, const ModelConfig& config, Register reg) {
  const auto shapes = expected_shapes(config);
  std::size_t i = 0;
  for (const auto& [name, tensor] : std::as_const(params).named()) {
    if (i >= shapes.size() || shapes[i].first != name || shapes[i].second != tensor->shape) {
      throw ConfigError("parameter " + name + " has shape " + shape_string(tensor->shape) +
                        " incompatible with the model configuration");
    }
    ++i;
  }
  if (i != shapes.size()) throw ConfigError("parameter set does not match the model configuration");

  BoundParams b;
  b.w_static = reg(params.w_static);
  b.b_static = reg(params.b_static);
  for (auto& set : params.branches) {
    std::array<ad::Var, 6> vars;
    for (std::size_t k = 0; k < 3; ++k) {
      vars[2 * k] = reg(set[k].kernel);
      vars[2 * k + 1] = reg(set[k].bias);
    }
    b.branches.push_back(vars);
  }
  b.w_fuse = reg(params.w_fuse);
  b.b_fuse = reg(params.b_fuse);
  b.w_y1 = reg(params.w_y1);
  b.w_y2 = reg(params.w_y2);
  if (config.ablation.use_fodam) b.w_y3 = reg(params.w_y3);
  b.b_y = reg(params.b_y);
  return b;
}

}  // namespace

BoundParams bind(ad::Tape& tape, ModelParams& params, const ModelConfig& config) {
  return bind_with(params, config, [&tape](Tensor& t) { return tape.parameter(t); });
}

BoundParams bind_constant(ad::Tape& tape, const ModelParams& params, const ModelConfig& config) {
  return bind_with(params, config, [&tape](const Tensor& t) { return tape.constant(t); });
}

ad::Var embed_static(ad::Var w_static, ad::Var b_static, ad::Var statics) {
  return ad::tanh(ad::add(ad::matvec(w_static, statics), b_static));
}

ad::Var fuse_dynamic(std::span<const ad::Var> feature_maps, ad::Var w_fuse, ad::Var b_fuse) {
  for (const ad::Var& map : feature_maps) {
    const Shape& first = feature_maps.front().tape->shape(feature_maps.front());
    const Shape& shape = map.tape->shape(map);
    if (shape != first) {
      throw ShapeError("fuse_dynamic: ragged feature maps " + shape_string(first) + " vs " + shape_string(shape));
    }
  }
  ad::Var combined = ad::concat(feature_maps);
  return ad::tanh(ad::add_scalar(ad::weighted_rows(combined, w_fuse), b_fuse));
}

ad::Var forward(ad::Tape& tape, const BoundParams& params, const PatientFeatures& patient,
                const ModelConfig& config) {
  const AblationConfig& ab = config.ablation;
  if (patient.pairs.size() != config.dynamic_features) {
    throw ConfigError("model expects " + std::to_string(config.dynamic_features) +
                      " dynamic features, got " + std::to_string(patient.pairs.size()));
  }
  std::vector<ad::Var> maps;
  std::vector<ad::Var> h_vars;
  maps.reserve(patient.pairs.size());
  for (std::size_t f = 0; f < patient.pairs.size(); ++f) {
    const auto& pair = patient.pairs[f];
    if (ab.use_trend && ab.use_variation) {
      ad::Var d = tape.constant(men::reshape_2d(pair));
      if (ab.use_men2d) {
        const auto& vars = params.branches[config.share_branches ? 0 : f];
        maps.push_back(men::men_forward(d, std::span<const ad::Var, 6>(vars), config.dilations));
      } else {
        maps.push_back(d);
      }
    } else {
      const auto& row = ab.use_trend ? pair.trend : pair.variation;
      maps.push_back(tape.constant(Tensor::matrix(1, row.size(), row)));
    }
    if (ab.use_fodam) h_vars.push_back(fodam::fodam_forward(tape.constant(Tensor::vector(pair.variation))));
  }

  ad::Var h_st = embed_static(params.w_static, params.b_static, tape.constant(Tensor::vector(patient.statics)));
  ad::Var h_dy = fuse_dynamic(maps, params.w_fuse, params.b_fuse);
  ad::Var logits = ad::add(ad::add(ad::matvec(params.w_y1, h_st), ad::matvec(params.w_y2, h_dy)), params.b_y);
  if (ab.use_fodam) logits = ad::add(logits, ad::matvec(params.w_y3, fodam::fodam_pool(h_vars)));
  return ad::softmax(logits);
}

ad::Var cross_entropy(std::span<const ad::Var> probabilities, std::span<const std::size_t> labels) {
  if (probabilities.empty() || probabilities.size() != labels.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(probabilities.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  ad::Var total = ad::nll(probabilities[0], labels[0], kProbabilityFloor);
  for (std::size_t i = 1; i < probabilities.size(); ++i) {
    total = ad::add(total, ad::nll(probabilities[i], labels[i], kProbabilityFloor));
  }
  return ad::scale(total, 1.0 / static_cast<double>(probabilities.size()));
}

std::vector<double> embed_static(std::span<const double> statics, const ModelParams& params) {
  ad::Tape tape;
  const std::vector<double> s(statics.begin(), statics.end());
  ad::Var out = embed_static(tape.constant(params.w_static), tape.constant(params.b_static),
                             tape.constant(Tensor::vector(s)));
  auto v = tape.values(out);
  return {v.begin(), v.end()};
}

std::vector<double> fuse_dynamic(std::span<const Tensor> feature_maps, const ModelParams& params) {
  ad::Tape tape;
  std::vector<ad::Var> maps;
  for (const Tensor& t : feature_maps) maps.push_back(tape.constant(t));
  ad::Var out = fuse_dynamic(maps, tape.constant(params.w_fuse), tape.constant(params.b_fuse));
  auto v = tape.values(out);
  return {v.begin(), v.end()};
}

std::vector<double> predict(std::span<const double> h_st, std::span<const double> h_dy,
                            std::span<const double> h_var, const ModelParams& params) {
  ad::Tape tape;
  auto constant = [&tape](std::span<const double> v) {
    return tape.constant(Tensor::vector(std::vector<double>(v.begin(), v.end())));
  };
  ad::Var logits = ad::add(ad::matvec(tape.constant(params.w_y1), constant(h_st)), tape.constant(params.b_y));
  if (!h_dy.empty()) logits = ad::add(logits, ad::matvec(tape.constant(params.w_y2), constant(h_dy)));
  if (!h_var.empty()) logits = ad::add(logits, ad::matvec(tape.constant(params.w_y3), constant(h_var)));
  auto v = tape.values(ad::softmax(logits));
  return {v.begin(), v.end()};
}

double cross_entropy(std::span<const std::vector<double>> probabilities,
                     std::span<const std::vector<double>> one_hot) {
  if (probabilities.empty() || probabilities.size() != one_hot.size()) {
    throw ShapeError("cross_entropy: " + std::to_string(probabilities.size()) + " predictions for " +
                     std::to_string(one_hot.size()) + " label rows");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const auto& y = one_hot[i];
    if (y.size() != probabilities[i].size()) {
      throw ShapeError("cross_entropy: row " + std::to_string(i) + " has " + std::to_string(y.size()) +
                       " labels for " + std::to_string(probabilities[i].size()) + " classes");
    }
    std::size_t hot = 0, ones = 0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] == 1.0) {
        hot = j;
        ++ones;
      } else if (y[j] != 0.0) {
        ones = 2;
      }
    }
    if (ones != 1) throw DataError("cross_entropy: label row " + std::to_string(i) + " is not one-hot");
    total -= std::log(std::max(probabilities[i][hot], kProbabilityFloor));
  }
  return total / static_cast<double>(probabilities.size());
}

std::vector<double> predict_patient(const ModelParams& params, const PatientFeatures& patient,
                                    const ModelConfig& config) {
  ad::Tape tape;
  BoundParams bound = bind_constant(tape, params, config);
  auto v = tape.values(forward(tape, bound, patient, config));
  for (double p : v) {
    if (!std::isfinite(p)) throw NumericalError("forward: non-finite class probability");
  }
  return {v.begin(), v.end()};
}

std::vector<double> forward(const Tensor& visits, std::span<const double> statics,
                            const ModelParams& params, const ModelConfig& config) {
  return predict_patient(params, prepare_features(visits, statics, config), config);
}

}  // namespace mpre::model
