#include "mpre/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "mpre/error.hpp"

namespace mpre::checkpoint {

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  auto bits = std::bit_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename T>
T get(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw ConfigError("unrecognized checkpoint: truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

void put_tensor(std::ostream& out, const Shape& shape, std::span<const double> values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) put<std::uint64_t>(out, d);
  for (double v : values) put<double>(out, v);
}

Tensor get_tensor(std::istream& in) {
  const auto rank = get<std::uint32_t>(in);
  if (rank > 8) throw ConfigError("unrecognized checkpoint: tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
  const std::size_t n = shape_size(shape);
  if (n > (std::size_t{1} << 32)) throw ConfigError("unrecognized checkpoint: tensor too large");
  std::vector<double> values(n);
  for (double& v : values) v = get<double>(in);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace

void write(std::ostream& out, const Checkpoint& ckpt) {
  const model::ModelConfig& c = ckpt.config;
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, c.t_max);
  put<std::uint64_t>(out, c.dynamic_features);
  put<std::uint64_t>(out, c.static_features);
  put<std::uint64_t>(out, c.classes);
  put<std::int32_t>(out, c.symlet_order);
  put<std::uint64_t>(out, c.kernel_width);
  for (std::size_t b : c.dilations) put<std::uint64_t>(out, b);
  for (bool flag : {c.ablation.use_trend, c.ablation.use_variation, c.ablation.use_men2d,
                    c.ablation.use_fodam, c.share_branches}) {
    put<std::uint8_t>(out, flag ? 1 : 0);
  }
  const auto named = ckpt.params.named();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) put_tensor(out, t->shape, t->values);
  const data::NormalizationStats& s = ckpt.stats;
  put<std::uint32_t>(out, 4);
  for (const auto* v : {&s.dynamic_mean, &s.dynamic_std, &s.static_mean, &s.static_std}) {
    put_tensor(out, {v->size()}, *v);
  }
  if (!out) throw DataError("checkpoint: write failed");
}

Checkpoint read(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("unrecognized checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ConfigError("unrecognized checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  model::ModelConfig& c = ckpt.config;
  c.t_max = get<std::uint64_t>(in);
  c.dynamic_features = get<std::uint64_t>(in);
  c.static_features = get<std::uint64_t>(in);
  c.classes = get<std::uint64_t>(in);
  c.symlet_order = get<std::int32_t>(in);
  c.kernel_width = get<std::uint64_t>(in);
  for (auto& b : c.dilations) b = get<std::uint64_t>(in);
  c.ablation.use_trend = get<std::uint8_t>(in) != 0;
  c.ablation.use_variation = get<std::uint8_t>(in) != 0;
  c.ablation.use_men2d = get<std::uint8_t>(in) != 0;
  c.ablation.use_fodam = get<std::uint8_t>(in) != 0;
  c.share_branches = get<std::uint8_t>(in) != 0;
  c.validate();

  const auto expected = model::expected_shapes(c);
  const auto count = get<std::uint32_t>(in);
  if (count != expected.size()) {
    throw ConfigError("unrecognized checkpoint: " + std::to_string(count) + " tensors, configuration needs " +
                      std::to_string(expected.size()));
  }
  std::vector<Tensor> tensors;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t = get_tensor(in);
    if (t.shape != expected[i].second) {
      throw ConfigError("checkpoint tensor " + expected[i].first + " has shape " + shape_string(t.shape) +
                        ", expected " + shape_string(expected[i].second));
    }
    tensors.push_back(std::move(t));
  }
  // Allocate the declared layout, then fill in named() order.
  std::mt19937_64 unused(0);
  ckpt.params = model::init_params(c, unused);
  auto named = ckpt.params.named();
  for (std::size_t i = 0; i < named.size(); ++i) *named[i].second = std::move(tensors[i]);

  if (get<std::uint32_t>(in) != 4) throw ConfigError("unrecognized checkpoint: bad statistics block");
  data::NormalizationStats& s = ckpt.stats;
  for (auto* v : {&s.dynamic_mean, &s.dynamic_std, &s.static_mean, &s.static_std}) {
    Tensor t = get_tensor(in);
    *v = std::move(t.values);
  }
  if (s.dynamic_mean.size() != c.dynamic_features || s.dynamic_std.size() != c.dynamic_features ||
      s.static_mean.size() != c.static_features || s.static_std.size() != c.static_features) {
    throw ConfigError("unrecognized checkpoint: statistics do not match the configuration");
  }
  return ckpt;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write(out, ckpt);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read(in);
}

}  // namespace mpre::checkpoint
