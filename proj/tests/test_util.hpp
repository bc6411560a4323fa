#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mpre/autodiff.hpp"

namespace testutil {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline mpre::Tensor random_tensor(std::mt19937_64& rng, mpre::Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = mpre::shape_size(shape);
  return mpre::Tensor(std::move(shape), random_vector(rng, n, lo, hi));
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Scalar loss built on a fresh tape from the given leaves.
using Builder = std::function<mpre::ad::Var(mpre::ad::Tape&, std::vector<mpre::ad::Var>&)>;

inline double evaluate(const Builder& build, std::vector<mpre::Tensor>& leaves) {
  mpre::ad::Tape tape;
  std::vector<mpre::ad::Var> vars;
  for (auto& t : leaves) vars.push_back(tape.parameter(t));
  return tape.values(build(tape, vars))[0];
}

// Worst relative error between tape gradients and an all-coordinates
// central difference; independent of ad::finite_diff_check.
inline double gradient_error(const Builder& build, std::vector<mpre::Tensor>& leaves, double step = 1e-5) {
  for (auto& t : leaves) t.zero_grad();
  {
    mpre::ad::Tape tape;
    std::vector<mpre::ad::Var> vars;
    for (auto& t : leaves) vars.push_back(tape.parameter(t));
    tape.backward(build(tape, vars));
  }
  double worst = 0.0;
  for (auto& t : leaves) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.values[i];
      t.values[i] = saved + step;
      const double up = evaluate(build, leaves);
      t.values[i] = saved - step;
      const double down = evaluate(build, leaves);
      t.values[i] = saved;
      worst = std::max(worst, relative_error(t.grad[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace testutil

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mpre_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil
