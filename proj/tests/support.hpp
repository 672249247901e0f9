#pragma once

// Shared helpers for the unit and acceptance tests: seeded random inputs,
// central finite differences and scratch directories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nap/head.hpp"
#include "nap/uncertainty.hpp"

namespace nap::testing {

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

/// Values drawn from a small integer range so that ties are common.
inline std::vector<double> tied_vector(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> u(0, levels - 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

/// Distinct values with pairwise gaps of at least `gap`.
inline std::vector<double> distinct_vector(std::mt19937_64& rng, std::size_t n, double gap) {
  std::vector<double> v(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = 0.0;
  for (double& e : v) {
    x += gap * (1.0 + u(rng));
    e = x;
  }
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

/// Central differences of f at x with a fixed absolute step.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double step) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + step;
    const double fp = f(x);
    x[i] = xi - step;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

inline std::vector<double> flatten(const head::HeadParams& p) {
  std::vector<double> out;
  for (const auto& [name, span] : p.tensors()) out.insert(out.end(), span.begin(), span.end());
  return out;
}

inline void unflatten(const std::vector<double>& flat, head::HeadParams& p) {
  std::size_t k = 0;
  for (auto& [name, span] : p.tensors()) {
    for (double& v : span) v = flat[k++];
  }
}

/// Random feature sequence with a random number of trailing masked rows.
inline head::FeatureSequence random_sequence(std::mt19937_64& rng, std::size_t max_len, std::size_t width) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  const std::size_t L = len(rng);
  const std::size_t valid = std::uniform_int_distribution<std::size_t>(1, L)(rng);
  head::FeatureSequence fs;
  fs.features = Matrix(L, width);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : fs.features.data()) v = g(rng);
  fs.mask.assign(L, 0);
  std::fill(fs.mask.begin(), fs.mask.begin() + static_cast<std::ptrdiff_t>(valid), 1);
  return fs;
}

/// Random categorical rows, each sharpened or flattened by its own temperature.
inline uncertainty::TokenPosterior random_posterior(std::mt19937_64& rng, std::size_t L, std::size_t V) {
  uncertainty::TokenPosterior tp;
  tp.probs = Matrix(L, V);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> temp(0.2, 3.0);
  std::uniform_int_distribution<int> id(0, static_cast<int>(V) - 1);
  for (std::size_t l = 0; l < L; ++l) {
    const double t = temp(rng);
    double s = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      tp.probs(l, v) = std::exp(g(rng) * t);
      s += tp.probs(l, v);
    }
    for (std::size_t v = 0; v < V; ++v) tp.probs(l, v) /= s;
    tp.ref_ids.push_back(id(rng));
  }
  return tp;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nap-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace nap::testing
