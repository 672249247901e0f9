#pragma once

// Predictor head trained on top of frozen encoder features: a pooling step
// (temporal average or single-query attention) followed by a small MLP whose
// layout is chosen from a fixed grid of variants.
//
//   2L-X : affine -> X -> affine -> scalar
//   3L-X : affine -> X -> affine -> tanh -> affine -> scalar
//
// X is tanh, relu, softmax (SM), or layer norm followed by exp / tanh.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nap/matrix.hpp"

namespace nap::head {

struct FeatureSequence {
  Matrix features;            // L x d
  std::vector<uint8_t> mask;  // 1 = valid position

  std::size_t length() const { return features.rows(); }
  std::size_t width() const { return features.cols(); }
  std::size_t valid_count() const;
  void validate() const;

  /// Full-mask sequence over the given rows.
  static FeatureSequence dense(Matrix features);
};

enum class Variant {
  two_tanh,
  two_sm,
  two_ln_exp,
  two_ln_tanh,
  three_relu,
  three_tanh,
  three_ln_exp,
  three_ln_tanh,
  three_sm,
};

enum class Activation { tanh, relu, softmax, ln_exp, ln_tanh };

enum class Pooling { average, attentive };

std::string_view to_string(Variant v);
std::string_view to_string(Pooling p);
Variant parse_variant(std::string_view name);
Pooling parse_pooling(std::string_view name);
std::span<const Variant> all_variants();

int layer_count(Variant v);
Activation first_activation(Variant v);
inline bool uses_layer_norm(Variant v) {
  const auto a = first_activation(v);
  return a == Activation::ln_exp || a == Activation::ln_tanh;
}

struct Affine {
  Matrix weight;  // out x in
  std::vector<double> bias;
  bool operator==(const Affine&) const = default;
};

struct HeadParams {
  Variant variant = Variant::three_sm;
  Pooling pooling = Pooling::average;
  std::size_t input_dim = 0;
  std::vector<double> query;  // attentive pooling only
  std::vector<Affine> layers;
  std::vector<double> ln_gain;  // LN variants only
  std::vector<double> ln_bias;

  std::size_t hidden_width() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t parameter_count() const;

  /// Every trainable tensor in a fixed order, with a stable name.
  std::vector<std::pair<std::string, std::span<double>>> tensors();
  std::vector<std::pair<std::string, std::span<const double>>> tensors() const;

  /// Same shapes, all zeros.
  HeadParams zeros_like() const;

  bool operator==(const HeadParams&) const = default;
};

/// 2L hidden width whose parameter count matches the 3L counterpart of the
/// same family at hidden width `three_layer_width`.
std::size_t matched_two_layer_width(Variant two_layer, std::size_t input_dim,
                                    std::size_t three_layer_width);

/// Seeded Glorot-uniform initialisation. `hidden_width` is the 3L width; 2L
/// variants use the parameter-matched width.
HeadParams make_head(Variant variant, Pooling pooling, std::size_t input_dim,
                     std::size_t hidden_width, std::uint64_t seed);

std::vector<double> average_pool(const FeatureSequence& fs);

struct AttentionResult {
  std::vector<double> pooled;
  std::vector<double> weights;  // length L, zero on masked positions
};

AttentionResult attentive_pool(const FeatureSequence& fs, std::span<const double> query);

/// Gradient of <upstream, pooled> with respect to the query.
std::vector<double> attentive_pool_query_grad(const FeatureSequence& fs,
                                              const AttentionResult& attention,
                                              std::span<const double> upstream);

struct ForwardCache {
  std::vector<double> input;  // pooled vector fed to the MLP
  std::vector<double> z0;     // first pre-activation
  std::vector<double> ln_hat; // normalised z0 (LN variants)
  double ln_scale = 1.0;      // 1 / sqrt(var + eps)
  std::vector<double> a0;     // first activation output
  std::vector<double> a1;     // second activation output (3L)
  // attentive pooling
  FeatureSequence sequence;
  AttentionResult attention;
};

struct ForwardResult {
  double score = 0.0;
  ForwardCache cache;
};

ForwardResult head_forward(const FeatureSequence& fs, const HeadParams& params);

/// MLP stack on an already pooled vector.
ForwardResult mlp_forward(std::span<const double> pooled, const HeadParams& params);

/// Score only, without keeping a cache.
double head_score(const FeatureSequence& fs, const HeadParams& params);

/// Gradients for every parameter of `params`, scaled by `upstream_grad`.
HeadParams head_backward(const HeadParams& params, const ForwardCache& cache, double upstream_grad);

/// Adds `upstream_grad` times the gradient into `grad` (same shapes as params).
void accumulate_backward(const HeadParams& params, const ForwardCache& cache,
                         double upstream_grad, HeadParams& grad);

// Text serialisation: a "naphead <version>" line, metadata lines, then one
// "tensor <name> <count>" line per tensor followed by its values on one line
// in shortest round-trip decimal.
inline constexpr int kParamsFormatVersion = 1;
void write_params(std::ostream& os, const HeadParams& params);
HeadParams read_params(std::istream& is);
void save_params(const std::string& path, const HeadParams& params);
HeadParams load_params(const std::string& path);

}  // namespace nap::head
