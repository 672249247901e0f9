#pragma once

// Finite-difference checks of loss gradients and of the full chain
// loss(head(pool(features))) with respect to every head parameter.

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "nap/head.hpp"
#include "nap/losses.hpp"
#include "support.hpp"

namespace nap::testing {

struct LossInstance {
  std::vector<double> pred, target, secondary;
  double step = 1e-6;
};

/// Random inputs for one loss kind. Soft-rank losses get predictions on the
/// epsilon scale so that PAV pools non-trivial blocks; otherwise every block
/// is a singleton and the gradient is identically zero.
inline LossInstance random_loss_instance(const losses::LossSpec& spec, std::size_t n, std::mt19937_64& rng) {
  LossInstance in;
  const bool ranked = spec.kind == losses::LossKind::scc || spec.kind == losses::LossKind::ep_al;
  const double scale = ranked ? spec.epsilon * static_cast<double>(n) / 3.0 : 1.0;
  in.pred = normal_vector(rng, n, scale);
  in.target = std::bernoulli_distribution(0.3)(rng) ? tied_vector(rng, n, 4) : normal_vector(rng, n);
  if (spec.kind == losses::LossKind::ep_al) in.secondary = normal_vector(rng, n);
  in.step = 1e-6 * scale;
  return in;
}

inline double loss_gradient_error(const losses::LossSpec& spec, const LossInstance& in) {
  const auto analytic = losses::evaluate(spec, in.pred, in.target, in.secondary).grad_pred;
  const auto numeric = numeric_gradient(
      [&](const std::vector<double>& p) { return losses::evaluate(spec, p, in.target, in.secondary).value; },
      in.pred, in.step);
  return relative_error(analytic, numeric);
}

struct ChainInstance {
  head::HeadParams params;
  std::vector<head::FeatureSequence> batch;
  std::vector<double> target, secondary;
  losses::LossSpec spec;
};

inline constexpr std::size_t kChainBatch = 8;
inline constexpr std::size_t kChainWidth = 4;
inline constexpr std::size_t kChainHidden = 5;

inline std::vector<double> chain_predictions(const ChainInstance& c, const head::HeadParams& params) {
  std::vector<double> pred;
  for (const auto& fs : c.batch) pred.push_back(head::head_score(fs, params));
  return pred;
}

/// Small random head, batch and targets. Every parameter (including biases
/// and layer-norm gain) is jittered away from its initial value. For the
/// soft-rank losses epsilon is tied to the spread of the initial
/// predictions so that the ranks are genuinely soft.
inline ChainInstance random_chain_instance(losses::LossKind kind, double alpha, head::Variant variant,
                                           head::Pooling pooling, std::mt19937_64& rng) {
  ChainInstance c;
  c.params = head::make_head(variant, pooling, kChainWidth, kChainHidden, rng());
  auto flat = flatten(c.params);
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (double& v : flat) v += jitter(rng);
  unflatten(flat, c.params);
  for (std::size_t b = 0; b < kChainBatch; ++b) c.batch.push_back(random_sequence(rng, 5, kChainWidth));
  c.target = normal_vector(rng, kChainBatch);
  c.secondary = normal_vector(rng, kChainBatch);
  c.spec.kind = kind;
  c.spec.alpha = alpha;
  if (kind == losses::LossKind::scc || kind == losses::LossKind::ep_al) {
    const auto pred = chain_predictions(c, c.params);
    double mean = 0.0, var = 0.0;
    for (double p : pred) mean += p;
    mean /= static_cast<double>(pred.size());
    for (double p : pred) var += (p - mean) * (p - mean);
    c.spec.epsilon = std::max(1e-3, std::sqrt(var / static_cast<double>(pred.size())));
  }
  return c;
}

inline double chain_gradient_error(const ChainInstance& c) {
  const bool uses_secondary = c.spec.kind == losses::LossKind::ep_al;
  std::vector<double> pred;
  std::vector<head::ForwardCache> caches;
  for (const auto& fs : c.batch) {
    auto r = head::head_forward(fs, c.params);
    pred.push_back(r.score);
    caches.push_back(std::move(r.cache));
  }
  const auto loss = losses::evaluate(c.spec, pred, c.target,
                                     uses_secondary ? std::span<const double>(c.secondary) : std::span<const double>{});
  auto grad = c.params.zeros_like();
  for (std::size_t b = 0; b < c.batch.size(); ++b) {
    head::accumulate_backward(c.params, caches[b], loss.grad_pred[b], grad);
  }
  const auto analytic = flatten(grad);

  head::HeadParams probe = c.params;
  const auto numeric = numeric_gradient(
      [&](const std::vector<double>& flat) {
        unflatten(flat, probe);
        const auto p = chain_predictions(c, probe);
        return losses::evaluate(c.spec, p, c.target,
                                uses_secondary ? std::span<const double>(c.secondary) : std::span<const double>{})
            .value;
      },
      flatten(c.params), 1e-6);
  return relative_error(analytic, numeric);
}

}  // namespace nap::testing
