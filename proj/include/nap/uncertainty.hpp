#pragma once

// Sequence-level uncertainty scores from teacher-forced token posteriors.
// All entropies are in nats and every score is averaged over positions.

#include <span>
#include <vector>

#include "nap/matrix.hpp"

namespace nap::uncertainty {

/// Per-position categorical distributions (L x V) along a teacher-forced reference.
struct TokenPosterior {
  Matrix probs;
  std::vector<int> ref_ids;

  std::size_t length() const { return probs.rows(); }
  std::size_t vocab() const { return probs.cols(); }
  /// Throws nap::Error when rows are not distributions or ids are out of range.
  void validate() const;
};

struct EnsemblePosterior {
  std::vector<TokenPosterior> members;
  void validate() const;
};

inline constexpr double kProbFloor = 1e-12;

/// Entropy of one categorical distribution; 0 log 0 := 0.
double categorical_entropy(std::span<const double> p);

/// Geometric mean of the reference-token probabilities.
double sequence_confidence(const TokenPosterior& tp);

/// Length-averaged conditional token entropy.
double sequence_entropy(const TokenPosterior& tp);

/// Token-averaged H(mean_k p_k) - mean_k H(p_k), clipped at zero.
double ensemble_mutual_information(const EnsemblePosterior& ep);

/// Token-averaged mean_k H(p_k).
double aleatoric_score(const EnsemblePosterior& ep);

/// Token-averaged H(mean_k p_k).
double total_uncertainty(const EnsemblePosterior& ep);

}  // namespace nap::uncertainty
