#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nap::metrics {

/// Ascending ranks starting at 1; tied values share the average of their ranks.
std::vector<double> midranks(std::span<const double> values);

/// Pearson correlation of the midrank vectors.
double spearman_exact(std::span<const double> a, std::span<const double> b);

double pearson_exact(std::span<const double> a, std::span<const double> b);

/// Mann-Whitney U of the positive class: pairs with positive > negative,
/// plus one half per tied pair.
double mann_whitney_u(std::span<const double> negative_scores,
                      std::span<const double> positive_scores);

/// U / (n_pos * n_neg), in [0, 1], as one correctly rounded division.
double auroc_from_u(double u, std::size_t n_negative, std::size_t n_positive);

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
double auroc(std::span<const double> negative_scores, std::span<const double> positive_scores);

struct WerOutcome {
  std::size_t errors = 0;
  std::size_t ref_len = 0;
  double wer = 0.0;
  bool operator==(const WerOutcome&) const = default;
};

/// Word-level Levenshtein distance with unit costs.
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);
std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

WerOutcome wer(std::span<const std::string> ref_tokens, std::span<const std::string> hyp_tokens);
WerOutcome wer(std::span<const int> ref_tokens, std::span<const int> hyp_tokens);

/// Length-weighted WER: total errors over total reference words.
double corpus_wer(std::span<const WerOutcome> outcomes);

}  // namespace nap::metrics
