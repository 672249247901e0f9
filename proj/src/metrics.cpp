#include "nap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nap/error.hpp"

namespace nap::metrics {

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double r = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

namespace {

double correlation(std::span<const double> a, std::span<const double> b, const char* zero_msg) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw Error(zero_msg);
  const double r = sab / (std::sqrt(saa) * std::sqrt(sbb));
  return std::clamp(r, -1.0, 1.0);
}

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("length mismatch");
  if (a.size() < 2) throw Error("need at least two values");
  for (double v : a) require(std::isfinite(v), "non-finite input");
  for (double v : b) require(std::isfinite(v), "non-finite input");
}

}  // namespace

double spearman_exact(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const auto ra = midranks(a);
  const auto rb = midranks(b);
  return correlation(ra, rb, "zero rank variance");
}

double pearson_exact(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  return correlation(a, b, "zero variance");
}

double mann_whitney_u(std::span<const double> negative_scores,
                      std::span<const double> positive_scores) {
  if (negative_scores.empty() || positive_scores.empty()) throw Error("empty score set");
  std::vector<double> pooled;
  pooled.reserve(negative_scores.size() + positive_scores.size());
  pooled.insert(pooled.end(), negative_scores.begin(), negative_scores.end());
  pooled.insert(pooled.end(), positive_scores.begin(), positive_scores.end());
  for (double v : pooled) require(!std::isnan(v), "NaN score");
  const auto ranks = midranks(pooled);
  double rank_sum = 0.0;
  for (std::size_t i = negative_scores.size(); i < pooled.size(); ++i) rank_sum += ranks[i];
  const double np = static_cast<double>(positive_scores.size());
  return rank_sum - np * (np + 1.0) / 2.0;
}

double auroc_from_u(double u, std::size_t n_negative, std::size_t n_positive) {
  // U is a multiple of 1/2 and both counts are integers, so u and pairs are
  // exact and the quotient is the correctly rounded AUROC.
  return u / (static_cast<double>(n_negative) * static_cast<double>(n_positive));
}

double auroc(std::span<const double> negative_scores, std::span<const double> positive_scores) {
  const double u = mann_whitney_u(negative_scores, positive_scores);
  return auroc_from_u(u, negative_scores.size(), positive_scores.size());
}

namespace {

template <typename T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
  // Two-row DP over a (rows) and b (columns).
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <typename T>
WerOutcome wer_impl(std::span<const T> ref, std::span<const T> hyp) {
  if (ref.empty()) throw Error("empty reference");
  WerOutcome out;
  out.errors = levenshtein(ref, hyp);
  out.ref_len = ref.size();
  out.wer = static_cast<double>(out.errors) / static_cast<double>(out.ref_len);
  return out;
}

}  // namespace

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  return levenshtein(a, b);
}
std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  return levenshtein(a, b);
}

WerOutcome wer(std::span<const std::string> ref_tokens, std::span<const std::string> hyp_tokens) {
  return wer_impl(ref_tokens, hyp_tokens);
}
WerOutcome wer(std::span<const int> ref_tokens, std::span<const int> hyp_tokens) {
  return wer_impl(ref_tokens, hyp_tokens);
}

double corpus_wer(std::span<const WerOutcome> outcomes) {
  if (outcomes.empty()) throw Error("empty outcome list");
  std::size_t errors = 0, words = 0;
  for (const auto& o : outcomes) {
    errors += o.errors;
    words += o.ref_len;
  }
  require(words > 0, "zero reference words");
  return static_cast<double>(errors) / static_cast<double>(words);
}

}  // namespace nap::metrics
