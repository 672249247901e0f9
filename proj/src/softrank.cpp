#include "nap/softrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nap/error.hpp"

namespace nap::softrank {

IsotonicFit pav_isotonic_fit(std::span<const double> y) {
  require(!y.empty(), "empty input");
  for (double v : y) require(std::isfinite(v), "non-finite input");

  // Stack of pooled blocks; a new point is merged backwards while it would
  // violate the non-increasing order.
  struct Pool {
    std::size_t begin;
    std::size_t end;
    double sum;
    double mean() const { return sum / static_cast<double>(end - begin); }
  };
  std::vector<Pool> stack;
  stack.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    Pool cur{i, i + 1, y[i]};
    while (!stack.empty() && stack.back().mean() <= cur.mean()) {
      const Pool& prev = stack.back();
      cur = Pool{prev.begin, cur.end, prev.sum + cur.sum};
      stack.pop_back();
    }
    stack.push_back(cur);
  }

  IsotonicFit fit;
  fit.values.resize(y.size());
  fit.blocks.reserve(stack.size());
  for (const Pool& p : stack) {
    if (p.end - p.begin == 1) {
      fit.values[p.begin] = y[p.begin];
    } else {
      // Recompute the mean from scratch so the value does not depend on the
      // merge history.
      double s = 0.0;
      for (std::size_t j = p.begin; j < p.end; ++j) s += y[j];
      const double m = s / static_cast<double>(p.end - p.begin);
      std::fill(fit.values.begin() + p.begin, fit.values.begin() + p.end, m);
    }
    fit.blocks.push_back({p.begin, p.end});
  }
  return fit;
}

std::vector<double> pav_isotonic(std::span<const double> y) {
  return pav_isotonic_fit(y).values;
}

SoftRankOutput soft_rank(std::span<const double> scores, double epsilon) {
  const std::size_t n = scores.size();
  if (n < 2) throw Error("batch too small for ranking");
  require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
  for (double v : scores) require(std::isfinite(v), "non-finite input");

  SoftRankOutput out;
  out.epsilon = epsilon;
  out.sort_perm.resize(n);
  std::iota(out.sort_perm.begin(), out.sort_perm.end(), std::size_t{0});
  std::stable_sort(out.sort_perm.begin(), out.sort_perm.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<double> theta(n);
  std::vector<double> y(n);
  for (std::size_t j = 0; j < n; ++j) {
    theta[j] = scores[out.sort_perm[j]] / epsilon;
    y[j] = theta[j] - static_cast<double>(n - j);
  }
  IsotonicFit fit = pav_isotonic_fit(y);
  out.blocks = std::move(fit.blocks);

  // primal = theta - dual, written per block as (theta_j - mean theta) + mean w
  // so that singleton blocks land exactly on the integer ranks.
  out.ranks.assign(n, 0.0);
  for (const Block& b : out.blocks) {
    const std::size_t size = b.size();
    const double w_mean =
        static_cast<double>(n) - static_cast<double>(b.begin + b.end - 1) / 2.0;
    if (size == 1) {
      out.ranks[out.sort_perm[b.begin]] = w_mean;
      continue;
    }
    double theta_sum = 0.0;
    for (std::size_t j = b.begin; j < b.end; ++j) theta_sum += theta[j];
    const double theta_mean = theta_sum / static_cast<double>(size);
    for (std::size_t j = b.begin; j < b.end; ++j) {
      out.ranks[out.sort_perm[j]] = (theta[j] - theta_mean) + w_mean;
    }
  }
  return out;
}

std::vector<double> soft_rank_vjp(const SoftRankOutput& output, std::span<const double> upstream) {
  const std::size_t n = output.ranks.size();
  if (upstream.size() != n) throw Error("upstream length mismatch");
  std::vector<double> grad(n, 0.0);
  for (const Block& b : output.blocks) {
    if (b.size() == 1) continue;
    double s = 0.0;
    for (std::size_t j = b.begin; j < b.end; ++j) s += upstream[output.sort_perm[j]];
    const double mean = s / static_cast<double>(b.size());
    for (std::size_t j = b.begin; j < b.end; ++j) {
      const std::size_t i = output.sort_perm[j];
      grad[i] = (upstream[i] - mean) / output.epsilon;
    }
  }
  return grad;
}

}  // namespace nap::softrank
