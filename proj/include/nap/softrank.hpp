#pragma once

// Differentiable ranking by Euclidean projection onto the permutahedron.
//
// The projection of theta = scores / epsilon onto the permutahedron of
// (1, ..., n) reduces to an isotonic regression: sort theta descending,
// fit a non-increasing sequence to theta_sorted - (n, n-1, ..., 1) with
// pool-adjacent-violators, and subtract the fit. Ranks come out ascending:
// the smallest score receives the smallest soft rank.

#include <cstddef>
#include <span>
#include <vector>

namespace nap::softrank {

/// Contiguous run [begin, end) of sorted positions pooled by PAV.
struct Block {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Block&) const = default;
};

struct IsotonicFit {
  std::vector<double> values;
  std::vector<Block> blocks;
};

/// Least-squares fit to y under a non-increasing constraint.
/// Each block takes the mean of y over the block.
IsotonicFit pav_isotonic_fit(std::span<const double> y);

/// Convenience wrapper returning only the fitted values.
std::vector<double> pav_isotonic(std::span<const double> y);

struct SoftRankOutput {
  std::vector<double> ranks;       // input order
  std::vector<Block> blocks;       // over sorted positions
  std::vector<std::size_t> sort_perm;  // sorted position -> input index (descending scores)
  double epsilon = 1.0;
};

SoftRankOutput soft_rank(std::span<const double> scores, double epsilon);

/// Transpose-Jacobian product of soft_rank evaluated at `output`.
///
/// In sorted coordinates the Jacobian of the projection is (I - B) / epsilon,
/// where B averages within each PAV block; singleton blocks therefore carry
/// zero gradient (a vertex of the permutahedron is locally constant).
std::vector<double> soft_rank_vjp(const SoftRankOutput& output, std::span<const double> upstream);

}  // namespace nap::softrank
