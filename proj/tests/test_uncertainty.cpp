#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "nap/error.hpp"
#include "nap/uncertainty.hpp"
#include "support.hpp"

using namespace nap;
using namespace nap::uncertainty;

namespace {

TokenPosterior rows(std::initializer_list<std::vector<double>> r, std::vector<int> ids) {
  TokenPosterior tp;
  tp.probs = Matrix(r.size(), r.begin()->size());
  std::size_t l = 0;
  for (const auto& row : r) {
    for (std::size_t v = 0; v < row.size(); ++v) tp.probs(l, v) = row[v];
    ++l;
  }
  tp.ref_ids = std::move(ids);
  return tp;
}

TokenPosterior uniform(std::size_t L, std::size_t V) {
  TokenPosterior tp;
  tp.probs = Matrix(L, V);
  tp.probs.fill(1.0 / static_cast<double>(V));
  tp.ref_ids.assign(L, 0);
  return tp;
}

// Mutual information written as the mean KL divergence of each member from
// the ensemble mean, token-averaged.
double mi_oracle(const EnsemblePosterior& ep) {
  const auto& m0 = ep.members.front();
  const double K = static_cast<double>(ep.members.size());
  double total = 0.0;
  for (std::size_t l = 0; l < m0.length(); ++l) {
    std::vector<double> mean(m0.vocab(), 0.0);
    for (const auto& m : ep.members) {
      for (std::size_t v = 0; v < m0.vocab(); ++v) mean[v] += m.probs(l, v) / K;
    }
    for (const auto& m : ep.members) {
      for (std::size_t v = 0; v < m0.vocab(); ++v) {
        const double p = m.probs(l, v);
        if (p > 0.0) total += p * std::log(p / mean[v]) / K;
      }
    }
  }
  return total / static_cast<double>(m0.length());
}

EnsemblePosterior random_ensemble(std::mt19937_64& rng, std::size_t K, std::size_t L, std::size_t V) {
  EnsemblePosterior ep;
  const auto ids = testing::random_posterior(rng, L, V).ref_ids;
  for (std::size_t k = 0; k < K; ++k) {
    ep.members.push_back(testing::random_posterior(rng, L, V));
    ep.members.back().ref_ids = ids;
  }
  return ep;
}

}  // namespace

TEST_SUITE("uncertainty") {

TEST_CASE("confidence") {
  CHECK(sequence_confidence(rows({{0, 1, 0}, {1, 0, 0}}, {1, 0})) == 1.0);
  CHECK(sequence_confidence(uniform(5, 4)) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(sequence_confidence(rows({{0.5, 0.25, 0.25}, {0.25, 0.5, 0.25}, {0.1, 0.4, 0.5}}, {0, 1, 2})) ==
        doctest::Approx(0.5).epsilon(1e-14));
  // A zero reference probability is floored rather than producing -inf.
  const double floored = sequence_confidence(rows({{1, 0}}, {1}));
  CHECK(floored == doctest::Approx(kProbFloor));
}

TEST_CASE("confidence is equivariant under vocabulary relabelling") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tp = testing::random_posterior(rng, 6, 5);
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    TokenPosterior q = tp;
    for (std::size_t l = 0; l < 6; ++l) {
      for (std::size_t v = 0; v < 5; ++v) q.probs(l, static_cast<std::size_t>(perm[v])) = tp.probs(l, v);
      q.ref_ids[l] = perm[static_cast<std::size_t>(tp.ref_ids[l])];
    }
    CHECK(sequence_confidence(q) == doctest::Approx(sequence_confidence(tp)).epsilon(1e-14));
  }
}

TEST_CASE("entropy") {
  CHECK(sequence_entropy(rows({{0, 1, 0}, {1, 0, 0}}, {1, 0})) == 0.0);
  CHECK(sequence_entropy(uniform(3, 4)) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(sequence_entropy(rows({{0.5, 0.5, 0, 0}}, {0})) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(categorical_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("posterior validation") {
  CHECK_THROWS_AS(rows({{0.5, 0.2}}, {0}).validate(), Error);
  CHECK_THROWS_AS(rows({{0.5, 0.5}}, {2}).validate(), Error);
  CHECK_THROWS_AS(rows({{1.5, -0.5}}, {0}).validate(), Error);
  CHECK_NOTHROW(rows({{0.5, 0.5}}, {1}).validate());
  EnsemblePosterior single{{uniform(2, 3)}};
  CHECK_THROWS_AS(single.validate(), Error);
  EnsemblePosterior mismatched{{uniform(2, 3), uniform(3, 3)}};
  CHECK_THROWS_AS(mismatched.validate(), Error);
}

TEST_CASE("mutual information hand examples") {
  EnsemblePosterior same{{uniform(2, 3), uniform(2, 3), uniform(2, 3)}};
  CHECK(ensemble_mutual_information(same) == 0.0);
  CHECK(aleatoric_score(same) == doctest::Approx(std::log(3.0)));

  EnsemblePosterior opposite{{rows({{1, 0}}, {0}), rows({{0, 1}}, {0})}};
  CHECK(ensemble_mutual_information(opposite) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(aleatoric_score(opposite) == 0.0);

  EnsemblePosterior onehot{{rows({{0, 1}}, {1}), rows({{0, 1}}, {1})}};
  CHECK(aleatoric_score(onehot) == 0.0);
  CHECK(ensemble_mutual_information(onehot) == 0.0);

  EnsemblePosterior u4{{uniform(1, 4), uniform(1, 4)}};
  CHECK(aleatoric_score(u4) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("random ensembles against the KL form and the decomposition") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ep = random_ensemble(rng, 2 + trial % 5, 1 + trial % 9, 2 + trial % 11);
    const double mi = ensemble_mutual_information(ep);
    const double al = aleatoric_score(ep);
    const double tot = total_uncertainty(ep);
    CHECK(std::abs(mi - mi_oracle(ep)) <= 1e-10);
    CHECK(std::abs(tot - (mi + al)) <= 1e-10);
    CHECK(mi >= 0.0);
    CHECK(mi <= tot + 1e-10);

    // Identical members carry no epistemic uncertainty.
    EnsemblePosterior copies{{ep.members[0], ep.members[0], ep.members[0]}};
    CHECK(ensemble_mutual_information(copies) == 0.0);
    CHECK(aleatoric_score(copies) == doctest::Approx(sequence_entropy(ep.members[0])).epsilon(1e-14));
  }
}

}  // TEST_SUITE
