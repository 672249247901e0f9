#include "nap/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "nap/error.hpp"

namespace nap::uncertainty {

void TokenPosterior::validate() const {
  require(probs.rows() >= 1, "posterior needs at least one position");
  require(probs.cols() >= 2, "posterior needs a vocabulary of at least two");
  require(ref_ids.size() == probs.rows(), "ref_ids length does not match posterior rows");
  for (std::size_t l = 0; l < probs.rows(); ++l) {
    double s = 0.0;
    for (double p : probs.row(l)) {
      require(p >= 0.0 && std::isfinite(p), "negative or non-finite probability");
      s += p;
    }
    require(std::abs(s - 1.0) <= 1e-6, "posterior row does not sum to one");
    require(ref_ids[l] >= 0 && static_cast<std::size_t>(ref_ids[l]) < probs.cols(),
            "reference id out of range");
  }
}

void EnsemblePosterior::validate() const {
  require(members.size() >= 2, "ensemble needs at least two members");
  for (const auto& m : members) {
    m.validate();
    require(m.probs.rows() == members[0].probs.rows() && m.probs.cols() == members[0].probs.cols(),
            "ensemble member shapes differ");
    require(m.ref_ids == members[0].ref_ids, "ensemble members disagree on reference");
  }
}

double categorical_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double sequence_confidence(const TokenPosterior& tp) {
  double log_sum = 0.0;
  for (std::size_t l = 0; l < tp.length(); ++l) {
    log_sum += std::log(std::max(tp.probs(l, static_cast<std::size_t>(tp.ref_ids[l])), kProbFloor));
  }
  return std::exp(log_sum / static_cast<double>(tp.length()));
}

double sequence_entropy(const TokenPosterior& tp) {
  double h = 0.0;
  for (std::size_t l = 0; l < tp.length(); ++l) h += categorical_entropy(tp.probs.row(l));
  return h / static_cast<double>(tp.length());
}

namespace {

struct Decomposition {
  double total = 0.0;
  double aleatoric = 0.0;
  double mi = 0.0;
};

Decomposition decompose(const EnsemblePosterior& ep) {
  require(ep.members.size() >= 2, "ensemble needs at least two members");
  const std::size_t L = ep.members[0].length();
  const std::size_t V = ep.members[0].vocab();
  const double K = static_cast<double>(ep.members.size());
  std::vector<double> mean(V);
  Decomposition d;
  for (std::size_t l = 0; l < L; ++l) {
    std::fill(mean.begin(), mean.end(), 0.0);
    double expected = 0.0;
    for (const auto& m : ep.members) {
      const auto row = m.probs.row(l);
      for (std::size_t v = 0; v < V; ++v) mean[v] += row[v];
      expected += categorical_entropy(row);
    }
    for (double& v : mean) v /= K;
    expected /= K;
    // Identical members must give exactly zero disagreement; the averaged row
    // can differ from the members by an ulp otherwise.
    const auto first = ep.members[0].probs.row(l);
    const bool agree = std::all_of(ep.members.begin() + 1, ep.members.end(), [&](const auto& m) {
      return std::equal(first.begin(), first.end(), m.probs.row(l).begin());
    });
    if (agree) {
      const double h = categorical_entropy(first);
      d.total += h;
      d.aleatoric += h;
      continue;
    }
    const double total = categorical_entropy(mean);
    d.total += total;
    d.aleatoric += expected;
    d.mi += std::max(total - expected, 0.0);
  }
  const double Ld = static_cast<double>(L);
  d.total /= Ld;
  d.aleatoric /= Ld;
  d.mi /= Ld;
  return d;
}

}  // namespace

double ensemble_mutual_information(const EnsemblePosterior& ep) { return decompose(ep).mi; }

double aleatoric_score(const EnsemblePosterior& ep) { return decompose(ep).aleatoric; }

double total_uncertainty(const EnsemblePosterior& ep) { return decompose(ep).total; }

}  // namespace nap::uncertainty
