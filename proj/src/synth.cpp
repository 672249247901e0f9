#include "nap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "nap/error.hpp"
#include "nap/metrics.hpp"

namespace nap::synth {

namespace {

constexpr double kPositionScale = 0.25;
constexpr double kZeroTemperature = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform in [-1, 1) determined by the key tuple.
double hashed_uniform(std::uint64_t seed, std::uint64_t tag, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ tag);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  std::vector<double> p(logits.size());
  double mx = -INFINITY;
  for (double v : logits) mx = std::max(mx, v / temperature);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

int sample_categorical(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double c = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    c += probs[i];
    if (r < c) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

std::span<const double> logits_row(const std::vector<double>& table, int V, int source, int prev) {
  const auto Vs = static_cast<std::size_t>(V);
  return {table.data() + (static_cast<std::size_t>(source) * Vs + static_cast<std::size_t>(prev)) * Vs, Vs};
}

// Free-running decode at `temperature`; the zero-temperature limit is greedy.
std::vector<int> decode(const std::vector<double>& table, int V, std::span<const int> source,
                        double temperature, std::mt19937_64& rng) {
  std::vector<int> out;
  out.reserve(source.size());
  int prev = 0;
  for (int s : source) {
    const auto row = logits_row(table, V, s, prev);
    const int tok = temperature <= kZeroTemperature ? argmax(row)
                                                    : sample_categorical(softmax(row, temperature), rng);
    out.push_back(tok);
    prev = tok;
  }
  return out;
}

uncertainty::TokenPosterior teacher_forced(const std::vector<double>& table, int V,
                                           std::span<const int> source,
                                           const std::vector<int>& reference, double temperature) {
  uncertainty::TokenPosterior tp;
  tp.probs = Matrix(source.size(), static_cast<std::size_t>(V));
  tp.ref_ids = reference;
  int prev = 0;
  for (std::size_t l = 0; l < source.size(); ++l) {
    const auto p = softmax(logits_row(table, V, source[l], prev), temperature);
    std::copy(p.begin(), p.end(), tp.probs.row(l).begin());
    prev = reference[l];
  }
  return tp;
}

SyntheticExample generate_one(const TeacherSpec& teacher,
                              const std::vector<std::vector<double>>& members,
                              const FrozenEncoder& encoder, const CorpusSpec& spec,
                              const std::vector<double>& unigram_cdf, std::size_t index) {
  const int V = teacher.vocab_size;
  auto rng = stream(spec.seed, index, 0);
  SyntheticExample ex;

  std::uniform_int_distribution<std::size_t> len_dist(spec.min_len, spec.max_len);
  const std::size_t L = len_dist(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ex.source.resize(L);
  for (auto& tok : ex.source) {
    const double r = u(rng);
    tok = static_cast<int>(std::upper_bound(unigram_cdf.begin(), unigram_cdf.end(), r) - unigram_cdf.begin());
    tok = std::min(tok, V - 1);
  }

  // Gold reference: greedy decode of the unperturbed teacher.
  ex.reference = decode(teacher.logits, V, ex.source, 0.0, rng);

  const double T = spec.teacher_temperature > 0.0 ? spec.teacher_temperature : teacher.temperature;
  ex.base = teacher_forced(teacher.logits, V, ex.source, ex.reference, T);
  ex.ensemble.members.reserve(members.size());
  for (const auto& m : members) {
    ex.ensemble.members.push_back(teacher_forced(m, V, ex.source, ex.reference, T));
  }

  auto rng_small = stream(spec.seed, index, 1);
  auto rng_large = stream(spec.seed, index, 2);
  ex.hyp_small = decode(teacher.logits, V, ex.source, spec.temperature_small, rng_small);
  ex.hyp_large = decode(teacher.logits, V, ex.source, spec.temperature_large, rng_large);
  const auto w_small = metrics::wer(std::span<const int>(ex.reference), std::span<const int>(ex.hyp_small));
  const auto w_large = metrics::wer(std::span<const int>(ex.reference), std::span<const int>(ex.hyp_large));

  ScoreRecord& r = ex.record;
  char id[64];
  std::snprintf(id, sizeof(id), "%s-%06zu", spec.name.c_str(), index);
  r.id = id;
  r.domain = spec.domain;
  if (spec.splits.total() == 0 || index >= spec.splits.train + spec.splits.validation) {
    r.split = Split::test;
  } else {
    r.split = index < spec.splits.train ? Split::train : Split::validation;
  }
  r.features = encoder.encode(ex.source);

  const double sim_small = std::exp(-w_small.wer);
  const double sim_large = std::exp(-w_large.wer);
  r.targets = {
      {"confidence", uncertainty::sequence_confidence(ex.base)},
      {"entropy", uncertainty::sequence_entropy(ex.base)},
      {"mi", uncertainty::ensemble_mutual_information(ex.ensemble)},
      {"aleatoric", uncertainty::aleatoric_score(ex.ensemble)},
      {"similarity", sim_large},
      {"wer", w_large.wer},
      {"errors", static_cast<double>(w_large.errors)},
      {"ref_len", static_cast<double>(w_large.ref_len)},
      {"similarity_small", sim_small},
      {"similarity_large", sim_large},
      {"similarity_diff", sim_large - sim_small},
      {"wer_small", w_small.wer},
      {"wer_large", w_large.wer},
      {"errors_small", static_cast<double>(w_small.errors)},
      {"errors_large", static_cast<double>(w_large.errors)},
  };
  r.times.small = spec.times.small * (1.0 + static_cast<double>(ex.hyp_small.size()));
  r.times.large = spec.times.large * (1.0 + static_cast<double>(ex.hyp_large.size()));
  r.times.proxy = spec.times.proxy * (1.0 + static_cast<double>(L));
  return ex;
}

std::vector<double> unigram_cdf(const CorpusSpec& spec) {
  std::vector<double> cdf(spec.unigram.size());
  std::partial_sum(spec.unigram.begin(), spec.unigram.end(), cdf.begin());
  return cdf;
}

}  // namespace

void TeacherSpec::validate() const {
  require(vocab_size >= 2, "vocab_size must be >= 2");
  const auto V = static_cast<std::size_t>(vocab_size);
  require(logits.size() == V * V * V, "teacher logits must be V x V x V");
  require(temperature > 0.0, "temperature must be > 0");
  for (double v : logits) require(std::isfinite(v), "teacher logits must be finite");
}

TeacherSpec make_teacher(const TeacherConfig& c) {
  require(c.vocab_size >= 2, "vocab_size must be >= 2");
  require(c.temperature > 0.0, "temperature must be > 0");
  require(c.sharpness_min <= c.sharpness_max, "sharpness range is empty");
  require(c.disagreement_min <= c.disagreement_max, "disagreement range is empty");
  const auto V = static_cast<std::size_t>(c.vocab_size);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TeacherSpec t;
  t.vocab_size = c.vocab_size;
  t.temperature = c.temperature;
  t.seed = c.seed;
  t.sharpness.resize(V);
  t.disagreement.resize(V);
  for (std::size_t s = 0; s < V; ++s) {
    t.sharpness[s] = c.sharpness_min + (c.sharpness_max - c.sharpness_min) * unit(rng);
    t.disagreement[s] = c.disagreement_min + (c.disagreement_max - c.disagreement_min) * unit(rng);
  }
  Matrix source_part(V, V), bigram_part(V, V);
  for (double& v : source_part.data()) v = normal(rng);
  for (double& v : bigram_part.data()) v = normal(rng);
  t.logits.resize(V * V * V);
  for (std::size_t s = 0; s < V; ++s) {
    for (std::size_t p = 0; p < V; ++p) {
      for (std::size_t n = 0; n < V; ++n) {
        t.logits[(s * V + p) * V + n] = t.sharpness[s] * source_part(s, n) + c.bigram_weight * bigram_part(p, n);
      }
    }
  }
  return t;
}

FrozenEncoder::FrozenEncoder(std::size_t width, int depth, std::uint64_t seed)
    : width_(width), depth_(depth), seed_(seed) {
  require(width >= 1, "encoder width must be >= 1");
  require(depth >= 1, "encoder depth must be >= 1");
  const double scale = std::sqrt(3.0 / static_cast<double>(width));
  for (int j = 0; j < depth; ++j) {
    Matrix w(width, width);
    std::vector<double> b(width);
    for (std::size_t o = 0; o < width; ++o) {
      for (std::size_t i = 0; i < width; ++i) {
        w(o, i) = scale * hashed_uniform(seed, 100 + static_cast<std::uint64_t>(j), o, i);
      }
      b[o] = 0.1 * hashed_uniform(seed, 200 + static_cast<std::uint64_t>(j), o, 0);
    }
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

head::FeatureSequence FrozenEncoder::encode(std::span<const int> tokens) const {
  require(!tokens.empty(), "cannot encode an empty sequence");
  const double unit = std::sqrt(3.0);
  Matrix x(tokens.size(), width_);
  for (std::size_t l = 0; l < tokens.size(); ++l) {
    for (std::size_t k = 0; k < width_; ++k) {
      x(l, k) = unit * hashed_uniform(seed_, 1, static_cast<std::uint64_t>(tokens[l]), k) +
                kPositionScale * unit * hashed_uniform(seed_, 2, l, k);
    }
  }
  std::vector<double> z(width_);
  for (int j = 0; j < depth_; ++j) {
    for (std::size_t l = 0; l < tokens.size(); ++l) {
      auto row = x.row(l);
      for (std::size_t o = 0; o < width_; ++o) {
        const auto w = weights_[j].row(o);
        double s = biases_[j][o];
        for (std::size_t i = 0; i < width_; ++i) s += w[i] * row[i];
        z[o] = std::tanh(s);
      }
      for (std::size_t o = 0; o < width_; ++o) row[o] += z[o];
    }
  }
  return head::FeatureSequence::dense(std::move(x));
}

head::FeatureSequence frozen_encoder(std::span<const int> tokens, int depth, std::size_t width,
                                     std::uint64_t seed) {
  return FrozenEncoder(width, depth, seed).encode(tokens);
}

void CorpusSpec::validate(int vocab_size) const {
  if (n_examples == 0) throw Error("empty corpus spec");
  require(min_len >= 2, "min_len must be >= 2");
  require(min_len <= max_len, "min_len must not exceed max_len");
  require(unigram.size() == static_cast<std::size_t>(vocab_size), "unigram must have vocab_size entries");
  double s = 0.0;
  for (double p : unigram) {
    require(p >= 0.0 && std::isfinite(p), "invalid distribution");
    s += p;
  }
  require(std::abs(s - 1.0) <= 1e-9, "invalid distribution");
  require(temperature_small >= 0.0 && temperature_large >= 0.0, "temperatures must be >= 0");
  require(teacher_temperature >= 0.0, "teacher temperature must be >= 0");
  require(ensemble_size >= 2, "ensemble_size must be >= 2");
  require(member_sigma >= 0.0, "member_sigma must be >= 0");
  require(splits.total() == 0 || splits.total() == n_examples, "split counts must sum to n_examples");
}

std::vector<double> tilted_unigram(const TeacherSpec& teacher, double zipf_exponent,
                                   double tilt_flatness, double tilt_disagreement) {
  const auto V = static_cast<std::size_t>(teacher.vocab_size);
  auto standardise = [](std::vector<double> v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    const double sd = std::sqrt(var / n);
    for (double& x : v) x = sd > 0.0 ? (x - m) / sd : 0.0;
    return v;
  };
  std::vector<double> flat(V);
  for (std::size_t s = 0; s < V; ++s) flat[s] = -teacher.sharpness[s];
  flat = standardise(flat);
  const auto dis = standardise(teacher.disagreement);
  std::vector<double> p(V);
  double total = 0.0;
  for (std::size_t s = 0; s < V; ++s) {
    p[s] = std::pow(1.0 + static_cast<double>(s), -zipf_exponent) *
           std::exp(tilt_flatness * flat[s] + tilt_disagreement * dis[s]);
    total += p[s];
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<std::vector<double>> member_logits(const TeacherSpec& teacher, std::size_t ensemble_size,
                                               double sigma) {
  const auto V = static_cast<std::size_t>(teacher.vocab_size);
  std::vector<std::vector<double>> out;
  out.reserve(ensemble_size);
  for (std::size_t k = 0; k < ensemble_size; ++k) {
    // Noise depends on the teacher seed and member index only, so corpora
    // generated from one teacher share the same ensemble.
    std::mt19937_64 rng = stream(teacher.seed, k, 7);
    std::normal_distribution<double> normal(0.0, 1.0);
    // The perturbation acts on the source-conditioned logits and is shared
    // across previous tokens.
    std::vector<double> m = teacher.logits;
    std::vector<double> noise(V);
    for (std::size_t s = 0; s < V; ++s) {
      const double scale = sigma * teacher.disagreement[s];
      for (double& z : noise) z = scale * normal(rng);
      for (std::size_t p = 0; p < V; ++p) {
        for (std::size_t n = 0; n < V; ++n) m[(s * V + p) * V + n] += noise[n];
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<SyntheticExample> gen_examples(const TeacherSpec& teacher, const FrozenEncoder& encoder,
                                           const CorpusSpec& spec) {
  teacher.validate();
  spec.validate(teacher.vocab_size);
  const auto members = member_logits(teacher, spec.ensemble_size, spec.member_sigma);
  const auto cdf = unigram_cdf(spec);
  std::vector<SyntheticExample> out(spec.n_examples);
  const auto n = static_cast<std::ptrdiff_t>(spec.n_examples);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = generate_one(teacher, members, encoder, spec, cdf, static_cast<std::size_t>(i));
  }
  return out;
}

std::vector<ScoreRecord> gen_corpus(const TeacherSpec& teacher, const FrozenEncoder& encoder,
                                    const CorpusSpec& spec) {
  teacher.validate();
  spec.validate(teacher.vocab_size);
  const auto members = member_logits(teacher, spec.ensemble_size, spec.member_sigma);
  const auto cdf = unigram_cdf(spec);
  std::vector<ScoreRecord> out(spec.n_examples);
  const auto n = static_cast<std::ptrdiff_t>(spec.n_examples);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = std::move(generate_one(teacher, members, encoder, spec, cdf, static_cast<std::size_t>(i)).record);
  }
  return out;
}

std::vector<ScoreRecord> gen_corpus_serial(const TeacherSpec& teacher, const FrozenEncoder& encoder,
                                           const CorpusSpec& spec) {
  teacher.validate();
  spec.validate(teacher.vocab_size);
  const auto members = member_logits(teacher, spec.ensemble_size, spec.member_sigma);
  const auto cdf = unigram_cdf(spec);
  std::vector<ScoreRecord> out;
  out.reserve(spec.n_examples);
  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    out.push_back(std::move(generate_one(teacher, members, encoder, spec, cdf, i).record));
  }
  return out;
}

OracleScores oracle_scores(const SyntheticExample& ex) {
  OracleScores o;
  const Matrix& p = ex.base.probs;
  const std::size_t L = p.rows(), V = p.cols();
  double log_lik = 0.0, ent = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    log_lik += std::log(std::max(p(l, static_cast<std::size_t>(ex.base.ref_ids[l])), 1e-12));
    for (std::size_t v = 0; v < V; ++v) {
      if (p(l, v) > 0.0) ent += p(l, v) * std::log(1.0 / p(l, v));
    }
  }
  o.confidence = std::exp(log_lik / static_cast<double>(L));
  o.entropy = ent / static_cast<double>(L);

  // MI as the average KL divergence of each member from the ensemble mean.
  const auto& ms = ex.ensemble.members;
  const double K = static_cast<double>(ms.size());
  double mi = 0.0, al = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t v = 0; v < V; ++v) {
      double mean = 0.0;
      for (const auto& m : ms) mean += m.probs(l, v);
      mean /= K;
      for (const auto& m : ms) {
        const double q = m.probs(l, v);
        if (q > 0.0) {
          mi += q * std::log(q / mean) / K;
          al -= q * std::log(q) / K;
        }
      }
    }
  }
  o.mi = std::max(mi / static_cast<double>(L), 0.0);
  o.aleatoric = al / static_cast<double>(L);

  // Full-table edit distance.
  auto full_table = [](const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
      for (std::size_t j = 1; j <= b.size(); ++j) {
        d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
      }
    }
    return d[a.size()][b.size()];
  };
  o.errors_small = full_table(ex.reference, ex.hyp_small);
  o.errors_large = full_table(ex.reference, ex.hyp_large);
  return o;
}

}  // namespace nap::synth
