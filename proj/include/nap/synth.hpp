#pragma once

// Synthetic autoregressive teachers with exactly computable posteriors.
//
// The teacher is a bigram channel: the next-token logits depend on the
// aligned source token s and the previous output token only,
//
//   logits[s][prev][next] = sharpness[s] * A[s][next] + bigram_weight * B[prev][next]
//
// so every teacher-forced posterior is a table lookup. Ensemble members add
// Gaussian noise scaled by sigma * disagreement[s] to the source-conditioned
// part of the logits. The small and
// large "models" decode the same weights at different temperatures.

#include <cstdint>
#include <string>
#include <vector>

#include "nap/head.hpp"
#include "nap/record.hpp"
#include "nap/uncertainty.hpp"

namespace nap::synth {

struct TeacherConfig {
  int vocab_size = 16;
  double temperature = 1.0;
  double sharpness_min = 0.5;
  double sharpness_max = 4.0;
  double disagreement_min = 0.0;
  double disagreement_max = 2.0;
  double bigram_weight = 0.3;
  std::uint64_t seed = 1;
};

struct TeacherSpec {
  int vocab_size = 0;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> logits;        // V*V*V, index (s*V + prev)*V + next
  std::vector<double> sharpness;     // per source token
  std::vector<double> disagreement;  // per source token

  std::span<const double> row(int source, int prev) const {
    const auto V = static_cast<std::size_t>(vocab_size);
    return {logits.data() + (static_cast<std::size_t>(source) * V + static_cast<std::size_t>(prev)) * V, V};
  }
  void validate() const;
};

TeacherSpec make_teacher(const TeacherConfig& config);

struct EncoderConfig {
  std::size_t width = 64;
  int depth = 2;
  std::uint64_t seed = 2;
};

/// Fixed random encoder: hashed token + position embeddings followed by
/// `depth` residual tanh layers. Layer j's weights depend only on (seed, j),
/// so shallower encoders compute a prefix of deeper ones.
class FrozenEncoder {
 public:
  FrozenEncoder(std::size_t width, int depth, std::uint64_t seed);
  explicit FrozenEncoder(const EncoderConfig& c) : FrozenEncoder(c.width, c.depth, c.seed) {}

  head::FeatureSequence encode(std::span<const int> tokens) const;
  std::size_t width() const { return width_; }
  int depth() const { return depth_; }

 private:
  std::size_t width_;
  int depth_;
  std::uint64_t seed_;
  std::vector<Matrix> weights_;
  std::vector<std::vector<double>> biases_;
};

head::FeatureSequence frozen_encoder(std::span<const int> tokens, int depth, std::size_t width,
                                     std::uint64_t seed);

struct TimeModel {
  double small = 1.0;
  double large = 4.0;
  double proxy = 0.05;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + validation + test; }
};

struct CorpusSpec {
  std::string name = "corpus";
  std::string domain = "id";
  std::size_t n_examples = 0;
  std::size_t min_len = 8;
  std::size_t max_len = 24;
  std::vector<double> unigram;       // source token distribution over V
  double teacher_temperature = 0.0;  // 0 = use the teacher's temperature
  double temperature_small = 1.0;
  double temperature_large = 0.5;
  std::size_t ensemble_size = 5;
  double member_sigma = 0.5;
  std::uint64_t seed = 0;
  SplitCounts splits;  // all test when empty
  TimeModel times;

  void validate(int vocab_size) const;
};

/// Zipf-shaped unigram, exponentially tilted toward flat (low sharpness) and
/// high-disagreement source tokens.
std::vector<double> tilted_unigram(const TeacherSpec& teacher, double zipf_exponent,
                                   double tilt_flatness, double tilt_disagreement);

/// A generated record with the intermediate sequences and posteriors kept.
struct SyntheticExample {
  ScoreRecord record;
  std::vector<int> source;
  std::vector<int> reference;
  std::vector<int> hyp_small;
  std::vector<int> hyp_large;
  uncertainty::TokenPosterior base;
  uncertainty::EnsemblePosterior ensemble;
};

/// Perturbed logits of every ensemble member for a given sigma.
std::vector<std::vector<double>> member_logits(const TeacherSpec& teacher, std::size_t ensemble_size,
                                               double sigma);

std::vector<SyntheticExample> gen_examples(const TeacherSpec& teacher, const FrozenEncoder& encoder,
                                           const CorpusSpec& spec);

/// OpenMP over records; each record draws from its own (seed, index) stream.
std::vector<ScoreRecord> gen_corpus(const TeacherSpec& teacher, const FrozenEncoder& encoder,
                                    const CorpusSpec& spec);

/// Single-threaded reference for gen_corpus.
std::vector<ScoreRecord> gen_corpus_serial(const TeacherSpec& teacher, const FrozenEncoder& encoder,
                                           const CorpusSpec& spec);

struct OracleScores {
  double confidence = 0.0;
  double entropy = 0.0;
  double mi = 0.0;
  double aleatoric = 0.0;
  std::size_t errors_small = 0;
  std::size_t errors_large = 0;
};

/// Recomputes the stored scores of `example` through a separate, plain code
/// path (MI as the mean member KL to the ensemble mean, full-table edit
/// distance) for cross-checking the generator.
OracleScores oracle_scores(const SyntheticExample& example);

}  // namespace nap::synth
