#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "nap/error.hpp"
#include "nap/jsonl.hpp"
#include "nap/metrics.hpp"
#include "nap/synth.hpp"

using namespace nap;
using namespace nap::synth;

namespace {

CorpusSpec small_corpus(const TeacherSpec& t, std::size_t n, std::uint64_t seed) {
  CorpusSpec c;
  c.name = "c";
  c.n_examples = n;
  c.min_len = 3;
  c.max_len = 10;
  c.unigram = tilted_unigram(t, 0.5, 0.0, 0.0);
  c.seed = seed;
  return c;
}

double mean_target(const std::vector<ScoreRecord>& rs, const std::string& name) {
  double s = 0.0;
  for (const auto& r : rs) s += r.target(name);
  return s / static_cast<double>(rs.size());
}

}  // namespace

TEST_SUITE("synthkit") {

TEST_CASE("teacher construction") {
  TeacherConfig cfg;
  cfg.vocab_size = 6;
  const auto a = make_teacher(cfg);
  const auto b = make_teacher(cfg);
  CHECK(a.logits == b.logits);
  CHECK(a.logits.size() == 216);
  CHECK_NOTHROW(a.validate());
  cfg.seed = 2;
  CHECK(make_teacher(cfg).logits != a.logits);
  cfg.vocab_size = 1;
  CHECK_THROWS_AS(make_teacher(cfg), Error);
}

TEST_CASE("tilted unigram is a distribution") {
  const auto t = make_teacher(TeacherConfig{});
  for (double tilt : {0.0, 0.5, 2.0}) {
    const auto u = tilted_unigram(t, 0.8, tilt, -tilt);
    double s = 0.0;
    for (double p : u) {
      CHECK(p > 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("corpus spec validation") {
  const auto t = make_teacher(TeacherConfig{});
  auto c = small_corpus(t, 10, 1);
  CHECK_NOTHROW(c.validate(t.vocab_size));
  c.n_examples = 0;
  CHECK_THROWS_WITH_AS(c.validate(t.vocab_size), "empty corpus spec", Error);
  c = small_corpus(t, 10, 1);
  c.unigram[0] += 0.5;
  CHECK_THROWS_AS(c.validate(t.vocab_size), Error);
  c = small_corpus(t, 10, 1);
  c.splits = {5, 2, 2};
  CHECK_THROWS_AS(c.validate(t.vocab_size), Error);
}

TEST_CASE("stored scores agree with the independent recomputation") {
  const auto t = make_teacher(TeacherConfig{});
  const FrozenEncoder enc(16, 2, 3);
  auto spec = small_corpus(t, 200, 7);
  spec.splits = {150, 25, 25};
  const auto ex = gen_examples(t, enc, spec);
  REQUIRE(ex.size() == 200);
  std::size_t n_train = 0;
  for (const auto& e : ex) {
    const auto o = oracle_scores(e);
    const auto& r = e.record;
    CHECK(std::abs(r.target("confidence") - o.confidence) <= 1e-10);
    CHECK(std::abs(r.target("entropy") - o.entropy) <= 1e-10);
    CHECK(std::abs(r.target("mi") - o.mi) <= 1e-10);
    CHECK(std::abs(r.target("aleatoric") - o.aleatoric) <= 1e-10);
    CHECK(r.target("errors_small") == static_cast<double>(o.errors_small));
    CHECK(r.target("errors_large") == static_cast<double>(o.errors_large));
    CHECK(r.target("errors") == r.target("errors_large"));
    CHECK(r.target("ref_len") == static_cast<double>(e.reference.size()));
    CHECK(r.target("similarity_small") == std::exp(-r.target("wer_small")));
    CHECK(r.target("similarity") == r.target("similarity_large"));
    CHECK(r.target("similarity_diff") == r.target("similarity_large") - r.target("similarity_small"));
    CHECK(r.features.length() == e.source.size());
    CHECK(e.ensemble.members.size() == spec.ensemble_size);
    CHECK(r.times.small == spec.times.small * (1.0 + static_cast<double>(e.hyp_small.size())));
    n_train += r.split == Split::train;
  }
  CHECK(n_train == 150);
  CHECK(ex[149].record.split == Split::train);
  CHECK(ex[150].record.split == Split::validation);
  CHECK(ex[175].record.split == Split::test);
}

TEST_CASE("mutual information splits the total") {
  const auto t = make_teacher(TeacherConfig{});
  const FrozenEncoder enc(8, 1, 3);
  for (const auto& e : gen_examples(t, enc, small_corpus(t, 50, 8))) {
    const double total = uncertainty::total_uncertainty(e.ensemble);
    CHECK(std::abs(total - e.record.target("mi") - e.record.target("aleatoric")) <= 1e-10);
  }
}

TEST_CASE("zero member noise gives zero mutual information") {
  const auto t = make_teacher(TeacherConfig{});
  const FrozenEncoder enc(8, 1, 3);
  auto spec = small_corpus(t, 40, 9);
  spec.member_sigma = 0.0;
  for (const auto& r : gen_corpus(t, enc, spec)) CHECK(r.target("mi") == 0.0);
}

TEST_CASE("a one-hot teacher is fully confident") {
  TeacherSpec t;
  t.vocab_size = 4;
  t.logits.assign(64, 0.0);
  t.sharpness.assign(4, 1.0);
  t.disagreement.assign(4, 1.0);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t p = 0; p < 4; ++p) t.logits[(s * 4 + p) * 4 + (s + p) % 4] = 1e4;
  }
  const FrozenEncoder enc(8, 1, 3);
  CorpusSpec spec;
  spec.n_examples = 20;
  spec.min_len = 2;
  spec.max_len = 6;
  spec.unigram.assign(4, 0.25);
  spec.member_sigma = 0.0;
  for (const auto& e : gen_examples(t, enc, spec)) {
    CHECK(e.record.target("confidence") == 1.0);
    CHECK(e.record.target("entropy") == 0.0);
    CHECK(e.record.target("mi") == 0.0);
    CHECK(e.record.target("errors_large") == 0.0);
  }
}

TEST_CASE("generation is reproducible and thread independent") {
  const auto t = make_teacher(TeacherConfig{});
  const FrozenEncoder enc(16, 2, 3);
  const auto spec = small_corpus(t, 300, 12);
  const auto a = gen_corpus(t, enc, spec);
  const auto b = gen_corpus(t, enc, spec);
  const auto s = gen_corpus_serial(t, enc, spec);
  REQUIRE(a.size() == 300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto line = jsonl::record_to_line(a[i]);
    CHECK(line == jsonl::record_to_line(b[i]));
    CHECK(line == jsonl::record_to_line(s[i]));
  }
  auto other = spec;
  other.seed = 13;
  CHECK(jsonl::record_to_line(gen_corpus(t, enc, other)[0]) != jsonl::record_to_line(a[0]));
}

TEST_CASE("encoder") {
  const FrozenEncoder enc(16, 2, 5);
  const std::vector<int> x{1, 2, 3};
  const auto fa = enc.encode(x);
  CHECK(fa.length() == 3);
  CHECK(fa.width() == 16);
  CHECK(fa.features.data() == FrozenEncoder(16, 2, 5).encode(x).features.data());
  CHECK(fa.features.data() != FrozenEncoder(16, 3, 5).encode(x).features.data());
  CHECK(fa.features.data() == frozen_encoder(x, 2, 16, 5).features.data());
  CHECK_THROWS_AS(enc.encode(std::vector<int>{}), Error);

  // Distinct token sequences never share a representation.
  std::mt19937_64 rng(71);
  std::uniform_int_distribution<int> tok(0, 15), len(2, 6);
  std::set<std::vector<double>> seen;
  std::set<std::vector<int>> inputs;
  for (int i = 0; i < 10000; ++i) {
    std::vector<int> s(static_cast<std::size_t>(len(rng)));
    for (int& v : s) v = tok(rng);
    if (!inputs.insert(s).second) continue;
    CHECK(seen.insert(enc.encode(s).features.data()).second);
  }
}

TEST_CASE("distribution shift raises the epistemic score") {
  const auto t = make_teacher(TeacherConfig{});
  const FrozenEncoder enc(8, 1, 3);
  auto id = small_corpus(t, 400, 21);
  auto ood = id;
  ood.seed = 22;
  ood.unigram = tilted_unigram(t, 0.5, 1.0, 1.0);
  ood.teacher_temperature = 1.5;
  const auto rid = gen_corpus(t, enc, id);
  const auto rood = gen_corpus(t, enc, ood);
  CHECK(mean_target(rood, "mi") > mean_target(rid, "mi"));
  CHECK(mean_target(rood, "entropy") > mean_target(rid, "entropy"));
}

}  // TEST_SUITE
