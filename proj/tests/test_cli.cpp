#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "nap/jsonl.hpp"
#include "nap/numfmt.hpp"
#include "nap/tasks.hpp"
#include "support.hpp"

using namespace nap;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome nap_run(std::vector<std::string> args) {
  args.insert(args.begin(), "nap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

const char* kSmallConfig = R"({
  "teacher": {"vocab_size": 8, "seed": 3},
  "encoder": {"width": 8, "depth": 1, "seed": 4},
  "corpora": [
    {"name": "id", "n_examples": 300, "seed": 5, "min_len": 4, "max_len": 8,
     "unigram": {"zipf": 0.5}, "splits": {"train": 200, "validation": 50, "test": 50}},
    {"name": "ood", "domain": "ood", "n_examples": 50, "seed": 6, "min_len": 4, "max_len": 8,
     "teacher_temperature": 1.5,
     "unigram": {"zipf": 0.5, "tilt_flatness": 1.0, "tilt_disagreement": 1.0}}
  ]
})";

// Rows of a numeric CSV body; stops at the first blank line.
std::vector<std::vector<double>> csv_rows(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line) && !line.empty()) {
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(parse_double(cell));
    rows.push_back(row);
  }
  return rows;
}

double metric_at_half(const std::string& curve_csv) {
  for (const auto& row : csv_rows(curve_csv)) {
    if (row[1] == 0.5) return row[2];
  }
  return -1.0;
}

ScoreRecord two_model_record(const std::string& id, double small, double large) {
  ScoreRecord r;
  r.id = id;
  r.features = head::FeatureSequence::dense(Matrix(1, 2));
  r.targets = {{"similarity_small", small}, {"similarity_large", large}, {"similarity_diff", large - small}};
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  CHECK(nap_run({"--help"}).code == 0);
  CHECK(nap_run({}).code == 2);
  CHECK(nap_run({"frobnicate"}).code == 2);
  CHECK(nap_run({"gen", "/nonexistent/config.json"}).code == 2);

  testing::ScratchDir dir("cli-codes");
  testing::write_file(dir.file("empty.json"),
                      R"({"teacher": {}, "encoder": {}, "corpora": [{"name": "x", "n_examples": 0, "unigram": {"zipf": 1}}]})");
  const auto empty = nap_run({"gen", dir.file("empty.json"), "--out-dir", dir.path().string()});
  CHECK(empty.code == 2);
  CHECK(empty.err.find("empty corpus spec") != std::string::npos);

  testing::write_file(dir.file("typo.json"), R"({"teacher": {"vocab": 8}, "corpora": []})");
  const auto typo = nap_run({"gen", dir.file("typo.json"), "--out-dir", dir.path().string()});
  CHECK(typo.code == 2);
  CHECK(typo.err.find("vocab") != std::string::npos);

  testing::write_file(dir.file("bad.jsonl"), "{\"id\": 1}\n");
  CHECK(nap_run({"eval-filter", dir.file("bad.jsonl"), "--score-field", "mi"}).code == 1);
}

TEST_CASE("train-head argument checks") {
  testing::ScratchDir dir("cli-train");
  testing::write_file(dir.file("gen.json"), kSmallConfig);
  REQUIRE(nap_run({"gen", dir.file("gen.json"), "--out-dir", dir.path().string()}).code == 0);
  const auto id = dir.file("id.jsonl");
  const auto params = dir.file("p.txt");

  const auto small_batch = nap_run({"train-head", id, "--target", "mi", "--batch", "4", "--out", params});
  CHECK(small_batch.code == 2);
  CHECK(small_batch.err.find("batch size") != std::string::npos);

  const auto bad_target = nap_run({"train-head", id, "--target", "bogus", "--out", params});
  CHECK(bad_target.code == 2);
  CHECK(bad_target.err.find("similarity_diff") != std::string::npos);

  const auto bad_variant = nap_run({"train-head", id, "--target", "mi", "--variant", "5L", "--out", params});
  CHECK(bad_variant.code == 2);
  CHECK(bad_variant.err.find("3L-LN-Tanh") != std::string::npos);

  const auto no_aleatoric = nap_run({"train-head", id, "--target", "mi", "--loss", "ep_al", "--alpha", "1",
                                     "--aleatoric-target", "nothing", "--out", params});
  CHECK(no_aleatoric.code == 2);

  const auto ok = nap_run({"train-head", id, "--target", "mi", "--batch", "32", "--epochs", "2", "--lr", "1e-3",
                           "--out", params});
  CHECK(ok.code == 0);
  CHECK(testing::read_file(params + ".history.csv").rfind("step,validation_spearman\n", 0) == 0);
  CHECK(head::load_params(params).input_dim == 8);
}

TEST_CASE("eval commands agree with the library") {
  testing::ScratchDir dir("cli-eval");
  std::vector<ScoreRecord> rs{two_model_record("a", 0.7, 0.9), two_model_record("b", 0.5, 0.4)};
  jsonl::save_records(dir.file("two.jsonl"), rs);

  const auto diff = nap_run({"eval-defer", dir.file("two.jsonl"), "--score-field", "similarity_diff",
                             "--direction", "below"});
  REQUIRE(diff.code == 0);
  CHECK(metric_at_half(diff.out) == doctest::Approx(0.7));

  const auto single = nap_run({"eval-defer", dir.file("two.jsonl"), "--score-field", "similarity_small",
                               "--direction", "above", "--match-metric", "0.55"});
  REQUIRE(single.code == 0);
  CHECK(metric_at_half(single.out) == doctest::Approx(0.55));
  CHECK(single.out.find("match_axis,target,threshold,metric,time\nmetric,0.55,") != std::string::npos);

  std::vector<tasks::DeferralInput> in(2);
  for (std::size_t i = 0; i < 2; ++i) {
    in[i].proxy_score = rs[i].targets["similarity_small"];
    in[i].metric_small = rs[i].targets["similarity_small"];
    in[i].metric_large = rs[i].targets["similarity_large"];
  }
  std::ostringstream expected;
  tasks::write_curve_csv(expected, tasks::deferral_curve(in, tasks::DeferralPolicy::proxy,
                                                         tasks::DeferralDirection::above_threshold_small,
                                                         tasks::AggregateMode::mean_metric));
  CHECK(single.out.rfind(expected.str(), 0) == 0);

  const auto filter = nap_run({"eval-filter", dir.file("two.jsonl"), "--score-field", "similarity_small",
                               "--metric-field", "similarity_large", "--fractions", "0,0.5"});
  REQUIRE(filter.code == 0);
  const auto rows = csv_rows(filter.out);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][1] == (0.9 + 0.4) / 2.0);
  CHECK(rows[1][1] == 0.9);

  const auto unreachable = nap_run({"eval-defer", dir.file("two.jsonl"), "--score-field", "similarity_small",
                                    "--match-metric", "2"});
  CHECK(unreachable.code == 1);
  CHECK(unreachable.err.find("unreachable operating point") != std::string::npos);

  const auto detect = nap_run({"eval-detect", dir.file("two.jsonl"), dir.file("two.jsonl"), "--score-field",
                               "similarity_small"});
  REQUIRE(detect.code == 0);
  CHECK(detect.out == "AUROC 50.0\n");

  const auto neither = nap_run({"eval-detect", dir.file("two.jsonl"), dir.file("two.jsonl")});
  CHECK(neither.code == 2);
}

TEST_CASE("every command is byte-for-byte reproducible") {
  testing::ScratchDir a("cli-det-a"), b("cli-det-b");
  for (auto* d : {&a, &b}) {
    testing::write_file(d->file("gen.json"), kSmallConfig);
    const auto dir = d->path().string();
    REQUIRE(nap_run({"gen", d->file("gen.json"), "--out-dir", dir}).code == 0);
    REQUIRE(nap_run({"train-head", d->file("id.jsonl"), "--target", "mi", "--batch", "32", "--epochs", "2",
                     "--lr", "1e-3", "--variant", "2L-LN-Exp", "--pooling", "attentive", "--out", d->file("p.txt")})
                .code == 0);
    REQUIRE(nap_run({"eval-detect", d->file("id.jsonl"), d->file("ood.jsonl"), "--params", d->file("p.txt"),
                     "--out", d->file("detect.csv")})
                .code == 0);
    REQUIRE(nap_run({"eval-filter", d->file("id.jsonl"), "--params", d->file("p.txt"), "--mode", "wer",
                     "--errors-field", "errors", "--ref-len-field", "ref_len", "--out", d->file("filter.csv")})
                .code == 0);
    REQUIRE(nap_run({"eval-defer", d->file("id.jsonl"), "--params", d->file("p.txt"), "--mode", "wer",
                     "--out", d->file("defer.csv")})
                .code == 0);
  }
  for (const char* f : {"id.jsonl", "ood.jsonl", "p.txt", "p.txt.history.csv", "detect.csv", "filter.csv",
                        "defer.csv"}) {
    CAPTURE(f);
    const auto x = testing::read_file(a.file(f));
    CHECK(!x.empty());
    CHECK(x == testing::read_file(b.file(f)));
  }
}

}  // TEST_SUITE
