// Serial references against the OpenMP kernels on synthetic workloads.

#include <benchmark/benchmark.h>

#include <random>

#include "nap/head.hpp"
#include "nap/scoring.hpp"
#include "nap/synth.hpp"
#include "nap/tasks.hpp"

namespace {

using namespace nap;

struct Workload {
  synth::TeacherSpec teacher = synth::make_teacher(synth::TeacherConfig{});
  synth::FrozenEncoder encoder{synth::EncoderConfig{}};
  synth::CorpusSpec spec;
  std::vector<ScoreRecord> records;
  std::vector<const ScoreRecord*> pointers;
  head::HeadParams params = head::make_head(head::Variant::three_sm, head::Pooling::attentive, 64, 64, 1);
  std::vector<tasks::DeferralInput> deferral;

  Workload() {
    spec.n_examples = 2000;
    spec.unigram = synth::tilted_unigram(teacher, 0.5, 0.0, 0.0);
    spec.seed = 3;
    records = synth::gen_corpus(teacher, encoder, spec);
    for (const auto& r : records) pointers.push_back(&r);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    deferral.resize(20000);
    for (auto& d : deferral) {
      d.proxy_score = u(rng);
      d.metric_small = u(rng);
      d.metric_large = u(rng);
      d.time_small = 1.0;
      d.time_large = 4.0;
      d.time_proxy = 0.05;
    }
  }
};

const Workload& workload() {
  static const Workload w;
  return w;
}

void BM_ScoreRecordsSerial(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) benchmark::DoNotOptimize(scoring::score_records_serial(w.pointers, w.params));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(w.pointers.size()));
}

void BM_ScoreRecordsParallel(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) benchmark::DoNotOptimize(scoring::score_records(w.pointers, w.params));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(w.pointers.size()));
}

void BM_GenCorpusSerial(benchmark::State& state) {
  const auto& w = workload();
  auto spec = w.spec;
  spec.n_examples = 500;
  for (auto _ : state) benchmark::DoNotOptimize(synth::gen_corpus_serial(w.teacher, w.encoder, spec));
  state.SetItemsProcessed(state.iterations() * 500);
}

void BM_GenCorpusParallel(benchmark::State& state) {
  const auto& w = workload();
  auto spec = w.spec;
  spec.n_examples = 500;
  for (auto _ : state) benchmark::DoNotOptimize(synth::gen_corpus(w.teacher, w.encoder, spec));
  state.SetItemsProcessed(state.iterations() * 500);
}

std::vector<double> grid(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) / static_cast<double>(n);
  return t;
}

void BM_DeferralCurveSerial(benchmark::State& state) {
  const auto& w = workload();
  const auto t = grid(256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tasks::deferral_curve_serial(w.deferral, tasks::DeferralPolicy::proxy,
                                                          tasks::DeferralDirection::above_threshold_small,
                                                          tasks::AggregateMode::mean_metric, t));
  }
}

void BM_DeferralCurveParallel(benchmark::State& state) {
  const auto& w = workload();
  const auto t = grid(256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tasks::deferral_curve(w.deferral, tasks::DeferralPolicy::proxy,
                                                   tasks::DeferralDirection::above_threshold_small,
                                                   tasks::AggregateMode::mean_metric, t));
  }
}

}  // namespace

BENCHMARK(BM_ScoreRecordsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreRecordsParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GenCorpusSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenCorpusParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_DeferralCurveSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeferralCurveParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
