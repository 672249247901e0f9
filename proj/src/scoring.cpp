#include "nap/scoring.hpp"

#include "nap/error.hpp"

namespace nap::scoring {

namespace {

void check_width(std::span<const ScoreRecord* const> records, const head::HeadParams& params) {
  for (const ScoreRecord* r : records) {
    if (r->features.width() != params.input_dim) {
      throw Error("record '" + r->id + "' has feature width " + std::to_string(r->features.width()) +
                  " but the head expects " + std::to_string(params.input_dim));
    }
  }
}

}  // namespace

std::vector<double> score_records_serial(std::span<const ScoreRecord* const> records,
                                         const head::HeadParams& params) {
  check_width(records, params);
  std::vector<double> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[i] = head::head_score(records[i]->features, params);
  }
  return out;
}

std::vector<double> score_records(std::span<const ScoreRecord* const> records,
                                  const head::HeadParams& params) {
  check_width(records, params);
  const auto n = static_cast<std::ptrdiff_t>(records.size());
  std::vector<double> out(records.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = head::head_score(records[i]->features, params);
  }
  return out;
}

std::vector<double> score_records(const std::vector<ScoreRecord>& records,
                                  const head::HeadParams& params) {
  std::vector<const ScoreRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) ptrs.push_back(&r);
  return score_records(ptrs, params);
}

std::vector<std::vector<double>> pool_average(std::span<const ScoreRecord* const> records) {
  const auto n = static_cast<std::ptrdiff_t>(records.size());
  std::vector<std::vector<double>> out(records.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = head::average_pool(records[i]->features);
  return out;
}

}  // namespace nap::scoring
