#pragma once

// Batch scoring of records with a trained head. The OpenMP kernel and the
// serial reference must agree bit for bit: every record is scored
// independently and written to its own slot.

#include <span>
#include <vector>

#include "nap/head.hpp"
#include "nap/record.hpp"

namespace nap::scoring {

std::vector<double> score_records_serial(std::span<const ScoreRecord* const> records,
                                         const head::HeadParams& params);

std::vector<double> score_records(std::span<const ScoreRecord* const> records,
                                  const head::HeadParams& params);

std::vector<double> score_records(const std::vector<ScoreRecord>& records,
                                  const head::HeadParams& params);

/// Average-pools every record once; the result is reusable across epochs
/// because the encoder is frozen.
std::vector<std::vector<double>> pool_average(std::span<const ScoreRecord* const> records);

}  // namespace nap::scoring
