#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nap/head.hpp"

namespace nap {

enum class Split { train, validation, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct Timings {
  double small = 0.0;
  double large = 0.0;
  double proxy = 0.0;
  bool operator==(const Timings&) const = default;
};

/// One example: frozen encoder features, teacher-derived scalar targets and
/// per-model cost measurements.
struct ScoreRecord {
  std::string id;
  Split split = Split::test;
  std::string domain;
  head::FeatureSequence features;
  std::map<std::string, double> targets;
  Timings times;

  /// Throws nap::Error naming the record and field when missing.
  double target(const std::string& name) const;
};

/// Target names produced by the synthetic generator.
const std::vector<std::string>& known_target_names();

/// Values of `field` across `records`, in order.
std::vector<double> target_column(const std::vector<const ScoreRecord*>& records,
                                  const std::string& field);

std::vector<const ScoreRecord*> select_split(const std::vector<ScoreRecord>& records, Split split);

}  // namespace nap
