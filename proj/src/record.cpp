#include "nap/record.hpp"

#include "nap/error.hpp"

namespace nap {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw Error("unknown split '" + std::string(name) + "' (valid: train, validation, test)");
}

double ScoreRecord::target(const std::string& name) const {
  auto it = targets.find(name);
  if (it == targets.end()) throw Error("record '" + id + "' has no target '" + name + "'");
  return it->second;
}

const std::vector<std::string>& known_target_names() {
  static const std::vector<std::string> names = {
      "confidence",       "entropy",          "mi",           "aleatoric",
      "similarity",       "wer",              "errors",       "ref_len",
      "similarity_small", "similarity_large", "wer_small",    "wer_large",
      "errors_small",     "errors_large",     "similarity_diff",
  };
  return names;
}

std::vector<double> target_column(const std::vector<const ScoreRecord*>& records,
                                  const std::string& field) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const ScoreRecord* r : records) out.push_back(r->target(field));
  return out;
}

std::vector<const ScoreRecord*> select_split(const std::vector<ScoreRecord>& records, Split split) {
  std::vector<const ScoreRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

}  // namespace nap
