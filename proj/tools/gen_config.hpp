#pragma once

// JSON configuration for `nap gen`.
//
//   {
//     "teacher": {"vocab_size": 16, "seed": 1, ...},
//     "encoder": {"width": 64, "depth": 2, "seed": 2},
//     "corpora": [
//       {"name": "id", "n_examples": 5000, "seed": 10,
//        "unigram": {"zipf": 0.5, "tilt_flatness": 0, "tilt_disagreement": 0},
//        "splits": {"train": 4000, "validation": 500, "test": 500}},
//       {"name": "ood", "domain": "ood", ...}
//     ]
//   }
//
// "unigram" is either an explicit probability array or a tilt description
// resolved against the teacher. Omitted fields keep their defaults.

#include <string>
#include <vector>

#include "json.hpp"
#include "nap/synth.hpp"

namespace nap::cli {

struct GenConfig {
  synth::TeacherConfig teacher;
  synth::EncoderConfig encoder;
  std::vector<synth::CorpusSpec> corpora;
};

/// Throws nap::UsageError naming the offending field.
GenConfig parse_gen_config(const nlohmann::json& doc);
GenConfig load_gen_config(const std::string& path);

}  // namespace nap::cli
