#pragma once

// ScoreRecord interchange: one JSON object per line.
//
//   {"id": "...", "split": "train|validation|test", "domain": "...",
//    "features": [[...], ...], "targets": {"mi": 0.1, ...},
//    "times": {"small": 1.0, "large": 4.0, "proxy": 0.05}}

#include <iosfwd>
#include <string>
#include <vector>

#include "nap/record.hpp"

namespace nap::jsonl {

std::string record_to_line(const ScoreRecord& record);
ScoreRecord record_from_line(const std::string& line);

void write_records(std::ostream& os, const std::vector<ScoreRecord>& records);
/// Throws on malformed lines (with the line number) and duplicate ids.
std::vector<ScoreRecord> read_records(std::istream& is);

void save_records(const std::string& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> load_records(const std::string& path);

}  // namespace nap::jsonl
