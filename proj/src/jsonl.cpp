#include "nap/jsonl.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "nap/error.hpp"

namespace nap::jsonl {

using ordered_json = nlohmann::ordered_json;

std::string record_to_line(const ScoreRecord& record) {
  ordered_json j;
  j["id"] = record.id;
  j["split"] = std::string(to_string(record.split));
  j["domain"] = record.domain;
  ordered_json rows = ordered_json::array();
  const auto& f = record.features.features;
  for (std::size_t l = 0; l < f.rows(); ++l) {
    if (!record.features.mask.empty() && !record.features.mask[l]) continue;
    const auto row = f.row(l);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["features"] = std::move(rows);
  ordered_json targets = ordered_json::object();
  for (const auto& [name, value] : record.targets) targets[name] = value;
  j["targets"] = std::move(targets);
  j["times"] = {{"small", record.times.small},
                {"large", record.times.large},
                {"proxy", record.times.proxy}};
  return j.dump();
}

ScoreRecord record_from_line(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid JSON: ") + e.what());
  }
  try {
    ScoreRecord r;
    r.id = j.at("id").get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.domain = j.value("domain", std::string{});
    const auto& rows = j.at("features");
    if (!rows.is_array() || rows.empty()) throw Error("record '" + r.id + "': features must be a non-empty array");
    const std::size_t d = rows[0].size();
    if (d == 0) throw Error("record '" + r.id + "': feature rows must be non-empty");
    Matrix m(rows.size(), d);
    for (std::size_t l = 0; l < rows.size(); ++l) {
      if (rows[l].size() != d) throw Error("record '" + r.id + "': ragged feature rows");
      for (std::size_t k = 0; k < d; ++k) m(l, k) = rows[l][k].get<double>();
    }
    r.features = head::FeatureSequence::dense(std::move(m));
    for (const auto& [name, value] : j.at("targets").items()) r.targets[name] = value.get<double>();
    const auto& t = j.at("times");
    r.times.small = t.at("small").get<double>();
    r.times.large = t.at("large").get<double>();
    r.times.proxy = t.at("proxy").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed record: ") + e.what());
  }
}

void write_records(std::ostream& os, const std::vector<ScoreRecord>& records) {
  for (const auto& r : records) os << record_to_line(r) << '\n';
}

std::vector<ScoreRecord> read_records(std::istream& is) {
  std::vector<ScoreRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_line(line));
    } catch (const Error& e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(out.back().id).second) {
      throw Error("line " + std::to_string(lineno) + ": duplicate id '" + out.back().id + "'");
    }
  }
  return out;
}

void save_records(const std::string& path, const std::vector<ScoreRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path + "'");
  write_records(os, records);
  if (!os) throw Error("failed writing '" + path + "'");
}

std::vector<ScoreRecord> load_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read '" + path + "'");
  return read_records(is);
}

}  // namespace nap::jsonl
