#include "gen_config.hpp"

#include <fstream>
#include <set>

#include "nap/error.hpp"

namespace nap::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw UsageError("unknown field " + where + "." + key);
  }
}

const json& object_at(const json& parent, const std::string& key, const std::string& where) {
  const auto& v = parent.at(key);
  if (!v.is_object()) throw UsageError(where + "." + key + " must be an object");
  return v;
}

template <typename T>
void read_field(const json& obj, const std::string& key, const std::string& where, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw UsageError("field " + where + "." + key + " has the wrong type");
  }
}

// Counts and sizes must be non-negative integers; nlohmann would silently wrap -1.
void read_count(const json& obj, const std::string& key, const std::string& where, std::size_t& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw UsageError("field " + where + "." + key + " must be a non-negative integer");
  }
  out = it->get<std::size_t>();
}

void read_seed(const json& obj, const std::string& where, std::uint64_t& out) {
  auto it = obj.find("seed");
  if (it == obj.end()) return;
  if (!it->is_number_unsigned()) {
    throw UsageError("field " + where + ".seed must be a non-negative integer");
  }
  out = it->get<std::uint64_t>();
}

synth::TeacherConfig parse_teacher(const json& t) {
  const std::string w = "teacher";
  reject_unknown(t, w,
                 {"vocab_size", "temperature", "sharpness_min", "sharpness_max", "disagreement_min",
                  "disagreement_max", "bigram_weight", "seed"});
  synth::TeacherConfig c;
  read_field(t, "vocab_size", w, c.vocab_size);
  read_field(t, "temperature", w, c.temperature);
  read_field(t, "sharpness_min", w, c.sharpness_min);
  read_field(t, "sharpness_max", w, c.sharpness_max);
  read_field(t, "disagreement_min", w, c.disagreement_min);
  read_field(t, "disagreement_max", w, c.disagreement_max);
  read_field(t, "bigram_weight", w, c.bigram_weight);
  read_seed(t, w, c.seed);
  return c;
}

synth::EncoderConfig parse_encoder(const json& e) {
  const std::string w = "encoder";
  reject_unknown(e, w, {"width", "depth", "seed"});
  synth::EncoderConfig c;
  read_count(e, "width", w, c.width);
  read_field(e, "depth", w, c.depth);
  read_seed(e, w, c.seed);
  if (c.width < 1) throw UsageError("field encoder.width must be >= 1");
  if (c.depth < 1) throw UsageError("field encoder.depth must be >= 1");
  return c;
}

synth::CorpusSpec parse_corpus(const json& c, std::size_t index, const synth::TeacherSpec& teacher) {
  const std::string w = "corpora[" + std::to_string(index) + "]";
  if (!c.is_object()) throw UsageError(w + " must be an object");
  reject_unknown(c, w,
                 {"name", "domain", "n_examples", "min_len", "max_len", "unigram", "teacher_temperature",
                  "temperature_small", "temperature_large", "ensemble_size", "member_sigma", "seed",
                  "splits", "times"});
  synth::CorpusSpec s;
  read_field(c, "name", w, s.name);
  s.domain = s.name;
  read_field(c, "domain", w, s.domain);
  read_count(c, "n_examples", w, s.n_examples);
  read_count(c, "min_len", w, s.min_len);
  read_count(c, "max_len", w, s.max_len);
  read_field(c, "teacher_temperature", w, s.teacher_temperature);
  read_field(c, "temperature_small", w, s.temperature_small);
  read_field(c, "temperature_large", w, s.temperature_large);
  read_count(c, "ensemble_size", w, s.ensemble_size);
  read_field(c, "member_sigma", w, s.member_sigma);
  read_seed(c, w, s.seed);
  if (s.name.empty()) throw UsageError("field " + w + ".name must not be empty");

  if (auto it = c.find("unigram"); it == c.end()) {
    s.unigram = synth::tilted_unigram(teacher, 0.0, 0.0, 0.0);
  } else if (it->is_array()) {
    read_field(c, "unigram", w, s.unigram);
  } else if (it->is_object()) {
    const std::string uw = w + ".unigram";
    reject_unknown(*it, uw, {"zipf", "tilt_flatness", "tilt_disagreement"});
    double zipf = 0.0, flat = 0.0, dis = 0.0;
    read_field(*it, "zipf", uw, zipf);
    read_field(*it, "tilt_flatness", uw, flat);
    read_field(*it, "tilt_disagreement", uw, dis);
    s.unigram = synth::tilted_unigram(teacher, zipf, flat, dis);
  } else {
    throw UsageError("field " + w + ".unigram must be an array or an object");
  }

  if (c.contains("splits")) {
    const std::string sw = w + ".splits";
    const auto& sp = object_at(c, "splits", w);
    reject_unknown(sp, sw, {"train", "validation", "test"});
    read_count(sp, "train", sw, s.splits.train);
    read_count(sp, "validation", sw, s.splits.validation);
    read_count(sp, "test", sw, s.splits.test);
  }
  if (c.contains("times")) {
    const std::string tw = w + ".times";
    const auto& tm = object_at(c, "times", w);
    reject_unknown(tm, tw, {"small", "large", "proxy"});
    read_field(tm, "small", tw, s.times.small);
    read_field(tm, "large", tw, s.times.large);
    read_field(tm, "proxy", tw, s.times.proxy);
  }
  try {
    s.validate(teacher.vocab_size);
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(w + ": " + e.what());
  }
  return s;
}

}  // namespace

GenConfig parse_gen_config(const json& doc) {
  if (!doc.is_object()) throw UsageError("config must be a JSON object");
  reject_unknown(doc, "config", {"teacher", "encoder", "corpora"});
  GenConfig cfg;
  if (doc.contains("teacher")) cfg.teacher = parse_teacher(object_at(doc, "teacher", "config"));
  if (doc.contains("encoder")) cfg.encoder = parse_encoder(object_at(doc, "encoder", "config"));

  synth::TeacherSpec teacher;
  try {
    teacher = synth::make_teacher(cfg.teacher);
  } catch (const Error& e) {
    throw UsageError(std::string("teacher: ") + e.what());
  }

  auto it = doc.find("corpora");
  if (it == doc.end() || !it->is_array() || it->empty()) {
    throw UsageError("field config.corpora must be a non-empty array");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < it->size(); ++i) {
    cfg.corpora.push_back(parse_corpus((*it)[i], i, teacher));
    if (!names.insert(cfg.corpora.back().name).second) {
      throw UsageError("duplicate corpus name " + cfg.corpora.back().name);
    }
  }
  return cfg;
}

GenConfig load_gen_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("malformed config " + path + ": " + e.what());
  }
  return parse_gen_config(doc);
}

}  // namespace nap::cli
