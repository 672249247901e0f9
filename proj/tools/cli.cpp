#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "gen_config.hpp"
#include "nap/error.hpp"
#include "nap/head.hpp"
#include "nap/jsonl.hpp"
#include "nap/numfmt.hpp"
#include "nap/record.hpp"
#include "nap/scoring.hpp"
#include "nap/synth.hpp"
#include "nap/tasks.hpp"
#include "nap/train.hpp"

namespace nap::cli {

namespace {

// ---------------------------------------------------------------------------
// Shared helpers

void write_to(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(fallback);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  body(os);
  if (!os) throw Error("failed writing " + path);
}

std::vector<const ScoreRecord*> pick_split(const std::vector<ScoreRecord>& records, const std::string& split) {
  if (split == "all") {
    std::vector<const ScoreRecord*> all;
    all.reserve(records.size());
    for (const auto& r : records) all.push_back(&r);
    return all;
  }
  return select_split(records, parse_split(split));
}

// A field missing from every record is a usage mistake (wrong name); one
// missing from only some records is bad data.
void require_target(const std::vector<const ScoreRecord*>& records, const std::string& field) {
  if (records.empty()) throw Error("no records selected");
  std::size_t missing = 0;
  for (const auto* r : records) missing += r->targets.count(field) ? 0 : 1;
  if (missing == 0) return;
  if (missing == records.size()) {
    std::string valid;
    for (const auto& [name, value] : records.front()->targets) valid += (valid.empty() ? "" : ", ") + name;
    throw UsageError("unknown target '" + field + "' (valid: " + valid + ")");
  }
  for (const auto* r : records) {
    if (!r->targets.count(field)) throw Error("record '" + r->id + "' has no target '" + field + "'");
  }
}

struct ScoreSource {
  std::string params_path;
  std::string score_field;

  void add_options(CLI::App* cmd) {
    auto* p = cmd->add_option("--params", params_path, "Trained head parameters");
    auto* f = cmd->add_option("--score-field", score_field, "Use a stored target as the score instead of a head");
    p->excludes(f);
  }

  void check() const {
    if (params_path.empty() && score_field.empty()) throw UsageError("one of --params or --score-field is required");
  }

  std::vector<double> scores(const std::vector<const ScoreRecord*>& records) const {
    if (!score_field.empty()) {
      require_target(records, score_field);
      return target_column(records, score_field);
    }
    const auto params = head::load_params(params_path);
    return scoring::score_records(records, params);
  }
};

std::size_t count_target(const ScoreRecord& r, const std::string& field) {
  const double v = r.target(field);
  if (!(v >= 0.0) || v != std::floor(v)) {
    throw Error("record '" + r.id + "' target '" + field + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::vector<double> parse_fraction_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(parse_double(tok));
    } catch (const Error&) {
      throw UsageError("bad fraction '" + tok + "'");
    }
  }
  if (out.empty()) throw UsageError("empty fraction list");
  return out;
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string config;
  std::string out_dir = ".";
};

void cmd_gen(const GenArgs& a, std::ostream& out) {
  const GenConfig cfg = load_gen_config(a.config);
  const auto teacher = synth::make_teacher(cfg.teacher);
  const synth::FrozenEncoder encoder(cfg.encoder);
  std::filesystem::create_directories(a.out_dir);

  out << std::left << std::setw(12) << "corpus" << std::setw(10) << "domain" << std::right << std::setw(9)
      << "examples" << std::setw(8) << "train" << std::setw(12) << "validation" << std::setw(8) << "test"
      << std::setw(9) << "src_len" << std::setw(9) << "ref_len" << '\n';
  for (const auto& spec : cfg.corpora) {
    const auto records = synth::gen_corpus(teacher, encoder, spec);
    const auto path = (std::filesystem::path(a.out_dir) / (spec.name + ".jsonl")).string();
    jsonl::save_records(path, records);

    std::size_t counts[3] = {0, 0, 0};
    double src = 0.0, ref = 0.0;
    for (const auto& r : records) {
      ++counts[static_cast<int>(r.split)];
      src += static_cast<double>(r.features.length());
      ref += r.target("ref_len");
    }
    const double n = static_cast<double>(records.size());
    out << std::left << std::setw(12) << spec.name << std::setw(10) << spec.domain << std::right << std::setw(9)
        << records.size() << std::setw(8) << counts[0] << std::setw(12) << counts[1] << std::setw(8) << counts[2]
        << std::fixed << std::setprecision(2) << std::setw(9) << src / n << std::setw(9) << ref / n
        << std::defaultfloat << '\n';
  }
}

// ---------------------------------------------------------------------------
// train-head

struct TrainArgs {
  std::string records;
  std::string target;
  std::string loss = "scc";
  double epsilon = 1e-6;
  double alpha = 0.0;
  std::string variant = "3L-SM";
  std::string pooling = "average";
  std::string aleatoric_target = "aleatoric";
  std::string out;
  std::string history;
  train::TrainConfig config;
};

void cmd_train(TrainArgs a, std::ostream& out) {
  auto& cfg = a.config;
  cfg.loss.kind = losses::parse_loss_kind(a.loss);
  cfg.loss.epsilon = a.epsilon;
  cfg.loss.alpha = a.alpha;
  cfg.aleatoric_field = a.aleatoric_target;
  const auto variant = head::parse_variant(a.variant);
  const auto pooling = head::parse_pooling(a.pooling);
  cfg.validate();

  const auto records = jsonl::load_records(a.records);
  const auto all = pick_split(records, "all");
  require_target(all, a.target);
  if (cfg.loss.kind == losses::LossKind::ep_al) require_target(all, cfg.aleatoric_field);
  if (records.empty()) throw Error("no records in " + a.records);

  const auto init = head::make_head(variant, pooling, records.front().features.width(), cfg.hidden_width, cfg.seed);
  const auto result = train::train_head(records, a.target, cfg, init);

  head::save_params(a.out, result.params);
  const std::string history_path = a.history.empty() ? a.out + ".history.csv" : a.history;
  write_to(history_path, out, [&](std::ostream& os) {
    os << "step,validation_spearman\n";
    for (const auto& h : result.history) os << h.step << ',' << format_double(h.validation_spearman) << '\n';
  });

  out << "variant " << head::to_string(variant) << " pooling " << head::to_string(pooling) << " loss "
      << losses::to_string(cfg.loss.kind) << " target " << a.target << '\n';
  out << "best validation spearman " << format_double(result.best_validation) << " at step " << result.best_step
      << " of " << (result.history.empty() ? 0 : result.history.back().step) << '\n';
  out << "skipped batches " << result.skipped_batches << '\n';
  out << "wrote " << a.out << " and " << history_path << '\n';
}

// ---------------------------------------------------------------------------
// eval-detect

struct DetectArgs {
  std::string id_records;
  std::string ood_records;
  ScoreSource source;
  std::string direction = "higher";
  std::string split = "test";
  std::string out;
};

void cmd_detect(const DetectArgs& a, std::ostream& out) {
  a.source.check();
  const auto id = jsonl::load_records(a.id_records);
  const auto ood = jsonl::load_records(a.ood_records);
  const auto id_sel = pick_split(id, a.split);
  const auto ood_sel = pick_split(ood, a.split);
  if (id_sel.empty() || ood_sel.empty()) throw Error("no records in the selected split");
  const auto dir = a.direction == "higher" ? tasks::OodDirection::higher_is_ood : tasks::OodDirection::lower_is_ood;
  const double auroc = tasks::ood_detect(a.source.scores(id_sel), a.source.scores(ood_sel), dir);

  out << "AUROC " << one_decimal(auroc) << '\n';
  if (!a.out.empty()) {
    write_to(a.out, out, [&](std::ostream& os) {
      os << "n_id,n_ood,auroc\n" << id_sel.size() << ',' << ood_sel.size() << ',' << format_double(auroc) << '\n';
    });
  }
}

// ---------------------------------------------------------------------------
// eval-filter

struct FilterArgs {
  std::string records;
  ScoreSource source;
  std::string metric_field = "similarity";
  std::string errors_field = "errors";
  std::string ref_len_field = "ref_len";
  std::string mode = "mean";
  std::string direction = "remove-lowest";
  std::string fractions;
  std::string split = "test";
  std::string out;
};

void cmd_filter(const FilterArgs& a, std::ostream& out) {
  a.source.check();
  const auto fractions = a.fractions.empty() ? tasks::fraction_grid(0.05, 0.9) : parse_fraction_list(a.fractions);
  const auto records = jsonl::load_records(a.records);
  const auto sel = pick_split(records, a.split);
  const auto dir = a.direction == "remove-lowest" ? tasks::FilterDirection::remove_lowest_predicted
                                                  : tasks::FilterDirection::remove_highest_predicted;
  const auto scores = a.source.scores(sel);

  std::vector<tasks::FilterPoint> curve;
  if (a.mode == "mean") {
    require_target(sel, a.metric_field);
    curve = tasks::filtering_curve(scores, target_column(sel, a.metric_field), fractions, dir);
  } else {
    require_target(sel, a.errors_field);
    require_target(sel, a.ref_len_field);
    std::vector<metrics::WerOutcome> outcomes;
    for (const auto* r : sel) {
      metrics::WerOutcome o;
      o.errors = count_target(*r, a.errors_field);
      o.ref_len = count_target(*r, a.ref_len_field);
      if (o.ref_len == 0) throw Error("record '" + r->id + "' has zero reference length");
      o.wer = static_cast<double>(o.errors) / static_cast<double>(o.ref_len);
      outcomes.push_back(o);
    }
    curve = tasks::filtering_curve_wer(scores, outcomes, fractions, dir);
  }
  write_to(a.out, out, [&](std::ostream& os) { tasks::write_filter_csv(os, curve); });
}

// ---------------------------------------------------------------------------
// eval-defer

struct DeferArgs {
  std::string records;
  ScoreSource source;
  std::string mode = "mean";
  std::string direction = "above";
  std::string policy = "proxy";
  std::string small_field = "similarity_small";
  std::string large_field = "similarity_large";
  std::string small_errors_field = "errors_small";
  std::string large_errors_field = "errors_large";
  std::string ref_len_field = "ref_len";
  std::vector<double> match_time;
  std::vector<double> match_metric;
  std::string split = "test";
  std::string out;
};

void cmd_defer(const DeferArgs& a, std::ostream& out) {
  a.source.check();
  const auto records = jsonl::load_records(a.records);
  const auto sel = pick_split(records, a.split);
  const bool wer_mode = a.mode == "wer";
  const auto scores = a.source.scores(sel);

  std::vector<tasks::DeferralInput> inputs(sel.size());
  if (wer_mode) {
    for (const auto& f : {a.small_errors_field, a.large_errors_field, a.ref_len_field}) require_target(sel, f);
  } else {
    for (const auto& f : {a.small_field, a.large_field}) require_target(sel, f);
  }
  for (std::size_t i = 0; i < sel.size(); ++i) {
    const auto& r = *sel[i];
    auto& in = inputs[i];
    in.proxy_score = scores[i];
    if (wer_mode) {
      in.errors_small = count_target(r, a.small_errors_field);
      in.errors_large = count_target(r, a.large_errors_field);
      in.ref_len = count_target(r, a.ref_len_field);
      if (in.ref_len == 0) throw Error("record '" + r.id + "' has zero reference length");
      in.metric_small = static_cast<double>(in.errors_small) / static_cast<double>(in.ref_len);
      in.metric_large = static_cast<double>(in.errors_large) / static_cast<double>(in.ref_len);
    } else {
      in.metric_small = r.target(a.small_field);
      in.metric_large = r.target(a.large_field);
    }
    in.time_small = r.times.small;
    in.time_large = r.times.large;
    in.time_proxy = r.times.proxy;
  }

  const auto policy = a.policy == "proxy" ? tasks::DeferralPolicy::proxy : tasks::DeferralPolicy::small_model_uncertainty;
  const auto dir = a.direction == "above" ? tasks::DeferralDirection::above_threshold_small
                                          : tasks::DeferralDirection::below_threshold_small;
  const auto mode = wer_mode ? tasks::AggregateMode::corpus_wer : tasks::AggregateMode::mean_metric;
  const auto curve = tasks::deferral_curve(inputs, policy, dir, mode);

  struct Row {
    const char* axis;
    double target;
    tasks::MatchedPoint point;
  };
  std::vector<Row> matched;
  for (double t : a.match_time) {
    matched.push_back({"time", t, tasks::matched_operating_point(curve, {tasks::MatchTarget::Axis::time, t})});
  }
  for (double m : a.match_metric) {
    matched.push_back({"metric", m, tasks::matched_operating_point(curve, {tasks::MatchTarget::Axis::metric, m})});
  }

  write_to(a.out, out, [&](std::ostream& os) {
    tasks::write_curve_csv(os, curve);
    if (matched.empty()) return;
    os << "\nmatch_axis,target,threshold,metric,time\n";
    for (const auto& m : matched) {
      os << m.axis << ',' << format_double(m.target) << ',' << format_double(m.point.threshold) << ','
         << format_double(m.point.metric) << ',' << format_double(m.point.time) << '\n';
    }
  });
  if (!a.out.empty()) {
    const auto& first = curve.points.front();
    const auto& last = curve.points.back();
    out << "all small: metric " << format_double(first.metric) << " time " << format_double(first.time) << '\n';
    out << "all large: metric " << format_double(last.metric) << " time " << format_double(last.time) << '\n';
    for (const auto& m : matched) {
      out << "matched " << m.axis << ' ' << format_double(m.target) << ": threshold "
          << format_double(m.point.threshold) << " metric " << format_double(m.point.metric) << " time "
          << format_double(m.point.time) << '\n';
    }
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Non-autoregressive proxy toolkit: synthetic corpora, head training and evaluation"};
  app.name("nap");
  app.require_subcommand(1);

  const auto split_check = CLI::IsMember({"train", "validation", "test", "all"});

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate synthetic corpora from a JSON config");
  g->add_option("config", gen.config, "Config file")->required();
  g->add_option("--out-dir", gen.out_dir, "Output directory for <name>.jsonl files");

  TrainArgs tr;
  auto* t = app.add_subcommand("train-head", "Train a predictor head on frozen features");
  t->add_option("records", tr.records, "Records JSONL")->required();
  t->add_option("--target", tr.target, "Target field to predict")->required();
  t->add_option("--loss", tr.loss, "scc, pcc, mae, rmse or ep_al");
  t->add_option("--epsilon", tr.epsilon, "Soft-rank regularisation strength");
  t->add_option("--alpha", tr.alpha, "Aleatoric decorrelation weight (ep_al)");
  t->add_option("--variant", tr.variant, "Head variant, e.g. 3L-SM");
  t->add_option("--pooling", tr.pooling, "average or attentive");
  t->add_option("--lr", tr.config.learning_rate, "Adam learning rate");
  t->add_option("--batch", tr.config.batch_size, "Batch size");
  t->add_option("--seed", tr.config.seed, "Initialisation and shuffling seed");
  t->add_option("--epochs", tr.config.max_epochs, "Maximum epochs");
  t->add_option("--evals-per-epoch", tr.config.evals_per_epoch, "Validation evaluations per epoch");
  t->add_option("--patience", tr.config.patience_evals, "Evaluations without improvement before stopping (0 = one epoch)");
  t->add_option("--hidden", tr.config.hidden_width, "Hidden width of the 3L layout");
  t->add_option("--aleatoric-target", tr.aleatoric_target, "Aleatoric field used by ep_al");
  t->add_option("--out", tr.out, "Output params file")->required();
  t->add_option("--history", tr.history, "History CSV (default <out>.history.csv)");

  DetectArgs det;
  auto* d = app.add_subcommand("eval-detect", "OOD detection AUROC of a head's scores");
  d->add_option("id_records", det.id_records, "In-domain records")->required();
  d->add_option("ood_records", det.ood_records, "Out-of-domain records")->required();
  det.source.add_options(d);
  d->add_option("--direction", det.direction, "higher or lower score means OOD")->check(CLI::IsMember({"higher", "lower"}));
  d->add_option("--split", det.split, "Split of both files to score")->check(split_check);
  d->add_option("--out", det.out, "CSV row output");

  FilterArgs fil;
  auto* f = app.add_subcommand("eval-filter", "Quality of the data remaining after filtering by score");
  f->add_option("records", fil.records, "Records JSONL")->required();
  fil.source.add_options(f);
  f->add_option("--metric-field", fil.metric_field, "Per-example metric (mean mode)");
  f->add_option("--errors-field", fil.errors_field, "Error counts (wer mode)");
  f->add_option("--ref-len-field", fil.ref_len_field, "Reference lengths (wer mode)");
  f->add_option("--mode", fil.mode, "mean or wer")->check(CLI::IsMember({"mean", "wer"}));
  f->add_option("--direction", fil.direction, "remove-lowest or remove-highest")
      ->check(CLI::IsMember({"remove-lowest", "remove-highest"}));
  f->add_option("--fractions", fil.fractions, "Comma-separated ascending fractions (default 0,0.05,...,0.9)");
  f->add_option("--split", fil.split, "Split to evaluate")->check(split_check);
  f->add_option("--out", fil.out, "CSV output (default stdout)");

  DeferArgs def;
  auto* c = app.add_subcommand("eval-defer", "Small/large model deferral operating curve");
  c->add_option("records", def.records, "Records JSONL")->required();
  def.source.add_options(c);
  c->add_option("--mode", def.mode, "mean or wer")->check(CLI::IsMember({"mean", "wer"}));
  c->add_option("--direction", def.direction, "above: score > t runs small; below: score < t runs small")
      ->check(CLI::IsMember({"above", "below"}));
  c->add_option("--policy", def.policy, "proxy or small-uncertainty")
      ->check(CLI::IsMember({"proxy", "small-uncertainty"}));
  c->add_option("--small-field", def.small_field, "Small-model metric (mean mode)");
  c->add_option("--large-field", def.large_field, "Large-model metric (mean mode)");
  c->add_option("--small-errors-field", def.small_errors_field, "Small-model errors (wer mode)");
  c->add_option("--large-errors-field", def.large_errors_field, "Large-model errors (wer mode)");
  c->add_option("--ref-len-field", def.ref_len_field, "Reference lengths (wer mode)");
  c->add_option("--match-time", def.match_time, "Report the metric at this total time")->allow_extra_args(false);
  c->add_option("--match-metric", def.match_metric, "Report the time at this metric")->allow_extra_args(false);
  c->add_option("--split", def.split, "Split to evaluate")->check(split_check);
  c->add_option("--out", def.out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "nap: " << e.what() << '\n';
    if (e.get_exit_code() != 0) err << "run 'nap --help' for usage\n";
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) cmd_gen(gen, out);
    else if (t->parsed()) cmd_train(tr, out);
    else if (d->parsed()) cmd_detect(det, out);
    else if (f->parsed()) cmd_filter(fil, out);
    else if (c->parsed()) cmd_defer(def, out);
  } catch (const UsageError& e) {
    err << "nap: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "nap: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace nap::cli
