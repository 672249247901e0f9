#include "nap/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "nap/error.hpp"
#include "nap/numfmt.hpp"

namespace nap::tasks {

double ood_detect(std::span<const double> id_scores, std::span<const double> ood_scores,
                  OodDirection direction) {
  if (direction == OodDirection::higher_is_ood) return 100.0 * metrics::auroc(id_scores, ood_scores);
  std::vector<double> neg_id(id_scores.size()), neg_ood(ood_scores.size());
  std::transform(id_scores.begin(), id_scores.end(), neg_id.begin(), [](double v) { return -v; });
  std::transform(ood_scores.begin(), ood_scores.end(), neg_ood.begin(), [](double v) { return -v; });
  return 100.0 * metrics::auroc(neg_id, neg_ood);
}

namespace {

// Input indices in removal order.
std::vector<std::size_t> removal_order(std::span<const double> predicted, FilterDirection direction) {
  std::vector<std::size_t> order(predicted.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (direction == FilterDirection::remove_lowest_predicted) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return predicted[a] < predicted[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return predicted[a] > predicted[b]; });
  }
  return order;
}

std::size_t removed_count(double fraction, std::size_t n) {
  if (!(fraction >= 0.0) || fraction > 1.0) throw Error("fraction outside [0, 1]");
  // Tolerance so that grid values such as 0.29 map to the intended count.
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (k >= n) throw Error("empty remainder");
  return k;
}

template <typename Aggregate>
std::vector<FilterPoint> filter_impl(std::span<const double> predicted, std::size_t n,
                                     std::span<const double> fractions, FilterDirection direction,
                                     Aggregate&& aggregate) {
  if (predicted.size() != n) throw Error("length mismatch");
  if (n == 0) throw Error("empty input");
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    require(fractions[i] >= fractions[i - 1], "fractions must be sorted ascending");
  }
  const auto order = removal_order(predicted, direction);
  std::vector<uint8_t> keep(n, 1);
  std::vector<FilterPoint> out;
  out.reserve(fractions.size());
  std::size_t removed = 0;
  for (double f : fractions) {
    const std::size_t k = removed_count(f, n);
    for (; removed < k; ++removed) keep[order[removed]] = 0;
    out.push_back({f, aggregate(keep)});
  }
  return out;
}

}  // namespace

std::vector<FilterPoint> filtering_curve(std::span<const double> predicted,
                                         std::span<const double> actual_metric,
                                         std::span<const double> fractions, FilterDirection direction) {
  return filter_impl(predicted, actual_metric.size(), fractions, direction,
                     [&](const std::vector<uint8_t>& keep) {
                       double s = 0.0;
                       std::size_t c = 0;
                       for (std::size_t i = 0; i < keep.size(); ++i) {
                         if (!keep[i]) continue;
                         s += actual_metric[i];
                         ++c;
                       }
                       return s / static_cast<double>(c);
                     });
}

std::vector<FilterPoint> filtering_curve_wer(std::span<const double> predicted,
                                             std::span<const metrics::WerOutcome> outcomes,
                                             std::span<const double> fractions,
                                             FilterDirection direction) {
  return filter_impl(predicted, outcomes.size(), fractions, direction,
                     [&](const std::vector<uint8_t>& keep) {
                       std::vector<metrics::WerOutcome> rest;
                       for (std::size_t i = 0; i < keep.size(); ++i) {
                         if (keep[i]) rest.push_back(outcomes[i]);
                       }
                       return metrics::corpus_wer(rest);
                     });
}

std::vector<double> fraction_grid(double step, double last) {
  require(step > 0.0, "fraction step must be > 0");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::llround(last / step));
  for (std::size_t i = 0; i <= count; ++i) out.push_back(static_cast<double>(i) * step);
  return out;
}

std::vector<double> default_thresholds(std::span<const DeferralInput> inputs) {
  std::vector<double> t;
  t.reserve(inputs.size() + 2);
  t.push_back(-std::numeric_limits<double>::infinity());
  for (const auto& in : inputs) t.push_back(in.proxy_score);
  t.push_back(std::numeric_limits<double>::infinity());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

namespace {

void check_inputs(std::span<const DeferralInput> inputs, AggregateMode mode) {
  if (inputs.empty()) throw Error("empty deferral input");
  for (const auto& in : inputs) {
    require(in.time_small >= 0.0 && in.time_large >= 0.0 && in.time_proxy >= 0.0,
            "times must be non-negative");
    require(!std::isnan(in.proxy_score), "NaN proxy score");
    if (mode == AggregateMode::corpus_wer) require(in.ref_len > 0, "ref_len must be positive");
  }
}

double example_time(const DeferralInput& in, bool large, DeferralPolicy policy) {
  if (policy == DeferralPolicy::proxy) return in.time_proxy + (large ? in.time_large : in.time_small);
  // The small model always runs first to produce its own uncertainty.
  return in.time_small + (large ? in.time_large : 0.0);
}

struct Tally {
  double metric_sum = 0.0;
  std::size_t errors = 0;
  std::size_t words = 0;
  double time = 0.0;
  std::size_t deferred = 0;

  void add(const DeferralInput& in, bool large, DeferralPolicy policy) {
    metric_sum += large ? in.metric_large : in.metric_small;
    errors += large ? in.errors_large : in.errors_small;
    words += in.ref_len;
    time += example_time(in, large, policy);
    deferred += large ? 1 : 0;
  }

  double metric(AggregateMode mode, std::size_t n) const {
    if (mode == AggregateMode::corpus_wer) return static_cast<double>(errors) / static_cast<double>(words);
    return metric_sum / static_cast<double>(n);
  }
};

std::vector<double> ordered_thresholds(std::span<const DeferralInput> inputs,
                                       std::span<const double> thresholds,
                                       DeferralDirection direction) {
  std::vector<double> t;
  if (thresholds.empty()) {
    t = default_thresholds(inputs);
  } else {
    t.assign(thresholds.begin(), thresholds.end());
    for (double v : t) require(!std::isnan(v), "NaN threshold");
    t.push_back(-std::numeric_limits<double>::infinity());
    t.push_back(std::numeric_limits<double>::infinity());
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
  }
  // Order so the deferred fraction never decreases along the curve.
  if (direction == DeferralDirection::below_threshold_small) std::reverse(t.begin(), t.end());
  return t;
}

OperatingPoint evaluate_threshold(std::span<const DeferralInput> inputs, double threshold,
                                  DeferralPolicy policy, DeferralDirection direction,
                                  AggregateMode mode) {
  Tally tally;
  for (const auto& in : inputs) {
    const bool small = direction == DeferralDirection::above_threshold_small ? in.proxy_score > threshold
                                                                            : in.proxy_score < threshold;
    tally.add(in, !small, policy);
  }
  const auto n = inputs.size();
  return {threshold, static_cast<double>(tally.deferred) / static_cast<double>(n), tally.metric(mode, n),
          tally.time};
}

}  // namespace

SingleModelAggregate single_model_aggregate(std::span<const DeferralInput> inputs, bool large,
                                            DeferralPolicy policy, AggregateMode mode) {
  check_inputs(inputs, mode);
  Tally tally;
  for (const auto& in : inputs) tally.add(in, large, policy);
  return {tally.metric(mode, inputs.size()), tally.time};
}

OperatingCurve deferral_curve(std::span<const DeferralInput> inputs, DeferralPolicy policy,
                              DeferralDirection direction, AggregateMode mode,
                              std::span<const double> thresholds) {
  check_inputs(inputs, mode);
  const auto t = ordered_thresholds(inputs, thresholds, direction);
  OperatingCurve curve;
  curve.points.resize(t.size());
  const auto n = static_cast<std::ptrdiff_t>(t.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    curve.points[i] = evaluate_threshold(inputs, t[i], policy, direction, mode);
  }
  return curve;
}

OperatingCurve deferral_curve_serial(std::span<const DeferralInput> inputs, DeferralPolicy policy,
                                     DeferralDirection direction, AggregateMode mode,
                                     std::span<const double> thresholds) {
  check_inputs(inputs, mode);
  OperatingCurve curve;
  for (double t : ordered_thresholds(inputs, thresholds, direction)) {
    curve.points.push_back(evaluate_threshold(inputs, t, policy, direction, mode));
  }
  return curve;
}

MatchedPoint matched_operating_point(const OperatingCurve& curve, MatchTarget target) {
  const auto& pts = curve.points;
  if (pts.empty()) throw Error("empty operating curve");
  const bool by_time = target.axis == MatchTarget::Axis::time;
  auto axis = [&](const OperatingPoint& p) { return by_time ? p.time : p.metric; };

  for (const auto& p : pts) {
    if (axis(p) == target.value) return {p.threshold, p.metric, p.time};
  }
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = axis(pts[i]);
    const double b = axis(pts[i + 1]);
    if (a == b || target.value < std::min(a, b) || target.value > std::max(a, b)) continue;
    const double w = (target.value - a) / (b - a);
    MatchedPoint m;
    m.metric = pts[i].metric + w * (pts[i + 1].metric - pts[i].metric);
    m.time = pts[i].time + w * (pts[i + 1].time - pts[i].time);
    if (by_time) m.time = target.value;
    else m.metric = target.value;
    const double t0 = pts[i].threshold, t1 = pts[i + 1].threshold;
    if (std::isfinite(t0) && std::isfinite(t1)) {
      m.threshold = t0 + w * (t1 - t0);
    } else if (std::isfinite(t0) != std::isfinite(t1)) {
      m.threshold = std::isfinite(t0) ? t0 : t1;
    } else {
      m.threshold = w < 0.5 ? t0 : t1;
    }
    return m;
  }
  throw Error("unreachable operating point");
}

void write_curve_csv(std::ostream& os, const OperatingCurve& curve) {
  os << "threshold,fraction_deferred,metric,time\n";
  for (const auto& p : curve.points) {
    os << format_double(p.threshold) << ',' << format_double(p.fraction_deferred) << ','
       << format_double(p.metric) << ',' << format_double(p.time) << '\n';
  }
}

void write_filter_csv(std::ostream& os, std::span<const FilterPoint> curve) {
  os << "fraction_removed,metric\n";
  for (const auto& p : curve) os << format_double(p.fraction_removed) << ',' << format_double(p.metric) << '\n';
}

}  // namespace nap::tasks
