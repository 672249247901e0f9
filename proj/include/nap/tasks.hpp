#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nap/metrics.hpp"

namespace nap::tasks {

enum class OodDirection { higher_is_ood, lower_is_ood };

/// AUROC in percent with OOD as the positive class.
double ood_detect(std::span<const double> id_scores, std::span<const double> ood_scores,
                  OodDirection direction);

enum class FilterDirection { remove_lowest_predicted, remove_highest_predicted };

struct FilterPoint {
  double fraction_removed = 0.0;
  double metric = 0.0;
};

/// Drops floor(f * n) examples at the chosen extreme of `predicted` (ties
/// kept in input order) and averages `actual_metric` over the rest.
std::vector<FilterPoint> filtering_curve(std::span<const double> predicted,
                                         std::span<const double> actual_metric,
                                         std::span<const double> fractions, FilterDirection direction);

/// Same, pooling the remainder with corpus WER.
std::vector<FilterPoint> filtering_curve_wer(std::span<const double> predicted,
                                             std::span<const metrics::WerOutcome> outcomes,
                                             std::span<const double> fractions,
                                             FilterDirection direction);

/// {0, step, 2*step, ...} up to and including `last`.
std::vector<double> fraction_grid(double step, double last);

struct DeferralInput {
  double proxy_score = 0.0;
  double metric_small = 0.0;
  double metric_large = 0.0;
  std::size_t errors_small = 0;
  std::size_t errors_large = 0;
  std::size_t ref_len = 1;
  double time_small = 0.0;
  double time_large = 0.0;
  double time_proxy = 0.0;
};

enum class DeferralPolicy { proxy, small_model_uncertainty };
/// above_threshold_small: score > t goes to the small model.
/// below_threshold_small: score < t goes to the small model.
enum class DeferralDirection { above_threshold_small, below_threshold_small };
enum class AggregateMode { mean_metric, corpus_wer };

struct OperatingPoint {
  double threshold = 0.0;
  double fraction_deferred = 0.0;
  double metric = 0.0;
  double time = 0.0;
  bool operator==(const OperatingPoint&) const = default;
};

struct OperatingCurve {
  std::vector<OperatingPoint> points;  // fraction_deferred non-decreasing
};

/// All distinct scores plus -inf and +inf, ascending.
std::vector<double> default_thresholds(std::span<const DeferralInput> inputs);

/// Aggregate when every example goes to one model.
struct SingleModelAggregate {
  double metric = 0.0;
  double time = 0.0;
};
SingleModelAggregate single_model_aggregate(std::span<const DeferralInput> inputs, bool large,
                                            DeferralPolicy policy, AggregateMode mode);

/// One point per threshold (sentinels added when missing). Thresholds are
/// evaluated in parallel and assembled in order.
OperatingCurve deferral_curve(std::span<const DeferralInput> inputs, DeferralPolicy policy,
                              DeferralDirection direction, AggregateMode mode,
                              std::span<const double> thresholds = {});

/// Serial reference for deferral_curve.
OperatingCurve deferral_curve_serial(std::span<const DeferralInput> inputs, DeferralPolicy policy,
                                     DeferralDirection direction, AggregateMode mode,
                                     std::span<const double> thresholds = {});

struct MatchTarget {
  enum class Axis { time, metric } axis = Axis::time;
  double value = 0.0;
};

struct MatchedPoint {
  double threshold = 0.0;
  double metric = 0.0;
  double time = 0.0;
};

/// Linear interpolation on the target axis between adjacent curve points.
/// Throws "unreachable operating point" outside the achieved range.
MatchedPoint matched_operating_point(const OperatingCurve& curve, MatchTarget target);

void write_curve_csv(std::ostream& os, const OperatingCurve& curve);
void write_filter_csv(std::ostream& os, std::span<const FilterPoint> curve);

}  // namespace nap::tasks
