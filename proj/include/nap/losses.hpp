#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nap::losses {

enum class LossKind { scc, pcc, mae, rmse, ep_al };

std::string_view to_string(LossKind kind);
/// Throws nap::UsageError listing valid names.
LossKind parse_loss_kind(std::string_view name);

/// Correlation losses are skipped on batches smaller than this.
inline constexpr std::size_t kMinCorrelationBatch = 8;

struct LossSpec {
  LossKind kind = LossKind::scc;
  double epsilon = 1e-6;
  double alpha = 0.0;

  bool is_correlation() const { return kind != LossKind::mae && kind != LossKind::rmse; }
  void validate() const;
};

struct LossResult {
  double value = 0.0;
  std::vector<double> grad_pred;
};

/// Negated soft Spearman correlation. Target ranks are exact midranks; only
/// the prediction ranks are relaxed.
LossResult spearman_loss(std::span<const double> pred, std::span<const double> target,
                         double epsilon);

/// Negated Pearson correlation. Throws "zero variance" on constant inputs.
LossResult pearson_loss(std::span<const double> pred, std::span<const double> target);

LossResult mae_loss(std::span<const double> pred, std::span<const double> target);

/// Zero loss yields a zero gradient.
LossResult rmse_loss(std::span<const double> pred, std::span<const double> target);

/// scc(pred, epistemic) - alpha * |scc(pred, aleatoric)|, with sign(0) = 0.
LossResult decorrelation_loss(std::span<const double> pred, std::span<const double> epistemic,
                              std::span<const double> aleatoric, double epsilon, double alpha);

/// Dispatch on spec.kind. `secondary` is only read by ep_al (aleatoric scores).
LossResult evaluate(const LossSpec& spec, std::span<const double> pred,
                    std::span<const double> target, std::span<const double> secondary = {});

}  // namespace nap::losses
