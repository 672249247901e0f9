#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nap/head.hpp"
#include "nap/losses.hpp"
#include "nap/record.hpp"

namespace nap::train {

struct TrainConfig {
  losses::LossSpec loss;
  double learning_rate = 1e-4;
  std::size_t batch_size = 512;
  std::size_t max_epochs = 50;
  std::size_t evals_per_epoch = 10;
  std::size_t patience_evals = 0;  // 0 = evals_per_epoch (one epoch)
  std::uint64_t seed = 0;
  std::size_t hidden_width = 64;
  /// Aleatoric target used by the ep_al loss.
  std::string aleatoric_field = "aleatoric";

  // Adam moments
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  std::size_t effective_patience() const { return patience_evals ? patience_evals : evals_per_epoch; }
  /// Throws nap::UsageError on invalid settings.
  void validate() const;
};

struct HistoryPoint {
  std::size_t step = 0;
  double validation_spearman = 0.0;
  bool operator==(const HistoryPoint&) const = default;
};

struct TrainResult {
  head::HeadParams params;  // at the best validation point
  std::vector<HistoryPoint> history;
  std::size_t best_step = 0;
  double best_validation = 0.0;
  std::size_t skipped_batches = 0;
};

/// Minibatch Adam on the configured batch loss. Only the head trains; the
/// features are frozen inputs. Validation Spearman is tracked
/// evals_per_epoch times per epoch and training stops once it has not
/// improved for patience evaluations.
TrainResult train_head(const std::vector<ScoreRecord>& records, const std::string& target_field,
                       const TrainConfig& config, const head::HeadParams& init_params);

/// Adam state over a flattened parameter vector.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(head::HeadParams& params, const head::HeadParams& grad);

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace nap::train
