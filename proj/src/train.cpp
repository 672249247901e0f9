#include "nap/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "nap/error.hpp"
#include "nap/metrics.hpp"
#include "nap/scoring.hpp"

namespace nap::train {

void TrainConfig::validate() const {
  loss.validate();
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  if (loss.is_correlation() && batch_size < losses::kMinCorrelationBatch) {
    throw UsageError("batch size must be >= " + std::to_string(losses::kMinCorrelationBatch) +
                     " for correlation losses");
  }
  if (evals_per_epoch < 1) throw UsageError("evals per epoch must be >= 1");
  if (max_epochs < 1) throw UsageError("max epochs must be >= 1");
  if (hidden_width < 1) throw UsageError("hidden width must be >= 1");
}

void Adam::step(head::HeadParams& params, const head::HeadParams& grad) {
  auto p_tensors = params.tensors();
  auto g_tensors = grad.tensors();
  std::size_t total = 0;
  for (const auto& [name, span] : p_tensors) total += span.size();
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }
  require(m_.size() == total, "optimizer state does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (std::size_t t = 0; t < p_tensors.size(); ++t) {
    auto p = p_tensors[t].second;
    auto g = g_tensors[t].second;
    for (std::size_t i = 0; i < p.size(); ++i, ++k) {
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * g[i];
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * g[i] * g[i];
      const double mh = m_[k] / c1;
      const double vh = v_[k] / c2;
      p[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

namespace {

// Steps (1-based, within an epoch) after which validation runs.
std::vector<std::size_t> eval_points(std::size_t steps_per_epoch, std::size_t evals_per_epoch) {
  std::vector<std::size_t> pts;
  for (std::size_t j = 1; j <= evals_per_epoch; ++j) {
    const std::size_t s = (j * steps_per_epoch + evals_per_epoch - 1) / evals_per_epoch;
    if (s >= 1 && (pts.empty() || pts.back() != s)) pts.push_back(s);
  }
  return pts;
}

class Scorer {
 public:
  Scorer(std::vector<const ScoreRecord*> records, head::Pooling pooling)
      : records_(std::move(records)), pooling_(pooling) {
    if (pooling_ == head::Pooling::average) pooled_ = scoring::pool_average(records_);
  }

  std::size_t size() const { return records_.size(); }

  head::ForwardResult forward(std::size_t i, const head::HeadParams& params) const {
    if (pooling_ == head::Pooling::average) return head::mlp_forward(pooled_[i], params);
    return head::head_forward(records_[i]->features, params);
  }

  std::vector<double> score_all(const head::HeadParams& params) const {
    std::vector<double> out(records_.size());
    const auto n = static_cast<std::ptrdiff_t>(records_.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = forward(static_cast<std::size_t>(i), params).score;
    return out;
  }

 private:
  std::vector<const ScoreRecord*> records_;
  head::Pooling pooling_;
  std::vector<std::vector<double>> pooled_;
};

double validation_spearman(const std::vector<double>& scores, const std::vector<double>& targets) {
  try {
    return metrics::spearman_exact(scores, targets);
  } catch (const Error&) {
    // Constant predictions carry no ranking information.
    return 0.0;
  }
}

}  // namespace

TrainResult train_head(const std::vector<ScoreRecord>& records, const std::string& target_field,
                       const TrainConfig& config, const head::HeadParams& init_params) {
  config.validate();
  const auto train_recs = select_split(records, Split::train);
  const auto val_recs = select_split(records, Split::validation);
  if (train_recs.empty()) throw Error("empty train split");
  if (val_recs.empty()) throw Error("empty validation split");
  for (const auto* r : train_recs) {
    if (r->features.width() != init_params.input_dim) throw Error("feature width does not match head input");
  }
  for (const auto* r : val_recs) {
    if (r->features.width() != init_params.input_dim) throw Error("feature width does not match head input");
  }

  const std::vector<double> train_y = target_column(train_recs, target_field);
  const std::vector<double> val_y = target_column(val_recs, target_field);
  if (std::all_of(train_y.begin(), train_y.end(), [&](double v) { return v == train_y[0]; })) {
    throw Error("degenerate target");
  }
  const bool uses_secondary = config.loss.kind == losses::LossKind::ep_al;
  const std::vector<double> train_aux =
      uses_secondary ? target_column(train_recs, config.aleatoric_field) : std::vector<double>{};

  const Scorer train_scorer(train_recs, init_params.pooling);
  const Scorer val_scorer(val_recs, init_params.pooling);

  TrainResult result;
  head::HeadParams params = init_params;
  head::HeadParams grad = params.zeros_like();
  Adam adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps);
  std::mt19937_64 rng(config.seed);

  const std::size_t n = train_recs.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const auto evals = eval_points(steps_per_epoch, config.evals_per_epoch);
  const std::size_t patience = config.effective_patience();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> pred, tgt, aux;
  std::vector<head::ForwardCache> caches;

  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t global_step = 0;
  bool stop = false;
  result.params = params;

  for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t next_eval = 0;
    for (std::size_t s = 0; s < steps_per_epoch && !stop; ++s) {
      ++global_step;
      const std::size_t begin = s * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::size_t bsz = end - begin;

      bool skip = config.loss.is_correlation() && bsz < losses::kMinCorrelationBatch;
      if (!skip) {
        pred.resize(bsz);
        tgt.resize(bsz);
        aux.resize(uses_secondary ? bsz : 0);
        caches.resize(bsz);
        for (std::size_t b = 0; b < bsz; ++b) {
          const std::size_t i = order[begin + b];
          auto fwd = train_scorer.forward(i, params);
          pred[b] = fwd.score;
          caches[b] = std::move(fwd.cache);
          tgt[b] = train_y[i];
          if (uses_secondary) aux[b] = train_aux[i];
        }
        std::optional<losses::LossResult> loss;
        try {
          loss = losses::evaluate(config.loss, pred, tgt, aux);
        } catch (const Error&) {
          // Constant predictions or targets in this batch (e.g. at initialisation).
          skip = true;
        }
        if (!skip) {
          for (auto& [name, span] : grad.tensors()) std::fill(span.begin(), span.end(), 0.0);
          for (std::size_t b = 0; b < bsz; ++b) {
            head::accumulate_backward(params, caches[b], loss->grad_pred[b], grad);
          }
          adam.step(params, grad);
        }
      }
      if (skip) ++result.skipped_batches;

      if (next_eval < evals.size() && s + 1 == evals[next_eval]) {
        ++next_eval;
        const double metric = validation_spearman(val_scorer.score_all(params), val_y);
        result.history.push_back({global_step, metric});
        if (metric > best) {
          best = metric;
          since_best = 0;
          result.params = params;
          result.best_step = global_step;
          result.best_validation = metric;
        } else if (++since_best >= patience) {
          stop = true;
        }
      }
    }
  }
  return result;
}

}  // namespace nap::train
