#include "nap/losses.hpp"

#include <cmath>

#include "nap/error.hpp"
#include "nap/metrics.hpp"
#include "nap/softrank.hpp"

namespace nap::losses {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::scc: return "scc";
    case LossKind::pcc: return "pcc";
    case LossKind::mae: return "mae";
    case LossKind::rmse: return "rmse";
    case LossKind::ep_al: return "ep_al";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::scc, LossKind::pcc, LossKind::mae, LossKind::rmse, LossKind::ep_al}) {
    if (to_string(k) == name) return k;
  }
  throw UsageError("unknown loss '" + std::string(name) + "' (valid: scc, pcc, mae, rmse, ep_al)");
}

void LossSpec::validate() const {
  if ((kind == LossKind::scc || kind == LossKind::ep_al) && !(epsilon > 0.0)) {
    throw UsageError("epsilon must be > 0 for " + std::string(to_string(kind)));
  }
  if (!(alpha >= 0.0)) throw UsageError("alpha must be >= 0");
}

namespace {

void check_inputs(std::span<const double> pred, std::span<const double> target, std::size_t min_n) {
  if (pred.size() != target.size()) throw Error("length mismatch");
  if (pred.size() < min_n) throw Error("batch too small");
  for (double v : pred) require(std::isfinite(v), "non-finite input");
  for (double v : target) require(std::isfinite(v), "non-finite input");
}

}  // namespace

LossResult spearman_loss(std::span<const double> pred, std::span<const double> target,
                         double epsilon) {
  check_inputs(pred, target, 2);
  const std::size_t n = pred.size();
  const auto target_ranks = metrics::midranks(target);
  const auto soft = softrank::soft_rank(pred, epsilon);

  const double nd = static_cast<double>(n);
  const double denom = nd * (nd * nd - 1.0);
  double sq = 0.0;
  std::vector<double> d_ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = target_ranks[i] - soft.ranks[i];
    sq += diff * diff;
    d_ranks[i] = -12.0 * diff / denom;
  }
  LossResult out;
  out.value = -(1.0 - 6.0 * sq / denom);
  out.grad_pred = softrank::soft_rank_vjp(soft, d_ranks);
  return out;
}

LossResult pearson_loss(std::span<const double> pred, std::span<const double> target) {
  check_inputs(pred, target, 2);
  const std::size_t n = pred.size();
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += pred[i];
    mt += target[i];
  }
  mp /= static_cast<double>(n);
  mt /= static_cast<double>(n);
  std::vector<double> a(n), b(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = pred[i] - mp;
    b[i] = target[i] - mt;
    sab += a[i] * b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error("zero variance");
  const double na = std::sqrt(saa);
  const double nb = std::sqrt(sbb);
  const double rho = sab / (na * nb);

  // d rho / d pred_i = b_i / (|a||b|) - rho * a_i / |a|^2; the centering
  // terms vanish because a and b sum to zero.
  LossResult out;
  out.value = -rho;
  out.grad_pred.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad_pred[i] = -(b[i] / (na * nb) - rho * a[i] / saa);
  }
  return out;
}

LossResult mae_loss(std::span<const double> pred, std::span<const double> target) {
  check_inputs(pred, target, 1);
  const double n = static_cast<double>(pred.size());
  LossResult out;
  out.grad_pred.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    out.value += std::abs(r);
    out.grad_pred[i] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / n;
  }
  out.value /= n;
  return out;
}

LossResult rmse_loss(std::span<const double> pred, std::span<const double> target) {
  check_inputs(pred, target, 1);
  const double n = static_cast<double>(pred.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    sq += r * r;
  }
  LossResult out;
  out.value = std::sqrt(sq / n);
  out.grad_pred.assign(pred.size(), 0.0);
  if (out.value > 0.0) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      out.grad_pred[i] = (pred[i] - target[i]) / (n * out.value);
    }
  }
  return out;
}

LossResult decorrelation_loss(std::span<const double> pred, std::span<const double> epistemic,
                              std::span<const double> aleatoric, double epsilon, double alpha) {
  if (aleatoric.size() != pred.size()) throw Error("length mismatch");
  require(alpha >= 0.0, "alpha must be >= 0");
  LossResult main = spearman_loss(pred, epistemic, epsilon);
  if (alpha == 0.0) {
    check_inputs(pred, aleatoric, 2);
    return main;
  }
  const LossResult side = spearman_loss(pred, aleatoric, epsilon);
  const double sign = side.value > 0.0 ? 1.0 : (side.value < 0.0 ? -1.0 : 0.0);
  main.value -= alpha * std::abs(side.value);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    main.grad_pred[i] -= alpha * sign * side.grad_pred[i];
  }
  return main;
}

LossResult evaluate(const LossSpec& spec, std::span<const double> pred,
                    std::span<const double> target, std::span<const double> secondary) {
  switch (spec.kind) {
    case LossKind::scc: return spearman_loss(pred, target, spec.epsilon);
    case LossKind::pcc: return pearson_loss(pred, target);
    case LossKind::mae: return mae_loss(pred, target);
    case LossKind::rmse: return rmse_loss(pred, target);
    case LossKind::ep_al:
      return decorrelation_loss(pred, target, secondary, spec.epsilon, spec.alpha);
  }
  throw Error("unknown loss kind");
}

}  // namespace nap::losses
