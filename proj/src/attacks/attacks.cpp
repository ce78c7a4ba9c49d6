#include "modeconn/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "modeconn/adam.hpp"
#include "modeconn/connector.hpp"
#include "modeconn/errors.hpp"
#include "modeconn/loss.hpp"
#include "modeconn/rng.hpp"

namespace modeconn {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::bim: return "bim";
    case AttackKind::pgd: return "pgd";
    case AttackKind::deepfool: return "deepfool";
    case AttackKind::cw: return "cw";
    case AttackKind::targeted_opt: return "targeted_opt";
  }
  return "unknown";
}

AttackKind attack_kind_from_string(std::string_view name) {
  for (auto k : {AttackKind::fgsm, AttackKind::bim, AttackKind::pgd, AttackKind::deepfool,
                 AttackKind::cw, AttackKind::targeted_opt})
    if (to_string(k) == name) return k;
  throw ConfigError("kind", "unknown attack '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon", "must be nonnegative");
  if (steps == 0) throw ConfigError("steps", "must be at least 1");
  if (!(step_size >= 0.0)) throw ConfigError("step_size", "must be nonnegative");
  if (cw_c && !(*cw_c >= 0.0)) throw ConfigError("cw_c", "must be nonnegative");
  if (cw_steps == 0) throw ConfigError("cw_steps", "must be at least 1");
  if (!(cw_lr > 0.0)) throw ConfigError("cw_lr", "must be positive");
  if (deepfool_max_iters == 0) throw ConfigError("deepfool_max_iters", "must be at least 1");
  if (!(deepfool_overshoot >= 0.0)) throw ConfigError("deepfool_overshoot", "must be nonnegative");
  if (!(range.lo < range.hi)) throw ConfigError("range", "lower bound must be below upper bound");
  if (!(targeted.lr > 0.0)) throw ConfigError("targeted.lr", "must be positive");
  if (targeted.iters == 0) throw ConfigError("targeted.iters", "must be at least 1");
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

AdversarialExample finish(const Network& net, AttackKind kind, const Tensor& x, std::size_t y,
                          Tensor adv) {
  AdversarialExample ex;
  ex.kind = kind;
  ex.source = x;
  ex.source_class = y;
  ex.predicted_class = argmax(net.forward(adv));
  ex.linf = distance_linf(adv, x);
  ex.l2 = distance_l2(adv, x);
  ex.success = ex.predicted_class != y;
  ex.adversarial = std::move(adv);
  return ex;
}

/// Clips v into the epsilon-ball around c, then into the data range. The ball
/// ends are pulled inward until |end - c| <= epsilon holds in floating point,
/// since c + epsilon can round one ulp past it.
double project(double v, double c, double epsilon, DataRange range) {
  double hi = c + epsilon, lo = c - epsilon;
  while (hi - c > epsilon) hi = std::nextafter(hi, c);
  while (c - lo > epsilon) lo = std::nextafter(lo, c);
  return std::clamp(std::min(std::max(v, lo), hi), range.lo, range.hi);
}

/// One clipped signed-gradient step of BIM/PGD.
void signed_step(const Network& net, const Tensor& x, std::size_t y, double epsilon, double step_size,
                 DataRange range, Tensor& adv) {
  const Tensor g = input_gradient(net, adv, y);
  for (std::size_t i = 0; i < adv.size(); ++i)
    adv[i] = project(adv[i] + step_size * sign(g[i]), x[i], epsilon, range);
}

}  // namespace

AdversarialExample fgsm(const Network& net, const Tensor& x, std::size_t y, double epsilon,
                        DataRange range) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("fgsm: epsilon must be nonnegative");
  const Tensor g = input_gradient(net, x, y);
  Tensor adv(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    adv[i] = project(x[i] + epsilon * sign(g[i]), x[i], epsilon, range);
  return finish(net, AttackKind::fgsm, x, y, std::move(adv));
}

AdversarialExample bim(const Network& net, const Tensor& x, std::size_t y, double epsilon,
                       double step_size, std::size_t steps, DataRange range) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("bim: epsilon must be nonnegative");
  if (steps == 0) throw InvalidArgument("bim: steps must be at least 1");
  Tensor adv = x;
  for (std::size_t s = 0; s < steps; ++s) signed_step(net, x, y, epsilon, step_size, range, adv);
  return finish(net, AttackKind::bim, x, y, std::move(adv));
}

AdversarialExample pgd(const Network& net, const Tensor& x, std::size_t y, double epsilon,
                       double step_size, std::size_t steps, std::uint64_t seed, DataRange range) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("pgd: epsilon must be nonnegative");
  if (steps == 0) throw InvalidArgument("pgd: steps must be at least 1");
  Rng rng(seed);
  Tensor adv = x;
  for (std::size_t i = 0; i < adv.size(); ++i)
    adv[i] = project(x[i] + rng.uniform(-epsilon, epsilon), x[i], epsilon, range);
  for (std::size_t s = 0; s < steps; ++s) signed_step(net, x, y, epsilon, step_size, range, adv);
  return finish(net, AttackKind::pgd, x, y, std::move(adv));
}

AdversarialExample deepfool(const Network& net, const Tensor& x, std::size_t max_iters,
                            double overshoot, std::optional<DataRange> range) {
  const std::size_t classes = net.num_classes();
  const std::size_t original = argmax(net.forward(x));
  Tensor total(x.shape());
  auto candidate = [&] {
    Tensor adv = x;
    axpy(1.0 + overshoot, total, adv);
    if (range) clamp_inplace(adv, range->lo, range->hi);
    return adv;
  };

  Tensor adv = x;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const auto trace = net.forward_trace(adv);
    const Tensor& z = trace.logits();
    if (it > 0 && argmax(z) != original) break;

    Tensor unit(z.shape());
    unit[original] = 1.0;
    const Tensor g_orig = net.backward(trace, unit);
    unit[original] = 0.0;

    double best_dist = std::numeric_limits<double>::infinity();
    Tensor best_w;
    double best_f = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      if (k == original) continue;
      unit[k] = 1.0;
      Tensor w = net.backward(trace, unit) - g_orig;
      unit[k] = 0.0;
      const double f = z[k] - z[original];
      const double wn = norm_l2(w);
      if (wn == 0.0) continue;
      const double dist = std::abs(f) / wn;
      if (dist < best_dist) {
        best_dist = dist;
        best_f = f;
        best_w = std::move(w);
      }
    }
    if (best_w.empty()) break;
    const double wn2 = dot(best_w, best_w);
    axpy((std::abs(best_f) + 1e-4) / wn2, best_w, total);
    adv = candidate();
  }
  return finish(net, AttackKind::deepfool, x, original, std::move(adv));
}

namespace {

struct CwRun {
  bool success = false;
  Tensor best;
  double best_l2 = std::numeric_limits<double>::infinity();
  Tensor last;
};

CwRun cw_single(const Network& net, const Tensor& x, std::size_t y, double c, std::size_t steps,
                double lr) {
  constexpr double kSqueeze = 1e-6;
  Tensor w(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    w[i] = std::atanh(2.0 * std::clamp(x[i], kSqueeze, 1.0 - kSqueeze) - 1.0);
  const AdamConfig adam{lr, 0.9, 0.999, 1e-8};
  AdamState state(x.size());
  CwRun run;
  Tensor adv(x.shape());
  for (std::size_t s = 0; s <= steps; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) adv[i] = 0.5 * (std::tanh(w[i]) + 1.0);
    const auto trace = net.forward_trace(adv);
    const Tensor& z = trace.logits();
    if (argmax(z) != y) {
      const double l2 = distance_l2(adv, x);
      if (l2 < run.best_l2) {
        run.success = true;
        run.best_l2 = l2;
        run.best = adv;
      }
    }
    if (s == steps) break;

    std::size_t other = y == 0 ? 1 : 0;
    for (std::size_t j = 0; j < z.size(); ++j)
      if (j != y && z[j] > z[other]) other = j;
    Tensor grad_x = (adv - x) * 2.0;
    if (z[y] - z[other] > 0.0 && c > 0.0) {
      Tensor dz(z.shape());
      dz[y] = c;
      dz[other] = -c;
      grad_x += net.backward(trace, dz);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double t = std::tanh(w[i]);
      grad_x[i] *= 0.5 * (1.0 - t * t);
    }
    w += adam_step(state, grad_x, adam);
  }
  run.last = adv;
  return run;
}

}  // namespace

AdversarialExample cw(const Network& net, const Tensor& x, std::size_t y, std::optional<double> c,
                      std::size_t steps, double lr, std::size_t search_steps) {
  if (c && !(*c >= 0.0)) throw InvalidArgument("cw: c must be nonnegative");
  CwRun best;
  Tensor fallback;
  if (c) {
    best = cw_single(net, x, y, *c, steps, lr);
    fallback = best.last;
  } else {
    double lo = 1e-3, hi = 1e2;
    for (std::size_t s = 0; s < std::max<std::size_t>(search_steps, 1); ++s) {
      const double trial = std::sqrt(lo * hi);
      auto run = cw_single(net, x, y, trial, steps, lr);
      if (fallback.empty()) fallback = run.last;
      if (run.success) {
        hi = trial;
        if (run.best_l2 < best.best_l2) best = std::move(run);
      } else {
        lo = trial;
      }
    }
  }
  auto ex = finish(net, AttackKind::cw, x, y, best.success ? best.best : fallback);
  return ex;
}

AdversarialExample targeted_optimization(const Network& net, const Tensor& source,
                                         std::size_t source_class, std::size_t target,
                                         const TargetedConfig& cfg) {
  if (target >= net.num_classes()) throw InvalidArgument("targeted_optimization: target out of range");
  const bool image = source.shape().size() == 3;
  const double dev_scale = 2.0 * cfg.lambda_dev / static_cast<double>(source.size());
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  AdamState state(source.size());
  Tensor x = source;
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    auto lg = loss_and_input_gradient(net, x, target);
    if (!std::isfinite(lg.loss)) throw OptimizationError("targeted optimization diverged");
    Tensor grad = std::move(lg.grad);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += dev_scale * (x[k] - source[k]);
    if (image && cfg.lambda_hf > 0.0) axpy(cfg.lambda_hf, hf_penalty_gradient(x), grad);
    x += adam_step(state, grad, adam);
    if (cfg.clamp) clamp_inplace(x, cfg.clamp->lo, cfg.clamp->hi);
  }
  AdversarialExample ex = finish(net, AttackKind::targeted_opt, source, source_class, std::move(x));
  ex.target_class = target;
  ex.success = loss_at(net, ex.adversarial, target) <= cfg.loss_threshold &&
               ex.predicted_class == target;
  return ex;
}

AdversarialExample run_attack(const Network& net, const Tensor& x, std::size_t y,
                              const AttackConfig& cfg, std::uint64_t seed,
                              std::optional<std::size_t> target) {
  cfg.validate();
  switch (cfg.kind) {
    case AttackKind::fgsm: return fgsm(net, x, y, cfg.epsilon, cfg.range);
    case AttackKind::bim: return bim(net, x, y, cfg.epsilon, cfg.step_size, cfg.steps, cfg.range);
    case AttackKind::pgd:
      return pgd(net, x, y, cfg.epsilon, cfg.step_size, cfg.steps, seed, cfg.range);
    case AttackKind::deepfool:
      return deepfool(net, x, cfg.deepfool_max_iters, cfg.deepfool_overshoot, cfg.range);
    case AttackKind::cw: return cw(net, x, y, cfg.cw_c, cfg.cw_steps, cfg.cw_lr, cfg.cw_search_steps);
    case AttackKind::targeted_opt: {
      if (!target) throw ConfigError("target", "targeted_opt needs a target class");
      return targeted_optimization(net, x, y, *target, cfg.targeted);
    }
  }
  throw ConfigError("kind", "unknown attack");
}

}  // namespace modeconn
