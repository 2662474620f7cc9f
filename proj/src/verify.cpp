#include "gdkd/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "gdkd/analysis.hpp"
#include "gdkd/gradients.hpp"
#include "gdkd/losses.hpp"
#include "gdkd/parallel.hpp"

namespace gdkd {

namespace {

using nlohmann::json;

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(trial),
                    static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Vec draw_logits(std::mt19937_64& rng, std::size_t c) {
  const double scale = std::uniform_real_distribution<double>(0.2, 6.0)(rng);
  std::normal_distribution<double> n(0.0, scale);
  Vec z(c);
  for (double& v : z) v = n(rng);
  return z;
}

double pick_temperature(std::mt19937_64& rng, std::initializer_list<double> choices) {
  const std::size_t i = uniform_size(rng, 0, choices.size() - 1);
  return *(choices.begin() + static_cast<std::ptrdiff_t>(i));
}

Partition random_two_groups(std::mt19937_64& rng, std::size_t c) {
  IndexSet perm(c);
  for (Index i = 0; i < c; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t cut = uniform_size(rng, 1, c - 1);
  return Partition::from_groups({IndexSet(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cut)),
                                 IndexSet(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end())},
                                c);
}

struct TrialOutcome {
  double error = 0.0;
  bool violated = false;
  json detail;
};

// Runs `trial` for every index in parallel and folds the outcomes in index
// order.
CheckResult run_trials(std::string name, double tolerance, std::size_t trials,
                       const std::function<TrialOutcome(std::size_t)>& trial) {
  std::vector<TrialOutcome> outcomes(trials);
  parallel_for(trials, [&](std::size_t i) { outcomes[i] = trial(i); });
  CheckResult r;
  r.name = std::move(name);
  r.trials = trials;
  r.tolerance = tolerance;
  for (std::size_t i = 0; i < trials; ++i) {
    const TrialOutcome& o = outcomes[i];
    if (std::isnan(o.error)) {
      r.max_error = o.error;
    } else if (!std::isnan(r.max_error)) {
      r.max_error = std::max(r.max_error, o.error);
    }
    if (o.violated) {
      if (!r.counterexample) {
        json ce = o.detail;
        ce["trial"] = i;
        ce["error"] = o.error;
        r.counterexample = std::move(ce);
      }
      ++r.violations;
    }
  }
  return r;
}

TrialOutcome compare_scalar(double a, double b, double tol, json detail) {
  TrialOutcome o;
  o.error = std::abs(a - b);
  o.violated = !(o.error < tol);
  if (o.violated) {
    detail["lhs"] = a;
    detail["rhs"] = b;
    o.detail = std::move(detail);
  }
  return o;
}

// Largest violation ratio of |a − b| against max(abs, rel·max(|a|,|b|)).
double grad_excess(std::span<const double> a, std::span<const double> b, double rel, double abs_floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double allowed = std::max(abs_floor, rel * std::max(std::abs(a[i]), std::abs(b[i])));
    worst = std::max(worst, std::abs(a[i] - b[i]) / allowed);
  }
  return worst;
}

LossConfig dynamic_config(LossVariant v, std::mt19937_64& rng, std::size_t c) {
  std::uniform_real_distribution<double> w(0.0, 10.0);
  LossConfig cfg;
  cfg.variant = v;
  cfg.k = uniform_size(rng, 1, std::min<std::size_t>(5, c - 1));
  cfg.w1 = w(rng);
  cfg.w2 = w(rng);
  cfg.m1 = w(rng);
  cfg.m2 = w(rng);
  return cfg;
}

}  // namespace

VerifySuite verify_suite_from_string(const std::string& name) {
  if (name == "identity") return VerifySuite::Identity;
  if (name == "gradients") return VerifySuite::Gradients;
  if (name == "enhancement") return VerifySuite::Enhancement;
  if (name == "all") return VerifySuite::All;
  throw Error(ErrorKind::Config, "unknown verify suite '" + name + "'");
}

CheckResult check_decomposition_identity(std::size_t trials, std::uint64_t seed) {
  return run_trials("decomposition_identity", 1e-10, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, 1, i);
    const std::size_t c = uniform_size(rng, 3, 200);
    const Vec z_t = draw_logits(rng, c);
    const Vec z_s = draw_logits(rng, c);
    const Partition p = random_two_groups(rng, c);
    const double t = pick_temperature(rng, {1.0, 2.0, 4.0});
    const double kd = kd_loss(z_t, z_s, t);
    const double dec = kd_loss_decomposed(z_t, z_s, p, t).total;
    return compare_scalar(kd, dec, 1e-10, {{"z_t", z_t}, {"z_s", z_s}, {"partition", p}, {"T", t}});
  });
}

CheckResult check_dkd_special_case(std::size_t trials, std::uint64_t seed) {
  return run_trials("dkd_special_case", 1e-12, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, 2, i);
    const std::size_t c = uniform_size(rng, 2, 100);
    const Vec z_t = draw_logits(rng, c);
    const Vec z_s = draw_logits(rng, c);
    const Index target = uniform_size(rng, 0, c - 1);
    const double beta = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
    const double t = pick_temperature(rng, {1.0, 2.0, 4.0});
    const double a = gdkd2_loss(z_t, z_s, target, beta, t).total;
    const double b = dkd_loss(z_t, z_s, target, 1.0, beta, t).total;
    return compare_scalar(a, b, 1e-12,
                          {{"z_t", z_t}, {"z_s", z_s}, {"target", target}, {"beta", beta}, {"T", t}});
  });
}

CheckResult check_coupled_recovery(std::size_t trials, std::uint64_t seed) {
  return run_trials("coupled_weight_recovery", 1e-10, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, 3, i);
    const std::size_t c = uniform_size(rng, 2, 100);
    const Vec z_t = draw_logits(rng, c);
    const Vec z_s = draw_logits(rng, c);
    const Index target = uniform_size(rng, 0, c - 1);
    const double t = pick_temperature(rng, {1.0, 2.0, 4.0});
    const double beta = 1.0 - softmax(z_t, t)[target];
    const double a = dkd_loss(z_t, z_s, target, 1.0, beta, t).total;
    const double b = kd_loss(z_t, z_s, t);
    return compare_scalar(a, b, 1e-10, {{"z_t", z_t}, {"z_s", z_s}, {"target", target}, {"T", t}});
  });
}

CheckResult check_n_group_equivalence(std::size_t trials, std::uint64_t seed) {
  return run_trials("n_group_equals_two_group", 1e-12, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, 4, i);
    const std::size_t c = uniform_size(rng, 2, 100);
    const Vec z_t = draw_logits(rng, c);
    const Vec z_s = draw_logits(rng, c);
    LossConfig cfg;
    cfg.k = uniform_size(rng, 1, c - 1);
    std::uniform_real_distribution<double> w(0.0, 10.0);
    cfg.w0 = w(rng);
    cfg.w1 = w(rng);
    cfg.w2 = w(rng);
    cfg.temperature = pick_temperature(rng, {1.0, 4.0});
    const Vec weights{cfg.w0, cfg.w1, cfg.w2};
    const double a = gdkd_n_loss(z_t, z_s, partition_topk(z_t, cfg.k), weights, cfg.temperature).total;
    const double b = gdkd_loss(z_t, z_s, cfg).total;
    return compare_scalar(a, b, 1e-12 * std::max(1.0, std::abs(b)),
                          {{"z_t", z_t}, {"z_s", z_s}, {"config", cfg}});
  });
}

CheckResult check_top1_reduction(std::size_t trials, std::uint64_t seed) {
  return run_trials("top1_reduction", 1e-12, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, 5, i);
    const std::size_t c = uniform_size(rng, 2, 100);
    const Vec z_t = draw_logits(rng, c);
    const Vec z_s = draw_logits(rng, c);
    LossConfig cfg;
    cfg.k = 1;
    cfg.w0 = 1.0;
    cfg.w1 = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
    cfg.w2 = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
    cfg.temperature = pick_temperature(rng, {1.0, 4.0});
    const double a = gdkd_loss(z_t, z_s, cfg).total;
    const double b = gdkd2_loss(z_t, z_s, argmax(z_t), cfg.w2, cfg.temperature).total;
    return compare_scalar(a, b, 1e-12 * std::max(1.0, std::abs(b)),
                          {{"z_t", z_t}, {"z_s", z_s}, {"config", cfg}});
  });
}

CheckResult check_kd_gradient_reconstruction(std::size_t trials, std::uint64_t seed) {
  return run_trials("kd_gradient_reconstruction", 1e-8, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, 6, i);
    const std::size_t c = uniform_size(rng, 3, 100);
    const Vec z_t = draw_logits(rng, c);
    const Vec z_s = draw_logits(rng, c);
    const Index top = argmax(z_t);
    const double t = pick_temperature(rng, {1.0, 4.0});
    const Vec top_g = grad_topkd(z_t, z_s, top, t).values;
    const Vec other_g = grad_otherkd(z_t, z_s, top, t).values;
    const Vec kd_g = grad_kd(z_t, z_s, t).values;
    const double eta_t = 1.0 - softmax(z_t, t)[top];
    TrialOutcome o;
    for (std::size_t j = 0; j < c; ++j) {
      o.error = std::max(o.error, std::abs(top_g[j] + eta_t * other_g[j] - kd_g[j]));
    }
    o.violated = !(o.error <= 1e-8);
    if (o.violated) o.detail = {{"z_t", z_t}, {"z_s", z_s}, {"T", t}};
    return o;
  });
}

CheckResult check_enhancement(std::size_t trials, std::uint64_t seed) {
  return run_trials("nontop_enhancement", 0.0, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, 7, i);
    const std::size_t c = uniform_size(rng, 2, 200);
    const Vec z = draw_logits(rng, c);
    const double t = pick_temperature(rng, {0.5, 1.0, 2.0, 4.0, 8.0});
    const EnhancementReport rep = enhancement_check(z, t);
    TrialOutcome o;
    // error = largest p_i − p_{\T,i}; any value >= 0 is a violation.
    o.error = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < rep.classes.size(); ++j) {
      o.error = std::max(o.error, rep.original[j] - rep.renormalized[j]);
    }
    o.violated = !rep.holds || o.error >= 0.0;
    if (o.violated) o.detail = {{"z_t", z}, {"T", t}};
    return o;
  });
}

const char* to_string(GradTarget t) noexcept {
  switch (t) {
    case GradTarget::TopKD: return "topkd";
    case GradTarget::OtherKD: return "otherkd";
    case GradTarget::KD: return "kd";
    case GradTarget::GDKD_K2: return "gdkd_k2";
    case GradTarget::GDKD_K3: return "gdkd_k3";
    case GradTarget::GDKD_K4: return "gdkd_k4";
    case GradTarget::GDKD_K5: return "gdkd_k5";
    case GradTarget::GDKD3: return "gdkd3";
    case GradTarget::GDKD_V1: return "gdkd_v1";
    case GradTarget::GDKD_V2: return "gdkd_v2";
    case GradTarget::GDKD_V3: return "gdkd_v3";
    case GradTarget::GDKD_LS: return "gdkd_ls";
  }
  return "?";
}

std::vector<GradTarget> all_grad_targets() {
  return {GradTarget::TopKD,   GradTarget::OtherKD, GradTarget::KD,      GradTarget::GDKD_K2,
          GradTarget::GDKD_K3, GradTarget::GDKD_K4, GradTarget::GDKD_K5, GradTarget::GDKD3,
          GradTarget::GDKD_V1, GradTarget::GDKD_V2, GradTarget::GDKD_V3, GradTarget::GDKD_LS};
}

CheckResult check_gradient(GradTarget target, std::size_t trials, std::uint64_t seed) {
  constexpr double kRel = 1e-6;
  constexpr double kAbs = 1e-8;
  const auto stream = 100 + static_cast<std::uint64_t>(target);
  return run_trials(std::string("gradient_") + to_string(target), 1.0, trials, [&](std::size_t i) {
    auto rng = trial_rng(seed, stream, i);
    const std::size_t c = uniform_size(rng, 6, 100);
    const Vec z_t = draw_logits(rng, c);
    const Vec z_s = draw_logits(rng, c);
    const double t = pick_temperature(rng, {1.0, 4.0});
    const Index top = argmax(z_t);
    const Index label = uniform_size(rng, 0, c - 1);

    Vec analytic;
    ScalarFn f;
    json detail{{"z_t", z_t}, {"z_s", z_s}, {"T", t}};
    switch (target) {
      case GradTarget::TopKD: {
        const Partition split = partition_target(top, c);
        analytic = grad_topkd(z_t, z_s, top, t).values;
        f = [&, split](std::span<const double> z) { return decoupled_terms(z_t, z, split, t).high; };
        break;
      }
      case GradTarget::OtherKD: {
        const Partition split = partition_target(top, c);
        analytic = grad_otherkd(z_t, z_s, top, t).values;
        f = [&, split](std::span<const double> z) { return decoupled_terms(z_t, z, split, t).low[1]; };
        break;
      }
      case GradTarget::KD:
        analytic = grad_kd(z_t, z_s, t).values;
        f = [&](std::span<const double> z) { return kd_loss(z_t, z, t); };
        break;
      default: {
        LossConfig cfg;
        cfg.temperature = t;
        cfg.scale_t_squared = (i % 2) == 0;
        std::uniform_real_distribution<double> w(0.0, 10.0);
        switch (target) {
          case GradTarget::GDKD_K2:
          case GradTarget::GDKD_K3:
          case GradTarget::GDKD_K4:
          case GradTarget::GDKD_K5:
            cfg.variant = LossVariant::GDKD;
            cfg.k = 2 + static_cast<std::size_t>(target) - static_cast<std::size_t>(GradTarget::GDKD_K2);
            cfg.w0 = w(rng);
            cfg.w1 = w(rng);
            cfg.w2 = w(rng);
            break;
          case GradTarget::GDKD3:
            cfg.variant = LossVariant::GDKDN;
            cfg.k = 5;
            cfg.weights = {1.0, 1.0, 1.0, 1.0};
            break;
          case GradTarget::GDKD_V1:
            cfg = dynamic_config(LossVariant::GDKD_V1, rng, c);
            break;
          case GradTarget::GDKD_V2:
            cfg = dynamic_config(LossVariant::GDKD_V2, rng, c);
            break;
          case GradTarget::GDKD_V3:
            cfg = dynamic_config(LossVariant::GDKD_V3, rng, c);
            break;
          case GradTarget::GDKD_LS:
            cfg.variant = LossVariant::GDKD;
            cfg.use_ls = true;
            cfg.k = uniform_size(rng, 1, 5);
            cfg.w2 = w(rng);
            break;
          default:
            break;
        }
        if (target >= GradTarget::GDKD_V1 && target <= GradTarget::GDKD_V3) {
          cfg.temperature = t;
          cfg.scale_t_squared = (i % 2) == 0;
        }
        analytic = grad_loss(z_t, z_s, label, cfg);
        f = [&, cfg](std::span<const double> z) { return distill_loss(z_t, z, label, cfg).total; };
        detail["config"] = cfg;
        detail["target"] = label;
        break;
      }
    }
    const Vec numeric = finite_diff_4pt(f, z_s);
    TrialOutcome o;
    o.error = grad_excess(analytic, numeric, kRel, kAbs);
    o.violated = !(o.error <= 1.0);
    if (o.violated) {
      detail["analytic"] = analytic;
      detail["finite_diff"] = numeric;
      o.detail = std::move(detail);
    }
    return o;
  });
}

std::vector<CheckResult> run_suite(VerifySuite suite, std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw Error(ErrorKind::Domain, "trials must be at least 1");
  std::vector<CheckResult> out;
  const bool all = suite == VerifySuite::All;
  if (all || suite == VerifySuite::Identity) {
    out.push_back(check_decomposition_identity(trials, seed));
    out.push_back(check_dkd_special_case(trials, seed));
    out.push_back(check_coupled_recovery(trials, seed));
    out.push_back(check_n_group_equivalence(trials, seed));
    out.push_back(check_top1_reduction(trials, seed));
  }
  if (all || suite == VerifySuite::Gradients) {
    for (GradTarget g : all_grad_targets()) out.push_back(check_gradient(g, trials, seed));
    out.push_back(check_kd_gradient_reconstruction(trials, seed));
  }
  if (all || suite == VerifySuite::Enhancement) out.push_back(check_enhancement(trials, seed));
  return out;
}

}  // namespace gdkd
