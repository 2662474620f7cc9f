#include "gdkd/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace gdkd {

namespace {

constexpr std::array<std::pair<LossVariant, const char*>, 8> kVariantNames{{
    {LossVariant::KD, "kd"},
    {LossVariant::DKD, "dkd"},
    {LossVariant::GDKD, "gdkd"},
    {LossVariant::GDKDN, "gdkd_n"},
    {LossVariant::GDKD2, "gdkd2"},
    {LossVariant::GDKD_V1, "gdkd_v1"},
    {LossVariant::GDKD_V2, "gdkd_v2"},
    {LossVariant::GDKD_V3, "gdkd_v3"},
}};

void check_pair(std::span<const double> z_t, std::span<const double> z_s) {
  check_logits(z_t);
  check_logits(z_s);
  if (z_t.size() != z_s.size()) {
    throw Error(ErrorKind::Shape, "teacher has " + std::to_string(z_t.size()) +
                                      " classes, student has " + std::to_string(z_s.size()));
  }
}

void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw Error(ErrorKind::Config, std::string(name) + " must be a finite nonnegative number");
  }
}

double capped(double v, bool& saturated) {
  if (std::isfinite(v)) return v;
  saturated = true;
  return kKlCap;
}

LossBreakdown weighted(const DecoupledTerms& terms, double w0, std::span<const double> weights) {
  LossBreakdown out;
  out.saturated = terms.saturated;
  out.high_kd = capped(terms.high, out.saturated);
  out.high_weight = w0;
  out.low_terms.reserve(terms.low.size());
  for (double v : terms.low) out.low_terms.push_back(capped(v, out.saturated));
  out.weights_applied.assign(weights.begin(), weights.end());
  double total = w0 * out.high_kd;
  for (std::size_t m = 0; m < out.low_terms.size(); ++m) {
    total += out.weights_applied[m] * out.low_terms[m];
  }
  out.total = total;
  return out;
}

Index anchor_class(std::span<const double> z_t, Index target, const LossConfig& cfg) {
  return cfg.anchor == SplitAnchor::TeacherTop1 ? argmax(z_t) : target;
}

// [{c}, rest] shares its construction with the target-label split.
Partition single_class_split(Index c, Index num_classes) { return partition_target(c, num_classes); }

}  // namespace

const char* to_string(LossVariant v) noexcept {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  return "unknown";
}

LossVariant loss_variant_from_string(const std::string& name) {
  for (const auto& [variant, n] : kVariantNames) {
    if (name == n) return variant;
  }
  throw Error(ErrorKind::Config, "unknown loss variant '" + name + "'");
}

void validate(const LossConfig& cfg, Index num_classes) {
  if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature)) {
    throw Error(ErrorKind::Config, "temperature must be positive");
  }
  require_nonnegative(cfg.w0, "w0");
  require_nonnegative(cfg.w1, "w1");
  require_nonnegative(cfg.w2, "w2");
  require_nonnegative(cfg.alpha, "alpha");
  require_nonnegative(cfg.beta, "beta");
  require_nonnegative(cfg.beta2, "beta2");
  require_nonnegative(cfg.ls_scale, "ls_scale");
  for (double w : cfg.weights) require_nonnegative(w, "weights[]");
  if (cfg.m1) require_nonnegative(*cfg.m1, "m1");
  if (cfg.m2) require_nonnegative(*cfg.m2, "m2");
  if (!std::isfinite(cfg.ce_weight)) throw Error(ErrorKind::Config, "ce_weight must be finite");
  if (num_classes < 2) throw Error(ErrorKind::Config, "need at least 2 classes");

  switch (cfg.variant) {
    case LossVariant::GDKD:
    case LossVariant::GDKD_V1:
    case LossVariant::GDKD_V2:
    case LossVariant::GDKD_V3:
      if (cfg.k < 1 || cfg.k >= num_classes) {
        throw Error(ErrorKind::Config, "k must lie in [1, C-1]");
      }
      break;
    case LossVariant::GDKDN:
      if (cfg.k < 2 || cfg.k >= num_classes) {
        throw Error(ErrorKind::Config, "gdkd_n needs k in [2, C-1]");
      }
      if (cfg.weights.size() != 4) {
        throw Error(ErrorKind::Config, "gdkd_n needs 4 weights (w0 + one per group), got " +
                                           std::to_string(cfg.weights.size()));
      }
      break;
    default:
      break;
  }
  const bool needs_m1 = cfg.variant == LossVariant::GDKD_V1 || cfg.variant == LossVariant::GDKD_V3;
  const bool needs_m2 = cfg.variant == LossVariant::GDKD_V1 || cfg.variant == LossVariant::GDKD_V2;
  if (needs_m1 && !cfg.m1) throw Error(ErrorKind::Config, std::string(to_string(cfg.variant)) + " needs m1");
  if (needs_m2 && !cfg.m2) throw Error(ErrorKind::Config, std::string(to_string(cfg.variant)) + " needs m2");
}

void to_json(nlohmann::json& j, const LossConfig& cfg) {
  j = nlohmann::json{
      {"variant", to_string(cfg.variant)},
      {"temperature", cfg.temperature},
      {"k", cfg.k},
      {"w0", cfg.w0},
      {"w1", cfg.w1},
      {"w2", cfg.w2},
      {"weights", cfg.weights},
      {"alpha", cfg.alpha},
      {"beta", cfg.beta},
      {"beta2", cfg.beta2},
      {"anchor", cfg.anchor == SplitAnchor::TeacherTop1 ? "top1" : "target"},
      {"use_ls", cfg.use_ls},
      {"ls_scale", cfg.ls_scale},
      {"ce_weight", cfg.ce_weight},
      {"warmup_epochs", cfg.warmup_epochs},
      {"scale_t_squared", cfg.scale_t_squared},
  };
  j["m1"] = cfg.m1 ? nlohmann::json(*cfg.m1) : nlohmann::json(nullptr);
  j["m2"] = cfg.m2 ? nlohmann::json(*cfg.m2) : nlohmann::json(nullptr);
}

LossConfig loss_config_from_json(const nlohmann::json& j, LossConfig cfg) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "loss config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "variant") {
        cfg.variant = loss_variant_from_string(value.get<std::string>());
      } else if (key == "temperature") {
        cfg.temperature = value.get<double>();
      } else if (key == "k") {
        cfg.k = value.get<std::size_t>();
      } else if (key == "w0") {
        cfg.w0 = value.get<double>();
      } else if (key == "w1") {
        cfg.w1 = value.get<double>();
      } else if (key == "w2") {
        cfg.w2 = value.get<double>();
      } else if (key == "weights") {
        cfg.weights = value.get<Vec>();
      } else if (key == "alpha") {
        cfg.alpha = value.get<double>();
      } else if (key == "beta") {
        cfg.beta = value.get<double>();
      } else if (key == "beta2") {
        cfg.beta2 = value.get<double>();
      } else if (key == "m1") {
        cfg.m1 = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
      } else if (key == "m2") {
        cfg.m2 = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
      } else if (key == "anchor") {
        const auto a = value.get<std::string>();
        if (a == "top1") {
          cfg.anchor = SplitAnchor::TeacherTop1;
        } else if (a == "target") {
          cfg.anchor = SplitAnchor::Target;
        } else {
          throw Error(ErrorKind::Config, "anchor must be 'top1' or 'target'");
        }
      } else if (key == "use_ls") {
        cfg.use_ls = value.get<bool>();
      } else if (key == "ls_scale") {
        cfg.ls_scale = value.get<double>();
      } else if (key == "ce_weight") {
        cfg.ce_weight = value.get<double>();
      } else if (key == "warmup_epochs") {
        cfg.warmup_epochs = value.get<std::size_t>();
      } else if (key == "scale_t_squared") {
        cfg.scale_t_squared = value.get<bool>();
      } else {
        throw Error(ErrorKind::Config, "unknown key");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, "field '" + key + "': " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "field '" + key + "': " + e.what());
    }
  }
  return cfg;
}

DecoupledTerms decoupled_terms(std::span<const double> z_t, std::span<const double> z_s,
                               const Partition& partition, double t) {
  check_pair(z_t, z_s);
  check_temperature(t);
  if (partition.num_classes() != z_t.size()) {
    throw Error(ErrorKind::Shape, "partition covers " + std::to_string(partition.num_classes()) +
                                      " classes, logits have " + std::to_string(z_t.size()));
  }
  const double lse_t = log_sum_exp(z_t, t);
  const double lse_s = log_sum_exp(z_s, t);
  const std::size_t n = partition.size();

  DecoupledTerms out;
  Vec log_bt(n), log_bs(n);
  out.low.resize(n);
  Vec leaf_t, leaf_s;
  for (std::size_t m = 0; m < n; ++m) {
    const IndexSet& g = partition.group(m);
    const double lse_tm = log_sum_exp(z_t, g, t);
    const double lse_sm = log_sum_exp(z_s, g, t);
    log_bt[m] = lse_tm - lse_t;
    log_bs[m] = lse_sm - lse_s;
    leaf_t.resize(g.size());
    leaf_s.resize(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      leaf_t[j] = z_t[g[j]] / t - lse_tm;
      leaf_s[j] = z_s[g[j]] / t - lse_sm;
    }
    out.low[m] = kl_from_log_probs(leaf_t, leaf_s);
  }
  out.high = kl_from_log_probs(log_bt, log_bs);
  out.teacher_mass.resize(n);
  out.student_mass.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    out.teacher_mass[m] = std::exp(log_bt[m]);
    out.student_mass[m] = std::exp(log_bs[m]);
  }
  out.saturated = !std::isfinite(out.high) ||
                  std::any_of(out.low.begin(), out.low.end(), [](double v) { return !std::isfinite(v); });
  return out;
}

double kd_loss(std::span<const double> z_t, std::span<const double> z_s, double t) {
  check_pair(z_t, z_s);
  const Vec lp_t = log_softmax(z_t, t);
  const Vec lp_s = log_softmax(z_s, t);
  const double v = kl_from_log_probs(lp_t, lp_s);
  return std::isfinite(v) ? v : kKlCap;
}

LossBreakdown kd_loss_decomposed(std::span<const double> z_t, std::span<const double> z_s,
                                 const Partition& partition, double t) {
  const DecoupledTerms terms = decoupled_terms(z_t, z_s, partition, t);
  return weighted(terms, 1.0, terms.teacher_mass);
}

LossBreakdown dkd_loss(std::span<const double> z_t, std::span<const double> z_s, Index target,
                       double alpha, double beta, double t) {
  require_nonnegative(alpha, "alpha");
  require_nonnegative(beta, "beta");
  const Partition p = partition_target(target, z_t.size());
  const DecoupledTerms terms = decoupled_terms(z_t, z_s, p, t);
  const std::array<double, 2> w{0.0, beta};
  return weighted(terms, alpha, w);
}

LossBreakdown gdkd_loss(std::span<const double> z_t, std::span<const double> z_s,
                        const LossConfig& cfg) {
  if (cfg.variant != LossVariant::GDKD) {
    throw Error(ErrorKind::Config, "gdkd_loss called with variant " + std::string(to_string(cfg.variant)));
  }
  check_pair(z_t, z_s);
  validate(cfg, z_t.size());
  const Partition p = partition_topk(z_t, cfg.k);
  const DecoupledTerms terms = decoupled_terms(z_t, z_s, p, cfg.temperature);
  const std::array<double, 2> w{cfg.w1, cfg.w2};
  return weighted(terms, cfg.w0, w);
}

LossBreakdown gdkd_n_loss(std::span<const double> z_t, std::span<const double> z_s,
                          const Partition& partition, std::span<const double> weights, double t) {
  if (weights.size() != partition.size() + 1) {
    throw Error(ErrorKind::Config, "expected " + std::to_string(partition.size() + 1) +
                                       " weights (w0 + one per group), got " +
                                       std::to_string(weights.size()));
  }
  for (double w : weights) require_nonnegative(w, "weight");
  const DecoupledTerms terms = decoupled_terms(z_t, z_s, partition, t);
  return weighted(terms, weights[0], weights.subspan(1));
}

LossBreakdown gdkd2_loss(std::span<const double> z_t, std::span<const double> z_s, Index c,
                         double beta2, double t) {
  require_nonnegative(beta2, "beta2");
  const Partition p = single_class_split(c, z_t.size());
  const DecoupledTerms terms = decoupled_terms(z_t, z_s, p, t);
  const std::array<double, 2> w{0.0, beta2};
  return weighted(terms, 1.0, w);
}

LossBreakdown gdkd_dynamic_loss(std::span<const double> z_t, std::span<const double> z_s,
                                const LossConfig& cfg) {
  if (cfg.variant != LossVariant::GDKD_V1 && cfg.variant != LossVariant::GDKD_V2 &&
      cfg.variant != LossVariant::GDKD_V3) {
    throw Error(ErrorKind::Config, "gdkd_dynamic_loss needs variant V1, V2 or V3");
  }
  check_pair(z_t, z_s);
  validate(cfg, z_t.size());
  const Partition p = partition_topk(z_t, cfg.k);
  const DecoupledTerms terms = decoupled_terms(z_t, z_s, p, cfg.temperature);
  const LossPlan plan = [&] {
    LossConfig raw = cfg;
    raw.scale_t_squared = false;
    raw.use_ls = false;
    return plan_loss(z_t, 0, raw);
  }();
  return weighted(terms, plan.high_weight, plan.group_weights);
}

Vec logit_standardize(std::span<const double> z) {
  check_logits(z);
  const double n = static_cast<double>(z.size());
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) throw Error(ErrorKind::Degenerate, "constant logit vector has zero deviation");
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - mean) / sd;
  return out;
}

Vec logit_standardize_vjp(std::span<const double> z, std::span<const double> upstream) {
  if (z.size() != upstream.size()) throw Error(ErrorKind::Shape, "vjp length mismatch");
  const Vec y = logit_standardize(z);
  const double n = static_cast<double>(z.size());
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  double g_mean = 0.0, yg = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    g_mean += upstream[i];
    yg += y[i] * upstream[i];
  }
  g_mean /= n;
  yg /= n;
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (upstream[i] - g_mean - y[i] * yg) / sd;
  return out;
}

LossPlan plan_loss(std::span<const double> z_t, Index target, const LossConfig& cfg) {
  const Index c = z_t.size();
  validate(cfg, c);
  double scale = 1.0;
  if (cfg.scale_t_squared) scale *= cfg.temperature * cfg.temperature;
  if (cfg.use_ls) scale *= cfg.ls_scale;

  LossPlan plan;
  switch (cfg.variant) {
    case LossVariant::KD:
      plan.high_weight = scale;
      break;
    case LossVariant::DKD:
      plan.partition = partition_target(target, c);
      plan.high_weight = cfg.alpha * scale;
      plan.group_weights = {0.0, cfg.beta * scale};
      break;
    case LossVariant::GDKD:
      plan.partition = partition_topk(z_t, cfg.k);
      plan.high_weight = cfg.w0 * scale;
      plan.group_weights = {cfg.w1 * scale, cfg.w2 * scale};
      break;
    case LossVariant::GDKDN:
      plan.partition = partition_gdkd3(z_t, cfg.k);
      plan.high_weight = cfg.weights[0] * scale;
      for (std::size_t m = 1; m < cfg.weights.size(); ++m) {
        plan.group_weights.push_back(cfg.weights[m] * scale);
      }
      break;
    case LossVariant::GDKD2:
      if (cfg.anchor == SplitAnchor::Target && target >= c) {
        throw Error(ErrorKind::Domain, "target " + std::to_string(target) + " out of range");
      }
      plan.partition = single_class_split(anchor_class(z_t, target, cfg), c);
      plan.high_weight = scale;
      plan.group_weights = {0.0, cfg.beta2 * scale};
      break;
    case LossVariant::GDKD_V1:
    case LossVariant::GDKD_V2:
    case LossVariant::GDKD_V3: {
      plan.partition = partition_topk(z_t, cfg.k);
      const Vec p_t = softmax(z_t, cfg.temperature);
      const DecomposedDistribution d = decompose(p_t, *plan.partition);
      const double top_w = cfg.variant == LossVariant::GDKD_V2 ? cfg.w1 : *cfg.m1 * d.top_level[0];
      const double other_w = cfg.variant == LossVariant::GDKD_V3 ? cfg.w2 : *cfg.m2 * d.top_level[1];
      plan.high_weight = scale;
      plan.group_weights = {top_w * scale, other_w * scale};
      break;
    }
  }
  return plan;
}

LossBreakdown distill_loss(std::span<const double> z_t, std::span<const double> z_s, Index target,
                           const LossConfig& cfg) {
  check_pair(z_t, z_s);
  Vec zt(z_t.begin(), z_t.end());
  Vec zs(z_s.begin(), z_s.end());
  if (cfg.use_ls) {
    zt = logit_standardize(z_t);
    zs = logit_standardize(z_s);
  }
  const LossPlan plan = plan_loss(zt, target, cfg);
  if (!plan.partition) {
    LossBreakdown out;
    out.high_kd = kd_loss(zt, zs, cfg.temperature);
    out.saturated = out.high_kd >= kKlCap;
    out.high_weight = plan.high_weight;
    out.total = plan.high_weight * out.high_kd;
    return out;
  }
  const DecoupledTerms terms = decoupled_terms(zt, zs, *plan.partition, cfg.temperature);
  return weighted(terms, plan.high_weight, plan.group_weights);
}

double cross_entropy(std::span<const double> z, Index target) {
  check_logits(z);
  if (target >= z.size()) throw Error(ErrorKind::Domain, "target out of range");
  return log_sum_exp(z) - z[target];
}

double warmup_factor(std::size_t epoch, std::size_t warmup_epochs) {
  if (warmup_epochs == 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

ObjectiveTerms objective_terms(std::span<const double> z_t, std::span<const double> z_s,
                               Index target, const LossConfig& cfg, std::size_t epoch) {
  ObjectiveTerms out;
  out.ce = cross_entropy(z_s, target);
  out.warmup = warmup_factor(epoch, cfg.warmup_epochs);
  out.distill = distill_loss(z_t, z_s, target, cfg);
  out.total = cfg.ce_weight * out.ce + out.warmup * out.distill.total;
  return out;
}

double total_objective(std::span<const double> z_t, std::span<const double> z_s, Index target,
                       const LossConfig& cfg, std::size_t epoch) {
  return objective_terms(z_t, z_s, target, cfg, epoch).total;
}

}  // namespace gdkd
