#pragma once

// The KD / DKD / GDKD loss family. Every function is a pure function of the
// teacher logits, the student logits and the configuration. Partitions are
// always derived from the teacher.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdkd/numeric.hpp"
#include "gdkd/partition.hpp"

namespace gdkd {

enum class LossVariant : std::uint8_t {
  KD,
  DKD,
  GDKD,
  GDKDN,  // three-way top1 / top2..k / rest partition with per-group weights
  GDKD2,
  GDKD_V1,
  GDKD_V2,
  GDKD_V3,
};

/// Which single class the two-group GDKD2 split isolates.
enum class SplitAnchor : std::uint8_t { TeacherTop1, Target };

const char* to_string(LossVariant v) noexcept;
LossVariant loss_variant_from_string(const std::string& name);

struct LossConfig {
  LossVariant variant = LossVariant::GDKD;
  double temperature = 4.0;
  std::size_t k = 5;
  double w0 = 1.0;
  double w1 = 1.0;
  double w2 = 8.0;
  Vec weights;  // GDKDN: {w0, w1, ..., wn}
  double alpha = 1.0;
  double beta = 8.0;
  std::optional<double> m1;
  std::optional<double> m2;
  double beta2 = 8.0;
  SplitAnchor anchor = SplitAnchor::TeacherTop1;
  bool use_ls = false;
  double ls_scale = 9.0;
  double ce_weight = 1.0;
  std::size_t warmup_epochs = 20;
  // Multiply the distillation term by T². Identity checks turn this off.
  bool scale_t_squared = true;
};

/// Throws Config/Domain if the configuration cannot be evaluated on C classes.
void validate(const LossConfig& cfg, Index num_classes);

void to_json(nlohmann::json& j, const LossConfig& cfg);
/// Applies the keys present in `j` on top of `base`. Unknown keys throw.
LossConfig loss_config_from_json(const nlohmann::json& j, LossConfig base = {});

/// total = high_weight·high_kd + Σ_m weights_applied[m]·low_terms[m].
struct LossBreakdown {
  double total = 0.0;
  double high_kd = 0.0;
  Vec low_terms;
  double high_weight = 1.0;
  Vec weights_applied;
  bool saturated = false;  // some KL term hit the finite cap
};

/// Cap used in place of an infinite KL term.
inline constexpr double kKlCap = 1e6;

/// Raw (unweighted) KL terms of the two-level decomposition.
struct DecoupledTerms {
  double high = 0.0;     // KL(b^T || b^S)
  Vec low;               // KL(p_m^T || p_m^S) per group
  Vec teacher_mass;      // b^T
  Vec student_mass;      // b^S
  bool saturated = false;
};

DecoupledTerms decoupled_terms(std::span<const double> z_t, std::span<const double> z_s,
                               const Partition& partition, double t);

double kd_loss(std::span<const double> z_t, std::span<const double> z_s, double t);

/// KD rewritten through a partition: high term weight 1, group m weighted by
/// the teacher group mass. The total reproduces kd_loss.
LossBreakdown kd_loss_decomposed(std::span<const double> z_t, std::span<const double> z_s,
                                 const Partition& partition, double t);

LossBreakdown dkd_loss(std::span<const double> z_t, std::span<const double> z_s, Index target,
                       double alpha, double beta, double t);

/// Two-group top-k loss, w0·high + w1·low_topk + w2·low_other.
LossBreakdown gdkd_loss(std::span<const double> z_t, std::span<const double> z_s,
                        const LossConfig& cfg);

/// Flat n-group form. `weights` = {w0, w1..wn}.
LossBreakdown gdkd_n_loss(std::span<const double> z_t, std::span<const double> z_s,
                          const Partition& partition, std::span<const double> weights, double t);

/// KL(b^T||b^S) + beta2·KL(p_rest^T||p_rest^S) for the split [{c}, rest].
LossBreakdown gdkd2_loss(std::span<const double> z_t, std::span<const double> z_s, Index c,
                         double beta2, double t);

/// V1/V2/V3 variants whose group weights scale with the teacher group mass.
LossBreakdown gdkd_dynamic_loss(std::span<const double> z_t, std::span<const double> z_s,
                                const LossConfig& cfg);

/// z-score with population standard deviation. Throws Degenerate for a
/// constant vector.
Vec logit_standardize(std::span<const double> z);

/// Vector-Jacobian product of logit_standardize at z.
Vec logit_standardize_vjp(std::span<const double> z, std::span<const double> upstream);

/// The weighted decomposition a configuration applies to one sample. For KD
/// the partition is absent and `high_weight` scales the full KL.
struct LossPlan {
  std::optional<Partition> partition;
  double high_weight = 1.0;
  Vec group_weights;
};

/// Resolves partition and effective weights (including T² and LS scale)
/// from the teacher logits. `z_t` must already be standardised if use_ls.
LossPlan plan_loss(std::span<const double> z_t, Index target, const LossConfig& cfg);

/// The configured distillation term for one sample, including LS and T²
/// scaling (folded into the applied weights).
LossBreakdown distill_loss(std::span<const double> z_t, std::span<const double> z_s, Index target,
                           const LossConfig& cfg);

/// Cross-entropy of softmax(z, 1) against a hard label.
double cross_entropy(std::span<const double> z, Index target);

/// min(1, epoch / warmup_epochs); 1 when warmup_epochs is 0.
double warmup_factor(std::size_t epoch, std::size_t warmup_epochs);

struct ObjectiveTerms {
  double ce = 0.0;
  double warmup = 1.0;
  LossBreakdown distill;
  double total = 0.0;
};

ObjectiveTerms objective_terms(std::span<const double> z_t, std::span<const double> z_s,
                               Index target, const LossConfig& cfg, std::size_t epoch);

/// ce_weight·CE + warmup(epoch)·distill.
double total_objective(std::span<const double> z_t, std::span<const double> z_s, Index target,
                       const LossConfig& cfg, std::size_t epoch);

}  // namespace gdkd
