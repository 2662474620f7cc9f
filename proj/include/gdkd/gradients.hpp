#pragma once

// Closed-form gradients of the distillation losses with respect to the
// student logits (the teacher is frozen), plus a central-difference oracle
// and the non-top gradient magnitude statistics used to compare the
// TopKD / OtherKD / coupled-KD terms.

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "gdkd/losses.hpp"
#include "gdkd/numeric.hpp"
#include "gdkd/partition.hpp"

namespace gdkd {

struct GradVector {
  Vec values;
  bool saturated = false;  // η^S underflowed and the stable form was used
};

/// ∇ KL(b^T||b^S) for the split [{c}, rest], in the closed form
///   i == c : p_c^S − p_c^T
///   i != c : p_i^S (p_c^T − (η^T/η^S) p_c^S),   η = 1 − p_c,
/// times the 1/T chain factor.
GradVector grad_topkd(std::span<const double> z_t, std::span<const double> z_s, Index c, double t);

/// ∇ KL(p_rest^T||p_rest^S): 0 at c, p_rest,i^S − p_rest,i^T elsewhere (× 1/T).
GradVector grad_otherkd(std::span<const double> z_t, std::span<const double> z_s, Index c, double t);

/// ∇ KL(p^T||p^S) = (p^S − p^T) / T.
GradVector grad_kd(std::span<const double> z_t, std::span<const double> z_s, double t);

/// Gradient of w0·KL(b^T||b^S) + Σ_m w_m·KL(p_m^T||p_m^S) for any partition.
/// Assembled per group from p_i^S − b_g^T p_{g,i}^S (high term) and
/// p_{g,i}^S − p_{g,i}^T (leaf terms).
Vec grad_decoupled(std::span<const double> z_t, std::span<const double> z_s,
                   const Partition& partition, double w0, std::span<const double> weights,
                   double t);

/// Gradient of distill_loss(z_t, z_s, target, cfg), LS chain included.
Vec grad_loss(std::span<const double> z_t, std::span<const double> z_s, Index target,
              const LossConfig& cfg);

/// Gradient of total_objective with respect to the student logits.
Vec objective_gradient(std::span<const double> z_t, std::span<const double> z_s, Index target,
                       const LossConfig& cfg, std::size_t epoch);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) − f(x − h e_i)) / 2h.
Vec finite_diff(const ScalarFn& f, std::span<const double> x, double h = 1e-5);

/// Fourth-order central stencil
///   (8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h.
/// Truncation error is O(h⁴), which keeps the oracle well below a 1e-6
/// relative tolerance when T² and group weights push the loss to O(100).
Vec finite_diff_4pt(const ScalarFn& f, std::span<const double> x, double h = 1e-3);

/// True when |a_i − b_i| <= max(abs_floor, rel · max(|a_i|, |b_i|)) for all i.
bool grad_close(std::span<const double> a, std::span<const double> b, double rel = 1e-6,
                double abs_floor = 1e-8);

struct GradSample {
  Vec z_t;
  Vec z_s;
  Index c = 0;  // isolated class; use argmax(z_t) for GDKD-top1
};

struct GradMagnitudeReport {
  std::size_t epoch = 0;
  double mean_abs_top = 0.0;                      // |∇_c TopKD|
  double mean_abs_nontop_topkd = 0.0;             // |∇_i TopKD|, i != c
  double mean_abs_nontop_otherkd_weighted = 0.0;  // β |∇_i OtherKD|
  double mean_abs_nontop_coupledkd = 0.0;         // (1 − p_c^T) |∇_i OtherKD|
  double eta_t = 0.0;
  double eta_s = 0.0;
};

/// Per sample: mean |grad| over non-top coordinates; then the mean over the
/// batch (deterministic pairwise reduction).
GradMagnitudeReport grad_magnitude_report(std::span<const GradSample> batch, double beta, double t,
                                          std::size_t epoch = 0);

inline constexpr const char* kGradReportCsvHeader =
    "epoch,mean_abs_top,mean_abs_nontop_topkd,mean_abs_nontop_otherkd_weighted,"
    "mean_abs_nontop_coupledkd,eta_T,eta_S";

void write_csv_row(std::ostream& os, const GradMagnitudeReport& r);

}  // namespace gdkd
