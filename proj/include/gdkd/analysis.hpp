#pragma once

// Diagnostics over a teacher's predictive distribution: per-class average
// soft predictions, renormalised non-top probabilities, a knee-point choice
// of k, and teacher/student discrepancy matrices.

#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "gdkd/numeric.hpp"

namespace gdkd {

/// n × C block of logits, one row per sample.
using LogitMatrix = Matrix;

struct ClassPredictionProfile {
  Index class_id = 0;
  std::size_t samples = 0;
  Vec mean_probs;        // mean of softmax(z_t, T) over the class's samples
  IndexSet top_indices;  // classes by descending mean probability
};

struct ProfileSet {
  std::vector<ClassPredictionProfile> profiles;
  IndexSet missing;  // classes without samples; omitted from `profiles`
};

ProfileSet class_profiles(const LogitMatrix& teacher, std::span<const Index> labels, double t);

/// Top-1 mass over the mass of ranks 2..k. A diagnostic of how multimodal
/// the profile is (large = unimodal).
double multimodality_ratio(const ClassPredictionProfile& profile, std::size_t k);

struct EnhancementReport {
  Index top = 0;
  IndexSet classes;  // non-top classes, ascending
  Vec original;      // p_i
  Vec renormalized;  // p_i renormalised over the non-top classes
  bool holds = true; // renormalized > original everywhere
};

EnhancementReport enhancement_check(std::span<const double> z_t, double t);

/// Profiles sorted descending and averaged into one decay curve.
Vec mean_sorted_curve(std::span<const ClassPredictionProfile> profiles);

struct KneePoint {
  std::size_t k = 1;
  bool degenerate = false;  // curve had no bend; k defaulted to 1
  Vec curve;
};

/// Position of the largest second difference c[i-1] − 2c[i] + c[i+1] on a
/// descending curve, clamped to [1, C-1]. Ties go to the smaller k.
KneePoint knee_point_of_curve(std::span<const double> curve);
KneePoint knee_point_k(std::span<const ClassPredictionProfile> profiles);

struct DiscrepancyMatrix {
  std::size_t num_classes = 0;
  Vec logit_diff;  // C × C, row = true class, col = class
  Vec prob_diff;   // C × C
  std::vector<std::size_t> row_counts;
  bool diagonal_masked = true;

  double logit_at(Index row, Index col) const { return logit_diff[row * num_classes + col]; }
  double prob_at(Index row, Index col) const { return prob_diff[row * num_classes + col]; }
};

DiscrepancyMatrix discrepancy_matrix(const LogitMatrix& teacher, const LogitMatrix& student,
                                     std::span<const Index> labels, double t,
                                     bool mask_diagonal = true);

struct DiscrepancySummary {
  double mean_logit_diff = 0.0;
  double mean_prob_diff = 0.0;
  std::size_t entries = 0;
};

/// Mean over the populated rows; the diagonal is skipped when masked.
DiscrepancySummary summarize(const DiscrepancyMatrix& m);

/// Mean over samples of the mean |p_i^T − p_i^S| across the classes other
/// than the teacher's top class, at temperature t.
double nontop_prob_discrepancy(const LogitMatrix& teacher, const LogitMatrix& student, double t);

// Report writers. CSV uses %.17g so outputs round-trip exactly.
void write_profiles_csv(std::ostream& os, std::span<const ClassPredictionProfile> profiles);
void write_enhancement_csv(std::ostream& os, const LogitMatrix& teacher, double t);
void write_discrepancy_csv(std::ostream& os, const DiscrepancyMatrix& m);
nlohmann::json to_json(const ProfileSet& profiles);
nlohmann::json to_json(const KneePoint& knee);
nlohmann::json to_json(const DiscrepancyMatrix& m);

}  // namespace gdkd
