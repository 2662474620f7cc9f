#pragma once

// Numerically stable softmax / KL primitives. Everything is double precision
// and natural-log based; 0·log 0 is taken as 0.

#include <cstddef>
#include <span>
#include <vector>

#include "gdkd/error.hpp"

namespace gdkd {

using Vec = std::vector<double>;
using Index = std::size_t;
using IndexSet = std::vector<Index>;

/// Dense row-major matrix, one row per sample.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Throws InvalidInput unless every entry is finite and there are at least
/// two of them.
void check_logits(std::span<const double> z);

/// Throws Domain unless 0 < t < inf.
void check_temperature(double t);

/// log Σ_i exp(x_i / t), shifted by the max for stability.
double log_sum_exp(std::span<const double> x, double t = 1.0);

/// log Σ_{i∈subset} exp(x_i / t).
double log_sum_exp(std::span<const double> x, std::span<const Index> subset, double t = 1.0);

Vec softmax(std::span<const double> z, double t = 1.0);
Vec log_softmax(std::span<const double> z, double t = 1.0);

/// Softmax of z restricted to `subset` and renormalised over it. The result
/// is ordered like `subset`.
Vec subset_softmax(std::span<const double> z, std::span<const Index> subset, double t = 1.0);
Vec subset_log_softmax(std::span<const double> z, std::span<const Index> subset, double t = 1.0);

/// KL(p || q) = Σ p_i log(p_i / q_i). Returns +inf when some p_i > 0 meets
/// q_i == 0; never NaN for valid probability vectors.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// KL between two distributions given by their log-probabilities. Computed as
/// Σ p_i (log p_i − log q_i) so nothing cancels catastrophically.
double kl_from_log_probs(std::span<const double> log_p, std::span<const double> log_q);

/// Shannon entropy in nats.
double entropy(std::span<const double> p);

/// Deterministic pairwise (tree) summation. The result depends only on the
/// input order, never on how a caller partitions the work.
double pairwise_sum(std::span<const double> x);

Index argmax(std::span<const double> x);  // lowest index wins ties

}  // namespace gdkd
