#include "gdkd/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gdkd {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::EmptyPartition: return "empty partition";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Degenerate: return "degenerate input";
    case ErrorKind::Training: return "training error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

void check_logits(std::span<const double> z) {
  if (z.size() < 2) {
    throw Error(ErrorKind::InvalidInput, "logit vector needs at least 2 classes, got " +
                                             std::to_string(z.size()));
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) {
      throw Error(ErrorKind::InvalidInput, "non-finite logit at index " + std::to_string(i));
    }
  }
}

void check_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw Error(ErrorKind::Domain, "temperature must be positive and finite");
  }
}

namespace {

void check_subset(std::span<const double> z, std::span<const Index> subset) {
  if (subset.empty()) throw Error(ErrorKind::EmptyPartition, "subset is empty");
  for (Index i : subset) {
    if (i >= z.size()) {
      throw Error(ErrorKind::Domain, "class index " + std::to_string(i) + " out of range");
    }
  }
}

}  // namespace

double log_sum_exp(std::span<const double> x, double t) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v / t);
  double s = 0.0;
  for (double v : x) s += std::exp(v / t - m);
  return m + std::log(s);
}

double log_sum_exp(std::span<const double> x, std::span<const Index> subset, double t) {
  double m = -std::numeric_limits<double>::infinity();
  for (Index i : subset) m = std::max(m, x[i] / t);
  double s = 0.0;
  for (Index i : subset) s += std::exp(x[i] / t - m);
  return m + std::log(s);
}

Vec log_softmax(std::span<const double> z, double t) {
  check_logits(z);
  check_temperature(t);
  const double lse = log_sum_exp(z, t);
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] / t - lse;
  return out;
}

Vec softmax(std::span<const double> z, double t) {
  check_logits(z);
  check_temperature(t);
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v / t);
  Vec out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] / t - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

Vec subset_log_softmax(std::span<const double> z, std::span<const Index> subset, double t) {
  check_logits(z);
  check_temperature(t);
  check_subset(z, subset);
  const double lse = log_sum_exp(z, subset, t);
  Vec out;
  out.reserve(subset.size());
  for (Index i : subset) out.push_back(z[i] / t - lse);
  return out;
}

Vec subset_softmax(std::span<const double> z, std::span<const Index> subset, double t) {
  check_logits(z);
  check_temperature(t);
  check_subset(z, subset);
  double m = -std::numeric_limits<double>::infinity();
  for (Index i : subset) m = std::max(m, z[i] / t);
  Vec out;
  out.reserve(subset.size());
  double s = 0.0;
  for (Index i : subset) {
    out.push_back(std::exp(z[i] / t - m));
    s += out.back();
  }
  for (double& v : out) v /= s;
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error(ErrorKind::Shape, "kl_divergence: lengths " + std::to_string(p.size()) + " and " +
                                      std::to_string(q.size()) + " differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    acc += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  // Rounding can leave a tiny negative value for p ≈ q.
  return std::max(acc, 0.0);
}

double kl_from_log_probs(std::span<const double> log_p, std::span<const double> log_q) {
  if (log_p.size() != log_q.size()) {
    throw Error(ErrorKind::Shape, "kl_from_log_probs: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < log_p.size(); ++i) {
    const double p = std::exp(log_p[i]);
    if (p == 0.0) continue;
    if (log_q[i] == -std::numeric_limits<double>::infinity()) {
      return std::numeric_limits<double>::infinity();
    }
    acc += p * (log_p[i] - log_q[i]);
  }
  return std::max(acc, 0.0);
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

Index argmax(std::span<const double> x) {
  Index best = 0;
  for (Index i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

}  // namespace gdkd
