#include "gdkd/gradients.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace gdkd {

namespace {

void check_pair(std::span<const double> z_t, std::span<const double> z_s) {
  check_logits(z_t);
  check_logits(z_s);
  if (z_t.size() != z_s.size()) throw Error(ErrorKind::Shape, "teacher/student class counts differ");
}

void check_class(Index c, std::size_t n) {
  if (c >= n) throw Error(ErrorKind::Domain, "class " + std::to_string(c) + " out of range");
}

double sum_except(std::span<const double> p, Index c) {
  double s = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    if (i != c) s += p[i];
  }
  return s;
}

}  // namespace

GradVector grad_topkd(std::span<const double> z_t, std::span<const double> z_s, Index c, double t) {
  check_pair(z_t, z_s);
  check_class(c, z_t.size());
  const Vec p_t = softmax(z_t, t);
  const Vec p_s = softmax(z_s, t);
  const double eta_t = sum_except(p_t, c);
  const double eta_s = sum_except(p_s, c);

  GradVector g;
  g.values.resize(z_t.size());
  if (eta_s > 0.0) {
    const double ratio = eta_t / eta_s;
    for (Index i = 0; i < z_t.size(); ++i) {
      g.values[i] = i == c ? p_s[c] - p_t[c] : p_s[i] * (p_t[c] - ratio * p_s[c]);
    }
  } else {
    // p_i^S η^T/η^S is η^T times the renormalised non-top student probability.
    g.saturated = true;
    IndexSet rest;
    for (Index i = 0; i < z_t.size(); ++i) {
      if (i != c) rest.push_back(i);
    }
    const Vec leaf_s = subset_softmax(z_s, rest, t);
    g.values[c] = p_s[c] - p_t[c];
    for (std::size_t j = 0; j < rest.size(); ++j) {
      g.values[rest[j]] = p_s[rest[j]] - eta_t * leaf_s[j];
    }
  }
  for (double& v : g.values) v /= t;
  return g;
}

GradVector grad_otherkd(std::span<const double> z_t, std::span<const double> z_s, Index c, double t) {
  check_pair(z_t, z_s);
  check_class(c, z_t.size());
  IndexSet rest;
  for (Index i = 0; i < z_t.size(); ++i) {
    if (i != c) rest.push_back(i);
  }
  const Vec q_t = subset_softmax(z_t, rest, t);
  const Vec q_s = subset_softmax(z_s, rest, t);
  GradVector g;
  g.values.assign(z_t.size(), 0.0);
  for (std::size_t j = 0; j < rest.size(); ++j) g.values[rest[j]] = (q_s[j] - q_t[j]) / t;
  return g;
}

GradVector grad_kd(std::span<const double> z_t, std::span<const double> z_s, double t) {
  check_pair(z_t, z_s);
  const Vec p_t = softmax(z_t, t);
  const Vec p_s = softmax(z_s, t);
  GradVector g;
  g.values.resize(z_t.size());
  for (Index i = 0; i < z_t.size(); ++i) g.values[i] = (p_s[i] - p_t[i]) / t;
  return g;
}

Vec grad_decoupled(std::span<const double> z_t, std::span<const double> z_s,
                   const Partition& partition, double w0, std::span<const double> weights,
                   double t) {
  check_pair(z_t, z_s);
  check_temperature(t);
  if (weights.size() != partition.size()) {
    throw Error(ErrorKind::Config, "one weight per partition group expected");
  }
  if (partition.num_classes() != z_t.size()) {
    throw Error(ErrorKind::Shape, "partition does not match the logit length");
  }
  const Vec p_s = softmax(z_s, t);
  const double lse_t = log_sum_exp(z_t, t);
  Vec g(z_t.size(), 0.0);
  for (std::size_t m = 0; m < partition.size(); ++m) {
    const IndexSet& grp = partition.group(m);
    const double b_t = std::exp(log_sum_exp(z_t, grp, t) - lse_t);
    const Vec leaf_t = subset_softmax(z_t, grp, t);
    const Vec leaf_s = subset_softmax(z_s, grp, t);
    for (std::size_t j = 0; j < grp.size(); ++j) {
      const Index i = grp[j];
      const double high = p_s[i] - b_t * leaf_s[j];
      const double low = leaf_s[j] - leaf_t[j];
      g[i] = (w0 * high + weights[m] * low) / t;
    }
  }
  return g;
}

Vec grad_loss(std::span<const double> z_t, std::span<const double> z_s, Index target,
              const LossConfig& cfg) {
  check_pair(z_t, z_s);
  Vec zt(z_t.begin(), z_t.end());
  Vec zs(z_s.begin(), z_s.end());
  if (cfg.use_ls) {
    zt = logit_standardize(z_t);
    zs = logit_standardize(z_s);
  }
  const LossPlan plan = plan_loss(zt, target, cfg);
  Vec g;
  if (!plan.partition) {
    g = grad_kd(zt, zs, cfg.temperature).values;
    for (double& v : g) v *= plan.high_weight;
  } else {
    g = grad_decoupled(zt, zs, *plan.partition, plan.high_weight, plan.group_weights,
                       cfg.temperature);
  }
  if (cfg.use_ls) g = logit_standardize_vjp(z_s, g);
  return g;
}

Vec objective_gradient(std::span<const double> z_t, std::span<const double> z_s, Index target,
                       const LossConfig& cfg, std::size_t epoch) {
  check_pair(z_t, z_s);
  if (target >= z_s.size()) throw Error(ErrorKind::Domain, "target out of range");
  Vec g = softmax(z_s, 1.0);
  g[target] -= 1.0;
  for (double& v : g) v *= cfg.ce_weight;
  const double warm = warmup_factor(epoch, cfg.warmup_epochs);
  if (warm > 0.0) {
    const Vec d = grad_loss(z_t, z_s, target, cfg);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += warm * d[i];
  }
  return g;
}

Vec finite_diff(const ScalarFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::Domain, "finite-difference step must be positive");
  Vec probe(x.begin(), x.end());
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Vec finite_diff_4pt(const ScalarFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::Domain, "finite-difference step must be positive");
  Vec probe(x.begin(), x.end());
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + 2.0 * h;
    const double up2 = f(probe);
    probe[i] = orig + h;
    const double up1 = f(probe);
    probe[i] = orig - h;
    const double down1 = f(probe);
    probe[i] = orig - 2.0 * h;
    const double down2 = f(probe);
    probe[i] = orig;
    g[i] = (8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * h);
  }
  return g;
}

bool grad_close(std::span<const double> a, std::span<const double> b, double rel, double abs_floor) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double tol = std::max(abs_floor, rel * std::max(std::abs(a[i]), std::abs(b[i])));
    if (!(std::abs(a[i] - b[i]) <= tol)) return false;
  }
  return true;
}

GradMagnitudeReport grad_magnitude_report(std::span<const GradSample> batch, double beta, double t,
                                          std::size_t epoch) {
  if (batch.empty()) throw Error(ErrorKind::Domain, "gradient report needs a nonempty batch");
  const std::size_t n = batch.size();
  Vec top(n), topkd(n), other_w(n), coupled(n), eta_t(n), eta_s(n);
  for (std::size_t s = 0; s < n; ++s) {
    const GradSample& sample = batch[s];
    const GradVector g_top = grad_topkd(sample.z_t, sample.z_s, sample.c, t);
    const GradVector g_other = grad_otherkd(sample.z_t, sample.z_s, sample.c, t);
    const Vec p_t = softmax(sample.z_t, t);
    const Vec p_s = softmax(sample.z_s, t);
    const double coupling = sum_except(p_t, sample.c);
    Vec a_top, a_other;
    for (Index i = 0; i < p_t.size(); ++i) {
      if (i == sample.c) continue;
      a_top.push_back(std::abs(g_top.values[i]));
      a_other.push_back(std::abs(g_other.values[i]));
    }
    const double m = static_cast<double>(a_top.size());
    const double other_mean = pairwise_sum(a_other) / m;
    top[s] = std::abs(g_top.values[sample.c]);
    topkd[s] = pairwise_sum(a_top) / m;
    other_w[s] = beta * other_mean;
    coupled[s] = coupling * other_mean;
    eta_t[s] = coupling;
    eta_s[s] = sum_except(p_s, sample.c);
  }
  const double dn = static_cast<double>(n);
  GradMagnitudeReport r;
  r.epoch = epoch;
  r.mean_abs_top = pairwise_sum(top) / dn;
  r.mean_abs_nontop_topkd = pairwise_sum(topkd) / dn;
  r.mean_abs_nontop_otherkd_weighted = pairwise_sum(other_w) / dn;
  r.mean_abs_nontop_coupledkd = pairwise_sum(coupled) / dn;
  r.eta_t = pairwise_sum(eta_t) / dn;
  r.eta_s = pairwise_sum(eta_s) / dn;
  return r;
}

void write_csv_row(std::ostream& os, const GradMagnitudeReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.epoch,
                r.mean_abs_top, r.mean_abs_nontop_topkd, r.mean_abs_nontop_otherkd_weighted,
                r.mean_abs_nontop_coupledkd, r.eta_t, r.eta_s);
  os << buf << '\n';
}

}  // namespace gdkd
