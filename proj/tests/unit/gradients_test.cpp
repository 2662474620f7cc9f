#include "gdkd/gradients.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gdkd/presets.hpp"
#include "test_support.hpp"

namespace gdkd {
namespace {

using testing::random_between;
using testing::random_logits;

double max_abs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

TEST(GradTopKd, MatchesHighPrecisionOracle) {
  const Vec zt{2, 1, 0}, zs{0, 1, 2};
  const GradVector g = grad_topkd(zt, zs, 0, 1.0);
  EXPECT_FALSE(g.saturated);
  EXPECT_NEAR(g.values[0], -0.57521038260444143, 1e-14);
  EXPECT_NEAR(g.values[1], 0.15469789788441719, 1e-14);
  EXPECT_NEAR(g.values[2], 0.42051248472002424, 1e-14);
  const Partition split = partition_target(0, 3);
  const Vec fd = finite_diff([&](std::span<const double> z) { return decoupled_terms(zt, z, split, 1.0).high; }, zs);
  EXPECT_TRUE(grad_close(g.values, fd));
}

TEST(GradTopKd, IdenticalLogitsGiveZero) {
  const Vec z{0.1, 2, -1, 0.4};
  for (double v : grad_topkd(z, z, 1, 4.0).values) EXPECT_NEAR(v, 0.0, 1e-16);
}

TEST(GradTopKd, SaturatedStudentUsesStableForm) {
  // The student puts all its mass on class 0, so η^S underflows to zero.
  const Vec zt{1, 0, 0}, zs{800, 0, 0};
  const GradVector g = grad_topkd(zt, zs, 0, 1.0);
  EXPECT_TRUE(g.saturated);
  for (double v : g.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(GradOtherKd, Examples) {
  const Vec zt{2, 1, 0}, zs{0, 1, 2};
  const GradVector g = grad_otherkd(zt, zs, 0, 1.0);
  EXPECT_EQ(g.values[0], 0.0);
  EXPECT_NEAR(g.values[1], -0.46211715726000976, 1e-14);
  EXPECT_NEAR(g.values[2], 0.46211715726000976, 1e-14);
  for (double v : grad_otherkd(zt, zt, 1, 4.0).values) EXPECT_EQ(v, 0.0);

  std::mt19937_64 rng(51);
  const Vec a = random_logits(rng, 5), b = random_logits(rng, 5);
  const Index c = argmax(a);
  const Partition split = partition_target(c, 5);
  const Vec fd = finite_diff([&](std::span<const double> z) { return decoupled_terms(a, z, split, 1.0).low[1]; }, b);
  const GradVector o = grad_otherkd(a, b, c, 1.0);
  EXPECT_EQ(o.values[c], 0.0);
  EXPECT_TRUE(grad_close(o.values, fd));
}

TEST(GradKd, Examples) {
  const Vec z{1, 2, 3, 4};
  for (double v : grad_kd(z, z, 4.0).values) EXPECT_EQ(v, 0.0);
  std::mt19937_64 rng(52);
  const Vec zt = random_logits(rng, 4), zs = random_logits(rng, 4);
  const Vec fd = finite_diff([&](std::span<const double> s) { return kd_loss(zt, s, 1.0); }, zs);
  EXPECT_TRUE(grad_close(grad_kd(zt, zs, 1.0).values, fd));
  const Vec fd4 = finite_diff([&](std::span<const double> s) { return kd_loss(zt, s, 4.0); }, zs);
  EXPECT_TRUE(grad_close(grad_kd(zt, zs, 4.0).values, fd4));
}

TEST(GradKd, ReconstructedFromTopAndOther) {
  std::mt19937_64 rng(53);
  const Vec zt = random_logits(rng, 7), zs = random_logits(rng, 7);
  const Index c = argmax(zt);
  const Vec top = grad_topkd(zt, zs, c, 1.0).values;
  const Vec other = grad_otherkd(zt, zs, c, 1.0).values;
  const Vec kd = grad_kd(zt, zs, 1.0).values;
  const double eta = 1.0 - softmax(zt, 1.0)[c];
  for (std::size_t i = 0; i < kd.size(); ++i) EXPECT_NEAR(top[i] + eta * other[i], kd[i], 1e-8);
}

TEST(FiniteDiff, LinearProbeAndConvergenceOrder) {
  const Vec x{0.3, -1.2, 2.0};
  const Vec g = finite_diff([](std::span<const double> z) { return z[1]; }, x);
  EXPECT_NEAR(g[0], 0.0, 1e-9);
  EXPECT_NEAR(g[1], 1.0, 1e-9);
  EXPECT_NEAR(g[2], 0.0, 1e-9);

  std::mt19937_64 rng(54);
  const Vec zt = random_logits(rng, 6), zs = random_logits(rng, 6);
  const ScalarFn f = [&](std::span<const double> s) { return kd_loss(zt, s, 1.0); };
  const Vec exact = grad_kd(zt, zs, 1.0).values;
  auto err = [&](double h) {
    const Vec fd = finite_diff(f, zs, h);
    double e = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) e = std::max(e, std::abs(fd[i] - exact[i]));
    return e;
  };
  const double e3 = err(1e-3), e4 = err(1e-4);
  // Second-order: a tenfold smaller step cuts the error roughly a hundredfold.
  EXPECT_GT(e3 / e4, 30.0);
  EXPECT_LT(e3 / e4, 300.0);
  EXPECT_THROW(finite_diff(f, zs, 0.0), Error);
}

TEST(FiniteDiff, FourPointStencilIsFourthOrder) {
  const Vec x{0.7};
  const ScalarFn f = [](std::span<const double> z) { return std::sin(z[0]); };
  const double exact = std::cos(0.7);
  const double e2 = std::abs(finite_diff_4pt(f, x, 1e-1)[0] - exact);
  const double e1 = std::abs(finite_diff_4pt(f, x, 5e-2)[0] - exact);
  EXPECT_NEAR(e2 / e1, 16.0, 1.0);
}

TEST(GradLoss, ConfiguredVariantsMatchFiniteDifferences) {
  std::mt19937_64 rng(55);
  std::vector<LossConfig> configs;
  for (const auto& name : preset_names()) configs.push_back(loss_preset(name));
  LossConfig k2;
  k2.k = 2;
  configs.push_back(k2);
  LossConfig dkd_target = loss_preset("gdkd-top1");
  dkd_target.anchor = SplitAnchor::Target;
  configs.push_back(dkd_target);

  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = random_between(rng, 6, 40);
    const Vec zt = random_logits(rng, c), zs = random_logits(rng, c);
    const Index y = random_between(rng, 0, c - 1);
    for (LossConfig cfg : configs) {
      cfg.scale_t_squared = trial % 2 == 0;
      cfg.temperature = trial % 4 < 2 ? 4.0 : 1.0;
      const Vec g = grad_loss(zt, zs, y, cfg);
      const Vec fd = finite_diff_4pt([&](std::span<const double> s) { return distill_loss(zt, s, y, cfg).total; }, zs);
      ASSERT_TRUE(grad_close(g, fd)) << to_string(cfg.variant) << " trial " << trial;
    }
  }
}

TEST(GradLoss, IdenticalLogitsGiveZero) {
  const Vec z{3, 1, 0.2, -1, 2.5, 0};
  for (const auto& name : preset_names()) {
    const Vec g = grad_loss(z, z, 2, loss_preset(name));
    EXPECT_LT(max_abs(g), 1e-12) << name;
  }
}

TEST(GradLoss, PureKlGradientsSumToZero) {
  std::mt19937_64 rng(56);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = random_between(rng, 6, 60);
    const Vec zt = random_logits(rng, c), zs = random_logits(rng, c);
    for (const auto& name : preset_names()) {
      const Vec g = grad_loss(zt, zs, 0, loss_preset(name));
      ASSERT_NEAR(testing::sum(g), 0.0, 1e-8) << name;
    }
    const Index top = argmax(zt);
    ASSERT_NEAR(testing::sum(grad_topkd(zt, zs, top, 4.0).values), 0.0, 1e-8);
    ASSERT_NEAR(testing::sum(grad_otherkd(zt, zs, top, 4.0).values), 0.0, 1e-8);
    ASSERT_NEAR(testing::sum(grad_kd(zt, zs, 4.0).values), 0.0, 1e-8);
  }
}

TEST(ObjectiveGradient, CombinesCrossEntropyAndWarmup) {
  std::mt19937_64 rng(57);
  const Vec zt = random_logits(rng, 8), zs = random_logits(rng, 8);
  LossConfig cfg;
  cfg.k = 3;
  for (std::size_t epoch : {0u, 7u, 30u}) {
    const Vec g = objective_gradient(zt, zs, 5, cfg, epoch);
    const Vec fd = finite_diff_4pt([&](std::span<const double> s) { return total_objective(zt, s, 5, cfg, epoch); }, zs);
    EXPECT_TRUE(grad_close(g, fd)) << epoch;
  }
}

TEST(GradMagnitudeReport, Examples) {
  std::vector<GradSample> same(3);
  for (auto& s : same) {
    s.z_t = {1, 2, 3, 0};
    s.z_s = s.z_t;
    s.c = 2;
  }
  const auto zero = grad_magnitude_report(same, 8.0, 4.0, 3);
  EXPECT_EQ(zero.epoch, 3u);
  EXPECT_EQ(zero.mean_abs_top, 0.0);
  EXPECT_EQ(zero.mean_abs_nontop_topkd, 0.0);
  EXPECT_EQ(zero.mean_abs_nontop_otherkd_weighted, 0.0);
  EXPECT_EQ(zero.mean_abs_nontop_coupledkd, 0.0);

  EXPECT_THROW(grad_magnitude_report({}, 8.0, 4.0), Error);

  // Single sample evaluated by hand from the closed forms.
  GradSample s{{2, 1, 0}, {0, 1, 2}, 0};
  const auto r = grad_magnitude_report(std::span<const GradSample>(&s, 1), 8.0, 1.0);
  EXPECT_NEAR(r.mean_abs_top, 0.57521038260444143, 1e-14);
  EXPECT_NEAR(r.mean_abs_nontop_topkd, (0.15469789788441719 + 0.42051248472002424) / 2, 1e-14);
  EXPECT_NEAR(r.mean_abs_nontop_otherkd_weighted, 8.0 * 0.46211715726000976, 1e-13);
  const double eta_t = 1.0 - 0.66524095577482189;
  EXPECT_NEAR(r.mean_abs_nontop_coupledkd, eta_t * 0.46211715726000976, 1e-14);
  EXPECT_NEAR(r.eta_t, eta_t, 1e-15);
  EXPECT_NEAR(r.eta_s, 1.0 - 0.090030573170380458, 1e-15);
}

TEST(GradMagnitudeReport, DecoupledWeightDominatesCoupled) {
  std::mt19937_64 rng(58);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t c = random_between(rng, 3, 60);
    GradSample s{random_logits(rng, c), random_logits(rng, c), 0};
    s.c = argmax(s.z_t);
    const double eta = 1.0 - softmax(s.z_t, 4.0)[s.c];
    const double beta = eta + std::uniform_real_distribution<double>(0.0, 8.0)(rng);
    const Vec other = grad_otherkd(s.z_t, s.z_s, s.c, 4.0).values;
    for (std::size_t i = 0; i < c; ++i) {
      if (i == s.c) continue;
      ASSERT_GE(std::abs(beta * other[i]), std::abs(eta * other[i]));
    }
    const auto r = grad_magnitude_report(std::span<const GradSample>(&s, 1), beta, 4.0);
    ASSERT_GE(r.mean_abs_nontop_otherkd_weighted, r.mean_abs_nontop_coupledkd);
  }
}

TEST(GradMagnitudeReport, CsvRow) {
  GradMagnitudeReport r;
  r.epoch = 4;
  r.mean_abs_top = 0.5;
  std::ostringstream os;
  write_csv_row(os, r);
  EXPECT_EQ(os.str(), "4,0.5,0,0,0,0,0\n");
  EXPECT_STREQ(kGradReportCsvHeader,
               "epoch,mean_abs_top,mean_abs_nontop_topkd,mean_abs_nontop_otherkd_weighted,"
               "mean_abs_nontop_coupledkd,eta_T,eta_S");
}

}  // namespace
}  // namespace gdkd
