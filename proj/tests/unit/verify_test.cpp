#include "gdkd/verify.hpp"

#include <gtest/gtest.h>

#include "gdkd/error.hpp"

namespace gdkd {
namespace {

TEST(Verify, SmallSuitePassesEveryCheck) {
  const auto results = run_suite(VerifySuite::All, 40, 3);
  EXPECT_EQ(results.size(), 7u + all_grad_targets().size());
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed()) << r.name << " max_error=" << r.max_error;
    EXPECT_EQ(r.trials, 40u);
    EXPECT_FALSE(r.counterexample.has_value());
  }
}

TEST(Verify, ResultsDependOnlyOnSeed) {
  const auto a = run_suite(VerifySuite::Identity, 25, 11);
  const auto b = run_suite(VerifySuite::Identity, 25, 11);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].max_error, b[i].max_error);
  }
  const auto c = run_suite(VerifySuite::Identity, 25, 12);
  EXPECT_NE(a[0].max_error, c[0].max_error);
}

TEST(Verify, SuiteNames) {
  EXPECT_EQ(verify_suite_from_string("identity"), VerifySuite::Identity);
  EXPECT_EQ(verify_suite_from_string("gradients"), VerifySuite::Gradients);
  EXPECT_EQ(verify_suite_from_string("enhancement"), VerifySuite::Enhancement);
  EXPECT_EQ(verify_suite_from_string("all"), VerifySuite::All);
  EXPECT_THROW(verify_suite_from_string("everything"), Error);
  EXPECT_EQ(run_suite(VerifySuite::Enhancement, 5, 0).size(), 1u);
}

TEST(Verify, ZeroTrialsIsRejected) {
  EXPECT_THROW(run_suite(VerifySuite::All, 0, 0), Error);
}

}  // namespace
}  // namespace gdkd
