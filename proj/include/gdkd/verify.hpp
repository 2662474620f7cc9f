#pragma once

// Randomised property checks over the loss family: decomposition identities,
// analytic-vs-finite-difference gradients and the non-top enhancement
// inequality. Each trial draws from its own generator seeded by
// (seed, check, trial), so results do not depend on the worker count.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gdkd {

struct CheckResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double max_error = 0.0;  // largest observed deviation (meaning is per check)
  double tolerance = 0.0;
  std::optional<nlohmann::json> counterexample;  // lowest-index failing trial

  bool passed() const noexcept { return violations == 0; }
};

enum class VerifySuite : std::uint8_t { Identity, Gradients, Enhancement, All };

VerifySuite verify_suite_from_string(const std::string& name);

// Individual checks.
CheckResult check_decomposition_identity(std::size_t trials, std::uint64_t seed);
CheckResult check_dkd_special_case(std::size_t trials, std::uint64_t seed);
CheckResult check_coupled_recovery(std::size_t trials, std::uint64_t seed);
CheckResult check_n_group_equivalence(std::size_t trials, std::uint64_t seed);
CheckResult check_top1_reduction(std::size_t trials, std::uint64_t seed);
CheckResult check_kd_gradient_reconstruction(std::size_t trials, std::uint64_t seed);
CheckResult check_enhancement(std::size_t trials, std::uint64_t seed);

/// Gradient variants checked against central differences.
enum class GradTarget : std::uint8_t {
  TopKD,
  OtherKD,
  KD,
  GDKD_K2,
  GDKD_K3,
  GDKD_K4,
  GDKD_K5,
  GDKD3,
  GDKD_V1,
  GDKD_V2,
  GDKD_V3,
  GDKD_LS,
};
const char* to_string(GradTarget t) noexcept;
std::vector<GradTarget> all_grad_targets();
CheckResult check_gradient(GradTarget target, std::size_t trials, std::uint64_t seed);

std::vector<CheckResult> run_suite(VerifySuite suite, std::size_t trials, std::uint64_t seed);

}  // namespace gdkd
