#pragma once

// Hyperparameter presets for teacher/student pairs on CIFAR-100-style tasks.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdkd/losses.hpp"

namespace gdkd {

struct PairWeights {
  std::string_view teacher;
  std::string_view student;
  double w1;
  double w2;
  std::optional<double> m1;
  std::optional<double> m2;
};

std::span<const PairWeights> pair_weight_table();

/// Case-sensitive lookup by architecture names, e.g. "ResNet32x4", "ResNet8x4".
std::optional<PairWeights> find_pair(std::string_view teacher, std::string_view student);

/// Names accepted by loss_preset().
std::vector<std::string> preset_names();

inline constexpr std::string_view kDefaultTeacher = "ResNet32x4";
inline constexpr std::string_view kDefaultStudent = "ResNet8x4";

/// Builds a LossConfig for a named preset. Pair-dependent weights come from
/// the table; an unknown pair is a Config error.
///   kd, dkd, gdkd-default (alias gdkd), gdkd-top1, gdkd3, gdkd-v1, gdkd-v2,
///   gdkd-v3, gdkd-ls
LossConfig loss_preset(std::string_view name, std::string_view teacher = kDefaultTeacher,
                       std::string_view student = kDefaultStudent);

}  // namespace gdkd
