#pragma once

// JSON run configuration for `gdkd distill`.
//
//   {
//     "preset": "gdkd-default",
//     "pair": {"teacher": "ResNet32x4", "student": "ResNet8x4"},
//     "loss": { ...LossConfig keys, applied on top of the preset... },
//     "auto_k": true,
//     "seed": 0,
//     "task": { ...SyntheticTaskSpec keys... },
//     "teacher": {"hidden": [128, 128], "activation": "relu",
//                 "checkpoint": "teacher.json", "sgd": {...}},
//     "student": {"hidden": [64], "activation": "relu", "sgd": {...}},
//     "analysis_temperature": 4.0
//   }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdkd/losses.hpp"
#include "gdkd/mlp.hpp"
#include "gdkd/presets.hpp"
#include "gdkd/synthetic.hpp"
#include "gdkd/trainer.hpp"

namespace gdkd::cli {

struct NetworkConfig {
  std::vector<std::size_t> hidden;
  Activation activation = Activation::Relu;
  SgdOptions sgd;
};

struct DistillRunConfig {
  std::string preset = "gdkd-default";
  std::string teacher_arch{kDefaultTeacher};
  std::string student_arch{kDefaultStudent};
  LossConfig loss;
  bool auto_k = true;  // replace loss.k by the teacher's knee point
  std::uint64_t seed = 0;
  SyntheticTaskSpec task;
  NetworkConfig teacher;
  NetworkConfig student;
  std::optional<std::filesystem::path> teacher_checkpoint;
  double analysis_temperature = 4.0;
};

/// Desk-scale defaults used when a key is absent.
DistillRunConfig default_run_config();

/// Parses `text` (the contents of `source`). Syntax errors report
/// line:column; semantic errors name the offending field. Relative
/// checkpoint paths resolve against the directory of `source`.
/// `preset_override` replaces the file's "preset" key.
DistillRunConfig parse_run_config(const std::string& text, const std::filesystem::path& source,
                                  const std::optional<std::string>& preset_override = std::nullopt);

nlohmann::json to_json(const DistillRunConfig& cfg);

MlpSpec teacher_spec(const DistillRunConfig& cfg);
MlpSpec student_spec(const DistillRunConfig& cfg);

}  // namespace gdkd::cli
