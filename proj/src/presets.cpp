#include "gdkd/presets.hpp"

#include <array>

namespace gdkd {

namespace {

constexpr std::optional<double> kNone = std::nullopt;

const std::array<PairWeights, 11> kTable{{
    {"ResNet56", "ResNet20", 1, 1, 3, 2},
    {"ResNet110", "ResNet32", 1, 1, kNone, kNone},
    {"WRN-40-2", "ShuffleNet-V1", 2, 6, 6, 10},
    {"WRN-40-2", "WRN-16-2", 2, 6, 6, 10},
    {"WRN-40-2", "WRN-40-1", 2, 6, kNone, kNone},
    {"VGG13", "VGG8", 1, 6, 3, 10},
    {"VGG13", "MobileNet-V2", 1, 6, 3, 10},
    {"ResNet50", "MobileNet-V2", 1, 8, 2, 16},
    {"ResNet32x4", "ResNet8x4", 2, 8, 6, 14},
    {"ResNet32x4", "ShuffleNet-V1", 1, 8, kNone, kNone},
    {"ResNet32x4", "ShuffleNet-V2", 1, 8, 3, 14},
}};

PairWeights require_pair(std::string_view teacher, std::string_view student) {
  auto p = find_pair(teacher, student);
  if (!p) {
    throw Error(ErrorKind::Config, "no preset weights for teacher '" + std::string(teacher) +
                                       "' / student '" + std::string(student) + "'");
  }
  return *p;
}

}  // namespace

std::span<const PairWeights> pair_weight_table() { return kTable; }

std::optional<PairWeights> find_pair(std::string_view teacher, std::string_view student) {
  for (const auto& p : kTable) {
    if (p.teacher == teacher && p.student == student) return p;
  }
  return std::nullopt;
}

std::vector<std::string> preset_names() {
  return {"kd", "dkd", "gdkd-default", "gdkd", "gdkd-top1", "gdkd3",
          "gdkd-v1", "gdkd-v2", "gdkd-v3", "gdkd-ls"};
}

LossConfig loss_preset(std::string_view name, std::string_view teacher, std::string_view student) {
  LossConfig cfg;
  cfg.temperature = 4.0;
  cfg.k = 5;
  cfg.w0 = 1.0;
  cfg.ce_weight = 1.0;
  cfg.warmup_epochs = 20;

  if (name == "kd") {
    cfg.variant = LossVariant::KD;
    return cfg;
  }
  if (name == "gdkd3") {
    cfg.variant = LossVariant::GDKDN;
    cfg.weights = {1.0, 1.0, 1.0, 1.0};
    return cfg;
  }
  const PairWeights pw = require_pair(teacher, student);
  if (name == "dkd") {
    cfg.variant = LossVariant::DKD;
    cfg.alpha = 1.0;
    cfg.beta = pw.w2;
  } else if (name == "gdkd-default" || name == "gdkd") {
    cfg.variant = LossVariant::GDKD;
    cfg.w1 = pw.w1;
    cfg.w2 = pw.w2;
  } else if (name == "gdkd-top1") {
    cfg.variant = LossVariant::GDKD2;
    cfg.anchor = SplitAnchor::TeacherTop1;
    cfg.beta2 = pw.w2;
  } else if (name == "gdkd-v1" || name == "gdkd-v2" || name == "gdkd-v3") {
    cfg.variant = name == "gdkd-v1"   ? LossVariant::GDKD_V1
                  : name == "gdkd-v2" ? LossVariant::GDKD_V2
                                      : LossVariant::GDKD_V3;
    cfg.w1 = pw.w1;
    cfg.w2 = pw.w2;
    cfg.m1 = pw.m1;
    cfg.m2 = pw.m2;
    if (!pw.m1 || !pw.m2) {
      throw Error(ErrorKind::Config, "no dynamic scale factors for teacher '" + std::string(teacher) +
                                         "' / student '" + std::string(student) + "'");
    }
  } else if (name == "gdkd-ls") {
    cfg.variant = LossVariant::GDKD;
    cfg.w1 = pw.w1;
    cfg.w2 = pw.w2;
    cfg.use_ls = true;
    cfg.ls_scale = 9.0;
  } else {
    throw Error(ErrorKind::Config, "unknown preset '" + std::string(name) + "'");
  }
  return cfg;
}

}  // namespace gdkd
