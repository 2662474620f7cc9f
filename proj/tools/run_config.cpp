#include "run_config.hpp"

#include <algorithm>

#include "gdkd/presets.hpp"

namespace gdkd::cli {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw Error(ErrorKind::Config, "field '" + field + "': " + what);
}

Activation parse_activation(const json& v, const std::string& field) {
  const auto name = v.get<std::string>();
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  field_error(field, "expected 'relu' or 'tanh', got '" + name + "'");
}

void parse_network(const json& j, NetworkConfig& net, const std::string& prefix,
                   std::optional<std::filesystem::path>* checkpoint,
                   const std::filesystem::path& base_dir) {
  if (!j.is_object()) field_error(prefix, "must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string field = prefix + "." + key;
    try {
      if (key == "hidden") {
        net.hidden = v.get<std::vector<std::size_t>>();
      } else if (key == "activation") {
        net.activation = parse_activation(v, field);
      } else if (key == "sgd") {
        net.sgd = sgd_options_from_json(v, net.sgd);
      } else if (key == "checkpoint" && checkpoint) {
        std::filesystem::path p = v.get<std::string>();
        *checkpoint = p.is_absolute() ? p : base_dir / p;
      } else {
        field_error(field, "unknown key");
      }
    } catch (const json::exception& e) {
      field_error(field, e.what());
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Config && std::string(e.what()).find("field '") != std::string::npos) throw;
      field_error(field, e.what());
    }
  }
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

DistillRunConfig default_run_config() {
  DistillRunConfig cfg;
  cfg.loss = loss_preset(cfg.preset, cfg.teacher_arch, cfg.student_arch);
  cfg.task.num_classes = 20;
  cfg.task.input_dim = 32;
  cfg.task.n_train = 800;
  cfg.task.n_test = 2000;
  cfg.task.noise = 0.5;
  cfg.teacher.hidden = {128, 128};
  cfg.teacher.sgd.epochs = 100;
  cfg.teacher.sgd.weight_decay = 5e-3;
  cfg.student.hidden = {64};
  cfg.student.sgd.epochs = 150;
  cfg.student.sgd.lr = 0.005;
  return cfg;
}

DistillRunConfig parse_run_config(const std::string& text, const std::filesystem::path& source,
                                  const std::optional<std::string>& preset_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorKind::Config, source.string() + ":" + std::to_string(line) + ":" +
                                       std::to_string(col) + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Config, source.string() + ": top level must be an object");

  DistillRunConfig cfg = default_run_config();
  const std::filesystem::path base_dir = source.parent_path();
  try {
    if (j.contains("preset")) cfg.preset = j["preset"].get<std::string>();
    if (preset_override) cfg.preset = *preset_override;
    if (j.contains("pair")) {
      const json& pair = j["pair"];
      for (const auto& [key, v] : pair.items()) {
        if (key == "teacher") cfg.teacher_arch = v.get<std::string>();
        else if (key == "student") cfg.student_arch = v.get<std::string>();
        else field_error("pair." + key, "unknown key");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, source.string() + ": field 'preset/pair': " + e.what());
  }

  try {
    cfg.loss = loss_preset(cfg.preset, cfg.teacher_arch, cfg.student_arch);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, source.string() + ": field 'preset': " + e.what());
  }

  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "preset" || key == "pair") {
        continue;
      } else if (key == "loss") {
        cfg.loss = loss_config_from_json(v, cfg.loss);
      } else if (key == "auto_k") {
        cfg.auto_k = v.get<bool>();
      } else if (key == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (key == "task") {
        cfg.task = synthetic_spec_from_json(v, cfg.task);
      } else if (key == "teacher") {
        parse_network(v, cfg.teacher, "teacher", &cfg.teacher_checkpoint, base_dir);
      } else if (key == "student") {
        parse_network(v, cfg.student, "student", nullptr, base_dir);
      } else if (key == "analysis_temperature") {
        cfg.analysis_temperature = v.get<double>();
      } else {
        field_error(key, "unknown key");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Config, source.string() + ": field '" + key + "': " + e.what());
    } catch (const Error& e) {
      const std::string what = e.what();
      throw Error(ErrorKind::Config, source.string() + ": " +
                                         (what.find("field '") != std::string::npos
                                              ? what
                                              : "field '" + key + "': " + what));
    }
  }

  try {
    validate(cfg.task);
    validate(cfg.loss, cfg.task.num_classes);
    validate(teacher_spec(cfg));
    validate(student_spec(cfg));
    check_temperature(cfg.analysis_temperature);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, source.string() + ": " + e.what());
  }
  return cfg;
}

json to_json(const DistillRunConfig& cfg) {
  auto net = [](const NetworkConfig& n) {
    json sgd;
    gdkd::to_json(sgd, n.sgd);
    return json{{"hidden", n.hidden},
                {"activation", n.activation == Activation::Relu ? "relu" : "tanh"},
                {"sgd", sgd}};
  };
  json loss, task;
  gdkd::to_json(loss, cfg.loss);
  gdkd::to_json(task, cfg.task);
  json j{{"preset", cfg.preset},
         {"pair", {{"teacher", cfg.teacher_arch}, {"student", cfg.student_arch}}},
         {"loss", loss},
         {"auto_k", cfg.auto_k},
         {"seed", cfg.seed},
         {"task", task},
         {"teacher", net(cfg.teacher)},
         {"student", net(cfg.student)},
         {"analysis_temperature", cfg.analysis_temperature}};
  if (cfg.teacher_checkpoint) j["teacher"]["checkpoint"] = cfg.teacher_checkpoint->string();
  return j;
}

namespace {

MlpSpec network_spec(const DistillRunConfig& cfg, const NetworkConfig& net, std::uint64_t seed) {
  MlpSpec spec;
  spec.layer_widths.push_back(cfg.task.input_dim);
  spec.layer_widths.insert(spec.layer_widths.end(), net.hidden.begin(), net.hidden.end());
  spec.layer_widths.push_back(cfg.task.num_classes);
  spec.activation = net.activation;
  spec.seed = seed;
  return spec;
}

}  // namespace

MlpSpec teacher_spec(const DistillRunConfig& cfg) { return network_spec(cfg, cfg.teacher, cfg.seed); }

MlpSpec student_spec(const DistillRunConfig& cfg) { return network_spec(cfg, cfg.student, cfg.seed + 2); }

}  // namespace gdkd::cli
