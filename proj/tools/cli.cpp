#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gdkd/analysis.hpp"
#include "gdkd/logit_io.hpp"
#include "gdkd/presets.hpp"
#include "gdkd/synthetic.hpp"
#include "gdkd/trainer.hpp"
#include "gdkd/verify.hpp"
#include "run_config.hpp"

namespace gdkd::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string csv_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Creates `dir` and writes the run manifest; always the first file of a run.
void write_manifest(const fs::path& dir, const std::string& command,
                    const std::optional<fs::path>& config_path, std::uint64_t seed, json extra = {}) {
  fs::create_directories(dir);
  json m{{"command", command},
         {"config_path", config_path ? json(config_path->string()) : json(nullptr)},
         {"seed", seed},
         {"output_dir", dir.string()},
         {"timestamp", utc_timestamp()},
         {"library_version", GDKD_VERSION}};
  if (extra.is_object()) {
    for (auto& [k, v] : extra.items()) m[k] = v;
  }
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

std::string dump_binary_logits(const Matrix& m) {
  return render([&](std::ostream& os) { write_logit_dump(os, m); });
}

std::string dump_binary_labels(std::span<const Index> y) {
  return render([&](std::ostream& os) { write_labels(os, y); });
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  std::string suite = "all";
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  if (a.trials == 0) throw Error(ErrorKind::Domain, "--trials must be at least 1");
  const VerifySuite suite = verify_suite_from_string(a.suite);
  if (!a.out.empty()) {
    write_manifest(a.out, "verify", std::nullopt, a.seed, {{"suite", a.suite}, {"trials", a.trials}});
  }
  const auto results = run_suite(suite, a.trials, a.seed);
  bool ok = true;
  json report = json::array();
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%s %-28s trials=%zu violations=%zu max_error=%.6e tolerance=%.1e\n",
                  r.passed() ? "PASS" : "FAIL", r.name.c_str(), r.trials, r.violations, r.max_error,
                  r.tolerance);
    out << line;
    json entry{{"name", r.name},           {"trials", r.trials},       {"violations", r.violations},
               {"max_error", r.max_error}, {"tolerance", r.tolerance}, {"passed", r.passed()}};
    if (r.counterexample) {
      out << "  counterexample: " << r.counterexample->dump() << '\n';
      entry["counterexample"] = *r.counterexample;
    }
    report.push_back(std::move(entry));
    ok = ok && r.passed();
  }
  out << (ok ? "all checks passed\n" : "verification FAILED\n");
  if (!a.out.empty()) write_file_atomic(fs::path(a.out) / "verify.json", report.dump(2) + "\n");
  return ok ? kExitOk : kExitFailure;
}

// --------------------------------------------------------------- distill

struct DistillArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  bool train_teacher = false;
};

int cmd_distill(const DistillArgs& a, std::ostream& out) {
  const fs::path config_path = a.config;
  std::string text;
  try {
    text = read_text_file(config_path);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  DistillRunConfig cfg = parse_run_config(text, config_path, a.preset);
  if (a.seed) cfg.seed = *a.seed;

  if (!a.train_teacher) {
    if (!cfg.teacher_checkpoint) {
      throw Error(ErrorKind::Config, "no teacher checkpoint configured; pass --train-teacher");
    }
    if (!fs::exists(*cfg.teacher_checkpoint)) {
      throw Error(ErrorKind::Config, "teacher checkpoint not found: " + cfg.teacher_checkpoint->string());
    }
  }

  const Dataset data = gen_synthetic(cfg.task);
  const fs::path dir = a.out;
  write_manifest(dir, "distill", config_path, cfg.seed, {{"dataset_hash", dataset_hash(data)}});

  std::optional<Mlp> teacher;
  if (a.train_teacher) {
    SgdOptions opts = cfg.teacher.sgd;
    opts.seed = cfg.seed + 1;
    teacher = train_teacher(teacher_spec(cfg), data, opts);
    write_file_atomic(dir / "teacher.json", teacher->to_json().dump() + "\n");
  } else {
    json j;
    try {
      j = json::parse(read_text_file(*cfg.teacher_checkpoint));
      teacher = Mlp::from_json(j);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Config, "unreadable teacher checkpoint: " + std::string(e.what()));
    }
    if (teacher->input_dim() != cfg.task.input_dim || teacher->num_classes() != cfg.task.num_classes) {
      throw Error(ErrorKind::Config, "teacher checkpoint does not match the task dimensions");
    }
  }

  const double t_analysis = cfg.analysis_temperature;
  const Matrix teacher_train = teacher->logits(data.x_train);
  const ProfileSet profiles = class_profiles(teacher_train, data.y_train, t_analysis);
  const KneePoint knee = knee_point_k(profiles.profiles);
  if (cfg.auto_k) {
    // The three-group split needs at least ranks 2..k to be nonempty.
    const std::size_t min_k = cfg.loss.variant == LossVariant::GDKDN ? 2 : 1;
    cfg.loss.k = std::max(knee.k, min_k);
  }
  validate(cfg.loss, cfg.task.num_classes);
  write_file_atomic(dir / "config.json", to_json(cfg).dump(2) + "\n");

  SgdOptions sopts = cfg.student.sgd;
  sopts.seed = cfg.seed + 3;
  sopts.report_temperature = t_analysis;
  const TrainResult result = distill(*teacher, student_spec(cfg), data, cfg.loss, sopts);

  write_file_atomic(dir / "train_records.csv",
                    render([&](std::ostream& os) { write_records_csv(os, result.records); }));
  write_file_atomic(dir / "student.json", result.model.to_json().dump() + "\n");

  const Matrix teacher_test = teacher->logits(data.x_test);
  const Matrix student_test = result.model.logits(data.x_test);
  write_file_atomic(dir / "teacher_test_logits.gdkd", dump_binary_logits(teacher_test));
  write_file_atomic(dir / "student_test_logits.gdkd", dump_binary_logits(student_test));
  write_file_atomic(dir / "test_labels.u32", dump_binary_labels(data.y_test));

  write_file_atomic(dir / "profiles.csv",
                    render([&](std::ostream& os) { write_profiles_csv(os, profiles.profiles); }));
  write_file_atomic(dir / "knee.json", to_json(knee).dump(2) + "\n");
  write_file_atomic(dir / "enhancement.csv",
                    render([&](std::ostream& os) { write_enhancement_csv(os, teacher_test, t_analysis); }));
  const DiscrepancyMatrix disc = discrepancy_matrix(teacher_test, student_test, data.y_test, t_analysis);
  write_file_atomic(dir / "discrepancy.csv",
                    render([&](std::ostream& os) { write_discrepancy_csv(os, disc); }));

  const TrainRecord& last = result.records.back();
  const DiscrepancySummary s = summarize(disc);
  const json summary{{"variant", to_string(cfg.loss.variant)},
                     {"k", cfg.loss.k},
                     {"knee_k", knee.k},
                     {"teacher_test_accuracy", accuracy(*teacher, data.x_test, data.y_test)},
                     {"student_test_accuracy", last.test_accuracy},
                     {"nontop_prob_discrepancy", last.nontop_prob_discrepancy},
                     {"mean_offdiag_logit_diff", s.mean_logit_diff},
                     {"mean_offdiag_prob_diff", s.mean_prob_diff}};
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  out << summary.dump(2) << '\n';
  return kExitOk;
}

// --------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string logits;
  std::string labels;
  std::string student;
  double temperature = 4.0;
  std::optional<std::size_t> k;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  check_temperature(a.temperature);
  const Matrix teacher = read_logit_file(a.logits);
  const IndexSet labels = read_label_file(a.labels);
  if (labels.size() != teacher.rows) {
    throw Error(ErrorKind::Shape, "logits hold " + std::to_string(teacher.rows) + " rows but labels hold " +
                                      std::to_string(labels.size()));
  }
  for (Index y : labels) {
    if (y >= teacher.cols) throw Error(ErrorKind::InvalidInput, "label " + std::to_string(y) + " out of range");
  }
  std::optional<Matrix> student;
  if (!a.student.empty()) {
    student = read_logit_file(a.student);
    if (student->rows != teacher.rows || student->cols != teacher.cols) {
      throw Error(ErrorKind::Shape, "student logits do not match the teacher dump's shape");
    }
  }
  if (a.k && (*a.k < 1 || *a.k >= teacher.cols)) {
    throw Error(ErrorKind::Domain, "--k must lie in [1, C-1]");
  }

  const fs::path dir = a.out;
  write_manifest(dir, "analyze", std::nullopt, 0,
                 {{"logits", a.logits}, {"labels", a.labels}, {"temperature", a.temperature}});

  const ProfileSet profiles = class_profiles(teacher, labels, a.temperature);
  const KneePoint knee = knee_point_k(profiles.profiles);
  // The ratio needs at least two ranks; a knee at 1 falls back to k = 2.
  const std::size_t k = std::max<std::size_t>(2, a.k.value_or(knee.k));
  write_file_atomic(dir / "profiles.csv",
                    render([&](std::ostream& os) { write_profiles_csv(os, profiles.profiles); }));
  write_file_atomic(dir / "profiles.json", to_json(profiles).dump(2) + "\n");
  write_file_atomic(dir / "knee.json", to_json(knee).dump(2) + "\n");
  write_file_atomic(dir / "enhancement.csv",
                    render([&](std::ostream& os) { write_enhancement_csv(os, teacher, a.temperature); }));
  write_file_atomic(dir / "multimodality.csv", render([&](std::ostream& os) {
                      os << "class_id,k,ratio\n";
                      for (const auto& p : profiles.profiles) {
                        os << p.class_id << ',' << k << ',' << csv_cell(multimodality_ratio(p, k)) << '\n';
                      }
                    }));
  json summary{{"samples", teacher.rows},
               {"classes", teacher.cols},
               {"missing_classes", profiles.missing},
               {"knee_k", knee.k},
               {"knee_degenerate", knee.degenerate},
               {"k", k}};
  if (student) {
    const DiscrepancyMatrix disc = discrepancy_matrix(teacher, *student, labels, a.temperature);
    write_file_atomic(dir / "discrepancy.csv",
                      render([&](std::ostream& os) { write_discrepancy_csv(os, disc); }));
    const DiscrepancySummary s = summarize(disc);
    summary["mean_offdiag_logit_diff"] = s.mean_logit_diff;
    summary["mean_offdiag_prob_diff"] = s.mean_prob_diff;
    summary["nontop_prob_discrepancy"] = nontop_prob_discrepancy(teacher, *student, a.temperature);
  }
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  for (Index m : profiles.missing) {
    std::cerr << "warning: class " << m << " has no samples; profile omitted\n";
  }
  out << summary.dump(2) << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------- gen

struct GenArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  SyntheticTaskSpec spec = default_run_config().task;
  std::optional<fs::path> config_path;
  if (!a.config.empty()) {
    config_path = a.config;
    const std::string text = read_text_file(*config_path);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Config, a.config + ": " + e.what());
    }
    spec = synthetic_spec_from_json(j, spec);
  }
  if (a.seed) spec.seed = *a.seed;
  validate(spec);
  const Dataset data = gen_synthetic(spec);
  const fs::path dir = a.out;
  const std::string hash = dataset_hash(data);
  write_manifest(dir, "gen", config_path, spec.seed, {{"dataset_hash", hash}});
  json task;
  to_json(task, spec);
  write_file_atomic(dir / "task.json", task.dump(2) + "\n");
  auto split = [](const Matrix& x, std::span<const Index> y) {
    return render([&](std::ostream& os) {
      os << "label";
      for (std::size_t c = 0; c < x.cols; ++c) os << ",x" << c;
      os << '\n';
      for (std::size_t r = 0; r < x.rows; ++r) {
        os << y[r];
        for (double v : x.row(r)) os << ',' << csv_cell(v);
        os << '\n';
      }
    });
  };
  write_file_atomic(dir / "train.csv", split(data.x_train, data.y_train));
  write_file_atomic(dir / "test.csv", split(data.x_test, data.y_test));
  out << json{{"dataset_hash", hash}, {"n_train", spec.n_train}, {"n_test", spec.n_test}}.dump(2) << '\n';
  return kExitOk;
}

// --------------------------------------------------------------- presets

int cmd_presets(const std::string& teacher, const std::string& student,
                const std::optional<std::string>& name, std::ostream& out) {
  json j = json::object();
  const std::vector<std::string> names = name ? std::vector<std::string>{*name} : preset_names();
  for (const auto& n : names) {
    json cfg;
    to_json(cfg, loss_preset(n, teacher, student));
    j[n] = cfg;
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalized decoupled knowledge distillation toolkit", "gdkd"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(GDKD_VERSION));

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run randomized identity / gradient / enhancement checks");
  verify->add_option("--suite", va.suite, "identity | gradients | enhancement | all")
      ->check(CLI::IsMember({"identity", "gradients", "enhancement", "all"}));
  verify->add_option("--trials", va.trials, "Random instances per check");
  verify->add_option("--seed", va.seed, "Generator seed");
  verify->add_option("--out", va.out, "Directory for manifest.json and verify.json");

  DistillArgs da;
  auto* distill_cmd = app.add_subcommand("distill", "Train a student against a teacher on the synthetic task");
  distill_cmd->add_option("--config", da.config, "Run configuration (JSON)")->required();
  distill_cmd->add_option("--out", da.out, "Output directory")->required();
  distill_cmd->add_option("--seed", da.seed, "Override the configured seed");
  distill_cmd->add_option("--preset", da.preset, "Override the configured loss preset");
  distill_cmd->add_flag("--train-teacher", da.train_teacher, "Train the teacher instead of loading a checkpoint");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Profile dumped teacher logits");
  analyze->add_option("--logits", aa.logits, "Teacher logit dump")->required();
  analyze->add_option("--labels", aa.labels, "Label sidecar (u32)")->required();
  analyze->add_option("--student", aa.student, "Student logit dump for discrepancy matrices");
  analyze->add_option("--temperature", aa.temperature, "Softmax temperature");
  analyze->add_option("--k", aa.k, "k for the multimodality ratio (default: knee point)");
  analyze->add_option("--out", aa.out, "Output directory")->required();

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic classification task");
  gen->add_option("--config", ga.config, "Task specification (JSON)");
  gen->add_option("--seed", ga.seed, "Override the task seed");
  gen->add_option("--out", ga.out, "Output directory")->required();

  std::string p_teacher{kDefaultTeacher}, p_student{kDefaultStudent};
  std::optional<std::string> p_name;
  auto* presets = app.add_subcommand("presets", "Print loss presets for a teacher/student pair");
  presets->add_option("--teacher", p_teacher, "Teacher architecture name");
  presets->add_option("--student", p_student, "Student architecture name");
  presets->add_option("--preset", p_name, "Print only this preset");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*verify) return cmd_verify(va, out);
    if (*distill_cmd) return cmd_distill(da, out);
    if (*analyze) return cmd_analyze(aa, out);
    if (*gen) return cmd_gen(ga, out);
    if (*presets) return cmd_presets(p_teacher, p_student, p_name, out);
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gdkd::cli
