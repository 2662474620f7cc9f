// Acceptance run: identity and gradient checks at full trial counts, the
// desk-scale training criteria and CLI determinism. One PASS/FAIL line per
// criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gdkd/analysis.hpp"
#include "gdkd/logit_io.hpp"
#include "gdkd/presets.hpp"
#include "gdkd/synthetic.hpp"
#include "gdkd/trainer.hpp"
#include "gdkd/verify.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace gdkd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string describe(const CheckResult& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s: %zu trials, %zu violations, max_error %.3e, tol %.1e", r.name.c_str(),
                r.trials, r.violations, r.max_error, r.tolerance);
  return buf;
}

void single_check(int id, const std::string& title, const std::function<CheckResult()>& run,
                  double time_limit = 0.0) {
  const auto t0 = Clock::now();
  const CheckResult r = run();
  const double secs = seconds_since(t0);
  bool pass = r.passed();
  std::string detail = describe(r);
  if (time_limit > 0.0) {
    pass = pass && secs < time_limit;
    detail += fmt(", %.2f s of %.0f s", secs, time_limit);
  }
  report(id, title, pass, detail);
}

// --- training criteria -----------------------------------------------------

struct SeedOutcome {
  std::size_t knee = 0;
  double teacher_acc = 0.0;
  TrainRecord kd, gdkd, low_other, ce;
};

struct Experiment {
  cli::DistillRunConfig cfg = cli::default_run_config();
  std::size_t seeds = 5;

  Dataset data(std::uint64_t seed) const {
    SyntheticTaskSpec task = cfg.task;
    task.overlap = 0.8;
    task.seed = seed;
    return gen_synthetic(task);
  }
  MlpSpec teacher(std::uint64_t seed) const {
    MlpSpec s = cli::teacher_spec(cfg);
    s.seed = seed + 100;
    return s;
  }
  MlpSpec student(std::uint64_t seed) const {
    MlpSpec s = cli::student_spec(cfg);
    s.seed = seed + 300;
    return s;
  }
  SgdOptions teacher_sgd(std::uint64_t seed) const {
    SgdOptions o = cfg.teacher.sgd;
    o.seed = seed + 200;
    return o;
  }
  SgdOptions student_sgd(std::uint64_t seed) const {
    SgdOptions o = cfg.student.sgd;
    o.seed = seed + 400;
    return o;
  }
};

Mlp trained_teacher(const Experiment& ex, std::uint64_t seed, const Dataset& d) {
  return train_teacher(ex.teacher(seed), d, ex.teacher_sgd(seed));
}

SeedOutcome run_seed(const Experiment& ex, std::uint64_t seed) {
  const Dataset d = ex.data(seed);
  const Mlp teacher = trained_teacher(ex, seed, d);
  SeedOutcome o;
  o.teacher_acc = accuracy(teacher, d.x_test, d.y_test);
  o.knee = knee_point_k(class_profiles(teacher.logits(d.x_train), d.y_train, 4.0).profiles).k;

  const LossConfig kd = loss_preset("kd");
  LossConfig g = loss_preset("gdkd");
  g.k = o.knee;
  LossConfig lo = g;
  lo.w0 = 0.0;
  lo.w1 = 0.0;

  const MlpSpec s = ex.student(seed);
  const SgdOptions so = ex.student_sgd(seed);
  o.kd = distill(teacher, s, d, kd, so).records.back();
  o.gdkd = distill(teacher, s, d, g, so).records.back();
  o.low_other = distill(teacher, s, d, lo, so).records.back();
  o.ce = train_supervised(s, d, so, &teacher).records.back();
  std::printf("  seed %llu: teacher %.4f knee %zu | KD %.4f/%.5f | GDKD %.4f/%.5f | low-other %.4f | CE %.4f\n",
              static_cast<unsigned long long>(seed), o.teacher_acc, o.knee, o.kd.test_accuracy,
              o.kd.nontop_prob_discrepancy, o.gdkd.test_accuracy, o.gdkd.nontop_prob_discrepancy,
              o.low_other.test_accuracy, o.ce.test_accuracy);
  std::fflush(stdout);
  return o;
}

std::vector<double> flat_parameters(const Mlp& m) {
  std::vector<double> out;
  for (const auto& l : m.layers()) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void training_criteria() {
  const Experiment ex;
  const auto t0 = Clock::now();

  std::vector<SeedOutcome> outcomes;
  for (std::uint64_t seed = 0; seed < ex.seeds; ++seed) outcomes.push_back(run_seed(ex, seed));
  const double n = static_cast<double>(outcomes.size());
  double acc_kd = 0, acc_g = 0, acc_lo = 0, acc_ce = 0, disc_kd = 0, disc_g = 0;
  for (const auto& o : outcomes) {
    acc_kd += o.kd.test_accuracy / n;
    acc_g += o.gdkd.test_accuracy / n;
    acc_lo += o.low_other.test_accuracy / n;
    acc_ce += o.ce.test_accuracy / n;
    disc_kd += o.kd.nontop_prob_discrepancy / n;
    disc_g += o.gdkd.nontop_prob_discrepancy / n;
  }

  // b: GDKD-top1 gradient magnitudes on the first seed's task.
  const Dataset d0 = ex.data(0);
  const Mlp teacher0 = trained_teacher(ex, 0, d0);
  const TrainResult top1 = distill(teacher0, ex.student(0), d0, loss_preset("gdkd-top1"), ex.student_sgd(0));
  std::size_t dominated = 0;
  for (const auto& r : top1.records) {
    if (r.grad_report && r.grad_report->mean_abs_nontop_otherkd_weighted > r.grad_report->mean_abs_nontop_topkd) {
      ++dominated;
    }
  }
  const double frac = static_cast<double>(dominated) / static_cast<double>(top1.records.size());

  // c: all distillation weights zero against plain cross-entropy.
  LossConfig zero = loss_preset("gdkd");
  zero.w0 = zero.w1 = zero.w2 = 0.0;
  const TrainResult zr = distill(teacher0, ex.student(0), d0, zero, ex.student_sgd(0));
  const TrainResult cr = train_supervised(ex.student(0), d0, ex.student_sgd(0), &teacher0);
  bool identical = zr.records.size() == cr.records.size() &&
                   flat_parameters(zr.model) == flat_parameters(cr.model);
  for (std::size_t e = 0; identical && e < zr.records.size(); ++e) {
    const TrainRecord& a = zr.records[e];
    const TrainRecord& b = cr.records[e];
    identical = a.train_loss == b.train_loss && a.ce_loss == b.ce_loss && a.distill_loss == 0.0 &&
                a.test_accuracy == b.test_accuracy && a.nontop_prob_discrepancy == b.nontop_prob_discrepancy;
  }

  const double secs = seconds_since(t0);
  const bool in_budget = secs < 600.0;
  const std::string budget = fmt("7a-7c plus 8 took %.1f s of 600 s", secs);

  report(7, "7a GDKD vs KD non-top discrepancy and accuracy",
         disc_g < disc_kd && acc_g >= acc_kd - 0.005 && in_budget,
         fmt("discrepancy GDKD %.5f vs KD %.5f; accuracy GDKD %.4f vs KD %.4f", disc_g, disc_kd, acc_g, acc_kd) +
             "; " + budget);
  report(7, "7b weighted OtherKD gradient dominates TopKD on non-top classes", frac >= 0.9 && in_budget,
         fmt("%.0f of %.0f epochs, fraction %.3f", static_cast<double>(dominated),
             static_cast<double>(top1.records.size()), frac));
  report(7, "7c zero distillation weights reproduce cross-entropy bit-exactly", identical && in_budget,
         fmt("%.0f epochs compared", static_cast<double>(zr.records.size())));
  report(8, "low-other-only distillation beats the no-distillation baseline", acc_lo > acc_ce,
         fmt("accuracy low-other %.4f vs CE %.4f over %.0f seeds", acc_lo, acc_ce, n));
}

// --- CLI determinism -------------------------------------------------------

std::string quote(const std::string& s) { return "'" + s + "'"; }

int run_command(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = quote(cli) + " " + args + " > " + quote(log.string()) + " 2>&1";
  return std::system(cmd.c_str());
}

// Every file under `dir`, by relative path. The manifest's wall-clock
// timestamp is the only field allowed to differ between runs.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).string();
    std::string content = read_text_file(e.path());
    if (e.path().filename() == "manifest.json") {
      auto j = nlohmann::json::parse(content);
      j.erase("timestamp");
      content = j.dump(2);
    }
    files[rel] = std::move(content);
  }
  return files;
}

void cli_determinism(const std::string& cli, const fs::path& work) {
  const auto t0 = Clock::now();
  fs::remove_all(work);
  fs::create_directories(work);
  {
    std::ofstream cfg(work / "distill.json");
    cfg << R"({"preset": "gdkd-default", "seed": 7})" << '\n';
  }
  bool ok = true;
  std::string detail;
  // Both invocations use identical arguments, including the output path;
  // each result is moved aside before the next run.
  const fs::path v = work / "verify";
  const fs::path d = work / "distill";
  for (int run = 1; run <= 2; ++run) {
    const std::string n = std::to_string(run);
    const int rv = run_command(cli, "verify --suite all --seed 0 --out " + quote(v.string()), work / ("verify" + n + ".log"));
    const int rd = run_command(cli,
                               "distill --config " + quote((work / "distill.json").string()) +
                                   " --train-teacher --out " + quote(d.string()),
                               work / ("distill" + n + ".log"));
    if (rv != 0 || rd != 0) {
      ok = false;
      detail += "run " + n + " exited non-zero; ";
      break;
    }
    fs::rename(v, work / ("verify" + n));
    fs::rename(d, work / ("distill" + n));
  }
  if (ok) {
    for (const char* kind : {"verify", "distill"}) {
      const std::string k = kind;
      const auto a = snapshot(work / (k + "1"));
      const auto b = snapshot(work / (k + "2"));
      const bool same_logs = read_text_file(work / (k + "1.log")) == read_text_file(work / (k + "2.log"));
      if (a != b || !same_logs) {
        ok = false;
        detail += k + " outputs differ; ";
      } else {
        detail += k + ": " + std::to_string(a.size()) + " files and stdout identical; ";
      }
    }
  }
  detail += fmt("%.1f s", seconds_since(t0));
  report(9, "CLI verify and distill are byte-identical across invocations", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gdkd acceptance run"};
  std::string cli = "gdkd";
  std::string work = "acceptance_work";
  app.add_option("--cli", cli, "Path to the gdkd executable");
  app.add_option("--work", work, "Scratch directory for CLI outputs");
  CLI11_PARSE(app, argc, argv);

  const std::uint64_t seed = 20240611;
  single_check(1, "decomposition identity", [&] { return check_decomposition_identity(10000, seed); }, 10.0);
  single_check(2, "DKD as a two-group special case", [&] { return check_dkd_special_case(1000, seed); });
  single_check(3, "coupled weight recovers KD", [&] { return check_coupled_recovery(1000, seed); });

  {
    const auto t0 = Clock::now();
    bool pass = true;
    std::string detail;
    for (GradTarget g : all_grad_targets()) {
      const CheckResult r = check_gradient(g, 1000, seed);
      pass = pass && r.passed();
      std::printf("  %s\n", describe(r).c_str());
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 60.0;
    report(4, "analytic gradients match finite differences", pass,
           fmt("%.0f targets, %.2f s of 60 s", static_cast<double>(all_grad_targets().size()), secs));
  }

  single_check(5, "KD gradient reconstruction", [&] { return check_kd_gradient_reconstruction(1000, seed); });
  single_check(6, "non-top enhancement inequality", [&] { return check_enhancement(10000, seed); });

  training_criteria();
  cli_determinism(cli, work);

  std::printf("%s\n", failures == 0 ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
  return failures == 0 ? 0 : 1;
}
