#pragma once

// Desk-scale distillation harness: SGD with momentum on small MLPs, the
// CE + warmup-scaled distillation objective, and per-epoch metrics.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "gdkd/analysis.hpp"
#include "gdkd/gradients.hpp"
#include "gdkd/losses.hpp"
#include "gdkd/mlp.hpp"
#include "gdkd/synthetic.hpp"

namespace gdkd {

struct SgdOptions {
  std::size_t epochs = 100;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;           // shuffling
  double report_temperature = 4.0;  // for the non-top probability discrepancy
};

void to_json(nlohmann::json& j, const SgdOptions& o);
SgdOptions sgd_options_from_json(const nlohmann::json& j, SgdOptions base = {});

struct TrainRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double ce_loss = 0.0;
  double distill_loss = 0.0;  // already multiplied by the warmup factor
  double warmup = 1.0;
  double test_accuracy = 0.0;
  double nontop_prob_discrepancy = 0.0;  // NaN when there is no reference teacher
  std::optional<GradMagnitudeReport> grad_report;
};

inline constexpr const char* kTrainRecordCsvHeader =
    "epoch,train_loss,ce_loss,distill_loss,warmup,test_accuracy,nontop_prob_discrepancy,"
    "mean_abs_top,mean_abs_nontop_topkd,mean_abs_nontop_otherkd_weighted,"
    "mean_abs_nontop_coupledkd,eta_T,eta_S";

void write_records_csv(std::ostream& os, const std::vector<TrainRecord>& records);

/// Thrown when the loss turns non-finite; carries the epochs that finished.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::vector<TrainRecord> completed)
      : Error(ErrorKind::Training, what), completed_(std::move(completed)) {}
  const std::vector<TrainRecord>& completed() const noexcept { return completed_; }

 private:
  std::vector<TrainRecord> completed_;
};

struct TrainResult {
  Mlp model;
  std::vector<TrainRecord> records;
};

/// Plain cross-entropy training. When `reference` is given its logits are
/// used for the discrepancy metric only.
TrainResult train_supervised(const MlpSpec& spec, const Dataset& data, const SgdOptions& opts,
                             const Mlp* reference = nullptr);

/// Trains a teacher with cross-entropy; the result is used read-only.
Mlp train_teacher(const MlpSpec& spec, const Dataset& data, const SgdOptions& opts);

/// Distils `teacher` into a fresh student with total_objective and the
/// analytic logit gradients. GDKD2 runs also record gradient magnitudes.
TrainResult distill(const Mlp& teacher, const MlpSpec& student_spec, const Dataset& data,
                    const LossConfig& cfg, const SgdOptions& opts);

double accuracy(const Mlp& model, const Matrix& x, std::span<const Index> y);

/// Mean distillation term (no warmup) of `student` against `teacher`.
double mean_distill_loss(const Mlp& teacher, const Mlp& student, const Matrix& x,
                         std::span<const Index> y, const LossConfig& cfg);

/// Mean total_objective over a batch and its parameter gradient, exactly as
/// the training loop computes them.
struct BatchObjective {
  double loss = 0.0;
  MlpGradients grads;
};
BatchObjective batch_objective(const Mlp& student, const Matrix& teacher_logits, const Matrix& x,
                               std::span<const Index> y, const LossConfig& cfg, std::size_t epoch);

}  // namespace gdkd
