#include "gdkd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace gdkd {

namespace {

/// Per-sample loss and dL/dlogits for one training step.
struct SampleStep {
  double loss = 0.0;
  double ce = 0.0;
  double distill = 0.0;
};

using StepFn = std::function<SampleStep(std::span<const double> z_s, std::size_t row, Index y,
                                        std::size_t epoch, std::span<double> grad_out)>;

Matrix gather(const Matrix& src, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), src.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto s = src.row(rows[r]);
    std::copy(s.begin(), s.end(), out.row(r).begin());
  }
  return out;
}

void sgd_update(Mlp& model, const MlpGradients& g, MlpGradients& velocity, const SgdOptions& o) {
  auto& layers = model.layers();
  auto step = [&](Vec& param, const Vec& grad, Vec& vel) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double d = grad[i] + o.weight_decay * param[i];
      vel[i] = o.momentum * vel[i] + d;
      param[i] -= o.lr * vel[i];
    }
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    step(layers[l].weight, g.weight[l], velocity.weight[l]);
    step(layers[l].bias, g.bias[l], velocity.bias[l]);
  }
}

void check_data(const MlpSpec& spec, const Dataset& data) {
  validate(spec);
  if (spec.layer_widths.front() != data.x_train.cols) {
    throw Error(ErrorKind::Config, "first layer width must equal the input dimension");
  }
  if (spec.layer_widths.back() != data.num_classes) {
    throw Error(ErrorKind::Config, "last layer width must equal the class count");
  }
}

std::vector<TrainRecord> run_loop(Mlp& model, const Dataset& data, const SgdOptions& opts,
                                  const Mlp* reference, const StepFn& step,
                                  const std::function<void(TrainRecord&)>& on_epoch) {
  if (opts.batch_size == 0) throw Error(ErrorKind::Config, "batch_size must be positive");
  const std::size_t n = data.x_train.rows;
  const std::size_t c = data.num_classes;
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  MlpGradients velocity = model.zero_gradients();
  std::vector<TrainRecord> records;

  Matrix reference_test;
  if (reference) reference_test = reference->logits(data.x_test);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Vec losses(n), ces(n), distills(n);
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t end = std::min(n, start + opts.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Matrix xb = gather(data.x_train, rows);
      Mlp::Trace trace;
      const Matrix zs = model.forward(xb, trace);
      if (!std::all_of(zs.data.begin(), zs.data.end(), [](double v) { return std::isfinite(v); })) {
        throw TrainingError("non-finite logits at epoch " + std::to_string(epoch), records);
      }
      Matrix dlogits(rows.size(), c);
      const double inv_b = 1.0 / static_cast<double>(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const SampleStep s = step(zs.row(r), rows[r], data.y_train[rows[r]], epoch, dlogits.row(r));
        if (!std::isfinite(s.loss)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                  std::to_string(rows[r]),
                              records);
        }
        losses[seen] = s.loss;
        ces[seen] = s.ce;
        distills[seen] = s.distill;
        ++seen;
      }
      for (double& v : dlogits.data) v *= inv_b;
      const MlpGradients g = model.backward(trace, dlogits);
      sgd_update(model, g, velocity, opts);
    }
    TrainRecord rec;
    rec.epoch = epoch;
    const double dn = static_cast<double>(n);
    rec.train_loss = pairwise_sum(losses) / dn;
    rec.ce_loss = pairwise_sum(ces) / dn;
    rec.distill_loss = pairwise_sum(distills) / dn;
    const Matrix test_logits = model.logits(data.x_test);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < test_logits.rows; ++r) {
      if (argmax(test_logits.row(r)) == data.y_test[r]) ++correct;
    }
    rec.test_accuracy = static_cast<double>(correct) / static_cast<double>(test_logits.rows);
    rec.nontop_prob_discrepancy =
        reference ? nontop_prob_discrepancy(reference_test, test_logits, opts.report_temperature)
                  : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(rec.train_loss)) {
      throw TrainingError("non-finite epoch loss at epoch " + std::to_string(epoch), records);
    }
    if (on_epoch) on_epoch(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const SgdOptions& o) {
  j = {{"epochs", o.epochs},         {"lr", o.lr},
       {"momentum", o.momentum},     {"weight_decay", o.weight_decay},
       {"batch_size", o.batch_size}, {"seed", o.seed},
       {"report_temperature", o.report_temperature}};
}

SgdOptions sgd_options_from_json(const nlohmann::json& j, SgdOptions o) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "optimizer options must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "epochs") o.epochs = v.get<std::size_t>();
      else if (key == "lr") o.lr = v.get<double>();
      else if (key == "momentum") o.momentum = v.get<double>();
      else if (key == "weight_decay") o.weight_decay = v.get<double>();
      else if (key == "batch_size") o.batch_size = v.get<std::size_t>();
      else if (key == "seed") o.seed = v.get<std::uint64_t>();
      else if (key == "report_temperature") o.report_temperature = v.get<double>();
      else throw Error(ErrorKind::Config, "unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, "optimizer field '" + key + "': " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "optimizer field '" + key + "': " + e.what());
    }
  }
  return o;
}

void write_records_csv(std::ostream& os, const std::vector<TrainRecord>& records) {
  os << kTrainRecordCsvHeader << '\n';
  for (const auto& r : records) {
    os << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.ce_loss) << ',' << fmt(r.distill_loss)
       << ',' << fmt(r.warmup) << ',' << fmt(r.test_accuracy) << ','
       << fmt(r.nontop_prob_discrepancy);
    if (r.grad_report) {
      const auto& g = *r.grad_report;
      os << ',' << fmt(g.mean_abs_top) << ',' << fmt(g.mean_abs_nontop_topkd) << ','
         << fmt(g.mean_abs_nontop_otherkd_weighted) << ',' << fmt(g.mean_abs_nontop_coupledkd)
         << ',' << fmt(g.eta_t) << ',' << fmt(g.eta_s);
    } else {
      os << ",,,,,,";
    }
    os << '\n';
  }
}

TrainResult train_supervised(const MlpSpec& spec, const Dataset& data, const SgdOptions& opts,
                             const Mlp* reference) {
  check_data(spec, data);
  Mlp model(spec);
  const StepFn step = [](std::span<const double> z_s, std::size_t, Index y, std::size_t,
                         std::span<double> grad) {
    SampleStep s;
    s.ce = cross_entropy(z_s, y);
    s.loss = s.ce;
    const Vec p = softmax(z_s, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) grad[i] = p[i];
    grad[y] -= 1.0;
    return s;
  };
  auto records = run_loop(model, data, opts, reference, step, nullptr);
  return {std::move(model), std::move(records)};
}

Mlp train_teacher(const MlpSpec& spec, const Dataset& data, const SgdOptions& opts) {
  return train_supervised(spec, data, opts).model;
}

TrainResult distill(const Mlp& teacher, const MlpSpec& student_spec, const Dataset& data,
                    const LossConfig& cfg, const SgdOptions& opts) {
  check_data(student_spec, data);
  if (teacher.num_classes() != data.num_classes || teacher.input_dim() != data.x_train.cols) {
    throw Error(ErrorKind::Config, "teacher does not match the dataset");
  }
  validate(cfg, data.num_classes);
  Mlp student(student_spec);
  const Matrix teacher_train = teacher.logits(data.x_train);

  const StepFn step = [&](std::span<const double> z_s, std::size_t row, Index y, std::size_t epoch,
                          std::span<double> grad) {
    const auto z_t = teacher_train.row(row);
    const ObjectiveTerms terms = objective_terms(z_t, z_s, y, cfg, epoch);
    const Vec g = objective_gradient(z_t, z_s, y, cfg, epoch);
    std::copy(g.begin(), g.end(), grad.begin());
    return SampleStep{terms.total, terms.ce, terms.warmup * terms.distill.total};
  };

  const bool track_grads = cfg.variant == LossVariant::GDKD2;
  std::function<void(TrainRecord&)> on_epoch = [&](TrainRecord& rec) {
    rec.warmup = warmup_factor(rec.epoch, cfg.warmup_epochs);
  };
  // Student logits as seen during the epoch, paired with the teacher's.
  std::vector<GradSample> epoch_samples;
  StepFn tracked = step;
  if (track_grads) {
    tracked = [&](std::span<const double> z_s, std::size_t row, Index y, std::size_t epoch,
                  std::span<double> grad) {
      const auto z_t = teacher_train.row(row);
      GradSample gs;
      gs.z_t.assign(z_t.begin(), z_t.end());
      gs.z_s.assign(z_s.begin(), z_s.end());
      gs.c = cfg.anchor == SplitAnchor::TeacherTop1 ? argmax(z_t) : y;
      epoch_samples.push_back(std::move(gs));
      return step(z_s, row, y, epoch, grad);
    };
    on_epoch = [&](TrainRecord& rec) {
      rec.warmup = warmup_factor(rec.epoch, cfg.warmup_epochs);
      rec.grad_report = grad_magnitude_report(epoch_samples, cfg.beta2, cfg.temperature, rec.epoch);
      epoch_samples.clear();
    };
  }
  auto records = run_loop(student, data, opts, &teacher, tracked, on_epoch);
  return {std::move(student), std::move(records)};
}

double accuracy(const Mlp& model, const Matrix& x, std::span<const Index> y) {
  if (x.rows != y.size()) throw Error(ErrorKind::Shape, "inputs and labels differ in length");
  const Matrix z = model.logits(x);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < z.rows; ++r) {
    if (argmax(z.row(r)) == y[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(z.rows);
}

double mean_distill_loss(const Mlp& teacher, const Mlp& student, const Matrix& x,
                         std::span<const Index> y, const LossConfig& cfg) {
  const Matrix zt = teacher.logits(x);
  const Matrix zs = student.logits(x);
  Vec per(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) per[r] = distill_loss(zt.row(r), zs.row(r), y[r], cfg).total;
  return pairwise_sum(per) / static_cast<double>(x.rows);
}

BatchObjective batch_objective(const Mlp& student, const Matrix& teacher_logits, const Matrix& x,
                               std::span<const Index> y, const LossConfig& cfg, std::size_t epoch) {
  Mlp::Trace trace;
  const Matrix zs = student.forward(x, trace);
  Matrix dlogits(x.rows, zs.cols);
  Vec losses(x.rows);
  const double inv_b = 1.0 / static_cast<double>(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    losses[r] = total_objective(teacher_logits.row(r), zs.row(r), y[r], cfg, epoch);
    const Vec g = objective_gradient(teacher_logits.row(r), zs.row(r), y[r], cfg, epoch);
    for (std::size_t i = 0; i < g.size(); ++i) dlogits.at(r, i) = g[i] * inv_b;
  }
  BatchObjective out;
  out.loss = pairwise_sum(losses) * inv_b;
  out.grads = student.backward(trace, dlogits);
  return out;
}

}  // namespace gdkd
