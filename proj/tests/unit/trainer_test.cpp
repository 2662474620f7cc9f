#include "gdkd/trainer.hpp"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "gdkd/analysis.hpp"
#include "gdkd/gradients.hpp"
#include "gdkd/presets.hpp"
#include "gdkd/synthetic.hpp"

namespace gdkd {
namespace {

SyntheticTaskSpec small_task(double overlap = 0.8, std::uint64_t seed = 0) {
  SyntheticTaskSpec s;
  s.num_classes = 8;
  s.input_dim = 6;
  s.linked_group_size = 4;
  s.overlap = overlap;
  s.noise = 0.5;
  s.n_train = 240;
  s.n_test = 160;
  s.seed = seed;
  return s;
}

SgdOptions quick(std::size_t epochs = 6) {
  SgdOptions o;
  o.epochs = epochs;
  o.lr = 0.02;
  o.batch_size = 32;
  o.seed = 5;
  return o;
}

std::string records_csv(const std::vector<TrainRecord>& r) {
  std::ostringstream os;
  write_records_csv(os, r);
  return os.str();
}

// Flattens every parameter so two models can be compared exactly.
Vec parameters(const Mlp& m) {
  Vec out;
  for (const auto& l : m.layers()) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

TEST(Backprop, MatchesFiniteDifferencesOnTotalObjective) {
  const Dataset data = gen_synthetic(small_task());
  for (Activation act : {Activation::Tanh, Activation::Relu}) {
    const MlpSpec teacher_spec{{6, 16, 8}, act, 1};
    const MlpSpec student_spec{{6, 10, 8}, act, 2};
    const Mlp teacher(teacher_spec);
    Mlp student(student_spec);
    Matrix x(12, 6);
    std::copy(data.x_train.data.begin(), data.x_train.data.begin() + 72, x.data.begin());
    const std::span<const Index> y(data.y_train.data(), 12);
    const Matrix zt = teacher.logits(x);
    for (const std::string name : {"kd", "gdkd", "gdkd-top1", "gdkd3", "gdkd-v1", "gdkd-ls"}) {
      LossConfig cfg = loss_preset(name);
      cfg.k = std::min<std::size_t>(cfg.k, 3);
      const std::size_t epoch = 15;
      const BatchObjective analytic = batch_objective(student, zt, x, y, cfg, epoch);
      for (std::size_t l = 0; l < student.layers().size(); ++l) {
        Vec& w = student.layers()[l].weight;
        Vec fd(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double orig = w[i];
          const double h = 1e-6;
          w[i] = orig + h;
          const double up = batch_objective(student, zt, x, y, cfg, epoch).loss;
          w[i] = orig - h;
          const double down = batch_objective(student, zt, x, y, cfg, epoch).loss;
          w[i] = orig;
          fd[i] = (up - down) / (2 * h);
        }
        EXPECT_TRUE(grad_close(analytic.grads.weight[l], fd, 1e-5, 1e-8))
            << name << " layer " << l << (act == Activation::Relu ? " relu" : " tanh");
        Vec& b = student.layers()[l].bias;
        Vec fdb(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) {
          const double orig = b[i];
          b[i] = orig + 1e-6;
          const double up = batch_objective(student, zt, x, y, cfg, epoch).loss;
          b[i] = orig - 1e-6;
          const double down = batch_objective(student, zt, x, y, cfg, epoch).loss;
          b[i] = orig;
          fdb[i] = (up - down) / 2e-6;
        }
        EXPECT_TRUE(grad_close(analytic.grads.bias[l], fdb, 1e-5, 1e-8)) << name << " bias " << l;
      }
    }
  }
}

TEST(Trainer, DistillationIsDeterministic) {
  const Dataset data = gen_synthetic(small_task());
  const Mlp teacher = train_teacher({{6, 24, 8}, Activation::Relu, 3}, data, quick(4));
  const MlpSpec student{{6, 12, 8}, Activation::Relu, 4};
  const LossConfig cfg = loss_preset("gdkd");
  const TrainResult a = distill(teacher, student, data, cfg, quick());
  const TrainResult b = distill(teacher, student, data, cfg, quick());
  EXPECT_EQ(records_csv(a.records), records_csv(b.records));
  EXPECT_EQ(parameters(a.model), parameters(b.model));
}

TEST(Trainer, ZeroDistillationWeightsReproduceCrossEntropy) {
  const Dataset data = gen_synthetic(small_task());
  const Mlp teacher = train_teacher({{6, 24, 8}, Activation::Relu, 3}, data, quick(4));
  const MlpSpec student{{6, 12, 8}, Activation::Relu, 4};
  LossConfig cfg = loss_preset("gdkd");
  cfg.w0 = cfg.w1 = cfg.w2 = 0.0;
  const TrainResult d = distill(teacher, student, data, cfg, quick());
  const TrainResult ce = train_supervised(student, data, quick(), &teacher);
  ASSERT_EQ(d.records.size(), ce.records.size());
  for (std::size_t e = 0; e < d.records.size(); ++e) {
    EXPECT_EQ(d.records[e].train_loss, ce.records[e].train_loss);
    EXPECT_EQ(d.records[e].test_accuracy, ce.records[e].test_accuracy);
    EXPECT_EQ(d.records[e].nontop_prob_discrepancy, ce.records[e].nontop_prob_discrepancy);
    EXPECT_EQ(d.records[e].distill_loss, 0.0);
  }
  EXPECT_EQ(parameters(d.model), parameters(ce.model));
}

TEST(Trainer, SelfDistillationStartsAtZero) {
  const Dataset data = gen_synthetic(small_task());
  const MlpSpec spec{{6, 12, 8}, Activation::Relu, 9};
  const Mlp teacher(spec);
  const Mlp student(spec);
  for (const auto& name : preset_names()) {
    EXPECT_EQ(mean_distill_loss(teacher, student, data.x_train, data.y_train, loss_preset(name)), 0.0) << name;
  }
}

TEST(Trainer, WarmupScalesDistillation) {
  const Dataset data = gen_synthetic(small_task());
  const Mlp teacher = train_teacher({{6, 24, 8}, Activation::Relu, 3}, data, quick(4));
  LossConfig cfg = loss_preset("kd");
  cfg.warmup_epochs = 4;
  const TrainResult r = distill(teacher, {{6, 12, 8}, Activation::Relu, 4}, data, cfg, quick(6));
  EXPECT_EQ(r.records[0].warmup, 0.0);
  EXPECT_EQ(r.records[0].distill_loss, 0.0);
  EXPECT_EQ(r.records[2].warmup, 0.5);
  EXPECT_GT(r.records[2].distill_loss, 0.0);
  EXPECT_EQ(r.records[4].warmup, 1.0);
  EXPECT_EQ(r.records[5].warmup, 1.0);
  for (const auto& rec : r.records) {
    EXPECT_NEAR(rec.train_loss, rec.ce_loss + rec.distill_loss, 1e-12 * rec.train_loss);
  }
}

TEST(Trainer, Top1VariantRecordsGradientMagnitudes) {
  const Dataset data = gen_synthetic(small_task());
  const Mlp teacher = train_teacher({{6, 24, 8}, Activation::Relu, 3}, data, quick(4));
  const TrainResult r = distill(teacher, {{6, 12, 8}, Activation::Relu, 4}, data, loss_preset("gdkd-top1"), quick(3));
  for (const auto& rec : r.records) {
    ASSERT_TRUE(rec.grad_report.has_value());
    EXPECT_EQ(rec.grad_report->epoch, rec.epoch);
    EXPECT_GE(rec.grad_report->mean_abs_nontop_topkd, 0.0);
  }
  const TrainResult k = distill(teacher, {{6, 12, 8}, Activation::Relu, 4}, data, loss_preset("kd"), quick(2));
  EXPECT_FALSE(k.records[0].grad_report.has_value());
  EXPECT_NE(records_csv(r.records).find("mean_abs_top"), std::string::npos);
}

TEST(Trainer, SeparableDataIsLearned) {
  SyntheticTaskSpec s = small_task(0.0);
  s.noise = 0.1;
  s.clusters_per_class = 1;
  const Dataset data = gen_synthetic(s);
  const Mlp m = train_teacher({{6, 32, 8}, Activation::Relu, 1}, data, quick(30));
  EXPECT_GE(accuracy(m, data.x_train, data.y_train), 0.99);
  const Matrix z = m.logits(data.x_test);
  for (double v : z.data) ASSERT_TRUE(std::isfinite(v));
}

TEST(Trainer, DivergenceRaisesTrainingError) {
  const Dataset data = gen_synthetic(small_task());
  SgdOptions o = quick(50);
  o.lr = 1e6;
  o.momentum = 0.99;
  try {
    train_supervised({{6, 12, 8}, Activation::Relu, 4}, data, o);
    FAIL() << "expected divergence";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Training);
    EXPECT_LT(e.completed().size(), 50u);
  }
}

TEST(Trainer, RejectsMismatchedArchitecture) {
  const Dataset data = gen_synthetic(small_task());
  EXPECT_THROW(train_supervised({{5, 12, 8}, Activation::Relu, 4}, data, quick()), Error);
  EXPECT_THROW(train_supervised({{6, 12, 7}, Activation::Relu, 4}, data, quick()), Error);
}

// Overlap controls how multimodal a converged teacher's soft predictions are.
TEST(Trainer, OverlapShapesTeacherProfiles) {
  SyntheticTaskSpec base;
  base.n_train = 1200;
  base.n_test = 1000;
  base.noise = 0.5;
  SgdOptions opts;
  opts.epochs = 60;
  opts.weight_decay = 5e-3;

  base.overlap = 0.0;
  base.noise = 0.3;
  const Dataset sep = gen_synthetic(base);
  const Mlp t0 = train_teacher({{16, 128, 128, 20}, Activation::Relu, 1}, sep, opts);
  for (const auto& p : class_profiles(t0.logits(sep.x_test), sep.y_test, 1.0).profiles) {
    EXPECT_GT(p.mean_probs[p.top_indices[0]], 0.9) << "class " << p.class_id;
  }

  base.overlap = 0.8;
  base.noise = 0.5;
  const Dataset ov = gen_synthetic(base);
  const Mlp t8 = train_teacher({{16, 128, 128, 20}, Activation::Relu, 1}, ov, opts);
  for (const auto& p : class_profiles(t8.logits(ov.x_test), ov.y_test, 4.0).profiles) {
    std::size_t above = 0;
    for (double v : p.mean_probs) above += v > 0.1 ? 1 : 0;
    EXPECT_GE(above, 2u) << "class " << p.class_id;
  }
}

TEST(SgdOptionsJson, RoundTripAndUnknownKey) {
  SgdOptions o;
  o.lr = 0.123;
  o.epochs = 7;
  nlohmann::json j;
  to_json(j, o);
  const SgdOptions back = sgd_options_from_json(j);
  EXPECT_EQ(back.lr, 0.123);
  EXPECT_EQ(back.epochs, 7u);
  EXPECT_THROW(sgd_options_from_json(nlohmann::json{{"lrr", 1}}), Error);
}

}  // namespace
}  // namespace gdkd
