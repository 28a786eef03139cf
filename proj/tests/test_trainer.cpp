#include <gtest/gtest.h>

#include <cmath>

#include "akt/trainer.hpp"

using namespace akt;

namespace {

struct Fixture {
  SyntheticTask task;
  MLPSpec spec;
  TrainerConfig cfg;

  TrainingData data() const { return {&task.target_train, &task.target_test, &task.source}; }
};

Fixture small_fixture(std::uint64_t seed = 0) {
  SyntheticSpec s;
  s.seed = seed;
  s.dims = 8;
  s.target_classes = 3;
  s.source_classes = 6;
  s.target_train_per_class = 16;
  s.target_test_per_class = 20;
  s.source_samples = 96;
  Fixture f{make_synthetic_transfer_task(s), {}, {}};
  f.spec.input_dim = 8;
  f.spec.hidden_dims = {12, 6};
  f.spec.num_classes = 3;
  f.cfg.epochs = 4;
  f.cfg.batch_size = 8;
  f.cfg.disc_hidden = {8, 4};
  f.cfg.seed = seed;
  return f;
}

bool params_equal(std::vector<ParamRef> a, std::vector<ParamRef> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (!bitwise_equal(*a[k].value, *b[k].value)) return false;
  return true;
}

std::vector<Tensor> snapshot(std::vector<ParamRef> ps) {
  std::vector<Tensor> out;
  for (auto& p : ps) out.push_back(*p.value);
  return out;
}

bool unchanged(const std::vector<Tensor>& before, std::vector<ParamRef> ps) {
  for (std::size_t k = 0; k < ps.size(); ++k)
    if (!bitwise_equal(before[k], *ps[k].value)) return false;
  return true;
}

LabeledDataset dataset(Tensor X, std::vector<std::size_t> labels, std::size_t classes) {
  return {std::move(X), one_hot(labels, classes), classes, "t"};
}

}  // namespace

// ---- joint classifier loss

TEST(JointLoss, ZeroLambdaIsTargetCE) {
  auto f = small_fixture();
  MLP m = init_mlp(f.spec, 1);
  const Tensor xt = f.task.target_train.X.gather_rows(std::vector<std::size_t>{0, 1, 2, 3});
  const Tensor yt = f.task.target_train.Y.gather_rows(std::vector<std::size_t>{0, 1, 2, 3});
  const Tensor xs = f.task.source.X.gather_rows(std::vector<std::size_t>{5, 6});
  const Tensor ys = Tensor::matrix({{1, 0, 0}, {0, 0, 1}});
  MLP copy = m;
  const auto jl = classifier_joint_loss(m, xt, yt, &xs, &ys, 0.0, TaskKind::multiclass);
  const double ce = softmax_cross_entropy(copy.forward(xt).logits, yt).loss;
  EXPECT_EQ(jl.total, ce);
  EXPECT_EQ(jl.source, 0.0);
}

TEST(JointLoss, IdenticalBatchesDoubleWithUnitLambda) {
  auto f = small_fixture();
  MLP m = init_mlp(f.spec, 1);
  const std::vector<std::size_t> idx{0, 4, 8};
  const Tensor x = f.task.target_train.X.gather_rows(idx);
  const Tensor y = f.task.target_train.Y.gather_rows(idx);
  const auto jl = classifier_joint_loss(m, x, y, &x, &y, 1.0, TaskKind::multiclass);
  EXPECT_NEAR(jl.total, 2.0 * jl.target, 1e-15);
}

TEST(JointLoss, MatchesTwoTermOracle) {
  auto f = small_fixture();
  MLP m = init_mlp(f.spec, 3);
  const Tensor xt = f.task.target_train.X.gather_rows(std::vector<std::size_t>{0, 1, 2});
  const Tensor yt = f.task.target_train.Y.gather_rows(std::vector<std::size_t>{0, 1, 2});
  const Tensor xs = f.task.source.X.gather_rows(std::vector<std::size_t>{0, 1, 2, 3, 4});
  const Tensor ys = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0}});
  // per-sample log-sum-exp, averaged per batch
  auto ce = [&](const Tensor& x, const Tensor& y) {
    MLP c = m;
    const Tensor z = c.forward(x).logits;
    double s = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      double mx = -1e300;
      for (double v : z.row(i)) mx = std::max(mx, v);
      double lse = 0.0;
      for (double v : z.row(i)) lse += std::exp(v - mx);
      lse = mx + std::log(lse);
      s += lse - z(i, argmax(y.row(i)));
    }
    return s / static_cast<double>(z.rows());
  };
  const double expected = ce(xt, yt) + 0.4 * ce(xs, ys);
  const auto jl = classifier_joint_loss(m, xt, yt, &xs, &ys, 0.4, TaskKind::multiclass);
  EXPECT_NEAR(jl.total, expected, 1e-12);
}

// ---- one step

TEST(Step, NoneModeWithoutSourceIsPlainSgd) {
  auto f = small_fixture();
  f.cfg.alignment.mode = AlignmentMode::none;
  f.cfg.lambda_s = 0.0;
  TrainState s = init_train_state(f.spec, f.cfg);
  TrainStreams streams(f.task.target_train, nullptr, f.cfg);
  const Batch b = *streams.target.next();

  MLP ref = s.classifier;
  OptimizerState opt(ref.params(), {f.cfg.lr_m, f.cfg.momentum, f.cfg.weight_decay});
  ref.zero_grad();
  classifier_joint_loss(ref, b.X, *b.Y, nullptr, nullptr, 0.0, TaskKind::multiclass);
  sgd_step(ref.params(), opt);

  akt_train_step(s, streams, f.cfg, b, 0.0);
  EXPECT_TRUE(params_equal(s.classifier.params(), ref.params()));
}

TEST(Step, HeadsEqualAfterStep) {
  auto f = small_fixture();
  TrainState s = init_train_state(f.spec, f.cfg);
  TrainStreams streams(f.task.target_train, &f.task.source, f.cfg);
  for (int i = 0; i < 3; ++i) {
    const Batch b = *streams.target.next();
    akt_train_step(s, streams, f.cfg, b, 1.0);
    EXPECT_TRUE(bitwise_equal(s.classifier.head().W, s.generator.head().W));
    EXPECT_TRUE(bitwise_equal(s.classifier.head().b, s.generator.head().b));
  }
}

TEST(Step, DiscriminatorStepLowersItsLossUsually) {
  // Over 20 seeds, one discriminator update on a fixed pair decreases the loss in the majority.
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto f = small_fixture(seed);
    TrainState s = init_train_state(f.spec, f.cfg);
    const Tensor ft = s.classifier.forward(f.task.target_train.X.gather_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7})).feature;
    const Tensor fs = s.generator.forward(f.task.source.X.gather_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7})).feature;
    s.d_instance.zero_grad();
    s.d_group.zero_grad();
    const double before = total_disc_loss(f.cfg.alignment, s.d_instance, s.d_group, ft, fs).total;
    sgd_step(s.d_instance.params(), s.opt_d_instance);
    sgd_step(s.d_group.params(), s.opt_d_group);
    s.d_instance.zero_grad();
    s.d_group.zero_grad();
    const double after = total_disc_loss(f.cfg.alignment, s.d_instance, s.d_group, ft, fs).total;
    if (after < before) ++decreased;
  }
  EXPECT_GE(decreased, 15);
}

TEST(Step, UpdateIsolation) {
  auto f = small_fixture();
  TrainState s = init_train_state(f.spec, f.cfg);
  TrainStreams streams(f.task.target_train, &f.task.source, f.cfg);

  // (a) discriminator updates touch neither network.
  {
    const auto m_before = snapshot(s.classifier.params());
    const auto g_before = snapshot(s.generator.params());
    const Batch bt = streams.target_aux.require_next("t");
    const Batch bs = streams.next_source("s");
    const Tensor ft = s.classifier.forward(bt.X).feature;
    const Tensor fs = s.generator.forward(bs.X).feature;
    s.d_instance.zero_grad();
    s.d_group.zero_grad();
    total_disc_loss(f.cfg.alignment, s.d_instance, s.d_group, ft, fs);
    sgd_step(s.d_instance.params(), s.opt_d_instance);
    sgd_step(s.d_group.params(), s.opt_d_group);
    EXPECT_TRUE(unchanged(m_before, s.classifier.params()));
    EXPECT_TRUE(unchanged(g_before, s.generator.params()));
  }
  // (b) generator update leaves D, M and G's head alone.
  {
    const auto m_before = snapshot(s.classifier.params());
    const auto di_before = snapshot(s.d_instance.params());
    const auto dg_before = snapshot(s.d_group.params());
    const Tensor head_before = s.generator.head().W;
    const Batch bs = streams.next_source("s");
    s.generator.zero_grad();
    const Tensor fs = s.generator.forward(bs.X).feature;
    const auto l = generator_alignment_loss(f.cfg.alignment, s.d_instance, s.d_group, fs);
    s.generator.backward_from_feature(l.grad_features);
    sgd_step(s.generator.params(false), s.opt_generator);
    EXPECT_TRUE(unchanged(m_before, s.classifier.params()));
    EXPECT_TRUE(unchanged(di_before, s.d_instance.params()));
    EXPECT_TRUE(unchanged(dg_before, s.d_group.params()));
    EXPECT_TRUE(bitwise_equal(head_before, s.generator.head().W));
  }
  // Full step: G's trunk and D's change only in their own phases; with mode none they are frozen.
  {
    auto g = small_fixture();
    g.cfg.alignment.mode = AlignmentMode::none;
    TrainState t = init_train_state(g.spec, g.cfg);
    TrainStreams st(g.task.target_train, &g.task.source, g.cfg);
    const auto g_trunk = snapshot(t.generator.params(false));
    const auto di = snapshot(t.d_instance.params());
    akt_train_step(t, st, g.cfg, *st.target.next(), 1.0);
    EXPECT_TRUE(unchanged(g_trunk, t.generator.params(false)));
    EXPECT_TRUE(unchanged(di, t.d_instance.params()));
  }
}

// ---- full runs

TEST(Training, ZeroEpochsReturnsInitialState) {
  auto f = small_fixture();
  f.cfg.epochs = 0;
  const auto r = run_training(f.data(), f.spec, f.cfg);
  TrainState init = init_train_state(f.spec, f.cfg);
  EXPECT_TRUE(r.history.empty());
  MLP m = r.state.classifier;
  EXPECT_TRUE(params_equal(m.params(), init.classifier.params()));
}

TEST(Training, DeterministicGivenSeed) {
  auto f = small_fixture(7);
  const auto a = run_training(f.data(), f.spec, f.cfg);
  const auto b = run_training(f.data(), f.spec, f.cfg);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(a.history, b.history);
  MLP ma = a.state.classifier, mb = b.state.classifier;
  EXPECT_TRUE(params_equal(ma.params(), mb.params()));
  MLP ga = a.state.generator, gb = b.state.generator;
  EXPECT_TRUE(params_equal(ga.params(), gb.params()));
}

TEST(Training, LearningRateSchedule) {
  auto f = small_fixture();
  f.cfg.epochs = 8;
  const auto r = run_training(f.data(), f.spec, f.cfg);
  for (const auto& rec : r.history) EXPECT_EQ(rec.lr_m, rec.epoch <= 6 ? 0.01 : 0.01 * 0.1) << rec.epoch;
  EXPECT_DOUBLE_EQ(r.state.opt_classifier.hyper().lr, 0.001);
  EXPECT_DOUBLE_EQ(r.state.opt_generator.hyper().lr, 0.001);
  EXPECT_EQ(r.state.opt_d_instance.hyper().lr, f.cfg.lr_d);
  EXPECT_EQ(r.state.opt_d_group.hyper().lr, f.cfg.lr_d);
}

TEST(Training, MetricsFiniteAndComplete) {
  auto f = small_fixture(2);
  const auto r = run_training(f.data(), f.spec, f.cfg);
  const std::size_t iters_per_epoch = f.task.target_train.size() / f.cfg.batch_size;
  EXPECT_EQ(r.state.iteration, iters_per_epoch * f.cfg.epochs);
  for (const auto& rec : r.history) {
    ASSERT_TRUE(rec.loss_d && rec.loss_g && rec.target_test_score);
    EXPECT_TRUE(std::isfinite(*rec.loss_d));
    EXPECT_TRUE(std::isfinite(*rec.loss_g));
    EXPECT_TRUE(std::isfinite(rec.loss_m_target));
    EXPECT_TRUE(std::isfinite(rec.loss_m_source));
    EXPECT_GE(*rec.target_test_score, 0.0);
    EXPECT_LE(*rec.target_test_score, 100.0);
  }
}

TEST(Training, WarmupSuppressesSourceTerm) {
  auto f = small_fixture();
  f.cfg.warmup_epochs = 2;
  const auto r = run_training(f.data(), f.spec, f.cfg);
  EXPECT_EQ(r.history[0].loss_m_source, 0.0);
  EXPECT_EQ(r.history[1].loss_m_source, 0.0);
  EXPECT_GT(r.history[2].loss_m_source, 0.0);
}

TEST(Training, RequiresSourceForTransfer) {
  auto f = small_fixture();
  TrainingData d{&f.task.target_train, nullptr, nullptr};
  EXPECT_THROW(run_training(d, f.spec, f.cfg), ValidationError);
}

TEST(TrainerConfig, RejectsBadValues) {
  TrainerConfig c;
  c.lr_m = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

// ---- evaluation

TEST(Evaluate, PerfectClassifierScores100) {
  MLPSpec spec;
  spec.input_dim = 2;
  spec.hidden_dims = {2};
  spec.num_classes = 2;
  MLP net(spec);
  net.trunk().layers()[0].W = Tensor::matrix({{1, 0}, {0, 1}});
  net.head().W = Tensor::matrix({{1, 0}, {0, 1}});
  const auto ds = dataset(Tensor::matrix({{1, 0}, {0, 1}, {2, 0}}), {0, 1, 0}, 2);
  EXPECT_EQ(evaluate_model(net, ds, TaskKind::multiclass), 100.0);
}

TEST(Evaluate, ConstantPredictorOnBalancedClasses) {
  MLPSpec spec;
  spec.input_dim = 1;
  spec.hidden_dims = {1};
  spec.num_classes = 10;
  MLP net(spec);
  net.head().b = Tensor::from_vector({0, 0, 0, 5, 0, 0, 0, 0, 0, 0});
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 100; ++i) labels.push_back(i % 10);
  const auto ds = dataset(Tensor({100, 1}), labels, 10);
  EXPECT_EQ(evaluate_model(net, ds, TaskKind::multiclass), 10.0);
}

TEST(Evaluate, SingleWrongSampleScoresZero) {
  MLPSpec spec;
  spec.input_dim = 1;
  spec.hidden_dims = {1};
  spec.num_classes = 2;
  MLP net(spec);
  net.head().b = Tensor::from_vector({1, 0});
  EXPECT_EQ(evaluate_model(net, dataset(Tensor({1, 1}), {1}, 2), TaskKind::multiclass), 0.0);
}
