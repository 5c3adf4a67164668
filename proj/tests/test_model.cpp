#include <gtest/gtest.h>

#include "iif/dataflow.hpp"
#include "iif/errors.hpp"
#include "iif/model.hpp"

using namespace iif;

namespace {

struct Instance {
  ModelState state;
  Vector x, y;
  LossKind loss;
};

Instance make_instance(const Architecture& arch, LossKind loss, Rng& rng) {
  Instance in{init_state(arch, 1.0, rng), Vector(arch.input_dim), Vector(arch.output_dim), loss};
  for (Eigen::Index i = 0; i < in.state.params.size(); ++i) in.state.params(i) = 0.5 * rng.normal();
  for (auto& v : in.x) v = rng.normal();
  for (auto& v : in.y) v = loss == LossKind::Mse ? rng.normal() : rng.uniform();
  return in;
}

Vector fd_grad(const Instance& in) {
  const double h = 1e-6;
  Vector g(in.state.params.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    ModelState a = in.state, b = in.state;
    a.params(k) += h;
    b.params(k) -= h;
    g(k) = (sample_loss(a, in.x, in.y, in.loss) - sample_loss(b, in.x, in.y, in.loss)) / (2 * h);
  }
  return g;
}

const Architecture kArchs[] = {
    {4, 1, {}, true},
    {4, 3, {}, true},
    {3, 2, {5}, true},
    {3, 3, {4, 4}, false},
};

LinearTask small_linear(int n, int d, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_train = n;
  s.n_test = 15;
  s.dim = d;
  s.seed = seed;
  return gen_linear(s);
}

}  // namespace

TEST(Architecture, ParamCountAndDescribe) {
  const Architecture a{6, 3, {8, 8}, true};
  EXPECT_EQ(a.param_count(), 6 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3);
  EXPECT_EQ(a.describe(), "in=6;hidden=8,8;out=3;bias=1;act=tanh");
  EXPECT_EQ(a.kind_label(LossKind::CrossEntropy), "mlp");
  EXPECT_EQ((Architecture{2, 1, {}, true}).kind_label(LossKind::Mse), "linear");
  EXPECT_EQ((Architecture{2, 4, {}, true}).kind_label(LossKind::CrossEntropy), "softmax");
  const auto m = Architecture::mlp_preset(784, 10, 0.25);
  EXPECT_EQ(m.hidden, (std::vector<int>{32, 16}));
}

TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(1);
  for (const auto& arch : kArchs)
    for (LossKind loss : {LossKind::Mse, LossKind::CrossEntropy}) {
      if (loss == LossKind::CrossEntropy && arch.output_dim < 2) continue;
      for (int t = 0; t < 5; ++t) {
        const Instance in = make_instance(arch, loss, rng);
        const Vector g = per_sample_grad(in.state, in.x, in.y, loss);
        EXPECT_LE((g - fd_grad(in)).norm(), 1e-6 * std::max(1.0, g.norm())) << arch.describe();
      }
    }
}

TEST(Gradients, MixedJacobianMatchesTargetDerivative) {
  Rng rng(2);
  for (const auto& arch : kArchs)
    for (LossKind loss : {LossKind::Mse, LossKind::CrossEntropy}) {
      if (loss == LossKind::CrossEntropy && arch.output_dim < 2) continue;
      const Instance in = make_instance(arch, loss, rng);
      Vector dy(arch.output_dim);
      for (auto& v : dy) v = rng.normal();
      const double h = 1e-6;
      const Vector fd = (per_sample_grad(in.state, in.x, in.y + h * dy, loss) -
                         per_sample_grad(in.state, in.x, in.y - h * dy, loss)) /
                        (2 * h);
      const Vector j = mixed_jacobian_apply(in.state, in.x, in.y, dy, loss);
      EXPECT_LE((j - fd).norm(), 1e-6 * std::max(1.0, j.norm()));
    }
}

TEST(Gradients, MseMixedJacobianIsScaledOutputJacobian) {
  Rng rng(3);
  const Instance in = make_instance(kArchs[2], LossKind::Mse, rng);
  const Vector dy = Vector::Ones(2);
  const Vector expect = -kMseScale * output_jacobian(in.state, in.x).transpose() * dy;
  EXPECT_LE((mixed_jacobian_apply(in.state, in.x, in.y, dy, LossKind::Mse) - expect).norm(), 1e-12);
}

TEST(Gradients, VjpMatchesJacobian) {
  Rng rng(4);
  const Instance in = make_instance(kArchs[3], LossKind::Mse, rng);
  const Vector v = Vector::LinSpaced(3, -1, 2);
  EXPECT_LE((vjp(in.state, in.x, v) - output_jacobian(in.state, in.x).transpose() * v).norm(), 1e-12);
}

TEST(Gradients, CrossEntropyUnnormalisedTarget) {
  const Architecture arch{2, 3, {}, true};
  Rng rng(5);
  Instance in = make_instance(arch, LossKind::CrossEntropy, rng);
  in.y << 0.0, 0.3, 0.0;
  const Vector z = forward(in.state, in.x.transpose()).row(0).transpose();
  Vector soft = (z.array() - z.maxCoeff()).exp();
  soft /= soft.sum();
  const Vector dz = 0.3 * soft - in.y;
  const Vector expect = vjp(in.state, in.x, dz);
  EXPECT_LE((per_sample_grad(in.state, in.x, in.y, LossKind::CrossEntropy) - expect).norm(), 1e-12);
}

TEST(Hessian, MatchesFiniteDifferenceOfGradient) {
  Rng rng(6);
  for (LossKind loss : {LossKind::Mse, LossKind::CrossEntropy}) {
    const Architecture arch{3, 3, {}, true};
    Dataset d;
    d.features = Matrix::Random(20, 3);
    d.targets = Matrix::Zero(20, 3);
    for (int i = 0; i < 20; ++i) d.targets(i, i % 3) = 1.0;
    d.kind = loss == LossKind::Mse ? TaskKind::Regression : TaskKind::Classification;
    ModelState s = init_state(arch, 1.0, rng);
    const Matrix h = exact_hessian(s, d, loss);
    const double eps = 1e-6;
    Matrix fd(h.rows(), h.cols());
    for (Eigen::Index k = 0; k < h.cols(); ++k) {
      ModelState a = s, b = s;
      a.params(k) += eps;
      b.params(k) -= eps;
      fd.col(k) = (full_gradient(a, d.features, d.targets, loss) -
                   full_gradient(b, d.features, d.targets, loss)) / (2 * eps);
    }
    EXPECT_LE((h - fd).norm(), 1e-6 * h.norm());
    EXPECT_LE((h - h.transpose()).norm(), 1e-12);
  }
}

TEST(Hessian, HiddenLayersUnsupported) {
  Rng rng(7);
  const ModelState s = init_state(kArchs[2], 1.0, rng);
  Dataset d{Matrix::Ones(4, 3), Matrix::Ones(4, 2), TaskKind::Regression};
  EXPECT_THROW(exact_hessian(s, d, LossKind::Mse), Unsupported);
}

TEST(Fisher, CompressedMatchesOuterProducts) {
  Rng rng(8);
  const ModelState s = init_state(kArchs[2], 1.0, rng);
  const Matrix x = Matrix::Random(10, 3), y = Matrix::Random(10, 2);
  const Matrix u = per_sample_grads(s, x, y, LossKind::Mse);
  EXPECT_LE((compressed_fisher(s, x, y, LossKind::Mse) - u.transpose() * u).norm(), 1e-10);
  const Matrix a = Matrix::Random(s.params.size(), 4);
  EXPECT_LE((compressed_fisher(s, x, y, LossKind::Mse, a) - a.transpose() * u.transpose() * u * a).norm(),
            1e-10);
}

TEST(ClosedForm, GradientVanishesAtSolution) {
  const auto t = small_linear(40, 5, 1);
  const Architecture arch{5, 1, {}, true};
  const ModelState s = fit(t.train, arch, LossKind::Mse, TrainConfig{});
  EXPECT_LE(full_gradient(s, t.train.features, t.train.targets, LossKind::Mse).norm(), 1e-10);
}

TEST(ClosedForm, SingularDesignAdvisesRidge) {
  Dataset d{Matrix::Ones(5, 2), Matrix::Ones(5, 1), TaskKind::Regression};
  const Architecture arch{2, 1, {}, true};
  try {
    fit(d, arch, LossKind::Mse, TrainConfig{});
    FAIL() << "singular fit accepted";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  TrainConfig cfg;
  cfg.ridge = 1e-3;
  EXPECT_NO_THROW(fit(d, arch, LossKind::Mse, cfg));
}

TEST(ClosedForm, RequiresLinearMse) {
  const auto t = small_linear(20, 3, 2);
  EXPECT_THROW(fit(t.train, Architecture{3, 1, {4}, true}, LossKind::Mse, TrainConfig{}),
               Unsupported);
}

TEST(Sgd, ZeroStepLeavesStateAndEpochLowersLoss) {
  const auto t = small_linear(64, 4, 3);
  Rng rng(1);
  const ModelState s0 = init_state(Architecture{4, 1, {}, true}, 1.0, rng);
  EXPECT_EQ(sgd_epoch(s0, t.train, LossKind::Mse, 0.0, 8, 1).params, s0.params);
  const ModelState s1 = sgd_epoch(s0, t.train, LossKind::Mse, 0.02, 8, 1);
  EXPECT_LT(mean_loss(s1, t.train, LossKind::Mse), mean_loss(s0, t.train, LossKind::Mse));
  EXPECT_EQ(sgd_epoch(s0, t.train, LossKind::Mse, 0.02, 8, 1).params, s1.params);
}

TEST(Sgd, DivergenceThrows) {
  const auto t = small_linear(16, 4, 3);
  Rng rng(1);
  ModelState s = init_state(Architecture{4, 1, {}, true}, 1.0, rng);
  EXPECT_THROW(for (int i = 0; i < 200; ++i) s = sgd_epoch(s, t.train, LossKind::Mse, 1e3, 0, 1),
               NumericalError);
}

TEST(Iterative, AdamTrainsSoftmaxAndRecordsCheckpoints) {
  BlobSpec b;
  b.n_train = 200;
  const auto t = gen_blobs(b);
  const Architecture arch{10, 4, {}, true};
  TrainConfig cfg;
  cfg.optimizer = Optimizer::Adam;
  cfg.learning_rate = 0.05;
  cfg.epochs = 10;
  auto [s, ck] = fit_with_checkpoints(t.train, arch, LossKind::CrossEntropy, cfg);
  EXPECT_EQ(ck.size(), 10u);
  EXPECT_EQ(ck.back().state.params, s.params);
  const double first = mean_loss(ck.front().state, t.train, LossKind::CrossEntropy);
  const double last = mean_loss(s, t.train, LossKind::CrossEntropy);
  EXPECT_LT(last, first);
  EXPECT_LT(last, 0.8 * std::log(4.0));
}

TEST(Loo, ShermanMorrisonMatchesBruteRetrain) {
  const auto t = small_linear(30, 4, 4);
  const Architecture arch{4, 1, {}, true};
  for (double ridge : {0.0, 0.5}) {
    TrainConfig cfg;
    cfg.ridge = ridge;
    const ModelState s = fit(t.train, arch, LossKind::Mse, cfg);
    const Vector d = exact_loo_deltas(s, t.train, t.test, ridge);
    for (int i = 0; i < 30; i += 7) {
      std::vector<int> keep;
      for (int j = 0; j < 30; ++j)
        if (j != i) keep.push_back(j);
      const ModelState si = fit(subset(t.train, keep), arch, LossKind::Mse, cfg);
      const double brute = mean_loss(si, t.test, LossKind::Mse) - mean_loss(s, t.test, LossKind::Mse);
      EXPECT_NEAR(d(i), brute, 1e-9 * std::max(1.0, std::abs(brute)));
      EXPECT_NEAR(exact_loo_delta(s, t.train, i, t.test, ridge), d(i), 1e-12);
    }
  }
}

TEST(Loo, FullLeverageThrows) {
  Dataset d{Matrix::Identity(3, 3), Matrix::Ones(3, 1), TaskKind::Regression};
  const Architecture arch{3, 1, {}, false};
  const ModelState s = fit(d, arch, LossKind::Mse, TrainConfig{});
  EXPECT_THROW(exact_loo_deltas(s, d, d), NumericalError);
}
