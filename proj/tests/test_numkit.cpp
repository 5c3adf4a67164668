#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "iif/errors.hpp"
#include "iif/numkit.hpp"

using namespace iif;

namespace {

Matrix random_spd(int n, Rng& rng) {
  Matrix b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = rng.normal();
  return b * b.transpose() + Matrix::Identity(n, n);
}

double brute_spearman(const std::vector<double>& p, const std::vector<double>& q) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        if (w < v[i]) ++less;
        if (w == v[i]) ++equal;
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto a = ranks(p), b = ranks(q);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Rng, ForksAreDistinctAndStable) {
  Rng root(7);
  Rng f1 = root.fork(1), f1b = root.fork(1), f2 = root.fork(2);
  EXPECT_EQ(f1(), f1b());
  EXPECT_NE(Rng(7).fork(1)(), f2());
  root();
  EXPECT_EQ(root.fork(1).seed(), Rng(7).fork(1).seed());
}

TEST(Rng, UniformAndBelowRanges) {
  Rng r(3);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ++counts[r.below(5)];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(ConjugateGradient, AgreesWithDirectSolve) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + trial;
    const Matrix a = random_spd(n, rng);
    Vector b(n);
    for (int i = 0; i < n; ++i) b(i) = rng.normal();
    const auto r = conjugate_gradient(a, b, 1e-12, 1000, 0.0);
    const Vector x = a.ldlt().solve(b);
    EXPECT_TRUE(r.converged);
    EXPECT_LE((r.x - x).norm(), 1e-8 * x.norm());
    EXPECT_LE(r.residual, 1e-10);
  }
}

TEST(ConjugateGradient, DampingShiftsTheSystem) {
  const Matrix a = Matrix::Identity(3, 3);
  const Vector b = Vector::Ones(3);
  const auto r = conjugate_gradient(a, b, 1e-12, 100, 1.0);
  EXPECT_NEAR(r.x(0), 0.5, 1e-12);
}

TEST(ConjugateGradient, ZeroRightHandSide) {
  const auto r = conjugate_gradient(Matrix(Matrix::Identity(4, 4)), Vector(Vector::Zero(4)));
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.x.norm(), 0.0);
}

TEST(ConjugateGradient, IndefiniteBreakdownThrows) {
  Matrix a = Matrix::Identity(2, 2);
  a(1, 1) = -5.0;
  EXPECT_THROW(conjugate_gradient(a, Vector::Ones(2), 1e-10, 10, 0.0), NumericalError);
}

TEST(ConjugateGradient, NonFiniteThrows) {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 0) = std::nan("");
  EXPECT_THROW(conjugate_gradient(a, Vector::Ones(2)), NumericalError);
}

TEST(ConjugateGradient, IterationCapReported) {
  Rng rng(9);
  const Matrix a = random_spd(30, rng);
  Vector b = Vector::Ones(30);
  const auto r = conjugate_gradient(a, b, 1e-14, 2, 0.0);
  EXPECT_EQ(r.iterations, 2);
  EXPECT_FALSE(r.converged);
}

TEST(Spearman, DocumentedExample) {
  const std::vector<double> p{1, 2, 3, 4}, q{2, 1, 4, 3};
  EXPECT_NEAR(spearman(p, q), 0.6, 1e-12);
}

TEST(Spearman, PerfectAndReversed) {
  const std::vector<double> p{1, 2, 3, 4, 5}, q{10, 20, 30, 40, 50}, r{5, 4, 3, 2, 1};
  EXPECT_NEAR(spearman(p, q), 1.0, 1e-12);
  EXPECT_NEAR(spearman(p, r), -1.0, 1e-12);
}

TEST(Spearman, ConstantInputIsZeroAndFlagged) {
  const std::vector<double> p{1, 2, 3}, q{4, 4, 4};
  const auto r = spearman_ext(p, q);
  EXPECT_TRUE(r.constant_input);
  EXPECT_EQ(r.rho, 0.0);
}

TEST(Spearman, ContractViolations) {
  const std::vector<double> a{1, 2, 3}, b{1, 2}, one{1};
  EXPECT_THROW(spearman(a, b), InvalidArgument);
  EXPECT_THROW(spearman(one, one), InvalidArgument);
}

TEST(Spearman, TiesMatchBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(20), q(20);
    for (auto& v : p) v = static_cast<double>(rng.below(6));
    for (auto& v : q) v = static_cast<double>(rng.below(4));
    EXPECT_NEAR(spearman(p, q), brute_spearman(p, q), 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  std::vector<double> p(40), q(40), tq(40);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng.normal();
    q[i] = rng.normal() + p[i];
    tq[i] = std::exp(3 * q[i]) - 7;
  }
  EXPECT_DOUBLE_EQ(spearman(p, q), spearman(p, tq));
}

TEST(AverageRanks, TiesShareMean) {
  const std::vector<double> v{3, 1, 3, 2};
  const Vector r = average_ranks(v);
  EXPECT_DOUBLE_EQ(r(0), 3.5);
  EXPECT_DOUBLE_EQ(r(1), 1.0);
  EXPECT_DOUBLE_EQ(r(2), 3.5);
  EXPECT_DOUBLE_EQ(r(3), 2.0);
}

TEST(Projection, ShapeScaleAndErrors) {
  Rng rng(4);
  const Matrix a = random_projection(400, 50, rng);
  EXPECT_EQ(a.rows(), 400);
  EXPECT_EQ(a.cols(), 50);
  EXPECT_NEAR(a.squaredNorm() / a.size(), 1.0 / 50, 0.002);
  EXPECT_THROW(random_projection(10, 11, rng), InvalidArgument);
}

TEST(Projection, OrthonormalColumns) {
  Rng rng(8);
  const Matrix q = orthonormalize_columns(random_projection(30, 30, rng));
  EXPECT_LE((q.transpose() * q - Matrix::Identity(30, 30)).norm(), 1e-12);
}

TEST(Noise, LaplaceAndNormalVariance) {
  Rng rng(12);
  for (auto kind : {NoiseKind::Normal, NoiseKind::Laplace}) {
    const Vector v = sample_noise(kind, 2.0, 200000, rng);
    EXPECT_NEAR(v.mean(), 0.0, 0.02);
    EXPECT_NEAR(v.squaredNorm() / v.size(), 4.0, 0.08);
  }
  EXPECT_EQ(parse_noise_kind("laplace"), NoiseKind::Laplace);
  EXPECT_THROW(parse_noise_kind("cauchy"), InvalidArgument);
}

TEST(Noise, LaplaceHasHeavierTails) {
  Rng rng(13);
  const Vector v = sample_noise(NoiseKind::Laplace, 1.0, 200000, rng);
  const double kurt = v.array().pow(4).mean() / std::pow(v.squaredNorm() / v.size(), 2);
  EXPECT_NEAR(kurt, 6.0, 0.4);
}
