#include <gtest/gtest.h>

#include <set>

#include "iif/errors.hpp"
#include "iif/eval.hpp"

using namespace iif;

namespace {

FlipMask mask_of(std::initializer_list<int> bits) {
  FlipMask m;
  for (int b : bits) m.flipped.push_back(b != 0);
  return m;
}

double brute_auc(const Vector& s, const FlipMask& m) {
  double wins = 0, pairs = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = 0; j < s.size(); ++j)
      if (m.flipped[static_cast<std::size_t>(i)] && !m.flipped[static_cast<std::size_t>(j)]) {
        ++pairs;
        wins += s(i) > s(j) ? 1.0 : s(i) == s(j) ? 0.5 : 0.0;
      }
  return wins / pairs;
}

struct Linear {
  LinearTask task;
  ModelRecipe recipe;
  ModelState trained;
};

Linear linear(int n, int d, std::uint64_t seed) {
  SyntheticSpec s;
  s.n_train = n;
  s.n_test = 30;
  s.dim = d;
  s.seed = seed;
  Linear l{gen_linear(s), {}, {}};
  l.recipe.arch = Architecture{d, 1, {}, true};
  l.trained = train_model(l.recipe, l.task.train);
  return l;
}

}  // namespace

TEST(SubsetPlan, SizesIndependenceAndDeterminism) {
  const auto p = make_subset_plan(101, 50, 0.5, 3);
  ASSERT_EQ(p.size(), 50);
  for (const auto& s : p.sets) {
    EXPECT_EQ(s.size(), 51u);
    EXPECT_EQ(std::set<int>(s.begin(), s.end()).size(), s.size());
    EXPECT_GE(s.front(), 0);
    EXPECT_LT(s.back(), 101);
  }
  const auto q = make_subset_plan(101, 10, 0.5, 3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(q.sets[static_cast<std::size_t>(i)], p.sets[static_cast<std::size_t>(i)]);
  EXPECT_NE(p.sets[0], p.sets[1]);
  EXPECT_THROW(make_subset_plan(10, 5, 0.0, 1), InvalidArgument);
  EXPECT_THROW(make_subset_plan(10, 0, 0.5, 1), InvalidArgument);
  EXPECT_EQ(make_subset_plan(10, 1, 0.25, 1).sets[0].size(), 3u);
}

TEST(Auc, PerfectReversedAndTies) {
  const auto m = mask_of({1, 0, 1, 0, 0});
  Vector s(5);
  s << 1, 0, 1, 0, 0;
  EXPECT_DOUBLE_EQ(mislabel_auc(s, m).auc, 1.0);
  EXPECT_DOUBLE_EQ(mislabel_auc(-s, m).auc, 0.0);
  EXPECT_DOUBLE_EQ(mislabel_auc(Vector::Zero(5), m).auc, 0.5);
}

TEST(Auc, FourSampleExampleMatchesPairCount) {
  Vector s(4);
  s << 0.9, 0.1, 0.8, 0.2;
  const auto m = mask_of({1, 0, 0, 1});
  // Flipped {0.9, 0.2} against clean {0.1, 0.8}: three of four pairs ordered.
  EXPECT_DOUBLE_EQ(brute_auc(s, m), 0.75);
  EXPECT_DOUBLE_EQ(mislabel_auc(s, m).auc, 0.75);
}

TEST(Auc, MatchesBruteForceAndMonotoneInvariance) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    Vector s(40);
    FlipMask m;
    for (int i = 0; i < 40; ++i) {
      s(i) = static_cast<double>(rng.below(8));
      m.flipped.push_back(i % 3 == 0);
    }
    EXPECT_NEAR(mislabel_auc(s, m).auc, brute_auc(s, m), 1e-12);
    const Vector e = (2 * s.array()).exp() + 5;
    EXPECT_DOUBLE_EQ(mislabel_auc(e, m).auc, mislabel_auc(s, m).auc);
  }
}

TEST(Auc, Contract) {
  EXPECT_THROW(mislabel_auc(Vector::Ones(3), mask_of({0, 0, 0})), InvalidArgument);
  EXPECT_THROW(mislabel_auc(Vector::Ones(3), mask_of({1, 1, 1})), InvalidArgument);
  EXPECT_THROW(mislabel_auc(Vector::Ones(2), mask_of({1, 0, 0})), InvalidArgument);
}

TEST(PathGap, DegenerateAndMissing) {
  AttributionScores s;
  s.scores = Vector::Zero(3);
  EXPECT_THROW(path_gap(s), InvalidArgument);
  s.endpoint_gap = 0.0;
  EXPECT_EQ(path_gap(s), 0.0);
  s.scores << 1, 1, 0;
  s.endpoint_gap = 4.0;
  EXPECT_DOUBLE_EQ(path_gap(s), 0.5);
}

TEST(Lds, LooScoresOnComplementPlan) {
  const auto l = linear(30, 4, 1);
  const Vector contribution = -exact_loo_deltas(l.trained, l.task.train, l.task.test);
  const auto r = lds(contribution, l.task.train, l.task.test, l.recipe, leave_one_out_plan(30));
  EXPECT_GE(r.rho, 0.99);
  EXPECT_EQ(r.p.size(), 30);
  EXPECT_EQ(r.dropped, 0);
}

TEST(Lds, RandomScoresNull) {
  const auto l = linear(60, 5, 2);
  Rng rng(5);
  Vector random(60);
  for (auto& v : random) v = rng.normal();
  const auto plan = make_subset_plan(60, 100, 0.5, 9);
  const auto r = lds(random, l.task.train, l.task.test, l.recipe, plan);
  EXPECT_LE(std::abs(r.rho), 0.3);
  const double q99 = permutation_null(r.p, r.q, 2000, 0.99, 1);
  EXPECT_GT(q99, 0.15);
  EXPECT_LT(q99, 0.35);
}

TEST(Lds, RankOnlyDependenceAndDeterminism) {
  const auto l = linear(40, 3, 3);
  const Vector c = -exact_loo_deltas(l.trained, l.task.train, l.task.test);
  const auto plan = make_subset_plan(40, 60, 0.5, 2);
  const auto a = lds(c, l.task.train, l.task.test, l.recipe, plan, 1);
  const auto b = lds(c, l.task.train, l.task.test, l.recipe, plan, 3);
  EXPECT_EQ(a.p, b.p);
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_EQ(lds_report_json(a), lds_report_json(b));
  EXPECT_EQ(lds_report_csv(a), lds_report_csv(b));
  // Per-sample monotone transforms change sums; a positive rescale keeps them rank-equal.
  const auto scaled = lds(Vector(3.0 * c), l.task.train, l.task.test, l.recipe, plan);
  EXPECT_DOUBLE_EQ(scaled.rho, a.rho);
}

TEST(Lds, SingularSubsetsDropped) {
  const auto l = linear(12, 4, 4);
  // Subsets of 3 points cannot determine 5 parameters.
  const auto plan = make_subset_plan(12, 10, 0.25, 1);
  EXPECT_THROW(lds(Vector::Ones(12), l.task.train, l.task.test, l.recipe, plan), NumericalError);
  auto mixed = make_subset_plan(12, 6, 0.75, 1);
  mixed.sets.push_back({0, 1, 2});
  const auto r = lds(Vector::LinSpaced(12, 0, 1), l.task.train, l.task.test, l.recipe, mixed);
  EXPECT_EQ(r.dropped, 1);
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.p.size(), 6);
}

TEST(ScoresCsv, RoundTripAndOrientation) {
  AttributionScores s;
  s.scores = Vector::LinSpaced(4, -1.0 / 3, 2.5);
  s.method = "tracin";
  s.steps = 0;
  s.proj_dim = 7;
  s.seed = 12;
  const std::string text = scores_csv(s);
  const auto back = parse_scores_csv(text);
  EXPECT_EQ(back.scores, s.scores);
  EXPECT_EQ(back.method, "tracin");
  EXPECT_EQ(back.proj_dim, 7);
  EXPECT_EQ(back.seed, 12u);
  EXPECT_EQ(back.orientation, ScoreOrientation::Proponent);
  EXPECT_EQ(scores_csv(back), text);
  EXPECT_THROW(parse_scores_csv("index,score\n"), IoError);
  EXPECT_THROW(parse_scores_csv("index,score,method,K,P,seed\n0,x,iif,1,1,1\n"), IoError);
}

TEST(Reports, JsonFields) {
  LdsReport r;
  r.rho = 0.5;
  r.plan = make_subset_plan(10, 3, 0.5, 1);
  r.method = "if";
  const std::string j = lds_report_json(r);
  for (const char* key : {"\"rho\"", "\"n_subsets\"", "\"fraction\"", "\"seeds\"", "\"dropped_count\""})
    EXPECT_NE(j.find(key), std::string::npos) << key;
  ComparisonRow row{"if", 0.25, 3, 0.5, 0};
  EXPECT_EQ(comparison_csv({row}, "lds"), "method,lds,n,fraction,dropped\nif,0.25,3,0.5,0\n");
}
