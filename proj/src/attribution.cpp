#include "iif/attribution.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "iif/errors.hpp"

namespace iif {

const char* to_string(Curvature c) { return c == Curvature::Fisher ? "fisher" : "exact"; }

Curvature parse_curvature(const std::string& s) {
  if (s == "fisher") return Curvature::Fisher;
  if (s == "exact") return Curvature::Exact;
  throw InvalidArgument("unknown curvature '" + s + "' (expected fisher|exact)");
}

const char* to_string(UnlearnDirection d) {
  return d == UnlearnDirection::RaiseTestLoss ? "raise" : "lower";
}

UnlearnDirection parse_direction(const std::string& s) {
  if (s == "raise") return UnlearnDirection::RaiseTestLoss;
  if (s == "lower") return UnlearnDirection::LowerTestLoss;
  throw InvalidArgument("unknown unlearning direction '" + s + "' (expected raise|lower)");
}

const char* to_string(PathMode m) { return m == PathMode::Sgd ? "sgd" : "exact"; }

PathMode parse_path_mode(const std::string& s) {
  if (s == "sgd") return PathMode::Sgd;
  if (s == "exact") return PathMode::ExactRefit;
  throw InvalidArgument("unknown path mode '" + s + "' (expected sgd|exact)");
}

TrakOutput parse_trak_output(const std::string& s) {
  if (s == "margin") return TrakOutput::Margin;
  if (s == "logit") return TrakOutput::Logit;
  throw InvalidArgument("unknown trak output '" + s + "' (expected margin|logit)");
}

const char* to_string(ScoreOrientation o) {
  return o == ScoreOrientation::LossContribution ? "loss_contribution" : "proponent";
}

ScoreOrientation orientation_of(const std::string& method) {
  if (method.rfind("tracin", 0) == 0 || method.rfind("trak", 0) == 0)
    return ScoreOrientation::Proponent;
  return ScoreOrientation::LossContribution;
}

Vector AttributionScores::loss_contribution() const {
  return orientation == ScoreOrientation::Proponent ? Vector(-scores) : scores;
}

namespace {

Vector row(const Matrix& m, int i) { return m.row(i).transpose(); }

std::vector<int> shuffled(int n, Rng rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

// Sum-scale curvature restricted to the plan's column space.
Matrix reduced_curvature(const ModelState& s, const Matrix& x, const Matrix& targets, TaskKind kind,
                         LossKind loss, const ProjectionPlan& plan, Curvature curvature) {
  if (curvature == Curvature::Fisher) {
    const Matrix u = plan.reduce_rows(per_sample_grads(s, x, targets, loss));
    return u.transpose() * u;
  }
  Dataset d;
  d.features = x;
  d.targets = targets;
  d.kind = kind;
  const Matrix h = static_cast<double>(x.rows()) * exact_hessian(s, d, loss);
  return plan.compress(h);
}

struct Solver {
  const SolverOptions& opts;
  SolveStats stats;

  Vector solve(const Matrix& h, const Vector& b, const std::string& where) {
    const int p = static_cast<int>(b.size());
    CgResult r;
    try {
      r = conjugate_gradient(h, b, opts.cg_tol, std::max(1, opts.max_iter_factor * p), opts.damping);
    } catch (const NumericalError& e) {
      throw NumericalError(where + ": " + e.what());
    }
    if (!r.converged && r.residual > 1e-4) {
      std::ostringstream os;
      os << where << ": conjugate gradient stalled after " << r.iterations
         << " iterations (relative residual " << r.residual << ")";
      throw NumericalError(os.str());
    }
    ++stats.solves;
    stats.max_iterations = std::max(stats.max_iterations, r.iterations);
    stats.max_residual = std::max(stats.max_residual, r.residual);
    return r.x;
  }
};

void require_same_arch(const ModelState& s, const Dataset& d, const char* where) {
  if (d.dim() != s.arch.input_dim || d.target_dim() != s.arch.output_dim)
    throw InvalidArgument(std::string(where) + ": dataset shape does not match the model");
}

}  // namespace

Baseline unlearn_baseline(const ModelState& trained, const Dataset& train, const Dataset& test,
                          LossKind loss, const UnlearnConfig& cfg) {
  require_same_arch(trained, train, "unlearn_baseline");
  require_same_arch(trained, test, "unlearn_baseline");
  if (cfg.epochs < 0) throw InvalidArgument("unlearn_baseline: epochs must be >= 0");
  if (cfg.lambda < 0) throw InvalidArgument("unlearn_baseline: lambda must be >= 0");
  const double sign = cfg.direction == UnlearnDirection::RaiseTestLoss ? -1.0 : 1.0;
  const int n = train.size();
  const int bs = cfg.batch_size <= 0 ? n : std::min(cfg.batch_size, n);
  Rng rng(cfg.seed);
  ModelState s = trained;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(n, rng.fork(static_cast<std::uint64_t>(epoch) + 1));
    for (int start = 0; start < n; start += bs) {
      const int end = std::min(n, start + bs);
      Vector g = sign * test_grad(s, test, loss);
      if (cfg.lambda > 0) {
        Vector gt = Vector::Zero(s.params.size());
        for (int j = start; j < end; ++j) {
          const int i = order[static_cast<std::size_t>(j)];
          gt += per_sample_grad(s, row(train.features, i), row(train.targets, i), loss);
        }
        g += cfg.lambda * gt / static_cast<double>(end - start);
      }
      s.params -= cfg.learning_rate * g;
      if (!all_finite(s.params)) {
        std::ostringstream os;
        os << "unlearning diverged at epoch " << epoch << " batch " << start / bs
           << "; lower unlearn.learning_rate or raise unlearn.lambda";
        throw NumericalError(os.str());
      }
    }
  }
  Baseline b{s, predict(s, train.features, loss)};
  if (!all_finite(b.targets)) throw NumericalError("unlearning produced non-finite baseline targets");
  return b;
}

TargetSchedule build_path(const Dataset& train, const Matrix& baseline_targets, int steps) {
  if (steps < 1) throw InvalidArgument("build_path: K must be >= 1");
  if (baseline_targets.rows() != train.targets.rows() ||
      baseline_targets.cols() != train.targets.cols())
    throw InvalidArgument("build_path: baseline targets shape mismatch");
  TargetSchedule out;
  out.baseline_targets = baseline_targets;
  const bool sparse = train.kind == TaskKind::Classification;
  for (int k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    Matrix rho = t * train.targets + (1.0 - t) * baseline_targets;
    if (sparse) rho = rho.cwiseProduct(train.targets);
    out.t.push_back(t);
    out.targets.push_back(std::move(rho));
  }
  // Pin the endpoint exactly to the observed targets.
  out.targets.back() = sparse ? Matrix(train.targets.cwiseProduct(train.targets)) : train.targets;
  out.baseline_targets = out.targets.front();
  return out;
}

PathSchedule path_models(const TargetSchedule& schedule, const Dataset& train,
                         const ModelState& trained, LossKind loss, const PathConfig& cfg) {
  const int steps = static_cast<int>(schedule.targets.size()) - 1;
  if (steps < 1) throw InvalidArgument("path_models: schedule has no steps");
  require_same_arch(trained, train, "path_models");
  if (cfg.mode == PathMode::ExactRefit && !(trained.arch.is_linear() && loss == LossKind::Mse))
    throw Unsupported("exact path refits need a linear model with squared error");
  PathSchedule out;
  out.steps = steps;
  out.baseline_targets = schedule.baseline_targets;
  out.nodes.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    out.nodes[static_cast<std::size_t>(k)].t = schedule.t[static_cast<std::size_t>(k)];
    out.nodes[static_cast<std::size_t>(k)].targets = schedule.targets[static_cast<std::size_t>(k)];
  }
  out.nodes.back().state = trained;
  TrainConfig refit;
  refit.optimizer = Optimizer::ClosedForm;
  refit.ridge = cfg.ridge;
  for (int k = steps - 1; k >= 0; --k) {
    auto& node = out.nodes[static_cast<std::size_t>(k)];
    const auto& above = out.nodes[static_cast<std::size_t>(k) + 1].state;
    try {
      if (cfg.mode == PathMode::Sgd) {
        node.state = sgd_epoch(above, train.features, node.targets, loss, cfg.learning_rate,
                               cfg.batch_size, cfg.seed + static_cast<std::uint64_t>(k));
      } else {
        node.state = fit(train.with_targets(node.targets), trained.arch, loss, refit);
      }
    } catch (const NumericalError& e) {
      throw NumericalError("path model at step " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

ProjectionPlan ProjectionPlan::identity(int full_dim) {
  if (full_dim < 1) throw InvalidArgument("projection: full dimension must be >= 1");
  return ProjectionPlan(full_dim, std::nullopt, "identity");
}

ProjectionPlan ProjectionPlan::gaussian(int full_dim, int proj_dim, Rng& rng) {
  if (proj_dim < 1) throw InvalidArgument("projection: P must be >= 1");
  return ProjectionPlan(full_dim, random_projection(full_dim, proj_dim, rng), "gaussian");
}

ProjectionPlan ProjectionPlan::orthonormal(int full_dim, int proj_dim, Rng& rng) {
  if (proj_dim < 1) throw InvalidArgument("projection: P must be >= 1");
  return ProjectionPlan(full_dim, orthonormalize_columns(random_projection(full_dim, proj_dim, rng)),
                        "orthonormal");
}

ProjectionPlan ProjectionPlan::automatic(int full_dim, int proj_dim, Rng& rng) {
  if (full_dim <= 512) return identity(full_dim);
  return gaussian(full_dim, std::min(proj_dim, full_dim), rng);
}

ProjectionPlan ProjectionPlan::from_matrix(Matrix a) {
  if (a.cols() > a.rows()) throw InvalidArgument("projection: more columns than rows");
  const int m = static_cast<int>(a.rows());
  return ProjectionPlan(m, std::move(a), "custom");
}

const char* ProjectionPlan::label() const { return label_.c_str(); }

Vector ProjectionPlan::reduce(const Vector& g) const {
  if (g.size() != full_dim_) throw InvalidArgument("projection: vector length mismatch");
  return a_ ? Vector(a_->transpose() * g) : g;
}

Matrix ProjectionPlan::reduce_rows(const Matrix& u) const {
  if (u.cols() != full_dim_) throw InvalidArgument("projection: matrix width mismatch");
  return a_ ? Matrix(u * *a_) : u;
}

Vector ProjectionPlan::expand(const Vector& v) const {
  if (v.size() != dim()) throw InvalidArgument("projection: reduced vector length mismatch");
  return a_ ? Vector(*a_ * v) : v;
}

Matrix ProjectionPlan::compress(const Matrix& h) const {
  return a_ ? Matrix(a_->transpose() * h * *a_) : h;
}

AttributionScores integrated_influence(const PathSchedule& path, const Dataset& train,
                                       const Dataset& test, LossKind loss,
                                       const ProjectionPlan& plan, Curvature curvature,
                                       const SolverOptions& opts) {
  if (path.steps < 1 || static_cast<int>(path.nodes.size()) != path.steps + 1)
    throw InvalidArgument("integrated_influence: malformed path");
  const auto& top = path.nodes.back().state;
  require_same_arch(top, train, "integrated_influence");
  require_same_arch(top, test, "integrated_influence");
  if (plan.full_dim() != top.arch.param_count())
    throw InvalidArgument("integrated_influence: projection does not match parameter count");
  const int n = train.size();
  Solver solver{opts, {}};
  Vector scores = Vector::Zero(n);
  for (int k = 1; k <= path.steps; ++k) {
    const auto& node = path.nodes[static_cast<std::size_t>(k)];
    const Matrix& prev = path.nodes[static_cast<std::size_t>(k) - 1].targets;
    const Vector g = test_grad(node.state, test, loss);
    const Matrix h = reduced_curvature(node.state, train.features, node.targets, train.kind, loss,
                                       plan, curvature);
    const Vector w =
        plan.expand(solver.solve(h, plan.reduce(g), "path step " + std::to_string(k)));
    for (int i = 0; i < n; ++i) {
      const Vector dy = row(node.targets, i) - row(prev, i);
      if (dy.isZero(0.0)) continue;
      const Vector j = mixed_jacobian_apply(node.state, row(train.features, i),
                                            row(node.targets, i), dy, loss);
      scores(i) -= w.dot(j);
    }
  }
  if (!all_finite(scores)) throw NumericalError("integrated influence produced non-finite scores");
  AttributionScores out;
  out.scores = std::move(scores);
  out.endpoint_gap =
      mean_loss(top, test, loss) - mean_loss(path.nodes.front().state, test, loss);
  out.method = "iif";
  out.orientation = ScoreOrientation::LossContribution;
  out.steps = path.steps;
  out.proj_dim = plan.dim();
  out.damping = opts.damping;
  out.solve = solver.stats;
  return out;
}

AttributionScores influence_function(const ModelState& trained, const Dataset& train,
                                     const Dataset& test, LossKind loss,
                                     const ProjectionPlan& plan, Curvature curvature,
                                     const SolverOptions& opts) {
  require_same_arch(trained, train, "influence_function");
  require_same_arch(trained, test, "influence_function");
  const Matrix u = per_sample_grads(trained, train.features, train.targets, loss);
  const Matrix h = reduced_curvature(trained, train.features, train.targets, train.kind, loss,
                                     plan, curvature);
  Solver solver{opts, {}};
  const Vector w =
      plan.expand(solver.solve(h, plan.reduce(test_grad(trained, test, loss)), "influence"));
  AttributionScores out;
  out.scores = -(u * w);
  out.method = "if";
  out.proj_dim = plan.dim();
  out.damping = opts.damping;
  out.solve = solver.stats;
  return out;
}

AttributionScores tracin(const std::vector<Checkpoint>& checkpoints, const Dataset& train,
                         const Dataset& test, LossKind loss) {
  if (checkpoints.empty()) throw InvalidArgument("tracin: no checkpoints");
  Vector scores = Vector::Zero(train.size());
  for (const auto& c : checkpoints) {
    const Vector g = test_grad(c.state, test, loss);
    scores += c.learning_rate * (per_sample_grads(c.state, train.features, train.targets, loss) * g);
  }
  AttributionScores out;
  out.scores = std::move(scores);
  out.method = "tracin";
  out.orientation = ScoreOrientation::Proponent;
  return out;
}

namespace {

// ∇_θ of the scalar model output used by TRAK-lite for one sample.
Vector trak_feature(const ModelState& s, const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Vector>& y, LossKind loss, TrakOutput output) {
  const int m = s.arch.output_dim;
  if (loss == LossKind::Mse) return vjp(s, x, Vector::Ones(m));
  Eigen::Index label = 0;
  y.maxCoeff(&label);
  Vector dir = Vector::Zero(m);
  dir(label) = 1.0;
  if (output == TrakOutput::Margin && m > 1) {
    const Vector z = forward(s, x.transpose()).row(0).transpose();
    // d/dz of logsumexp over the other classes is their softmax.
    Vector others = z;
    others(label) = -std::numeric_limits<double>::infinity();
    const double mx = others.maxCoeff();
    Vector e = (others.array() - mx).exp();
    e(label) = 0.0;
    dir -= e / e.sum();
  }
  return vjp(s, x, dir);
}

Matrix trak_features(const ModelState& s, const Dataset& d, LossKind loss, TrakOutput output,
                     const ProjectionPlan& plan) {
  Matrix phi(d.size(), s.arch.param_count());
  for (int i = 0; i < d.size(); ++i)
    phi.row(i) = trak_feature(s, row(d.features, i), row(d.targets, i), loss, output).transpose();
  return plan.reduce_rows(phi);
}

}  // namespace

AttributionScores trak_lite(const ModelState& trained, const Dataset& train, const Dataset& test,
                            LossKind loss, const ProjectionPlan& plan, TrakOutput output,
                            const SolverOptions& opts) {
  require_same_arch(trained, train, "trak_lite");
  require_same_arch(trained, test, "trak_lite");
  const Matrix phi = trak_features(trained, train, loss, output, plan);
  const Vector target = trak_features(trained, test, loss, output, plan).colwise().mean().transpose();
  Solver solver{opts, {}};
  const Vector v = solver.solve(phi.transpose() * phi, target, "trak");
  AttributionScores out;
  out.scores = phi * v;
  out.method = "trak";
  out.orientation = ScoreOrientation::Proponent;
  out.proj_dim = plan.dim();
  out.damping = opts.damping;
  out.solve = solver.stats;
  return out;
}

namespace {

Eigen::LLT<Matrix> damped_factor(const Matrix& h, double damping, const char* where) {
  Matrix hd = h;
  hd.diagonal().array() += damping;
  Eigen::LLT<Matrix> llt(hd);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(where) + ": curvature is not positive definite");
  return llt;
}

}  // namespace

AttributionScores self_influence(const ModelState& trained, const Dataset& train, LossKind loss,
                                 double eta, int steps, const ProjectionPlan& plan,
                                 Curvature curvature, const SolverOptions& opts) {
  require_same_arch(trained, train, "self_influence");
  if (steps < 1) throw InvalidArgument("self_influence: K must be >= 1");
  const int n = train.size();
  const bool sparse = train.kind == TaskKind::Classification;
  const auto llt = damped_factor(reduced_curvature(trained, train.features, train.targets,
                                                   train.kind, loss, plan, curvature),
                                 opts.damping, "self influence");
  auto apply_inverse = [&](const Vector& v) { return plan.expand(llt.solve(plan.reduce(v))); };

  Vector scores = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    const Vector x = row(train.features, i);
    const Vector y = row(train.targets, i);
    const Vector u = per_sample_grad(trained, x, y, loss);
    if (u.isZero(0.0)) continue;
    ModelState moved = trained;
    moved.params += eta * u;
    Vector base = predict(moved, x.transpose(), loss).row(0).transpose();
    if (sparse) base = base.cwiseProduct(y);
    const Vector yk = sparse ? Vector(y.cwiseProduct(y)) : y;

    auto rho = [&](int k) {
      const double t = static_cast<double>(k) / steps;
      return Vector(t * yk + (1.0 - t) * base);
    };
    double acc = 0.0;
    for (int k = 1; k <= steps; ++k) {
      const Vector rk = rho(k);
      ModelState sk = trained;
      if (k < steps) {
        const Vector shift = mixed_jacobian_apply(trained, x, yk, rk - yk, loss);
        sk.params -= apply_inverse(shift);
      }
      const Vector g = per_sample_grad(sk, x, y, loss);
      const Vector j = mixed_jacobian_apply(sk, x, rk, rk - rho(k - 1), loss);
      acc -= g.dot(apply_inverse(j));
    }
    scores(i) = acc;
  }
  if (!all_finite(scores)) throw NumericalError("self influence produced non-finite scores");
  AttributionScores out;
  out.scores = std::move(scores);
  out.method = "iif_self";
  out.steps = steps;
  out.proj_dim = plan.dim();
  out.damping = opts.damping;
  return out;
}

AttributionScores influence_self(const ModelState& trained, const Dataset& train, LossKind loss,
                                 const ProjectionPlan& plan, Curvature curvature,
                                 const SolverOptions& opts) {
  require_same_arch(trained, train, "influence_self");
  const Matrix u = plan.reduce_rows(per_sample_grads(trained, train.features, train.targets, loss));
  const auto llt = damped_factor(reduced_curvature(trained, train.features, train.targets,
                                                   train.kind, loss, plan, curvature),
                                 opts.damping, "influence self");
  const Matrix sol = llt.solve(u.transpose());
  AttributionScores out;
  out.scores = -(u.transpose().cwiseProduct(sol)).colwise().sum().transpose();
  out.method = "if_self";
  out.proj_dim = plan.dim();
  out.damping = opts.damping;
  return out;
}

AttributionScores tracin_self(const std::vector<Checkpoint>& checkpoints, const Dataset& train,
                              LossKind loss) {
  if (checkpoints.empty()) throw InvalidArgument("tracin: no checkpoints");
  Vector scores = Vector::Zero(train.size());
  for (const auto& c : checkpoints)
    scores += c.learning_rate *
              per_sample_grads(c.state, train.features, train.targets, loss).rowwise().squaredNorm();
  AttributionScores out;
  out.scores = std::move(scores);
  out.method = "tracin_self";
  out.orientation = ScoreOrientation::Proponent;
  return out;
}

AttributionScores trak_self(const ModelState& trained, const Dataset& train, LossKind loss,
                            const ProjectionPlan& plan, TrakOutput output,
                            const SolverOptions& opts) {
  require_same_arch(trained, train, "trak_self");
  const Matrix phi = trak_features(trained, train, loss, output, plan);
  const auto llt = damped_factor(phi.transpose() * phi, opts.damping, "trak self");
  const Matrix sol = llt.solve(phi.transpose());
  AttributionScores out;
  out.scores = (phi.transpose().cwiseProduct(sol)).colwise().sum().transpose();
  out.method = "trak_self";
  out.orientation = ScoreOrientation::Proponent;
  out.proj_dim = plan.dim();
  out.damping = opts.damping;
  return out;
}

namespace {

std::vector<int> ranked(const Vector& v, int k, bool ascending) {
  if (k < 0) throw InvalidArgument("ranking: k must be >= 0");
  std::vector<int> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return ascending ? v(a) < v(b) : v(a) > v(b);
  });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(k)));
  return idx;
}

}  // namespace

std::vector<int> most_negative(const Vector& v, int k) { return ranked(v, k, true); }
std::vector<int> most_positive(const Vector& v, int k) { return ranked(v, k, false); }

ProponentReport rank_proponents(const Vector& raise_scores, const Vector& lower_scores, int k) {
  return {most_negative(raise_scores, k), most_positive(lower_scores, k)};
}

}  // namespace iif
