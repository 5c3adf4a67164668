#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iif/dataflow.hpp"
#include "iif/model.hpp"
#include "iif/numkit.hpp"

namespace iif {

// Sign conventions
// ----------------
// Hessian-based scores (IIF, IF) are *loss contributions*: I(i) > 0 means the
// sample's (path of) targets pushes the test loss up, and Σ I(i) tracks
// Δ = L^test(θ*) − L^test(θ'). Under this convention removing a sample with a
// positive score lowers the test loss, and proponents are the most negative
// scores. TracIn and TRAK-lite keep their customary orientation (positive =
// proponent). AttributionScores::loss_contribution() maps either onto the
// loss-contribution axis for evaluation.

enum class Curvature { Fisher, Exact };
enum class UnlearnDirection { RaiseTestLoss, LowerTestLoss };
enum class ScoreOrientation { LossContribution, Proponent };
enum class PathMode { Sgd, ExactRefit };
enum class TrakOutput { Margin, Logit };

const char* to_string(Curvature c);
Curvature parse_curvature(const std::string& s);
const char* to_string(UnlearnDirection d);
UnlearnDirection parse_direction(const std::string& s);
const char* to_string(PathMode m);
PathMode parse_path_mode(const std::string& s);
TrakOutput parse_trak_output(const std::string& s);
const char* to_string(ScoreOrientation o);
/// Orientation used by each method label ("iif", "if", "tracin", "trak", ...).
ScoreOrientation orientation_of(const std::string& method);

struct UnlearnConfig {
  double lambda = 1.0;
  int epochs = 5;
  double learning_rate = 0.01;
  UnlearnDirection direction = UnlearnDirection::RaiseTestLoss;
  int batch_size = 0;  // <= 0: full batch
  std::uint64_t seed = 0;
};

struct Baseline {
  ModelState state;  // θ'
  Matrix targets;    // row i = f(x_i, θ') (class probabilities for CE)
};

/// Gradient steps on ∓L^test + λ·L^train from θ* (minus sign for
/// RaiseTestLoss), then the unlearned model's predictions as baseline targets.
Baseline unlearn_baseline(const ModelState& trained, const Dataset& train, const Dataset& test,
                          LossKind loss, const UnlearnConfig& cfg);

struct TargetSchedule {
  std::vector<double> t;        // t_k = k/K, k = 0..K
  std::vector<Matrix> targets;  // ρ(t_k)
  Matrix baseline_targets;      // equals targets[0]
};

/// Linear interpolation ρ_i(t_k) = (k/K)·y_i + (1 − k/K)·ȳ_i. For
/// classification every row is multiplied elementwise by its one-hot label
/// and left unnormalised, so only the true class carries mass.
TargetSchedule build_path(const Dataset& train, const Matrix& baseline_targets, int steps);

struct PathStep {
  double t = 0.0;
  Matrix targets;
  ModelState state;
};

struct PathSchedule {
  int steps = 0;                // K
  std::vector<PathStep> nodes;  // k = 0..K; nodes[K].state = θ*
  Matrix baseline_targets;
};

struct PathConfig {
  PathMode mode = PathMode::Sgd;
  double learning_rate = 0.01;
  int batch_size = 32;
  double ridge = 0.0;  // ExactRefit only
  std::uint64_t seed = 0;
};

/// States along the path, built downwards from θ(t_K) = θ*: each is one SGD
/// epoch on its own targets starting from the next state up, or (ExactRefit,
/// linear MSE only) the closed-form fit on its targets.
PathSchedule path_models(const TargetSchedule& schedule, const Dataset& train,
                         const ModelState& trained, LossKind loss, const PathConfig& cfg);

/// Column-space restriction for curvature solves: H⁻¹ ≈ A(AᵀHA)⁻¹Aᵀ.
class ProjectionPlan {
 public:
  static ProjectionPlan identity(int full_dim);
  static ProjectionPlan gaussian(int full_dim, int proj_dim, Rng& rng);
  /// Gaussian columns orthonormalised; with proj_dim = full_dim this is a
  /// rotation and reproduces the identity plan up to rounding.
  static ProjectionPlan orthonormal(int full_dim, int proj_dim, Rng& rng);
  /// Identity when full_dim <= 512, otherwise Gaussian with min(P, M) columns.
  static ProjectionPlan automatic(int full_dim, int proj_dim, Rng& rng);
  static ProjectionPlan from_matrix(Matrix a);

  [[nodiscard]] bool is_identity() const { return !a_.has_value(); }
  [[nodiscard]] int full_dim() const { return full_dim_; }
  [[nodiscard]] int dim() const { return a_ ? static_cast<int>(a_->cols()) : full_dim_; }
  [[nodiscard]] const char* label() const;

  /// Aᵀg.
  [[nodiscard]] Vector reduce(const Vector& g) const;
  /// Rows times A (N × P).
  [[nodiscard]] Matrix reduce_rows(const Matrix& u) const;
  /// Av.
  [[nodiscard]] Vector expand(const Vector& v) const;
  /// AᵀHA.
  [[nodiscard]] Matrix compress(const Matrix& h) const;

 private:
  ProjectionPlan(int full_dim, std::optional<Matrix> a, std::string label)
      : full_dim_(full_dim), a_(std::move(a)), label_(std::move(label)) {}
  int full_dim_;
  std::optional<Matrix> a_;
  std::string label_;
};

struct SolverOptions {
  double damping = 1e-3;
  double cg_tol = 1e-8;
  int max_iter_factor = 10;  // max iterations = factor · P
};

struct SolveStats {
  int solves = 0;
  int max_iterations = 0;
  double max_residual = 0.0;
};

struct AttributionScores {
  Vector scores;                       // one per training sample
  std::optional<double> endpoint_gap;  // Δ = L^test(θ(t_K)) − L^test(θ(t_0))
  std::string method;
  ScoreOrientation orientation = ScoreOrientation::LossContribution;
  int steps = 0;  // K (0 when not path based)
  int proj_dim = 0;
  std::uint64_t seed = 0;
  double damping = 0.0;
  SolveStats solve;

  /// Scores on the loss-contribution axis (negated when proponent-oriented).
  [[nodiscard]] Vector loss_contribution() const;
};

/// Discrete path accumulation:
///   I(i) = −Σ_{k=1..K} G(t_k)ᵀ A(AᵀH(t_k)A + δI)⁻¹Aᵀ J_i(t_k)(ρ_i(t_k) − ρ_i(t_{k−1}))
/// where H is the sum-scale curvature (N × mean Hessian, or Σ u_i u_iᵀ with
/// u_i at the step's own targets) and G is the gradient of the mean test loss.
AttributionScores integrated_influence(const PathSchedule& path, const Dataset& train,
                                       const Dataset& test, LossKind loss,
                                       const ProjectionPlan& plan, Curvature curvature,
                                       const SolverOptions& opts = {});

/// score(i) = −G(θ*)ᵀ A(AᵀHA + δI)⁻¹Aᵀ u_i(θ*), same curvature machinery.
AttributionScores influence_function(const ModelState& trained, const Dataset& train,
                                     const Dataset& test, LossKind loss,
                                     const ProjectionPlan& plan, Curvature curvature,
                                     const SolverOptions& opts = {});

/// score(i) = Σ_c η_c u_i(θ_c)ᵀ G(θ_c). Proponent-oriented.
AttributionScores tracin(const std::vector<Checkpoint>& checkpoints, const Dataset& train,
                         const Dataset& test, LossKind loss);

/// φ_i = Aᵀ∇_θ out(x_i); score(i) = φ̂ᵀ(ΦᵀΦ + δI)⁻¹φ_i with φ̂ the mean test
/// feature. Regression uses the (summed) output; classification the margin
/// z_y − logsumexp_{c≠y} z_c or the true-class logit. Proponent-oriented.
AttributionScores trak_lite(const ModelState& trained, const Dataset& train, const Dataset& test,
                            LossKind loss, const ProjectionPlan& plan, TrakOutput output,
                            const SolverOptions& opts = {});

/// Per-sample IIF with the test sample equal to the training sample. Each
/// sample's baseline target is f(x_i, θ* + η u_i); its path moves only row i,
/// and the path optimum for that row is the linear response
/// θ* − A(AᵀHA + δI)⁻¹AᵀJ_i(ρ_i(t) − y_i) with H at θ*. Mislabel suspicion is
/// the negated score.
AttributionScores self_influence(const ModelState& trained, const Dataset& train, LossKind loss,
                                 double eta, int steps, const ProjectionPlan& plan,
                                 Curvature curvature, const SolverOptions& opts = {});

/// Influence-function self-influence −u_iᵀA(AᵀHA + δI)⁻¹Aᵀu_i.
AttributionScores influence_self(const ModelState& trained, const Dataset& train, LossKind loss,
                                 const ProjectionPlan& plan, Curvature curvature,
                                 const SolverOptions& opts = {});

/// Σ_c η_c ‖u_i(θ_c)‖². Proponent-oriented.
AttributionScores tracin_self(const std::vector<Checkpoint>& checkpoints, const Dataset& train,
                              LossKind loss);

/// φ_iᵀ(ΦᵀΦ + δI)⁻¹φ_i. Proponent-oriented.
AttributionScores trak_self(const ModelState& trained, const Dataset& train, LossKind loss,
                            const ProjectionPlan& plan, TrakOutput output,
                            const SolverOptions& opts = {});

/// Indices of the k most negative / most positive values (ties by index).
std::vector<int> most_negative(const Vector& v, int k);
std::vector<int> most_positive(const Vector& v, int k);

struct ProponentReport {
  std::vector<int> proponents;  // most negative IIF scores, raise-test-loss baseline
  std::vector<int> opponents;   // most positive IIF scores, lower-test-loss baseline
};

ProponentReport rank_proponents(const Vector& raise_scores, const Vector& lower_scores, int k);

}  // namespace iif
