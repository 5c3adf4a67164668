#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iif/dataflow.hpp"
#include "iif/numkit.hpp"

namespace iif {

/// Squared error uses l = ‖f(x) − y‖² (gradient constant c = 2). Cross-entropy
/// uses l = −Σ_c y_c log softmax(z)_c on logits z and accepts unnormalised
/// nonnegative target rows (the sparse path targets are not renormalised).
enum class LossKind { Mse, CrossEntropy };

inline constexpr double kMseScale = 2.0;

const char* to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

/// Dense feed-forward network: zero or more tanh hidden layers and a linear
/// output layer. No hidden layers with MSE is linear regression; no hidden
/// layers with cross-entropy is softmax regression.
struct Architecture {
  int input_dim = 1;
  int output_dim = 1;
  std::vector<int> hidden;
  bool bias = true;

  [[nodiscard]] int param_count() const;
  [[nodiscard]] bool is_linear() const { return hidden.empty(); }
  /// "linear", "softmax" or "mlp", for reports.
  [[nodiscard]] std::string kind_label(LossKind loss) const;
  /// Compact descriptor, e.g. "in=6;hidden=8,8;out=3;bias=1;act=tanh".
  [[nodiscard]] std::string describe() const;

  /// Reduced-width version of a four-layer MLP preset (latent sizes
  /// 128/64 scaled by width_scale, output = classes).
  static Architecture mlp_preset(int input_dim, int classes, double width_scale = 0.25);
};

struct ModelState {
  Vector params;
  Architecture arch;

  /// Throws InvalidArgument if params length disagrees with arch or has
  /// non-finite entries.
  void validate() const;
};

enum class Optimizer { ClosedForm, Sgd, Adam };

const char* to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
  Optimizer optimizer = Optimizer::ClosedForm;
  double learning_rate = 0.01;
  int epochs = 1;
  int batch_size = 32;  // <= 0 means full batch
  double momentum = 0.0;
  double ridge = 0.0;       // closed form: added to XᵀX
  double weight_decay = 0.0;  // iterative: adds weight_decay·θ to the mean gradient
  double init_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Small random weights (Glorot-style scale times init_scale), zero biases.
ModelState init_state(const Architecture& arch, double init_scale, Rng& rng);

/// Raw network outputs (N × output_dim): predictions for MSE, logits for CE.
Matrix forward(const ModelState& state, const Matrix& x);
/// Raw output for one input, computed exactly as the gradient routines do.
Vector forward_one(const ModelState& state, Eigen::Ref<const Vector> x);
/// Predictions for MSE, class probabilities for CE.
Matrix predict(const ModelState& state, const Matrix& x, LossKind loss);

double sample_loss(const ModelState& state, Eigen::Ref<const Vector> x, Eigen::Ref<const Vector> y,
                   LossKind loss);
/// Empirical mean of the per-sample loss.
double mean_loss(const ModelState& state, const Dataset& data, LossKind loss);

/// (∂out/∂θ)ᵀ v for one input.
Vector vjp(const ModelState& state, Eigen::Ref<const Vector> x, Eigen::Ref<const Vector> v);
/// ∂out/∂θ, output_dim × M.
Matrix output_jacobian(const ModelState& state, Eigen::Ref<const Vector> x);

/// ∂l/∂θ at (x, y).
Vector per_sample_grad(const ModelState& state, Eigen::Ref<const Vector> x,
                       Eigen::Ref<const Vector> y, LossKind loss);
/// Row i = ∂l(x_i, targets_i)/∂θ; N × M.
Matrix per_sample_grads(const ModelState& state, const Matrix& x, const Matrix& targets,
                        LossKind loss);
/// Gradient of the mean test loss over the rows of `test` (one row = one
/// test sample).
Vector test_grad(const ModelState& state, const Dataset& test, LossKind loss);
/// Gradient of the mean training loss.
Vector full_gradient(const ModelState& state, const Matrix& x, const Matrix& targets,
                     LossKind loss);

/// J·dy with J = ∂²l/∂θ∂y evaluated at target y_at.
Vector mixed_jacobian_apply(const ModelState& state, Eigen::Ref<const Vector> x,
                            Eigen::Ref<const Vector> y_at, Eigen::Ref<const Vector> dy,
                            LossKind loss);

/// Aᵀ(Σ_i u_i u_iᵀ)A with u_i evaluated at `targets_at`. The overload without
/// A uses the identity.
Matrix compressed_fisher(const ModelState& state, const Matrix& x, const Matrix& targets_at,
                         LossKind loss, const Matrix& a);
Matrix compressed_fisher(const ModelState& state, const Matrix& x, const Matrix& targets_at,
                         LossKind loss);

/// ∂²L^train/∂θ² of the mean training loss. Only for models without hidden
/// layers; throws Unsupported otherwise.
Matrix exact_hessian(const ModelState& state, const Dataset& data, LossKind loss);

/// Normal-equation solution for linear MSE; iterative schedule otherwise.
ModelState fit(const Dataset& data, const Architecture& arch, LossKind loss,
               const TrainConfig& cfg, const std::optional<ModelState>& init = std::nullopt);

struct Checkpoint {
  ModelState state;
  double learning_rate = 0.0;
};

/// As fit, also returning the state after every epoch (closed form: a single
/// checkpoint at the solution, weighted by cfg.learning_rate).
std::pair<ModelState, std::vector<Checkpoint>> fit_with_checkpoints(
    const Dataset& data, const Architecture& arch, LossKind loss, const TrainConfig& cfg,
    const std::optional<ModelState>& init = std::nullopt);

/// One pass of plain mini-batch SGD in a single shuffle drawn from `seed`.
ModelState sgd_epoch(const ModelState& state, const Matrix& x, const Matrix& targets,
                     LossKind loss, double lr, int batch_size, std::uint64_t seed);
inline ModelState sgd_epoch(const ModelState& state, const Dataset& data, LossKind loss,
                            double lr, int batch_size, std::uint64_t seed) {
  return sgd_epoch(state, data.features, data.targets, loss, lr, batch_size, seed);
}

/// L^test after refitting without sample i minus L^test before, by a
/// Sherman–Morrison downdate of the (ridge-damped) normal matrix. Linear MSE
/// only. `state` must be the closed-form fit on `train` with the same ridge.
double exact_loo_delta(const ModelState& state, const Dataset& train, int i, const Dataset& test,
                       double ridge = 0.0);
/// Same for every training sample.
Vector exact_loo_deltas(const ModelState& state, const Dataset& train, const Dataset& test,
                        double ridge = 0.0);

/// Everything needed to retrain deterministically on a new dataset.
struct ModelRecipe {
  Architecture arch;
  LossKind loss = LossKind::Mse;
  TrainConfig train;
  std::optional<ModelState> init;
};

inline ModelState train_model(const ModelRecipe& recipe, const Dataset& data) {
  return fit(data, recipe.arch, recipe.loss, recipe.train, recipe.init);
}

}  // namespace iif
