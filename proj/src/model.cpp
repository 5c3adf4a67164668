#include "iif/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "iif/errors.hpp"

namespace iif {

const char* to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "cross_entropy"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "cross_entropy" || s == "ce" || s == "cross-entropy") return LossKind::CrossEntropy;
  throw InvalidArgument("unknown loss '" + s + "' (mse|cross_entropy)");
}

const char* to_string(Optimizer o) {
  switch (o) {
    case Optimizer::ClosedForm: return "closed_form";
    case Optimizer::Sgd: return "sgd";
    case Optimizer::Adam: return "adam";
  }
  return "?";
}

Optimizer parse_optimizer(const std::string& s) {
  if (s == "closed_form" || s == "closed-form") return Optimizer::ClosedForm;
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adam") return Optimizer::Adam;
  throw InvalidArgument("unknown optimizer '" + s + "' (closed_form|sgd|adam)");
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Layer {
  int in = 0;
  int out = 0;
  Eigen::Index w_off = 0;
  Eigen::Index b_off = -1;  // -1 when the layer has no bias
};

std::vector<Layer> layout(const Architecture& a) {
  std::vector<int> dims;
  dims.push_back(a.input_dim);
  dims.insert(dims.end(), a.hidden.begin(), a.hidden.end());
  dims.push_back(a.output_dim);
  std::vector<Layer> ls;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer L{dims[l], dims[l + 1], off, -1};
    off += static_cast<Eigen::Index>(L.in) * L.out;
    if (a.bias) {
      L.b_off = off;
      off += L.out;
    }
    ls.push_back(L);
  }
  return ls;
}

Eigen::Map<const RowMat> weights(const Vector& p, const Layer& l) {
  return {p.data() + l.w_off, l.out, l.in};
}

struct Trace {
  std::vector<Vector> inputs;  // input to each layer (post-activation of the previous)
  Vector out;
};

Trace trace(const ModelState& s, const Eigen::Ref<const Vector>& x) {
  const auto ls = layout(s.arch);
  Trace t;
  Vector a = x;
  for (std::size_t l = 0; l < ls.size(); ++l) {
    Vector z = weights(s.params, ls[l]) * a;
    if (ls[l].b_off >= 0) z += s.params.segment(ls[l].b_off, ls[l].out);
    t.inputs.push_back(std::move(a));
    if (l + 1 < ls.size()) a = z.array().tanh().matrix();
    else t.out = std::move(z);
  }
  return t;
}

Vector backprop(const ModelState& s, const Trace& t, Vector delta) {
  const auto ls = layout(s.arch);
  Vector g = Vector::Zero(s.params.size());
  for (std::size_t li = ls.size(); li-- > 0;) {
    const Layer& L = ls[li];
    const Vector& a = t.inputs[li];
    Eigen::Map<RowMat>(g.data() + L.w_off, L.out, L.in).noalias() = delta * a.transpose();
    if (L.b_off >= 0) g.segment(L.b_off, L.out) = delta;
    if (li > 0) {
      Vector back = weights(s.params, L).transpose() * delta;
      delta = back.array() * (1.0 - a.array().square());
    }
  }
  return g;
}

Vector softmax(const Eigen::Ref<const Vector>& z) {
  Vector p = (z.array() - z.maxCoeff()).exp().matrix();
  return p / p.sum();
}

double log_sum_exp(const Eigen::Ref<const Vector>& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

/// ∂l/∂out.
Vector output_grad(const Vector& out, const Eigen::Ref<const Vector>& y, LossKind loss) {
  if (loss == LossKind::Mse) return kMseScale * (out - y);
  return y.sum() * softmax(out) - y;
}

double loss_from_output(const Vector& out, const Eigen::Ref<const Vector>& y, LossKind loss) {
  if (loss == LossKind::Mse) return (out - y).squaredNorm();
  return -y.dot(out) + y.sum() * log_sum_exp(out);
}

void check_shapes(const ModelState& s, Eigen::Index xdim, Eigen::Index ydim, const char* where) {
  if (xdim != s.arch.input_dim || ydim != s.arch.output_dim) {
    std::ostringstream msg;
    msg << where << ": input/target dims (" << xdim << ", " << ydim << ") do not match model ("
        << s.arch.input_dim << ", " << s.arch.output_dim << ")";
    throw InvalidArgument(msg.str());
  }
}

void require_finite(const Vector& g, const char* where) {
  if (!g.allFinite()) throw NumericalError(std::string(where) + ": non-finite gradient");
}

}  // namespace

int Architecture::param_count() const {
  int n = 0;
  int prev = input_dim;
  for (int h : hidden) {
    n += prev * h + (bias ? h : 0);
    prev = h;
  }
  return n + prev * output_dim + (bias ? output_dim : 0);
}

std::string Architecture::kind_label(LossKind loss) const {
  if (!hidden.empty()) return "mlp";
  return loss == LossKind::Mse ? "linear" : "softmax";
}

std::string Architecture::describe() const {
  std::ostringstream s;
  s << "in=" << input_dim << ";hidden=";
  for (std::size_t i = 0; i < hidden.size(); ++i) s << (i ? "," : "") << hidden[i];
  s << ";out=" << output_dim << ";bias=" << (bias ? 1 : 0) << ";act=tanh";
  return s.str();
}

Architecture Architecture::mlp_preset(int input_dim, int classes, double width_scale) {
  Architecture a;
  a.input_dim = input_dim;
  a.output_dim = classes;
  a.hidden = {std::max(1, static_cast<int>(std::lround(128 * width_scale))),
              std::max(1, static_cast<int>(std::lround(64 * width_scale)))};
  a.bias = true;
  return a;
}

void ModelState::validate() const {
  if (params.size() != arch.param_count()) {
    std::ostringstream msg;
    msg << "model state has " << params.size() << " parameters, architecture needs "
        << arch.param_count();
    throw InvalidArgument(msg.str());
  }
  if (!params.allFinite()) throw InvalidArgument("model state has non-finite parameters");
}

ModelState init_state(const Architecture& arch, double init_scale, Rng& rng) {
  ModelState s{Vector::Zero(arch.param_count()), arch};
  for (const Layer& L : layout(arch)) {
    const double sd = init_scale / std::sqrt(static_cast<double>(L.in));
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(L.in) * L.out; ++k)
      s.params[L.w_off + k] = sd * rng.normal();
  }
  return s;
}

Matrix forward(const ModelState& state, const Matrix& x) {
  if (x.cols() != state.arch.input_dim) throw InvalidArgument("forward: input dimension mismatch");
  const auto ls = layout(state.arch);
  Matrix a = x;
  for (std::size_t l = 0; l < ls.size(); ++l) {
    Matrix z = a * weights(state.params, ls[l]).transpose();
    if (ls[l].b_off >= 0)
      z.rowwise() += state.params.segment(ls[l].b_off, ls[l].out).transpose();
    a = (l + 1 < ls.size()) ? Matrix(z.array().tanh()) : z;
  }
  return a;
}

Vector forward_one(const ModelState& state, Eigen::Ref<const Vector> x) {
  if (x.size() != state.arch.input_dim) throw InvalidArgument("forward: input dimension mismatch");
  return trace(state, x).out;
}

Matrix predict(const ModelState& state, const Matrix& x, LossKind loss) {
  Matrix out = forward(state, x);
  if (loss == LossKind::CrossEntropy)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = softmax(out.row(i).transpose()).transpose();
  return out;
}

double sample_loss(const ModelState& state, Eigen::Ref<const Vector> x, Eigen::Ref<const Vector> y,
                   LossKind loss) {
  check_shapes(state, x.size(), y.size(), "sample_loss");
  return loss_from_output(trace(state, x).out, y, loss);
}

double mean_loss(const ModelState& state, const Dataset& data, LossKind loss) {
  check_shapes(state, data.dim(), data.target_dim(), "mean_loss");
  const Matrix out = forward(state, data.features);
  double total = 0.0;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    total += loss_from_output(out.row(i).transpose(), data.targets.row(i).transpose(), loss);
  return total / static_cast<double>(out.rows());
}

Vector vjp(const ModelState& state, Eigen::Ref<const Vector> x, Eigen::Ref<const Vector> v) {
  check_shapes(state, x.size(), v.size(), "vjp");
  return backprop(state, trace(state, x), v);
}

Matrix output_jacobian(const ModelState& state, Eigen::Ref<const Vector> x) {
  check_shapes(state, x.size(), state.arch.output_dim, "output_jacobian");
  const Trace t = trace(state, x);
  Matrix j(state.arch.output_dim, state.params.size());
  for (int o = 0; o < state.arch.output_dim; ++o)
    j.row(o) = backprop(state, t, Vector::Unit(state.arch.output_dim, o)).transpose();
  return j;
}

Vector per_sample_grad(const ModelState& state, Eigen::Ref<const Vector> x,
                       Eigen::Ref<const Vector> y, LossKind loss) {
  check_shapes(state, x.size(), y.size(), "per_sample_grad");
  const Trace t = trace(state, x);
  Vector g = backprop(state, t, output_grad(t.out, y, loss));
  require_finite(g, "per_sample_grad");
  return g;
}

Matrix per_sample_grads(const ModelState& state, const Matrix& x, const Matrix& targets,
                        LossKind loss) {
  if (x.rows() != targets.rows()) throw InvalidArgument("per_sample_grads: row count mismatch");
  Matrix u(x.rows(), state.params.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    u.row(i) = per_sample_grad(state, x.row(i).transpose(), targets.row(i).transpose(), loss).transpose();
  return u;
}

Vector test_grad(const ModelState& state, const Dataset& test, LossKind loss) {
  if (test.size() < 1) throw InvalidArgument("test_grad: empty test set");
  return full_gradient(state, test.features, test.targets, loss);
}

Vector full_gradient(const ModelState& state, const Matrix& x, const Matrix& targets,
                     LossKind loss) {
  if (x.rows() != targets.rows() || x.rows() < 1)
    throw InvalidArgument("full_gradient: bad shapes");
  Vector g = Vector::Zero(state.params.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    g += per_sample_grad(state, x.row(i).transpose(), targets.row(i).transpose(), loss);
  return g / static_cast<double>(x.rows());
}

Vector mixed_jacobian_apply(const ModelState& state, Eigen::Ref<const Vector> x,
                            Eigen::Ref<const Vector> y_at, Eigen::Ref<const Vector> dy,
                            LossKind loss) {
  if (dy.size() != y_at.size())
    throw InvalidArgument("mixed_jacobian_apply: dy shape does not match targets");
  check_shapes(state, x.size(), y_at.size(), "mixed_jacobian_apply");
  const Trace t = trace(state, x);
  // Both losses have ∂l/∂out affine in y, so J·dy is independent of y_at.
  Vector dout;
  if (loss == LossKind::Mse) dout = -kMseScale * dy;
  else dout = dy.sum() * softmax(t.out) - dy;
  Vector g = backprop(state, t, dout);
  require_finite(g, "mixed_jacobian_apply");
  return g;
}

Matrix compressed_fisher(const ModelState& state, const Matrix& x, const Matrix& targets_at,
                         LossKind loss, const Matrix& a) {
  if (a.rows() != state.params.size())
    throw InvalidArgument("compressed_fisher: projection rows must equal parameter count");
  const Matrix ua = per_sample_grads(state, x, targets_at, loss) * a;
  Matrix f = ua.transpose() * ua;
  return 0.5 * (f + f.transpose());
}

Matrix compressed_fisher(const ModelState& state, const Matrix& x, const Matrix& targets_at,
                         LossKind loss) {
  const Matrix u = per_sample_grads(state, x, targets_at, loss);
  Matrix f = u.transpose() * u;
  return 0.5 * (f + f.transpose());
}

Matrix exact_hessian(const ModelState& state, const Dataset& data, LossKind loss) {
  if (!state.arch.is_linear())
    throw Unsupported("exact_hessian: only available for models without hidden layers; use the "
                      "Fisher curvature for MLPs");
  check_shapes(state, data.dim(), data.target_dim(), "exact_hessian");
  const Eigen::Index m = state.params.size();
  Matrix h = Matrix::Zero(m, m);
  const Matrix out = forward(state, data.features);
  for (int i = 0; i < data.size(); ++i) {
    const Matrix j = output_jacobian(state, data.features.row(i).transpose());
    if (loss == LossKind::Mse) {
      h.noalias() += kMseScale * j.transpose() * j;
    } else {
      const Vector p = softmax(out.row(i).transpose());
      const double s = data.targets.row(i).sum();
      Matrix hz = s * Matrix(p.asDiagonal());
      hz.noalias() -= s * p * p.transpose();
      h.noalias() += j.transpose() * hz * j;
    }
  }
  h /= static_cast<double>(data.size());
  return 0.5 * (h + h.transpose());
}

namespace {

Matrix design_matrix(const Matrix& x, bool bias) {
  if (!bias) return x;
  Matrix xt(x.rows(), x.cols() + 1);
  xt << x, Vector::Ones(x.rows());
  return xt;
}

ModelState closed_form_fit(const Dataset& data, const Architecture& arch, double ridge) {
  const Matrix xt = design_matrix(data.features, arch.bias);
  Matrix a = xt.transpose() * xt;
  a.diagonal().array() += ridge;
  Eigen::LDLT<Matrix> ldlt(a);
  const Vector pivots = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13 ||
      pivots.minCoeff() <= 1e-13 * pivots.maxCoeff()) {
    std::ostringstream msg;
    msg << "fit: normal equations are singular or ill-conditioned (rcond = " << ldlt.rcond()
        << "); set a positive ridge damping";
    throw NumericalError(msg.str());
  }
  const Matrix theta = ldlt.solve(xt.transpose() * data.targets);  // d̃ × m
  ModelState s{Vector::Zero(arch.param_count()), arch};
  const auto ls = layout(arch);
  const Layer& L = ls.front();
  for (int o = 0; o < arch.output_dim; ++o) {
    for (int j = 0; j < arch.input_dim; ++j) s.params[L.w_off + o * L.in + j] = theta(j, o);
    if (arch.bias) s.params[L.b_off + o] = theta(arch.input_dim, o);
  }
  if (!s.params.allFinite()) throw NumericalError("fit: closed-form solution is not finite");
  return s;
}

std::vector<int> shuffled(int n, Rng rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)], order[rng.below(static_cast<std::size_t>(i) + 1)]);
  return order;
}

Vector batch_gradient(const ModelState& s, const Matrix& x, const Matrix& y, LossKind loss,
                      const std::vector<int>& order, std::size_t begin, std::size_t end) {
  Vector g = Vector::Zero(s.params.size());
  for (std::size_t k = begin; k < end; ++k) {
    const int i = order[k];
    g += per_sample_grad(s, x.row(i).transpose(), y.row(i).transpose(), loss);
  }
  return g / static_cast<double>(end - begin);
}

std::size_t effective_batch(int batch_size, Eigen::Index n) {
  if (batch_size <= 0 || batch_size >= n) return static_cast<std::size_t>(n);
  return static_cast<std::size_t>(batch_size);
}

}  // namespace

std::pair<ModelState, std::vector<Checkpoint>> fit_with_checkpoints(
    const Dataset& data, const Architecture& arch, LossKind loss, const TrainConfig& cfg,
    const std::optional<ModelState>& init) {
  data.validate();
  if (data.dim() != arch.input_dim || data.target_dim() != arch.output_dim)
    throw InvalidArgument("fit: dataset shape does not match architecture");
  std::vector<Checkpoint> cps;
  if (cfg.optimizer == Optimizer::ClosedForm) {
    if (!arch.is_linear() || loss != LossKind::Mse)
      throw Unsupported("fit: closed form is only available for linear MSE models");
    ModelState s = closed_form_fit(data, arch, cfg.ridge);
    cps.push_back({s, cfg.learning_rate});
    return {std::move(s), std::move(cps)};
  }
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("fit: learning rate must be positive");
  if (cfg.epochs < 1) throw InvalidArgument("fit: epochs must be >= 1");
  Rng rng(cfg.seed);
  ModelState s = init ? *init : init_state(arch, cfg.init_scale, rng);
  s.validate();
  const std::size_t n = static_cast<std::size_t>(data.size());
  const std::size_t bs = effective_batch(cfg.batch_size, data.size());
  Vector m1 = Vector::Zero(s.params.size());
  Vector m2 = Vector::Zero(s.params.size());
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(data.size(), rng.fork(static_cast<std::uint64_t>(epoch) + 1));
    for (std::size_t b = 0; b < n; b += bs) {
      Vector g = batch_gradient(s, data.features, data.targets, loss, order, b, std::min(n, b + bs));
      if (cfg.weight_decay != 0.0) g += cfg.weight_decay * s.params;
      ++step;
      if (cfg.optimizer == Optimizer::Sgd) {
        m1 = cfg.momentum * m1 + g;
        s.params -= cfg.learning_rate * m1;
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        m1 = b1 * m1 + (1 - b1) * g;
        m2 = b2 * m2 + (1 - b2) * g.cwiseAbs2();
        const double c1 = 1 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1 - std::pow(b2, static_cast<double>(step));
        s.params.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
      }
      if (!s.params.allFinite()) {
        std::ostringstream msg;
        msg << "fit: parameters diverged in epoch " << epoch << " (batch starting at " << b
            << "); lower the learning rate";
        throw NumericalError(msg.str());
      }
    }
    cps.push_back({s, cfg.learning_rate});
  }
  return {std::move(s), std::move(cps)};
}

ModelState fit(const Dataset& data, const Architecture& arch, LossKind loss,
               const TrainConfig& cfg, const std::optional<ModelState>& init) {
  return fit_with_checkpoints(data, arch, loss, cfg, init).first;
}

ModelState sgd_epoch(const ModelState& state, const Matrix& x, const Matrix& targets,
                     LossKind loss, double lr, int batch_size, std::uint64_t seed) {
  if (lr < 0.0) throw InvalidArgument("sgd_epoch: learning rate must be >= 0");
  if (x.rows() != targets.rows() || x.rows() < 1) throw InvalidArgument("sgd_epoch: bad shapes");
  ModelState s = state;
  if (lr == 0.0) return s;
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const std::size_t bs = effective_batch(batch_size, x.rows());
  const auto order = shuffled(static_cast<int>(n), Rng(seed));
  std::size_t batch = 0;
  for (std::size_t b = 0; b < n; b += bs, ++batch) {
    s.params -= lr * batch_gradient(s, x, targets, loss, order, b, std::min(n, b + bs));
    if (!s.params.allFinite()) {
      std::ostringstream msg;
      msg << "sgd_epoch: non-finite update at batch " << batch;
      throw NumericalError(msg.str());
    }
  }
  return s;
}

namespace {

void require_linear_mse(const ModelState& s, const char* where) {
  if (!s.arch.is_linear())
    throw Unsupported(std::string(where) + ": requires a linear MSE model");
}

}  // namespace

Vector exact_loo_deltas(const ModelState& state, const Dataset& train, const Dataset& test,
                        double ridge) {
  require_linear_mse(state, "exact_loo_delta");
  const Matrix xt = design_matrix(train.features, state.arch.bias);
  Matrix a = xt.transpose() * xt;
  a.diagonal().array() += ridge;
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13)
    throw NumericalError("exact_loo_delta: normal matrix is singular; set a ridge damping");
  const Matrix ainv_x = ldlt.solve(xt.transpose());  // d̃ × N
  const Matrix resid = forward(state, train.features) - train.targets;  // N × m
  const double before = mean_loss(state, test, LossKind::Mse);
  const auto ls = layout(state.arch);
  const Layer& L = ls.front();
  Vector out(train.size());
  for (int i = 0; i < train.size(); ++i) {
    const double h = xt.row(i).dot(ainv_x.col(i));
    if (1.0 - h <= 1e-12) {
      std::ostringstream msg;
      msg << "exact_loo_delta: removing sample " << i
          << " makes the normal matrix singular (leverage 1); set a ridge damping";
      throw NumericalError(msg.str());
    }
    ModelState s = state;
    for (int o = 0; o < state.arch.output_dim; ++o) {
      const Vector step = ainv_x.col(i) * (resid(i, o) / (1.0 - h));
      for (int j = 0; j < state.arch.input_dim; ++j) s.params[L.w_off + o * L.in + j] += step[j];
      if (state.arch.bias) s.params[L.b_off + o] += step[state.arch.input_dim];
    }
    out[i] = mean_loss(s, test, LossKind::Mse) - before;
  }
  return out;
}

double exact_loo_delta(const ModelState& state, const Dataset& train, int i, const Dataset& test,
                       double ridge) {
  if (i < 0 || i >= train.size()) throw InvalidArgument("exact_loo_delta: index out of range");
  return exact_loo_deltas(state, train, test, ridge)[i];
}

}  // namespace iif
