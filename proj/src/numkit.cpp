#include "iif/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "iif/errors.hpp"

namespace iif {

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw InvalidArgument("Rng::below: empty range");
  // Lemire's multiply-shift with rejection keeps the draw unbiased.
  const unsigned __int128 m0 = static_cast<unsigned __int128>((*this)()) * n;
  auto lo = static_cast<std::uint64_t>(m0);
  unsigned __int128 m = m0;
  if (lo < n) {
    const std::uint64_t threshold = (0 - static_cast<std::uint64_t>(n)) % n;
    while (lo < threshold) {
      m = static_cast<unsigned __int128>((*this)()) * n;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

double Rng::normal() {
  // Box–Muller, one value per call; avoids carrying a cached spare.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

CgResult conjugate_gradient(const MatVec& apply, const Vector& b, double tol, int max_iter,
                            double damping) {
  if (damping < 0.0) throw InvalidArgument("conjugate_gradient: damping must be >= 0");
  if (!b.allFinite()) throw NumericalError("conjugate_gradient: right-hand side is not finite");
  CgResult out;
  out.x = Vector::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }
  auto op = [&](const Vector& v) -> Vector {
    Vector av = apply(v);
    if (damping != 0.0) av.noalias() += damping * v;
    return av;
  };
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= tol * bnorm) {
      out.converged = true;
      break;
    }
    const Vector ap = op(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap)) {
      std::ostringstream msg;
      msg << "conjugate_gradient: non-finite curvature at iteration " << it;
      throw NumericalError(msg.str());
    }
    if (pap <= 0.0) {
      std::ostringstream msg;
      msg << "conjugate_gradient: operator is not positive definite along search direction "
          << "(p'Ap = " << pap << ") at iteration " << it << "; increase damping";
      throw NumericalError(msg.str());
    }
    const double alpha = rr / pap;
    out.x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const double rr_next = r.squaredNorm();
    if (!std::isfinite(rr_next) || !out.x.allFinite()) {
      std::ostringstream msg;
      msg << "conjugate_gradient: non-finite iterate at iteration " << it;
      throw NumericalError(msg.str());
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    out.iterations = it + 1;
  }
  // Recompute the true residual; the recursive one drifts.
  out.residual = (op(out.x) - b).norm() / bnorm;
  if (out.residual <= tol) out.converged = true;
  return out;
}

CgResult conjugate_gradient(const Matrix& a, const Vector& b, double tol, int max_iter,
                            double damping) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw InvalidArgument("conjugate_gradient: matrix/vector shape mismatch");
  return conjugate_gradient([&a](const Vector& v) -> Vector { return a * v; }, b, tol, max_iter,
                            damping);
}

Vector average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vector ranks(static_cast<Eigen::Index>(n));
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[static_cast<Eigen::Index>(order[k])] = r;
    i = j;
  }
  return ranks;
}

SpearmanResult spearman_ext(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("spearman: length mismatch");
  if (p.size() < 2) throw InvalidArgument("spearman: need at least two observations");
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!std::isfinite(p[i]) || !std::isfinite(q[i]))
      throw NumericalError("spearman: non-finite input");
  Vector rp = average_ranks(p);
  Vector rq = average_ranks(q);
  rp.array() -= rp.mean();
  rq.array() -= rq.mean();
  const double den = std::sqrt(rp.squaredNorm() * rq.squaredNorm());
  SpearmanResult out;
  if (den == 0.0) {
    out.constant_input = true;
    return out;
  }
  out.rho = std::clamp(rp.dot(rq) / den, -1.0, 1.0);
  return out;
}

double spearman(std::span<const double> p, std::span<const double> q) {
  return spearman_ext(p, q).rho;
}

Matrix random_projection(int full_dim, int proj_dim, Rng& rng) {
  if (proj_dim < 1 || full_dim < 1)
    throw InvalidArgument("random_projection: dimensions must be positive");
  if (proj_dim > full_dim)
    throw InvalidArgument("random_projection: proj_dim exceeds full_dim");
  Matrix a(full_dim, proj_dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(proj_dim));
  for (int j = 0; j < proj_dim; ++j)
    for (int i = 0; i < full_dim; ++i) a(i, j) = sd * rng.normal();
  return a;
}

Matrix orthonormalize_columns(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  // Fix signs so the factor is unique given a.
  const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

Vector sample_noise(NoiseKind kind, double sigma, int n, Rng& rng) {
  if (sigma < 0.0) throw InvalidArgument("sample_noise: sigma must be >= 0");
  if (n < 1) throw InvalidArgument("sample_noise: n must be >= 1");
  Vector out(n);
  if (kind == NoiseKind::Normal) {
    for (int i = 0; i < n; ++i) out[i] = sigma * rng.normal();
  } else {
    const double b = sigma / std::sqrt(2.0);
    for (int i = 0; i < n; ++i) {
      double u = rng.uniform() - 0.5;
      while (u == -0.5) u = rng.uniform() - 0.5;
      const double s = u < 0 ? -1.0 : 1.0;
      out[i] = -b * s * std::log1p(-2.0 * std::abs(u));
    }
  }
  return out;
}

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "normal" || s == "gaussian" || s == "n") return NoiseKind::Normal;
  if (s == "laplace" || s == "l") return NoiseKind::Laplace;
  throw InvalidArgument("unknown noise distribution '" + s + "' (normal|laplace)");
}

const char* to_string(NoiseKind k) { return k == NoiseKind::Normal ? "normal" : "laplace"; }

}  // namespace iif
