#pragma once

// Dense numerical kernel shared by every other module: matrix aliases, a
// counter-based RNG, conjugate gradients, rank statistics, random projection
// and noise sampling.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace iif {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Counter-based generator: output k is SplitMix64's finalizer applied to
/// seed + (k+1)·0x9E3779B97F4A7C15. Satisfies UniformRandomBitGenerator so it
/// plugs into <random> distributions. Streams are reproducible within a build;
/// the std distributions layered on top are implementation-defined, so
/// cross-toolchain bit equality is not promised.
class Rng {
 public:
  using result_type = std::uint64_t;
  static constexpr const char* kAlgorithm = "splitmix64-counter";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(seed_ + (++counter_) * kGolden); }

  /// Independent stream keyed by (seed, stream). Does not advance *this.
  [[nodiscard]] Rng fork(std::uint64_t stream) const {
    return Rng(mix(seed_ ^ mix(stream + kGolden)));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

struct CgResult {
  Vector x;
  int iterations = 0;
  double residual = 0.0;  // ‖(A + damping·I)x − b‖ / ‖b‖
  bool converged = false;
};

using MatVec = std::function<Vector(const Vector&)>;

/// Solves (A + damping·I) x = b for symmetric PSD A given as a matvec.
/// Stops when the relative residual drops to tol or after max_iter steps.
/// Throws NumericalError on a non-finite iterate or on a breakdown direction
/// with curvature ≤ 0.
CgResult conjugate_gradient(const MatVec& apply, const Vector& b, double tol = 1e-8,
                            int max_iter = 1000, double damping = 1e-3);

/// Convenience overload for an explicit symmetric matrix.
CgResult conjugate_gradient(const Matrix& a, const Vector& b, double tol = 1e-8,
                            int max_iter = 1000, double damping = 1e-3);

/// Average ranks (1-based), ties share the mean of the positions they span.
Vector average_ranks(std::span<const double> v);

struct SpearmanResult {
  double rho = 0.0;
  bool constant_input = false;  // rho is reported as 0 in that case
};

SpearmanResult spearman_ext(std::span<const double> p, std::span<const double> q);

/// Spearman rank correlation with average-rank ties; 0 for constant input.
double spearman(std::span<const double> p, std::span<const double> q);
inline double spearman(const Vector& p, const Vector& q) {
  return spearman(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                  std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
}

/// full_dim × proj_dim with i.i.d. N(0, 1/proj_dim) entries.
Matrix random_projection(int full_dim, int proj_dim, Rng& rng);

/// Gram–Schmidt (Householder QR) orthonormal basis of the column space.
Matrix orthonormalize_columns(const Matrix& a);

enum class NoiseKind { Normal, Laplace };

/// n i.i.d. zero-mean draws with standard deviation sigma. Laplace uses
/// scale sigma/√2 so both kinds share the same second moment.
Vector sample_noise(NoiseKind kind, double sigma, int n, Rng& rng);

NoiseKind parse_noise_kind(const std::string& s);
const char* to_string(NoiseKind k);

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace iif
