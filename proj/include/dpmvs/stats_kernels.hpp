#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dpmvs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when an argument lies outside the support of a function or sampler.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a matrix stays indefinite after the jitter retries.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counter-based random stream (Philox4x32-10).
///
/// The 64-bit seed is the cipher key and the stream id occupies the upper half
/// of the 128-bit counter, so streams with distinct ids never overlap. Satisfies
/// UniformRandomBitGenerator, so it can drive the <random> distributions.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Gamma with shape/rate parameterization (mean shape / rate).
  double gamma(double shape, double rate);
  double chi_squared(double df);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t position_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  std::normal_distribution<double> gauss_;
};

/// Mixes several integers into one stream id (SplitMix64 finalizer chain).
std::uint64_t mix_stream_id(std::initializer_list<std::uint64_t> parts);

struct CholFactor {
  Matrix lower;
  double log_det = 0.0;

  /// Solves A x = b for the factored A.
  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  Matrix inverse() const;
};

/// Cholesky factorization with escalating diagonal jitter (1e-10 up to 1e-6 of
/// the mean diagonal) when the plain factorization fails. 0x0 input is allowed.
CholFactor cholesky(const Matrix& a);

/// log Γ_p(a); p = 0 returns 0 so empty blocks need no special casing.
double log_multivariate_gamma(int p, double a);

/// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);
double log_sum_exp(const std::vector<double>& values);

// --- samplers --------------------------------------------------------------

/// Wishart draw with E[W] = df * scale (Bartlett decomposition).
Matrix sample_wishart(const Matrix& scale, double df, RngStream& rng);

/// Inverse-Wishart draw with E[X] = scale / (df - dim - 1), obtained as the
/// inverse of a Wishart(scale^{-1}, df) draw.
Matrix sample_inverse_wishart(const Matrix& scale, double df, RngStream& rng);

enum class RowParam { covariance, precision };

/// Matrix-normal draw with vec-covariance kron(col_cov, row_cov). The row
/// argument may be passed as a covariance or a precision.
Matrix sample_matrix_normal(const Matrix& mean, const Matrix& row, RowParam row_param,
                            const Matrix& col_cov, RngStream& rng);

/// N(mu, var) restricted to (lo, hi). Inverse-CDF in the bulk and exponential
/// rejection once the interval lies beyond 4 standard deviations.
double sample_truncated_normal(double mu, double var, double lo, double hi, RngStream& rng);

/// Draw from N(Q^{-1} b, Q^{-1}).
Vector sample_canonical_mvn(const Vector& b, const Matrix& q, RngStream& rng);

// --- log densities ---------------------------------------------------------

double log_normal_pdf(double x, double mu, double var);
double log_gamma_pdf(double x, double shape, double rate);
double log_mvn_pdf(const Vector& x, const Vector& mean, const Matrix& cov);
double log_wishart_pdf(const Matrix& x, const Matrix& scale, double df);
double log_inverse_wishart_pdf(const Matrix& x, const Matrix& scale, double df);
double log_matrix_normal_pdf(const Matrix& x, const Matrix& mean, const Matrix& row_cov,
                             const Matrix& col_cov);
double log_truncated_normal_pdf(double x, double mu, double var, double lo, double hi);

/// log P(a < Z <= b) for standard normal Z, accurate in both tails.
double log_normal_interval_prob(double a, double b);

}  // namespace dpmvs
