#include "dpmvs/stats_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/special_functions/erf.hpp>

namespace dpmvs {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr double kLogTwoPi = 1.8378770664093454836;
const double kSqrt2 = std::numbers::sqrt2;

// log Phi(x), stable far into the lower tail.
double log_ndtr(double x) {
  if (x > -20.0) {
    return std::log(0.5 * std::erfc(-x / kSqrt2));
  }
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * kLogTwoPi + std::log(series);
}

// Standard normal restricted to [a, b] with a > 0 in the tail; exponential
// proposal truncated to the interval.
double sample_upper_tail(double a, double b, RngStream& rng) {
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  const double span_mass = std::isfinite(b) ? -std::expm1(-rate * (b - a)) : 1.0;
  for (;;) {
    const double z = a - std::log1p(-rng.uniform() * span_mass) / rate;
    const double d = z - rate;
    if (rng.uniform() < std::exp(-0.5 * d * d)) {
      return std::min(z, b);
    }
  }
}

// Standard normal restricted to [a, b] with a >= 0 by inverting the upper tail.
double sample_upper_bulk(double a, double b, RngStream& rng) {
  const double qa = 0.5 * std::erfc(a / kSqrt2);
  const double qb = std::isfinite(b) ? 0.5 * std::erfc(b / kSqrt2) : 0.0;
  const double q = qb + rng.uniform() * (qa - qb);
  return kSqrt2 * boost::math::erfc_inv(2.0 * q);
}

double sample_standard_truncated(double a, double b, RngStream& rng) {
  if (a > 4.0) return sample_upper_tail(a, b, rng);
  if (b < -4.0) return -sample_upper_tail(-b, -a, rng);
  if (a >= 0.0) return sample_upper_bulk(a, b, rng);
  if (b <= 0.0) return -sample_upper_bulk(-b, -a, rng);
  const double pa = std::isfinite(a) ? 0.5 * std::erfc(-a / kSqrt2) : 0.0;
  const double pb = std::isfinite(b) ? 0.5 * std::erfc(-b / kSqrt2) : 1.0;
  const double u = pa + rng.uniform() * (pb - pa);
  return -kSqrt2 * boost::math::erfc_inv(2.0 * u);
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(what) + " must be square");
  }
}

}  // namespace

// --- RngStream --------------------------------------------------------------

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {}

void RngStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(position_), static_cast<std::uint32_t>(position_ >> 32),
      static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = philox4x32_10(ctr, key);
  buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  buffered_ = 2;
  ++position_;
}

RngStream::result_type RngStream::operator()() {
  if (buffered_ == 0) refill();
  return buffer_[2 - buffered_--];
}

double RngStream::uniform() {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return gauss_(*this); }

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw DomainError("gamma draw needs positive shape and rate");
  }
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(*this);
}

double RngStream::chi_squared(double df) { return gamma(0.5 * df, 0.5); }

std::size_t RngStream::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(*this);
}

std::uint64_t mix_stream_id(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (auto part : parts) h = splitmix64(h ^ splitmix64(part));
  return h;
}

// --- linear algebra ---------------------------------------------------------

Vector CholFactor::solve(const Vector& b) const {
  const auto l = lower.triangularView<Eigen::Lower>();
  return l.transpose().solve(l.solve(b));
}

Matrix CholFactor::solve(const Matrix& b) const {
  const auto l = lower.triangularView<Eigen::Lower>();
  return l.transpose().solve(l.solve(b));
}

Matrix CholFactor::inverse() const {
  const Matrix inv = solve(Matrix(Matrix::Identity(lower.rows(), lower.rows())));
  return 0.5 * (inv + inv.transpose());
}

CholFactor cholesky(const Matrix& a) {
  require_square(a, "cholesky input");
  CholFactor out;
  const auto n = a.rows();
  if (n == 0) {
    out.lower.resize(0, 0);
    return out;
  }
  auto try_factor = [&](const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return false;
    out.lower = llt.matrixL();
    const auto diag = out.lower.diagonal();
    if (!diag.allFinite() || (diag.array() <= 0.0).any()) return false;
    out.log_det = 2.0 * diag.array().log().sum();
    return true;
  };
  if (try_factor(a)) return out;
  const double mean_diag = a.diagonal().mean();
  if (std::isfinite(mean_diag) && mean_diag > 0.0) {
    for (double jitter = 1e-10; jitter <= 1.0000001e-6; jitter *= 10.0) {
      Matrix shifted = a;
      shifted.diagonal().array() += jitter * mean_diag;
      if (try_factor(shifted)) return out;
    }
  }
  throw NotPositiveDefinite("matrix is not positive definite (dimension " +
                            std::to_string(n) + ")");
}

double log_multivariate_gamma(int p, double a) {
  if (p < 0) throw DomainError("multivariate gamma needs p >= 0");
  if (p == 0) return 0.0;
  if (!(a > 0.5 * (p - 1))) {
    throw DomainError("multivariate gamma argument must exceed (p-1)/2");
  }
  double out = 0.25 * p * (p - 1) * std::log(std::numbers::pi);
  for (int j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * (1 - j));
  return out;
}

double log_add_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double log_sum_exp(const std::vector<double>& values) {
  double hi = -kInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == -kInf) return -kInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

// --- samplers ---------------------------------------------------------------

Matrix sample_wishart(const Matrix& scale, double df, RngStream& rng) {
  require_square(scale, "Wishart scale");
  const auto d = scale.rows();
  if (!(df > static_cast<double>(d) - 1.0)) {
    throw DomainError("Wishart degrees of freedom must exceed dim - 1");
  }
  if (d == 0) return Matrix(0, 0);
  const CholFactor chol = cholesky(scale);
  Matrix bartlett = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    bartlett(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = rng.normal();
  }
  const Matrix la = chol.lower * bartlett;
  Matrix w = la * la.transpose();
  return 0.5 * (w + w.transpose());
}

Matrix sample_inverse_wishart(const Matrix& scale, double df, RngStream& rng) {
  require_square(scale, "inverse-Wishart scale");
  if (scale.rows() == 0) {
    if (!(df > -1.0)) throw DomainError("inverse-Wishart degrees of freedom out of range");
    return Matrix(0, 0);
  }
  const Matrix w = sample_wishart(cholesky(scale).inverse(), df, rng);
  return cholesky(w).inverse();
}

Matrix sample_matrix_normal(const Matrix& mean, const Matrix& row, RowParam row_param,
                            const Matrix& col_cov, RngStream& rng) {
  require_square(row, "matrix-normal row matrix");
  require_square(col_cov, "matrix-normal column covariance");
  if (row.rows() != mean.rows() || col_cov.rows() != mean.cols()) {
    throw std::invalid_argument("matrix-normal shape mismatch");
  }
  const auto q = mean.rows();
  const auto r = mean.cols();
  if (q == 0 || r == 0) return mean;
  Matrix noise(q, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < q; ++i) noise(i, j) = rng.normal();
  }
  const Matrix right = noise * cholesky(col_cov).lower.transpose();
  const CholFactor row_chol = cholesky(row);
  if (row_param == RowParam::covariance) {
    return mean + row_chol.lower * right;
  }
  return mean + row_chol.lower.transpose().triangularView<Eigen::Upper>().solve(right);
}

double sample_truncated_normal(double mu, double var, double lo, double hi, RngStream& rng) {
  if (!(var > 0.0)) throw DomainError("truncated normal needs positive variance");
  if (!(lo < hi)) throw DomainError("truncated normal interval is empty");
  const double sd = std::sqrt(var);
  const double a = (lo - mu) / sd;
  const double b = (hi - mu) / sd;
  if (!(a < b)) throw DomainError("truncated normal interval is empty");
  const double z = sample_standard_truncated(a, b, rng);
  return std::clamp(mu + sd * z, lo, hi);
}

Vector sample_canonical_mvn(const Vector& b, const Matrix& q, RngStream& rng) {
  require_square(q, "precision");
  if (b.size() != q.rows()) throw std::invalid_argument("canonical normal shape mismatch");
  const CholFactor chol = cholesky(q);
  Vector noise(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) noise(i) = rng.normal();
  const auto upper = chol.lower.transpose().triangularView<Eigen::Upper>();
  return chol.solve(b) + upper.solve(noise);
}

// --- densities --------------------------------------------------------------

double log_normal_pdf(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_mvn_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const CholFactor chol = cholesky(cov);
  const Vector r = chol.lower.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * (static_cast<double>(x.size()) * kLogTwoPi + chol.log_det + r.squaredNorm());
}

double log_wishart_pdf(const Matrix& x, const Matrix& scale, double df) {
  const auto d = static_cast<double>(x.rows());
  if (x.rows() == 0) return 0.0;
  const CholFactor cx = cholesky(x);
  const CholFactor cs = cholesky(scale);
  const double trace = cs.solve(x).trace();
  return 0.5 * (df - d - 1.0) * cx.log_det - 0.5 * trace - 0.5 * df * d * std::numbers::ln2 -
         0.5 * df * cs.log_det - log_multivariate_gamma(static_cast<int>(d), 0.5 * df);
}

double log_inverse_wishart_pdf(const Matrix& x, const Matrix& scale, double df) {
  const auto d = static_cast<double>(x.rows());
  if (x.rows() == 0) return 0.0;
  const CholFactor cx = cholesky(x);
  const CholFactor cs = cholesky(scale);
  const double trace = cx.solve(scale).trace();
  return 0.5 * df * cs.log_det - 0.5 * (df + d + 1.0) * cx.log_det - 0.5 * trace -
         0.5 * df * d * std::numbers::ln2 -
         log_multivariate_gamma(static_cast<int>(d), 0.5 * df);
}

double log_matrix_normal_pdf(const Matrix& x, const Matrix& mean, const Matrix& row_cov,
                             const Matrix& col_cov) {
  const auto q = static_cast<double>(x.rows());
  const auto r = static_cast<double>(x.cols());
  if (x.size() == 0) return 0.0;
  const CholFactor cu = cholesky(row_cov);
  const CholFactor cv = cholesky(col_cov);
  const Matrix diff = x - mean;
  const double quad = (cv.solve(Matrix(diff.transpose())) * cu.solve(diff)).trace();
  return -0.5 * q * r * kLogTwoPi - 0.5 * r * cu.log_det - 0.5 * q * cv.log_det - 0.5 * quad;
}

double log_normal_interval_prob(double a, double b) {
  if (!(a < b)) return -kInf;
  if (a > 0.0) return log_normal_interval_prob(-b, -a);
  if (b > 0.0) {
    const double ea = std::isfinite(a) ? std::erf(a / kSqrt2) : -1.0;
    const double eb = std::isfinite(b) ? std::erf(b / kSqrt2) : 1.0;
    return std::log(0.5 * (eb - ea));
  }
  const double lb = log_ndtr(b);
  if (!std::isfinite(a)) return lb;
  const double la = log_ndtr(a);
  return lb + std::log1p(-std::exp(la - lb));
}

double log_truncated_normal_pdf(double x, double mu, double var, double lo, double hi) {
  if (x < lo || x > hi) return -kInf;
  const double sd = std::sqrt(var);
  return log_normal_pdf(x, mu, var) - log_normal_interval_prob((lo - mu) / sd, (hi - mu) / sd);
}

}  // namespace dpmvs
