#include "dpmvs/conjugate_posteriors.hpp"

#include <cmath>
#include <stdexcept>

namespace dpmvs {

namespace {

struct ClusterPosterior {
  Matrix v11;
  Vector mean;
  double kappa = 0.0;
  double df = 0.0;
};

/// Conjugate posterior parameters of theta; with zero counts they reduce to
/// the prior (V blocks become Psi blocks).
struct PosteriorParams {
  std::vector<int> perm, inf, non;
  int p1 = 0, p2 = 0;
  std::vector<ClusterPosterior> clusters;
  Matrix v11, v21, v2g1, v11_inv;
  Vector s1, s2;
  double kappa2 = 0.0;
  double df2 = 0.0;
};

PosteriorParams posterior_params(const std::vector<ClusterStats>& clusters,
                                 const ClusterStats& global, const std::vector<bool>& gamma,
                                 const Hyperparams& hyper, const Matrix& psi) {
  PosteriorParams pp;
  pp.perm = reorder_for_gamma(gamma);
  pp.p1 = count_informative(gamma);
  pp.p2 = static_cast<int>(gamma.size()) - pp.p1;
  pp.inf.assign(pp.perm.begin(), pp.perm.begin() + pp.p1);
  pp.non.assign(pp.perm.begin() + pp.p1, pp.perm.end());
  const double lambda = hyper.lambda;
  const Matrix psi11 = psi(pp.inf, pp.inf);
  for (const auto& c : clusters) {
    ClusterPosterior cp;
    cp.kappa = c.count + lambda;
    cp.df = c.count + hyper.eta - pp.p2;
    const Vector s = c.count > 0 ? Vector(c.sum(pp.inf)) : Vector::Zero(pp.p1);
    cp.v11 = psi11;
    if (c.count > 0) {
      cp.v11 += c.outer(pp.inf, pp.inf);
      cp.v11 -= s * s.transpose() / cp.kappa;
    }
    cp.mean = s / cp.kappa;
    pp.clusters.push_back(std::move(cp));
  }
  const int n = global.count;
  pp.kappa2 = n + lambda;
  pp.df2 = n + hyper.eta;
  const Vector s = n > 0 ? Vector(global.sum(pp.perm)) : Vector::Zero(pp.p1 + pp.p2);
  Matrix v = psi(pp.perm, pp.perm);
  if (n > 0) {
    v += global.outer(pp.perm, pp.perm);
    v -= s * s.transpose() / pp.kappa2;
  }
  pp.s1 = s.head(pp.p1);
  pp.s2 = s.tail(pp.p2);
  pp.v11 = v.topLeftCorner(pp.p1, pp.p1);
  pp.v21 = v.bottomLeftCorner(pp.p2, pp.p1);
  pp.v11_inv = cholesky(pp.v11).inverse();
  const Matrix v2g1 = v.bottomRightCorner(pp.p2, pp.p2) - pp.v21 * pp.v11_inv * pp.v21.transpose();
  pp.v2g1 = 0.5 * (v2g1 + v2g1.transpose());
  return pp;
}

Matrix q21_mean(const PosteriorParams& pp, const Matrix& q22) {
  return -q22 * pp.v21 * pp.v11_inv;
}

/// Canonical vector and precision of b2 given (Q21, Q22).
std::pair<Vector, Matrix> b2_canonical(const PosteriorParams& pp, const Matrix& q21,
                                       const Matrix& q22) {
  const auto chol = cholesky(q22);
  Vector b = pp.s2;
  if (pp.p1 > 0) b += chol.solve(Vector(q21 * pp.s1));
  Matrix prec = pp.kappa2 * chol.inverse();
  return {b, prec};
}

const Matrix& psi_or(const Hyperparams& hyper, const std::optional<Matrix>& psi) {
  return psi ? *psi : hyper.psi;
}

}  // namespace

Matrix ComponentDraw::full_precision(int m) const {
  const int p1 = static_cast<int>(inf.size());
  const int p2 = static_cast<int>(non.size());
  const int p = p1 + p2;
  Matrix qp(p, p);
  const Matrix sigma_inv = cholesky(sigma11[m]).inverse();
  if (p2 > 0) {
    const auto q22_chol = cholesky(q22);
    const Matrix q12 = q21.transpose();
    qp.topLeftCorner(p1, p1) = sigma_inv + q12 * q22_chol.solve(Matrix(q21));
    qp.topRightCorner(p1, p2) = q12;
    qp.bottomLeftCorner(p2, p1) = q21;
    qp.bottomRightCorner(p2, p2) = q22;
  } else {
    qp = sigma_inv;
  }
  std::vector<int> perm(inf);
  perm.insert(perm.end(), non.begin(), non.end());
  Matrix q(p, p);
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < p; ++b) q(perm[a], perm[b]) = qp(a, b);
  }
  return q;
}

Vector ComponentDraw::full_canonical(int m) const {
  const int p1 = static_cast<int>(inf.size());
  const int p2 = static_cast<int>(non.size());
  Vector bp(p1 + p2);
  Vector b1 = cholesky(sigma11[m]).solve(mu1[m]);
  if (p2 > 0 && p1 > 0) b1 += q21.transpose() * cholesky(q22).solve(b2);
  bp.head(p1) = b1;
  bp.tail(p2) = b2;
  Vector b(p1 + p2);
  for (int a = 0; a < p1; ++a) b(inf[a]) = bp(a);
  for (int a = 0; a < p2; ++a) b(non[a]) = bp(p1 + a);
  return b;
}

ComponentDraw sample_theta(const std::vector<ClusterStats>& clusters, const ClusterStats& global,
                           const std::vector<bool>& gamma, const Hyperparams& hyper,
                           const std::optional<Matrix>& psi, RngStream& rng) {
  const auto pp = posterior_params(clusters, global, gamma, hyper, psi_or(hyper, psi));
  ComponentDraw d;
  d.inf = pp.inf;
  d.non = pp.non;
  for (const auto& cp : pp.clusters) {
    Matrix sigma = pp.p1 > 0 ? sample_inverse_wishart(cp.v11, cp.df, rng) : Matrix(0, 0);
    Vector mu = cp.mean;
    if (pp.p1 > 0) {
      const auto chol = cholesky(sigma);
      Vector e(pp.p1);
      for (int k = 0; k < pp.p1; ++k) e(k) = rng.normal();
      mu += chol.lower * e / std::sqrt(cp.kappa);
    }
    d.sigma11.push_back(std::move(sigma));
    d.mu1.push_back(std::move(mu));
  }
  if (pp.p2 > 0) {
    d.q22 = sample_wishart(cholesky(pp.v2g1).inverse(), pp.df2, rng);
    d.q21 = pp.p1 > 0 ? sample_matrix_normal(q21_mean(pp, d.q22), d.q22, RowParam::covariance,
                                             pp.v11_inv, rng)
                      : Matrix(pp.p2, 0);
    const auto [b, prec] = b2_canonical(pp, d.q21, d.q22);
    d.b2 = sample_canonical_mvn(b, prec, rng);
  } else {
    d.q22.resize(0, 0);
    d.q21.resize(0, pp.p1);
    d.b2.resize(0);
  }
  return d;
}

ComponentDraw sample_theta(const ChainState& state, const std::optional<Matrix>& psi_override,
                           RngStream& rng) {
  return sample_theta(state.stats.all(), state.stats.global(), state.gamma, state.hyper,
                      psi_override, rng);
}

double log_theta_posterior(const ComponentDraw& theta, const std::vector<ClusterStats>& clusters,
                           const ClusterStats& global, const std::vector<bool>& gamma,
                           const Hyperparams& hyper) {
  const auto pp = posterior_params(clusters, global, gamma, hyper, hyper.psi);
  if (static_cast<int>(pp.clusters.size()) != theta.clusters()) {
    throw std::invalid_argument("theta and statistics disagree on the number of clusters");
  }
  double total = 0.0;
  if (pp.p1 > 0) {
    for (int m = 0; m < theta.clusters(); ++m) {
      const auto& cp = pp.clusters[m];
      total += log_inverse_wishart_pdf(theta.sigma11[m], cp.v11, cp.df);
      total += log_mvn_pdf(theta.mu1[m], cp.mean, theta.sigma11[m] / cp.kappa);
    }
  }
  if (pp.p2 > 0) {
    total += log_wishart_pdf(theta.q22, cholesky(pp.v2g1).inverse(), pp.df2);
    if (pp.p1 > 0) {
      total += log_matrix_normal_pdf(theta.q21, q21_mean(pp, theta.q22), theta.q22, pp.v11_inv);
    }
    const auto [b, prec] = b2_canonical(pp, theta.q21, theta.q22);
    const auto chol = cholesky(prec);
    total += log_mvn_pdf(theta.b2, chol.solve(b), chol.inverse());
  }
  return total;
}

double log_theta_prior(const ComponentDraw& theta, const std::vector<bool>& gamma,
                       const Hyperparams& hyper) {
  const int p = static_cast<int>(gamma.size());
  const std::vector<ClusterStats> empty(static_cast<std::size_t>(theta.clusters()), ClusterStats(p));
  return log_theta_posterior(theta, empty, ClusterStats(p), gamma, hyper);
}

double log_complete_likelihood(const ComponentDraw& theta, const Matrix& z,
                               const std::vector<int>& phi) {
  const int p1 = static_cast<int>(theta.inf.size());
  const int p2 = static_cast<int>(theta.non.size());
  Matrix q22_inv;
  if (p2 > 0) q22_inv = cholesky(theta.q22).inverse();
  double total = 0.0;
  for (int i = 0; i < z.rows(); ++i) {
    Vector z1(p1), z2(p2);
    for (int a = 0; a < p1; ++a) z1(a) = z(i, theta.inf[a]);
    for (int a = 0; a < p2; ++a) z2(a) = z(i, theta.non[a]);
    if (p1 > 0) total += log_mvn_pdf(z1, theta.mu1[phi[i]], theta.sigma11[phi[i]]);
    if (p2 > 0) {
      const Vector mean = q22_inv * (theta.b2 - theta.q21 * z1);
      total += log_mvn_pdf(z2, mean, q22_inv);
    }
  }
  return total;
}

}  // namespace dpmvs
