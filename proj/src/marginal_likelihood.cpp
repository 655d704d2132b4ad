#include "dpmvs/marginal_likelihood.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/constants/constants.hpp>

namespace dpmvs {

namespace {

const double kLogPi = std::log(boost::math::constants::pi<double>());

double log_det_range(const Matrix& lower, int begin, int end) {
  double s = 0.0;
  for (int k = begin; k < end; ++k) s += std::log(lower(k, k));
  return 2.0 * s;
}

Matrix permute(const Matrix& a, const std::vector<int>& perm) { return a(perm, perm); }

}  // namespace

MarginalModel::MarginalModel(const Hyperparams& hyper, const std::vector<bool>& gamma,
                             Likelihood lik)
    : hyper_(hyper), lik_(lik), perm_(reorder_for_gamma(gamma)), p1_(count_informative(gamma)) {
  if (static_cast<int>(gamma.size()) != hyper.psi.rows()) {
    throw std::invalid_argument("gamma length differs from the dimension of Psi");
  }
  inf_.assign(perm_.begin(), perm_.begin() + p1_);
  psi_perm_ = permute(hyper.psi, perm_);
  const auto chol = cholesky(psi_perm_);
  logdet_psi11_ = log_det_range(chol.lower, 0, p1_);
  logdet_psi2g1_ = log_det_range(chol.lower, p1_, p());
  psi11_ = psi_perm_.topLeftCorner(p1_, p1_);
  const double shape = (hyper.eta - p2()) / 2.0;
  cluster_const_ = p1_ > 0 ? shape * logdet_psi11_ - log_multivariate_gamma(p1_, shape) : 0.0;
}

double MarginalModel::cluster_term(int count, const Vector& sum1, const Matrix& outer1) const {
  if (lik_ == Likelihood::flat || count == 0 || p1_ == 0) return 0.0;
  const double lambda = hyper_.lambda;
  Matrix v = psi11_ + outer1;
  v.noalias() -= sum1 * (sum1.transpose() / (count + lambda));
  const double logdet_v = cholesky(v).log_det;
  const double shape = (count + hyper_.eta - p2()) / 2.0;
  return 0.5 * p1_ * std::log(lambda / (count + lambda)) - shape * logdet_v +
         log_multivariate_gamma(p1_, shape) + cluster_const_;
}

double MarginalModel::cluster_term(const ClusterStats& c) const {
  if (lik_ == Likelihood::flat || c.count == 0 || p1_ == 0) return 0.0;
  return cluster_term(c.count, c.sum(inf_), c.outer(inf_, inf_));
}

double MarginalModel::global_term(const ClusterStats& g) const {
  const int p2 = this->p2();
  if (lik_ == Likelihood::flat || p2 == 0) return 0.0;
  const int n = g.count;
  const double lambda = hyper_.lambda;
  const double eta = hyper_.eta;
  const Vector s = g.sum(perm_);
  Matrix v = psi_perm_ + g.outer(perm_, perm_);
  v.noalias() -= s * (s.transpose() / (n + lambda));
  const auto chol = cholesky(v);
  const double logdet_v11 = log_det_range(chol.lower, 0, p1_);
  const double logdet_v2g1 = log_det_range(chol.lower, p1_, p());
  return 0.5 * p2 * std::log(lambda / (n + lambda)) + 0.5 * p2 * logdet_psi11_ +
         0.5 * eta * logdet_psi2g1_ - 0.5 * p2 * logdet_v11 - 0.5 * (n + eta) * logdet_v2g1 +
         log_multivariate_gamma(p2, (n + eta) / 2.0) - log_multivariate_gamma(p2, eta / 2.0);
}

double MarginalModel::log_marginal(const std::vector<ClusterStats>& clusters,
                                   const ClusterStats& global) const {
  if (lik_ == Likelihood::flat) return 0.0;
  double total = -0.5 * global.count * p() * kLogPi;
  for (const auto& c : clusters) total += cluster_term(c);
  return total + global_term(global);
}

double MarginalModel::log_marginal(const ClusterStatsCache& stats) const {
  return log_marginal(stats.all(), stats.global());
}

LocalCluster MarginalModel::local(const ClusterStats& c) const {
  LocalCluster out;
  out.count = c.count;
  out.sum = c.sum(inf_);
  out.outer = c.outer(inf_, inf_);
  refresh(out);
  return out;
}

Vector MarginalModel::local_row(const Matrix& z, int i) const {
  Vector out(p1_);
  for (int k = 0; k < p1_; ++k) out(k) = z(i, inf_[k]);
  return out;
}

void MarginalModel::refresh(LocalCluster& c) const { c.term = cluster_term(c.count, c.sum, c.outer); }

MarginalTerms marginal_terms(const ChainState& state) {
  const MarginalModel model(state.hyper, state.gamma);
  const auto& perm = model.permutation();
  const auto& inf = model.informative();
  const int p1 = model.p1();
  const int p2 = model.p2();
  const double lambda = state.hyper.lambda;
  MarginalTerms t;
  const Matrix psi = permute(state.hyper.psi, perm);
  const auto psi_chol = cholesky(psi);
  t.logdet_psi11 = log_det_range(psi_chol.lower, 0, p1);
  t.logdet_psi2given1 = log_det_range(psi_chol.lower, p1, p1 + p2);
  const Matrix psi11 = psi.topLeftCorner(p1, p1);
  for (const auto& c : state.stats.all()) {
    Matrix v = psi11 + c.outer(inf, inf);
    const Vector s = c.sum(inf);
    v -= s * s.transpose() / (c.count + lambda);
    t.logdet_v_m11.push_back(cholesky(v).log_det);
    t.v_m11.push_back(std::move(v));
  }
  const auto& g = state.stats.global();
  const Vector s = g.sum(perm);
  Matrix v = psi + g.outer(perm, perm);
  v -= s * s.transpose() / (g.count + lambda);
  t.v11 = v.topLeftCorner(p1, p1);
  t.v21 = v.bottomLeftCorner(p2, p1);
  t.v22 = v.bottomRightCorner(p2, p2);
  const auto v11_chol = cholesky(t.v11);
  t.logdet_v11 = v11_chol.log_det;
  t.v2given1 = t.v22 - t.v21 * v11_chol.solve(Matrix(t.v21.transpose()));
  t.logdet_v2given1 = cholesky(t.v2given1).log_det;
  return t;
}

double log_marginal(const ChainState& state, Likelihood lik) {
  return MarginalModel(state.hyper, state.gamma, lik).log_marginal(state.stats);
}

std::vector<double> gibbs_logweights(const ChainState& state, int i,
                                     std::optional<std::pair<int, int>> restrict, Likelihood lik) {
  if (i < 0 || i >= state.n()) throw std::out_of_range("row index out of range");
  const MarginalModel model(state.hyper, state.gamma, lik);
  const int m = state.m();
  const Vector zi = model.local_row(state.z, i);
  const Matrix zz = zi * zi.transpose();
  std::vector<double> w(static_cast<std::size_t>(m + 1), -kInf);
  for (int k = 0; k < m; ++k) {
    if (restrict && k != restrict->first && k != restrict->second) continue;
    LocalCluster c = model.local(state.stats.cluster(k));
    if (k == state.phi[i]) {
      c.count -= 1;
      c.sum -= zi;
      c.outer -= zz;
      model.refresh(c);
    }
    if (c.count == 0) continue;
    const double with_i = model.cluster_term(c.count + 1, c.sum + zi, c.outer + zz);
    w[k] = std::log(static_cast<double>(c.count)) + with_i - c.term;
  }
  if (!restrict) w[m] = std::log(state.hyper.alpha) + model.cluster_term(1, zi, zz);
  const double norm = log_sum_exp(w);
  for (auto& x : w) x -= norm;
  return w;
}

}  // namespace dpmvs
