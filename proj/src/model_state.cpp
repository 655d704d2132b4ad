#include "dpmvs/model_state.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace dpmvs {

void Hyperparams::validate(int p) const {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  if (!(eta > p + 1)) throw DomainError("eta must exceed p + 1");
  if (psi.rows() != p || psi.cols() != p) throw DomainError("psi must be p x p");
  cholesky(psi);
}

PriorConfig PriorConfig::defaults(int p) {
  PriorConfig c;
  c.wishart_df = p + 2.0;
  c.wishart_scale = Matrix::Identity(p, p) / c.wishart_df;
  c.rho.assign(static_cast<std::size_t>(p), 0.5);
  return c;
}

void PriorConfig::validate(int p) const {
  for (double v : {a_lambda, b_lambda, a_eta, b_eta, a_alpha, b_alpha}) {
    if (!(v > 0.0)) throw DomainError("gamma prior shape and rate must be positive");
  }
  if (wishart_scale.rows() != p || wishart_scale.cols() != p) {
    throw DomainError("wishart_scale must be p x p");
  }
  cholesky(wishart_scale);
  if (!(wishart_df >= p)) throw DomainError("wishart_df must be at least p");
  if (static_cast<int>(rho.size()) != p) throw DomainError("rho must have p entries");
  for (double r : rho) {
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("rho entries must lie in [0, 1]");
  }
}

void ClusterStats::add(const Vector& z) {
  ++count;
  sum += z;
  outer.selfadjointView<Eigen::Lower>().rankUpdate(z, 1.0);
  outer.triangularView<Eigen::StrictlyUpper>() = outer.transpose();
}

void ClusterStats::remove(const Vector& z) {
  --count;
  sum -= z;
  outer.selfadjointView<Eigen::Lower>().rankUpdate(z, -1.0);
  outer.triangularView<Eigen::StrictlyUpper>() = outer.transpose();
}

ClusterStatsCache ClusterStatsCache::build(const Matrix& z, const std::vector<int>& phi, int m) {
  const int p = static_cast<int>(z.cols());
  ClusterStatsCache c;
  c.clusters_.assign(static_cast<std::size_t>(m), ClusterStats(p));
  c.global_ = ClusterStats(p);
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < phi.size(); ++i) rows[phi[i]].push_back(static_cast<int>(i));
  for (int k = 0; k < m; ++k) {
    auto& s = c.clusters_[k];
    s.count = static_cast<int>(rows[k].size());
    if (rows[k].empty()) continue;
    Matrix zk(s.count, p);
    for (int r = 0; r < s.count; ++r) zk.row(r) = z.row(rows[k][r]);
    s.sum = zk.colwise().sum().transpose();
    s.outer.noalias() = zk.transpose() * zk;
  }
  c.global_.count = static_cast<int>(z.rows());
  c.global_.sum = z.colwise().sum().transpose();
  c.global_.outer.noalias() = z.transpose() * z;
  return c;
}

void ClusterStatsCache::add_row(int m, const Vector& z) {
  clusters_[m].add(z);
  global_.add(z);
}

void ClusterStatsCache::remove_row(int m, const Vector& z) {
  clusters_[m].remove(z);
  global_.remove(z);
}

void ClusterStatsCache::append_empty() {
  clusters_.emplace_back(static_cast<int>(global_.sum.size()));
}

void ClusterStatsCache::erase_cluster(int m) { clusters_.erase(clusters_.begin() + m); }

double ClusterStatsCache::max_abs_diff(const ClusterStatsCache& other) const {
  if (other.clusters() != clusters() || other.global_.sum.size() != global_.sum.size()) return kInf;
  auto diff = [](const ClusterStats& a, const ClusterStats& b) {
    if (a.count != b.count) return kInf;
    if (a.sum.size() == 0) return 0.0;
    return std::max((a.sum - b.sum).cwiseAbs().maxCoeff(), (a.outer - b.outer).cwiseAbs().maxCoeff());
  };
  double d = diff(global_, other.global_);
  for (int k = 0; k < clusters(); ++k) d = std::max(d, diff(clusters_[k], other.clusters_[k]));
  return d;
}

std::vector<int> reorder_for_gamma(const std::vector<bool>& gamma) {
  std::vector<int> perm;
  perm.reserve(gamma.size());
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    if (gamma[j]) perm.push_back(static_cast<int>(j));
  }
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    if (!gamma[j]) perm.push_back(static_cast<int>(j));
  }
  return perm;
}

int count_informative(const std::vector<bool>& gamma) {
  return static_cast<int>(std::count(gamma.begin(), gamma.end(), true));
}

std::vector<int> compact_labels(const std::vector<int>& phi) {
  std::unordered_map<int, int> map;
  std::vector<int> out(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    auto [it, inserted] = map.try_emplace(phi[i], static_cast<int>(map.size()));
    out[i] = it->second;
  }
  return out;
}

void ChainState::move(int i, int m_new) {
  const int old = phi[i];
  if (m_new == old) return;
  if (m_new < 0 || m_new > m()) throw std::out_of_range("label out of range in move");
  const Vector zi = z.row(i).transpose();
  if (m_new == m()) stats.append_empty();
  stats.remove_row(old, zi);
  stats.add_row(m_new, zi);
  phi[i] = m_new;
  if (stats.cluster(old).count == 0) {
    stats.erase_cluster(old);
    for (auto& label : phi) {
      if (label > old) --label;
    }
  }
}

void ChainState::set_row(int i, const Vector& zi) {
  const Vector old = z.row(i).transpose();
  stats.remove_row(phi[i], old);
  z.row(i) = zi.transpose();
  stats.add_row(phi[i], zi);
}

void ChainState::set_partition(const std::vector<int>& phi_new) {
  phi = compact_labels(phi_new);
  recompute_stats();
}

void ChainState::recompute_stats() {
  const int m = phi.empty() ? 0 : *std::max_element(phi.begin(), phi.end()) + 1;
  stats = ClusterStatsCache::build(z, phi, m);
}

void ChainState::check_invariants(double tol) const {
  if (static_cast<int>(phi.size()) != n()) throw std::logic_error("phi length differs from n");
  if (static_cast<int>(gamma.size()) != p()) throw std::logic_error("gamma length differs from p");
  std::vector<int> counts(static_cast<std::size_t>(m()), 0);
  for (int label : phi) {
    if (label < 0 || label >= m()) throw std::logic_error("label outside 0..M-1");
    ++counts[label];
  }
  for (int k = 0; k < m(); ++k) {
    if (counts[k] == 0) throw std::logic_error("labels are not contiguous");
    if (counts[k] != stats.cluster(k).count) throw std::logic_error("cluster count mismatch");
  }
  const auto fresh = ClusterStatsCache::build(z, phi, m());
  const double d = stats.max_abs_diff(fresh);
  if (!(d <= tol)) {
    throw std::logic_error("cached statistics drifted by " + std::to_string(d));
  }
}

ChainState initial_state(const Matrix& z, const PriorConfig& prior, RngStream& rng) {
  const int p = static_cast<int>(z.cols());
  ChainState s;
  s.z = z;
  s.gamma.resize(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) s.gamma[j] = rng.bernoulli(prior.rho[j]);
  s.phi.assign(static_cast<std::size_t>(z.rows()), 0);
  s.hyper.lambda = prior.a_lambda / prior.b_lambda;
  s.hyper.eta = p + 1 + prior.a_eta / prior.b_eta;
  s.hyper.alpha = prior.a_alpha / prior.b_alpha;
  s.hyper.psi = prior.wishart_df * prior.wishart_scale;
  s.recompute_stats();
  return s;
}

}  // namespace dpmvs
