#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dpmvs/model_state.hpp"

namespace dpmvs {

/// `flat` replaces f(Z | ...) by a constant; used to check that the sampler
/// reproduces the prior.
enum class Likelihood { full, flat };

/// Sufficient statistics of one cluster restricted to the informative block.
struct LocalCluster {
  int count = 0;
  Vector sum;
  Matrix outer;
  double term = 0.0;
};

/// Collapsed marginal likelihood for fixed (gamma, lambda, eta, Psi). Holds the Psi block
/// factorizations so repeated cluster terms cost one p1 x p1 Cholesky each.
class MarginalModel {
 public:
  MarginalModel(const Hyperparams& hyper, const std::vector<bool>& gamma,
                Likelihood lik = Likelihood::full);

  int p() const { return static_cast<int>(perm_.size()); }
  int p1() const { return p1_; }
  int p2() const { return p() - p1_; }
  const std::vector<int>& informative() const { return inf_; }
  const std::vector<int>& permutation() const { return perm_; }
  Likelihood likelihood() const { return lik_; }

  /// Log of the per-cluster informative bracket. Zero for an empty cluster.
  double cluster_term(int count, const Vector& sum1, const Matrix& outer1) const;
  double cluster_term(const ClusterStats& c) const;
  /// Log of the non-informative bracket from the pooled statistics.
  double global_term(const ClusterStats& g) const;
  double log_marginal(const ClusterStatsCache& stats) const;
  double log_marginal(const std::vector<ClusterStats>& clusters, const ClusterStats& global) const;

  LocalCluster local(const ClusterStats& c) const;
  Vector local_row(const Matrix& z, int i) const;
  /// Fills in the term of a local cluster in place.
  void refresh(LocalCluster& c) const;

  const Hyperparams& hyper() const { return hyper_; }

 private:
  Hyperparams hyper_;
  Likelihood lik_;
  std::vector<int> perm_;
  std::vector<int> inf_;
  int p1_ = 0;
  Matrix psi11_;
  double logdet_psi11_ = 0.0;
  double logdet_psi2g1_ = 0.0;
  Matrix psi_perm_;
  double cluster_const_ = 0.0;
};

/// Log-determinants and blocks behind one log_marginal evaluation.
struct MarginalTerms {
  std::vector<Matrix> v_m11;
  std::vector<double> logdet_v_m11;
  Matrix v11, v21, v22, v2given1;
  double logdet_v11 = 0.0, logdet_v2given1 = 0.0;
  double logdet_psi11 = 0.0, logdet_psi2given1 = 0.0;
};

MarginalTerms marginal_terms(const ChainState& state);

double log_marginal(const ChainState& state, Likelihood lik = Likelihood::full);

/// Normalized log weights for reassigning row i. Entry m < M is existing
/// cluster m (minus row i), entry M opens a new cluster. Row i's own cluster
/// gets -inf when i is a singleton, since the new-cluster entry covers it.
/// With `restrict`, only the two given labels keep finite weight.
std::vector<double> gibbs_logweights(const ChainState& state, int i,
                                     std::optional<std::pair<int, int>> restrict = std::nullopt,
                                     Likelihood lik = Likelihood::full);

}  // namespace dpmvs
