#pragma once

#include <optional>
#include <vector>

#include "dpmvs/model_state.hpp"

namespace dpmvs {

/// Component parameters in the split (informative / non-informative) form.
/// Index vectors map block positions back to data columns.
struct ComponentDraw {
  std::vector<int> inf;
  std::vector<int> non;
  std::vector<Vector> mu1;
  std::vector<Matrix> sigma11;
  Vector b2;
  Matrix q21;
  Matrix q22;

  int clusters() const { return static_cast<int>(mu1.size()); }
  /// Full precision Q_m and canonical vector b_m in the original column order.
  Matrix full_precision(int m) const;
  Vector full_canonical(int m) const;
};

/// Draws theta from its conjugate posterior given per-cluster and pooled
/// statistics. Empty clusters (count 0) get prior draws. `psi` replaces the
/// Psi in `hyper` when given.
ComponentDraw sample_theta(const std::vector<ClusterStats>& clusters, const ClusterStats& global,
                           const std::vector<bool>& gamma, const Hyperparams& hyper,
                           const std::optional<Matrix>& psi, RngStream& rng);

ComponentDraw sample_theta(const ChainState& state, const std::optional<Matrix>& psi_override,
                           RngStream& rng);

/// Log density of theta under the conjugate posterior that sample_theta draws
/// from. With all counts zero this is the prior density.
double log_theta_posterior(const ComponentDraw& theta, const std::vector<ClusterStats>& clusters,
                           const ClusterStats& global, const std::vector<bool>& gamma,
                           const Hyperparams& hyper);

double log_theta_prior(const ComponentDraw& theta, const std::vector<bool>& gamma,
                       const Hyperparams& hyper);

/// log f(Z | phi, theta).
double log_complete_likelihood(const ComponentDraw& theta, const Matrix& z,
                               const std::vector<int>& phi);

}  // namespace dpmvs
