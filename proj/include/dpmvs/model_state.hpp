#pragma once

#include <vector>

#include "dpmvs/stats_kernels.hpp"

namespace dpmvs {

struct Hyperparams {
  double lambda = 1.0;
  double eta = 3.0;
  Matrix psi;
  double alpha = 1.0;

  void validate(int p) const;
};

/// Gamma priors use the shape/rate form.
struct PriorConfig {
  double a_lambda = 2.0, b_lambda = 2.0;
  double a_eta = 2.0, b_eta = 2.0;
  double a_alpha = 2.0, b_alpha = 2.0;
  Matrix wishart_scale;  // P
  double wishart_df = 0.0;  // N
  std::vector<double> rho;

  /// A = B = 2, N = p + 2, P = I / N, rho = 0.5.
  static PriorConfig defaults(int p);
  void validate(int p) const;
};

/// Count, sum and raw outer-product sum over all p coordinates. Keeping the
/// full-p blocks means a change of gamma never requires a rescan of Z.
struct ClusterStats {
  int count = 0;
  Vector sum;
  Matrix outer;

  explicit ClusterStats(int p = 0) : sum(Vector::Zero(p)), outer(Matrix::Zero(p, p)) {}
  void add(const Vector& z);
  void remove(const Vector& z);
};

class ClusterStatsCache {
 public:
  ClusterStatsCache() = default;
  /// Labels in phi must be 0..m-1.
  static ClusterStatsCache build(const Matrix& z, const std::vector<int>& phi, int m);

  int clusters() const { return static_cast<int>(clusters_.size()); }
  const ClusterStats& cluster(int m) const { return clusters_[m]; }
  const ClusterStats& global() const { return global_; }
  const std::vector<ClusterStats>& all() const { return clusters_; }

  void add_row(int m, const Vector& z);
  void remove_row(int m, const Vector& z);
  void append_empty();
  void erase_cluster(int m);

  /// Largest absolute entry-wise difference; infinity if the shapes differ.
  double max_abs_diff(const ClusterStatsCache& other) const;

 private:
  std::vector<ClusterStats> clusters_;
  ClusterStats global_;
};

/// Stable permutation putting informative columns (gamma = 1) first.
std::vector<int> reorder_for_gamma(const std::vector<bool>& gamma);
int count_informative(const std::vector<bool>& gamma);

/// Labels are 0-based and contiguous: every label in 0..M-1 is used.
struct ChainState {
  Matrix z;
  std::vector<bool> gamma;
  std::vector<int> phi;
  Hyperparams hyper;
  ClusterStatsCache stats;

  int n() const { return static_cast<int>(z.rows()); }
  int p() const { return static_cast<int>(z.cols()); }
  int m() const { return stats.clusters(); }
  int cluster_size(int m) const { return stats.cluster(m).count; }

  /// Moves row i to label m_new (m_new == m() opens a new cluster). An emptied
  /// cluster is removed and higher labels shift down by one.
  void move(int i, int m_new);
  /// Replaces row i of z, keeping the statistics in step.
  void set_row(int i, const Vector& zi);
  /// Installs a new partition (compacting labels) and rebuilds statistics.
  void set_partition(const std::vector<int>& phi_new);
  void recompute_stats();
  /// Throws std::logic_error when labels or statistics are inconsistent.
  void check_invariants(double tol = 1e-8) const;
};

/// Relabels to 0..M-1 in order of first appearance.
std::vector<int> compact_labels(const std::vector<int>& phi);

/// One cluster, gamma drawn from Bernoulli(rho), lambda/eta/alpha at their
/// prior means and Psi = N * P.
ChainState initial_state(const Matrix& z, const PriorConfig& prior, RngStream& rng);

}  // namespace dpmvs
