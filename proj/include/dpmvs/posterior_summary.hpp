#pragma once

#include <map>
#include <vector>

#include <json.hpp>

#include "dpmvs/data_model.hpp"
#include "dpmvs/mcmc_engine.hpp"

namespace dpmvs {

struct Relabeling {
  Matrix p_hat;  // n x M*
  /// maps[s][label] = relabeled column for sample s.
  std::vector<std::vector<int>> maps;
  int rounds = 0;
};

/// Hard-assignment variant of Stephens' relabeling: alternate between
/// averaging permuted indicator matrices and solving one assignment problem
/// per sample, until no permutation changes (at most `max_rounds`).
/// `reference` seeds the first round; otherwise the first sample does.
Relabeling relabel_samples(const std::vector<std::vector<int>>& phis,
                           const Matrix* reference = nullptr, int max_rounds = 100);

struct PosteriorSummary {
  Matrix p_hat;
  std::vector<double> gamma_prob;
  std::map<int, double> m_posterior;
  std::vector<int> phi_hat;
  std::vector<bool> gamma_hat;
  std::vector<std::vector<int>> relabel_maps;
  int relabel_rounds = 0;
  std::vector<std::size_t> chain_sizes;

  int modal_m() const;
  int p1() const;
};

PosteriorSummary summarize(const std::vector<SampleRecord>& samples, const PriorConfig& prior);
/// Chain 1 is relabeled on its own; the pooled stream is then relabeled
/// starting from chain 1's p_hat so every chain shares its column order.
PosteriorSummary summarize_chains(const std::vector<std::vector<SampleRecord>>& chains,
                                  const PriorConfig& prior);

/// Cluster means of the standardized observed values, one row per column of
/// p_hat (NaN where a cluster has no observed cell for a variable).
Matrix cluster_means(const Dataset& standardized, const std::vector<int>& phi_hat, int clusters);

nlohmann::json summary_to_json(const PosteriorSummary& s, const std::vector<std::string>& names,
                               const Matrix* means = nullptr);

}  // namespace dpmvs
