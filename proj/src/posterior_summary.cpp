#include "dpmvs/posterior_summary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dpmvs/assignment.hpp"

namespace dpmvs {

namespace {

int label_count(const std::vector<int>& phi) {
  return phi.empty() ? 0 : *std::max_element(phi.begin(), phi.end()) + 1;
}

Matrix average_indicators(const std::vector<std::vector<int>>& phis,
                          const std::vector<std::vector<int>>& maps, int n, int k) {
  Matrix p = Matrix::Zero(n, k);
  for (std::size_t s = 0; s < phis.size(); ++s) {
    for (int i = 0; i < n; ++i) p(i, maps[s][phis[s][i]]) += 1.0;
  }
  return p / static_cast<double>(phis.size());
}

std::vector<int> best_map(const std::vector<int>& phi, const Matrix& p_hat, int k) {
  const int labels = label_count(phi);
  // cost(l, c) = number of rows in label l that disagree with column c.
  Matrix cost = Matrix::Zero(labels, k);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    cost.row(phi[i]).array() += 1.0 - p_hat.row(static_cast<Eigen::Index>(i)).array();
  }
  return solve_assignment(cost);
}

}  // namespace

Relabeling relabel_samples(const std::vector<std::vector<int>>& phis, const Matrix* reference,
                           int max_rounds) {
  if (phis.empty()) throw std::invalid_argument("relabel_samples needs at least one sample");
  const int n = static_cast<int>(phis.front().size());
  int k = 0;
  for (const auto& phi : phis) {
    if (static_cast<int>(phi.size()) != n) throw std::invalid_argument("samples differ in length");
    k = std::max(k, label_count(phi));
  }
  Matrix p_hat = Matrix::Zero(n, k);
  if (reference != nullptr) {
    if (reference->rows() != n) throw std::invalid_argument("reference has wrong row count");
    k = std::max<int>(k, static_cast<int>(reference->cols()));
    p_hat = Matrix::Zero(n, k);
    p_hat.leftCols(reference->cols()) = *reference;
  } else {
    for (int i = 0; i < n; ++i) p_hat(i, phis.front()[i]) = 1.0;
  }

  Relabeling out;
  out.maps.assign(phis.size(), {});
  for (int round = 1; round <= max_rounds; ++round) {
    bool changed = false;
    for (std::size_t s = 0; s < phis.size(); ++s) {
      auto m = best_map(phis[s], p_hat, k);
      if (m != out.maps[s]) {
        out.maps[s] = std::move(m);
        changed = true;
      }
    }
    out.rounds = round;
    p_hat = average_indicators(phis, out.maps, n, k);
    if (!changed) break;
  }

  // Canonical column order, so the result does not depend on which sample
  // seeded the iteration: columns in order of the first row they win, then
  // the remaining columns with mass by decreasing mass. Empty columns go.
  std::vector<int> order;
  std::vector<char> placed(k, 0);
  for (int i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    p_hat.row(i).maxCoeff(&arg);
    if (!placed[arg]) {
      placed[arg] = 1;
      order.push_back(static_cast<int>(arg));
    }
  }
  std::vector<int> rest;
  for (int c = 0; c < k; ++c) {
    if (!placed[c] && p_hat.col(c).sum() > 0.0) rest.push_back(c);
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [&](int a, int b) { return p_hat.col(a).sum() > p_hat.col(b).sum(); });
  order.insert(order.end(), rest.begin(), rest.end());
  std::vector<int> keep(k, -1);
  for (std::size_t c = 0; c < order.size(); ++c) keep[order[c]] = static_cast<int>(c);
  const int used = static_cast<int>(order.size());
  Matrix compact = Matrix::Zero(n, used);
  for (int c = 0; c < k; ++c) {
    if (keep[c] >= 0) compact.col(keep[c]) = p_hat.col(c);
  }
  for (auto& m : out.maps) {
    for (int& c : m) c = keep[c];
  }
  out.p_hat = std::move(compact);
  return out;
}

int PosteriorSummary::modal_m() const {
  int best = 0;
  double mass = -1.0;
  for (const auto& [m, f] : m_posterior) {
    if (f > mass) {
      mass = f;
      best = m;
    }
  }
  return best;
}

int PosteriorSummary::p1() const {
  return static_cast<int>(std::count(gamma_hat.begin(), gamma_hat.end(), true));
}

namespace {

PosteriorSummary finish(const std::vector<const SampleRecord*>& records, Relabeling rel,
                        const PriorConfig& prior) {
  PosteriorSummary s;
  const int p = static_cast<int>(records.front()->gamma.size());
  const double count = static_cast<double>(records.size());
  if (static_cast<int>(prior.rho.size()) != p) {
    throw std::invalid_argument("prior rho length does not match the samples");
  }
  s.gamma_prob.assign(p, 0.0);
  for (const auto* r : records) {
    for (int j = 0; j < p; ++j) s.gamma_prob[j] += r->gamma[j] ? 1.0 : 0.0;
    s.m_posterior[r->m] += 1.0;
  }
  for (double& g : s.gamma_prob) g /= count;
  for (auto& [m, f] : s.m_posterior) f /= count;
  s.gamma_hat.resize(p);
  for (int j = 0; j < p; ++j) s.gamma_hat[j] = s.gamma_prob[j] > prior.rho[j];

  s.p_hat = std::move(rel.p_hat);
  s.phi_hat.resize(s.p_hat.rows());
  for (Eigen::Index i = 0; i < s.p_hat.rows(); ++i) {
    Eigen::Index arg = 0;
    s.p_hat.row(i).maxCoeff(&arg);
    s.phi_hat[i] = static_cast<int>(arg);
  }
  s.relabel_maps = std::move(rel.maps);
  s.relabel_rounds = rel.rounds;
  return s;
}

}  // namespace

PosteriorSummary summarize(const std::vector<SampleRecord>& samples, const PriorConfig& prior) {
  return summarize_chains({samples}, prior);
}

PosteriorSummary summarize_chains(const std::vector<std::vector<SampleRecord>>& chains,
                                  const PriorConfig& prior) {
  std::vector<const SampleRecord*> records;
  std::vector<std::vector<int>> phis;
  std::vector<std::size_t> sizes;
  for (const auto& chain : chains) {
    if (chain.empty()) throw std::invalid_argument("cannot summarize an empty chain");
    sizes.push_back(chain.size());
    for (const auto& r : chain) {
      records.push_back(&r);
      phis.push_back(r.phi);
    }
  }
  if (records.empty()) throw std::invalid_argument("no samples to summarize");
  Relabeling rel;
  if (chains.size() == 1) {
    rel = relabel_samples(phis);
  } else {
    const std::vector<std::vector<int>> first(phis.begin(),
                                              phis.begin() + static_cast<long>(sizes.front()));
    const Relabeling ref = relabel_samples(first);
    rel = relabel_samples(phis, &ref.p_hat);
  }
  auto s = finish(records, std::move(rel), prior);
  s.chain_sizes = std::move(sizes);
  return s;
}

Matrix cluster_means(const Dataset& ds, const std::vector<int>& phi_hat, int clusters) {
  Matrix sum = Matrix::Zero(clusters, ds.cols());
  Matrix cnt = Matrix::Zero(clusters, ds.cols());
  for (int i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.cols(); ++j) {
      if (!ds.observed(i, j)) continue;
      sum(phi_hat[i], j) += ds.value(i, j);
      cnt(phi_hat[i], j) += 1.0;
    }
  }
  Matrix out(clusters, ds.cols());
  for (int m = 0; m < clusters; ++m) {
    for (int j = 0; j < ds.cols(); ++j) {
      out(m, j) = cnt(m, j) > 0 ? sum(m, j) / cnt(m, j) : std::nan("");
    }
  }
  return out;
}

nlohmann::json summary_to_json(const PosteriorSummary& s, const std::vector<std::string>& names,
                               const Matrix* means) {
  using nlohmann::json;
  json j;
  j["samples"] = s.relabel_maps.size();
  j["chain_sizes"] = s.chain_sizes;
  j["relabel_rounds"] = s.relabel_rounds;
  j["modal_m"] = s.modal_m();
  j["p1"] = s.p1();
  json mp = json::object();
  for (const auto& [m, f] : s.m_posterior) mp[std::to_string(m)] = f;
  j["m_posterior"] = mp;
  json vars = json::array();
  for (std::size_t k = 0; k < s.gamma_prob.size(); ++k) {
    vars.push_back({{"name", k < names.size() ? names[k] : "y" + std::to_string(k + 1)},
                    {"gamma_prob", s.gamma_prob[k]},
                    {"gamma_hat", static_cast<bool>(s.gamma_hat[k])}});
  }
  j["variables"] = vars;
  std::vector<int> phi1(s.phi_hat.size());
  std::transform(s.phi_hat.begin(), s.phi_hat.end(), phi1.begin(), [](int v) { return v + 1; });
  j["phi_hat"] = phi1;
  std::vector<int> sizes(s.p_hat.cols(), 0);
  for (int v : s.phi_hat) ++sizes[v];
  j["cluster_sizes"] = sizes;
  if (means != nullptr) {
    json rows = json::array();
    for (Eigen::Index m = 0; m < means->rows(); ++m) {
      json row = json::array();
      for (Eigen::Index c = 0; c < means->cols(); ++c) {
        const double v = (*means)(m, c);
        row.push_back(std::isnan(v) ? json(nullptr) : json(v));
      }
      rows.push_back(row);
    }
    j["cluster_means"] = rows;
  }
  return j;
}

}  // namespace dpmvs
