#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dpmvs/marginal_likelihood.hpp"
#include "test_support.hpp"

using namespace dpmvs;
using namespace dpmvs::testing;

namespace {

/// Independent draw of f(Z | theta) with theta from the component prior,
/// written straight from the block prior definitions.
double prior_draw_loglik(const Matrix& z, const std::vector<int>& phi, const std::vector<bool>& gamma,
                         double lambda, double eta, const Matrix& psi, RngStream& rng) {
  std::vector<int> inf, non;
  for (int j = 0; j < static_cast<int>(gamma.size()); ++j) (gamma[j] ? inf : non).push_back(j);
  const int p1 = static_cast<int>(inf.size());
  const int p2 = static_cast<int>(non.size());
  const Matrix psi11 = psi(inf, inf);
  const Matrix psi21 = psi(non, inf);
  const Matrix psi22 = psi(non, non);
  const Matrix psi11_inv = p1 > 0 ? Matrix(psi11.inverse()) : Matrix(0, 0);
  const Matrix psi2g1 = psi22 - psi21 * psi11_inv * psi21.transpose();
  Matrix q22, q21;
  Vector b2;
  if (p2 > 0) {
    q22 = sample_wishart(psi2g1.inverse(), eta, rng);
    q21 = p1 > 0 ? sample_matrix_normal(-q22 * psi21 * psi11_inv, q22, RowParam::covariance,
                                        psi11_inv, rng)
                 : Matrix(p2, 0);
    const Eigen::LLT<Matrix> llt(q22 / lambda);
    Vector e(p2);
    for (int k = 0; k < p2; ++k) e(k) = rng.normal();
    b2 = llt.matrixL() * e;
  }
  const int m = *std::max_element(phi.begin(), phi.end()) + 1;
  std::vector<Matrix> sigma(m);
  std::vector<Vector> mu(m);
  for (int k = 0; k < m && p1 > 0; ++k) {
    sigma[k] = sample_inverse_wishart(psi11, eta - p2, rng);
    const Eigen::LLT<Matrix> llt(sigma[k] / lambda);
    Vector e(p1);
    for (int a = 0; a < p1; ++a) e(a) = rng.normal();
    mu[k] = llt.matrixL() * e;
  }
  double ll = 0.0;
  for (int i = 0; i < z.rows(); ++i) {
    const Vector z1 = z.row(i)(inf).transpose();
    const Vector z2 = z.row(i)(non).transpose();
    if (p1 > 0) ll += log_mvn_pdf(z1, mu[phi[i]], sigma[phi[i]]);
    if (p2 > 0) {
      const Matrix cov = q22.inverse();
      ll += log_mvn_pdf(z2, cov * (b2 - q21 * z1), cov);
    }
  }
  return ll;
}

}  // namespace

TEST_CASE("one observation closed form") {
  Matrix z(1, 1);
  z(0, 0) = 0.0;
  const auto s = make_state(z, {0}, {true}, 1.0, 3.0, Matrix::Identity(1, 1));
  CHECK(log_marginal(s) == doctest::Approx(std::log(std::sqrt(2.0) / M_PI)).epsilon(1e-12));
  // gamma = 0 puts the variable in the shared block; with one cluster the value is the same.
  const auto s0 = make_state(z, {0}, {false}, 1.0, 3.0, Matrix::Identity(1, 1));
  CHECK(log_marginal(s0) == doctest::Approx(std::log(std::sqrt(2.0) / M_PI)).epsilon(1e-12));
}

TEST_CASE("all informative equals independent NIW marginals per cluster") {
  RngStream rng(11, 1);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 9, p = 3;
    const Matrix z = random_matrix(n, p, rng);
    const Matrix psi = random_spd(p, rng);
    std::vector<int> phi{0, 1, 0, 2, 1, 1, 0, 2, 0};
    const auto s = make_state(z, phi, {true, true, true}, 0.7, p + 2.5, psi);
    double expected = 0.0;
    for (int k = 0; k < 3; ++k) {
      std::vector<int> rows;
      for (int i = 0; i < n; ++i) {
        if (phi[i] == k) rows.push_back(i);
      }
      expected += niw_log_marginal(z(rows, Eigen::all), 0.7, p + 2.5, psi);
    }
    CHECK(std::abs(log_marginal(s) - expected) < 1e-10);
  }
}

TEST_CASE("one cluster equals the full NIW marginal for every gamma") {
  RngStream rng(12, 1);
  const int n = 7, p = 4;
  const Matrix z = random_matrix(n, p, rng);
  const Matrix psi = random_spd(p, rng);
  const double expected = niw_log_marginal(z, 1.3, p + 1.8, psi);
  for (int mask = 0; mask < 16; ++mask) {
    std::vector<bool> gamma(p);
    for (int j = 0; j < p; ++j) gamma[j] = (mask >> j) & 1;
    const auto s = make_state(z, std::vector<int>(n, 0), gamma, 1.3, p + 1.8, psi);
    CHECK(std::abs(log_marginal(s) - expected) < 1e-10);
  }
}

TEST_CASE("relabeling and row permutation invariance") {
  RngStream rng(13, 1);
  const int n = 8, p = 4;
  const Matrix z = random_matrix(n, p, rng);
  const Matrix psi = random_spd(p, rng);
  const std::vector<bool> gamma{true, false, true, false};
  const std::vector<int> phi{0, 0, 1, 2, 1, 0, 2, 2};
  const auto base = make_state(z, phi, gamma, 1.0, 6.0, psi);
  std::vector<int> relabeled(phi);
  for (auto& l : relabeled) l = (l + 1) % 3;
  const auto s2 = make_state(z, relabeled, gamma, 1.0, 6.0, psi);
  CHECK(std::abs(log_marginal(base) - log_marginal(s2)) < 1e-12);
  std::vector<int> order{5, 2, 7, 0, 1, 6, 4, 3};
  Matrix zp(n, p);
  std::vector<int> phip(n);
  for (int i = 0; i < n; ++i) {
    zp.row(i) = z.row(order[i]);
    phip[i] = phi[order[i]];
  }
  const auto s3 = make_state(zp, phip, gamma, 1.0, 6.0, psi);
  CHECK(std::abs(log_marginal(base) - log_marginal(s3)) < 1e-12);
}

TEST_CASE("gibbs weights agree with full marginal differences") {
  RngStream rng(14, 1);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 3 + static_cast<int>(rng.index(6));
    const int p = 1 + static_cast<int>(rng.index(4));
    const Matrix z = random_matrix(n, p, rng);
    const Matrix psi = random_spd(p, rng);
    std::vector<bool> gamma(p);
    for (int j = 0; j < p; ++j) gamma[j] = rng.bernoulli(0.5);
    std::vector<int> phi(n);
    for (int i = 0; i < n; ++i) phi[i] = static_cast<int>(rng.index(3));
    const double alpha = 0.3 + rng.uniform() * 2.0;
    const auto s = make_state(z, phi, gamma, 0.8, p + 1.5, psi, alpha);
    const int i = static_cast<int>(rng.index(n));
    const auto w = gibbs_logweights(s, i);
    REQUIRE(static_cast<int>(w.size()) == s.m() + 1);
    CHECK(std::abs(log_sum_exp(w)) < 1e-12);
    // Oracle: enumerate the full conditional from log_marginal + log CRP.
    std::vector<double> oracle(w.size(), -kInf);
    for (int k = 0; k <= s.m(); ++k) {
      std::vector<int> cand(s.phi);
      cand[i] = k;
      bool own_singleton = k == s.phi[i] && s.cluster_size(k) == 1;
      if (own_singleton) continue;
      const auto c = make_state(z, cand, gamma, 0.8, p + 1.5, psi, alpha);
      oracle[k] = log_marginal(c) + log_crp(compact_labels(cand), alpha);
    }
    const double norm = log_sum_exp(oracle);
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (std::isinf(oracle[k])) {
        CHECK(std::isinf(w[k]));
      } else {
        CHECK(std::abs(w[k] - (oracle[k] - norm)) < 1e-8);
      }
    }
  }
}

TEST_CASE("two-observation join versus new ratio") {
  RngStream rng(15, 1);
  const Matrix z = random_matrix(2, 2, rng);
  const Matrix psi = random_spd(2, rng);
  const double alpha = 1.7;
  const auto s = make_state(z, {0, 1}, {true, false}, 1.2, 4.5, psi, alpha);
  const auto w = gibbs_logweights(s, 1);
  const auto joined = make_state(z, {0, 0}, {true, false}, 1.2, 4.5, psi, alpha);
  const double expected = log_marginal(joined) - log_marginal(s) - std::log(alpha);
  CHECK(std::abs((w[0] - w[2]) - expected) < 1e-10);
}

TEST_CASE("flat likelihood gives the CRP prior weights") {
  RngStream rng(16, 1);
  const Matrix z = random_matrix(6, 3, rng);
  const double alpha = 25.0;
  const auto s = make_state(z, {0, 0, 1, 1, 1, 2}, {true, true, false}, 1.0, 5.0,
                            Matrix::Identity(3, 3), alpha);
  const auto w = gibbs_logweights(s, 0, std::nullopt, Likelihood::flat);
  CHECK(std::exp(w[3]) == doctest::Approx(alpha / (5 + alpha)).epsilon(1e-12));
  CHECK(std::exp(w[1]) == doctest::Approx(3 / (5 + alpha)).epsilon(1e-12));
}

TEST_CASE("restricted weights keep only the pair") {
  RngStream rng(17, 1);
  const Matrix z = random_matrix(6, 2, rng);
  const auto s = make_state(z, {0, 0, 1, 1, 2, 2}, {true, true}, 1.0, 4.0, Matrix::Identity(2, 2));
  const auto w = gibbs_logweights(s, 0, std::make_pair(0, 2));
  CHECK(std::isinf(w[1]));
  CHECK(std::isinf(w[3]));
  CHECK(std::abs(log_add_exp(w[0], w[2])) < 1e-12);
}

TEST_CASE("marginal terms are consistent") {
  RngStream rng(18, 1);
  const Matrix z = random_matrix(6, 4, rng);
  const auto s = make_state(z, {0, 1, 0, 1, 1, 0}, {false, true, true, false}, 1.0, 7.0,
                            random_spd(4, rng));
  const auto t = marginal_terms(s);
  const Matrix expected = t.v22 - t.v21 * t.v11.inverse() * t.v21.transpose();
  CHECK((t.v2given1 - expected).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(t.v_m11.size() == 2);
}

TEST_CASE("Monte Carlo prior integration oracle") {
  RngStream data_rng(19, 1);
  const Matrix z = random_matrix(2, 2, data_rng) * 0.8;
  const Matrix psi = random_spd(2, data_rng, 0.5);
  const double lambda = 1.5, eta = 5.0;
  const std::vector<std::vector<bool>> patterns{{true, false}, {false, true}, {false, false}};
  for (const auto& gamma : patterns) {
    for (const std::vector<int>& phi : {std::vector<int>{0, 1}, std::vector<int>{0, 0}}) {
      RngStream rng(20, 2);
      const int draws = 200000;
      std::vector<double> ll(draws);
      for (int d = 0; d < draws; ++d) ll[d] = prior_draw_loglik(z, phi, gamma, lambda, eta, psi, rng);
      const double c = *std::max_element(ll.begin(), ll.end());
      double sum = 0.0, sum2 = 0.0;
      for (double x : ll) {
        const double w = std::exp(x - c);
        sum += w;
        sum2 += w * w;
      }
      const double mean = sum / draws;
      const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
      const auto s = make_state(z, phi, gamma, lambda, eta, psi);
      const double exact = std::exp(log_marginal(s) - c);
      CHECK(std::abs(exact - mean) < 3.0 * se);
    }
  }
}
