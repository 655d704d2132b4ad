#include "dpmvs/mcmc_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "dpmvs/conjugate_posteriors.hpp"

namespace dpmvs {

namespace {

constexpr std::uint64_t kChainTag = 0x636861696eULL;

double log_sum_exp2(double a, double b) { return log_add_exp(a, b); }

/// Index drawn from unnormalized log weights.
int sample_log_weights(const std::vector<double>& w, RngStream& rng) {
  double mx = -kInf;
  for (double x : w) mx = std::max(mx, x);
  double total = 0.0;
  std::vector<double> e(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    e[k] = std::exp(w[k] - mx);
    total += e[k];
  }
  double u = rng.uniform() * total;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (e[k] == 0.0) continue;
    u -= e[k];
    if (u <= 0.0) return static_cast<int>(k);
  }
  for (std::size_t k = w.size(); k-- > 0;) {
    if (e[k] > 0.0) return static_cast<int>(k);
  }
  throw std::logic_error("all weights are zero");
}

bool accept_log_ratio(double log_ratio, RngStream& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

void add_local(LocalCluster& c, const Vector& z, const Matrix& zz) {
  c.count += 1;
  c.sum += z;
  c.outer += zz;
}

void remove_local(LocalCluster& c, const Vector& z, const Matrix& zz) {
  c.count -= 1;
  c.sum -= z;
  c.outer -= zz;
}

LocalCluster empty_local(int p1) {
  LocalCluster c;
  c.sum = Vector::Zero(p1);
  c.outer = Matrix::Zero(p1, p1);
  return c;
}

ClusterStats stats_of_rows(const Matrix& z, const std::vector<int>& rows) {
  ClusterStats s(static_cast<int>(z.cols()));
  for (int r : rows) s.add(z.row(r).transpose());
  return s;
}

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::vs: return "vs";
    case RunMode::novs: return "novs";
    case RunMode::cont: return "cont";
  }
  return "vs";
}

RunMode parse_run_mode(const std::string& name) {
  if (name == "vs") return RunMode::vs;
  if (name == "novs") return RunMode::novs;
  if (name == "cont") return RunMode::cont;
  throw std::invalid_argument("unknown mode '" + name + "' (expected vs, novs or cont)");
}

void McmcConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) {
    throw std::invalid_argument("burn_in must lie in [0, iterations)");
  }
  if (thin < 1) throw std::invalid_argument("thin must be at least 1");
  if (n_chains < 1) throw std::invalid_argument("n_chains must be at least 1");
  if (!(s_alpha > 0 && s_lambda > 0 && s_eta > 0)) {
    throw std::invalid_argument("random-walk scales must be positive");
  }
  if (!(swap_prob >= 0.0 && swap_prob <= 1.0)) throw std::invalid_argument("swap_prob must lie in [0, 1]");
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  if (L_g < 0) throw std::invalid_argument("L_g must be non-negative (0 selects the default)");
  if (z_block < 1) throw std::invalid_argument("z_block must be at least 1");
}

int McmcConfig::gamma_updates(int p) const { return L_g > 0 ? L_g : std::max(10, p / 2); }

const char* update_name(Update u) {
  switch (u) {
    case Update::latent: return "latent";
    case Update::psi: return "psi";
    case Update::lambda: return "lambda";
    case Update::eta: return "eta";
    case Update::alpha: return "alpha";
    case Update::gamma: return "gamma";
    case Update::split_merge: return "split_merge";
    case Update::joint: return "joint";
    case Update::count: break;
  }
  return "?";
}

double AcceptanceCounter::rate(Update u) const {
  const auto k = static_cast<std::size_t>(u);
  return attempts[k] > 0 ? static_cast<double>(accepts[k]) / static_cast<double>(attempts[k]) : 0.0;
}

// --- gamma proposal -------------------------------------------------------------

double log_gamma_proposal_density(const std::vector<bool>& from, const std::vector<bool>& to,
                                  double swap_prob) {
  const int p = static_cast<int>(from.size());
  std::vector<int> diff;
  for (int j = 0; j < p; ++j) {
    if (from[j] != to[j]) diff.push_back(j);
  }
  const int ones = count_informative(from);
  auto opposite = [&](int j) { return from[j] ? p - ones : ones; };
  if (diff.size() == 1) {
    const double stay = opposite(diff[0]) > 0 ? 1.0 - swap_prob : 1.0;
    return stay > 0.0 ? std::log(stay / p) : -kInf;
  }
  if (diff.size() == 2) {
    const int j = diff[0], k = diff[1];
    if (from[j] == from[k] || swap_prob <= 0.0) return -kInf;
    return std::log(swap_prob / p * (1.0 / opposite(j) + 1.0 / opposite(k)));
  }
  return -kInf;
}

GammaProposal propose_gamma(const std::vector<bool>& gamma, double swap_prob, RngStream& rng) {
  const int p = static_cast<int>(gamma.size());
  GammaProposal out;
  out.gamma = gamma;
  const int j = static_cast<int>(rng.index(static_cast<std::size_t>(p)));
  std::vector<int> opposite;
  for (int k = 0; k < p; ++k) {
    if (gamma[k] != gamma[j]) opposite.push_back(k);
  }
  out.gamma[j] = !out.gamma[j];
  if (!opposite.empty() && rng.uniform() < swap_prob) {
    const int k = opposite[rng.index(opposite.size())];
    out.gamma[k] = !out.gamma[k];
  }
  out.log_forward = log_gamma_proposal_density(gamma, out.gamma, swap_prob);
  out.log_reverse = log_gamma_proposal_density(out.gamma, gamma, swap_prob);
  return out;
}

// --- sampler setup ----------------------------------------------------------------

PriorConfig prior_for_mode(const PriorConfig& prior, RunMode mode) {
  PriorConfig out = prior;
  if (mode == RunMode::novs) std::fill(out.rho.begin(), out.rho.end(), 1.0);
  return out;
}

Sampler::Sampler(const Dataset& ds, const PriorConfig& prior, const McmcConfig& cfg,
                 std::uint64_t chain_index)
    : prior_(prior_for_mode(prior, cfg.mode)),
      cfg_(cfg),
      rng_(cfg.seed, mix_stream_id({kChainTag, chain_index})) {
  cfg_.validate();
  prior_.validate(ds.cols());
  const Matrix z = initialize_latent(ds, rng_);
  state_ = initial_state(z, prior_, rng_);
  setup(&ds);
}

Sampler::Sampler(ChainState state, const PriorConfig& prior, const McmcConfig& cfg, RngStream rng,
                 const Dataset* ds)
    : state_(std::move(state)), prior_(prior_for_mode(prior, cfg.mode)), cfg_(cfg), rng_(rng) {
  cfg_.validate();
  prior_.validate(state_.p());
  if (cfg_.mode == RunMode::novs) std::fill(state_.gamma.begin(), state_.gamma.end(), true);
  setup(ds);
}

void Sampler::setup(const Dataset* ds) {
  z_block_ = cfg_.z_block;
  latent_rows_.clear();
  if (ds == nullptr) return;
  for (int i = 0; i < ds->rows(); ++i) {
    LatentRow row{i, {}};
    for (int j = 0; j < ds->cols(); ++j) {
      const auto iv = latent_interval(*ds, i, j);
      if (iv.is_latent()) row.cells.push_back({j, iv.lo, iv.hi});
    }
    if (!row.cells.empty()) latent_rows_.push_back(std::move(row));
  }
}

void Sampler::count(Update u, bool accepted) {
  const auto k = static_cast<std::size_t>(u);
  ++counter_.attempts[k];
  if (accepted) ++counter_.accepts[k];
}

double Sampler::current_log_marginal() const {
  return MarginalModel(state_.hyper, state_.gamma, lik_).log_marginal(state_.stats);
}

double Sampler::log_gamma_prior(const std::vector<bool>& gamma) const {
  double total = 0.0;
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    const double r = prior_.rho[j];
    const double pr = gamma[j] ? r : 1.0 - r;
    if (pr <= 0.0) return -kInf;
    total += std::log(pr);
  }
  return total;
}

double Sampler::log_alpha_target(double alpha) const {
  return state_.m() * std::log(alpha) + std::lgamma(alpha) - std::lgamma(alpha + state_.n()) +
         log_gamma_pdf(alpha, prior_.a_alpha, prior_.b_alpha);
}

// --- latent update ------------------------------------------------------------------

bool Sampler::update_latent() {
  bool any = false;
  const std::size_t total = latent_rows_.size();
  for (std::size_t begin = 0; begin < total; begin += static_cast<std::size_t>(z_block_)) {
    const std::size_t end = std::min(total, begin + static_cast<std::size_t>(z_block_));
    const bool acc = latent_block(begin, end);
    count(Update::latent, acc);
    ++window_attempts_;
    if (acc) ++window_accepts_;
    any = any || acc;
  }
  return any;
}

bool Sampler::latent_block(std::size_t begin, std::size_t end) {
  // theta is drawn from statistics that exclude the block, so it does not
  // depend on the values being updated.
  std::vector<ClusterStats> clusters = state_.stats.all();
  ClusterStats global = state_.stats.global();
  for (std::size_t b = begin; b < end; ++b) {
    const int i = latent_rows_[b].row;
    const Vector zi = state_.z.row(i).transpose();
    clusters[state_.phi[i]].remove(zi);
    global.remove(zi);
  }
  const auto theta = sample_theta(clusters, global, state_.gamma, state_.hyper, std::nullopt, rng_);

  std::vector<std::optional<std::pair<Matrix, Vector>>> canonical(static_cast<std::size_t>(state_.m()));
  auto params = [&](int m) -> const std::pair<Matrix, Vector>& {
    if (!canonical[m]) canonical[m] = std::make_pair(theta.full_precision(m), theta.full_canonical(m));
    return *canonical[m];
  };

  double log_forward = 0.0;
  double log_reverse = 0.0;
  std::vector<Vector> old_rows;
  std::vector<Vector> new_rows;
  for (std::size_t b = begin; b < end; ++b) {
    const auto& lr = latent_rows_[b];
    const auto& [q, bvec] = params(state_.phi[lr.row]);
    const Vector x = state_.z.row(lr.row).transpose();
    Vector y = x;
    auto conditional = [&](const Vector& w, int j) {
      const double prec = q(j, j);
      const double mean = (bvec(j) - q.row(j).dot(w) + prec * w(j)) / prec;
      return std::make_pair(mean, 1.0 / prec);
    };
    for (const auto& cell : lr.cells) {
      const auto [mean, var] = conditional(y, cell.col);
      y(cell.col) = sample_truncated_normal(mean, var, cell.lo, cell.hi, rng_);
      log_forward += log_truncated_normal_pdf(y(cell.col), mean, var, cell.lo, cell.hi);
    }
    Vector w = y;
    for (const auto& cell : lr.cells) {
      const auto [mean, var] = conditional(w, cell.col);
      log_reverse += log_truncated_normal_pdf(x(cell.col), mean, var, cell.lo, cell.hi);
      w(cell.col) = x(cell.col);
    }
    old_rows.push_back(x);
    new_rows.push_back(std::move(y));
  }

  const double lm_old = current_log_marginal();
  for (std::size_t b = begin; b < end; ++b) state_.set_row(latent_rows_[b].row, new_rows[b - begin]);
  const double lm_new = current_log_marginal();
  if (accept_log_ratio(lm_new - lm_old + log_reverse - log_forward, rng_)) return true;
  for (std::size_t b = begin; b < end; ++b) state_.set_row(latent_rows_[b].row, old_rows[b - begin]);
  return false;
}

// --- Psi update ---------------------------------------------------------------------

bool Sampler::update_psi() {
  const int p = state_.p();
  const Matrix psi_tilde = prior_.wishart_df * prior_.wishart_scale;
  const auto theta = sample_theta(state_, psi_tilde, rng_);
  const auto perm = reorder_for_gamma(state_.gamma);
  const int p1 = count_informative(state_.gamma);
  const int p2 = p - p1;
  const double big_n = prior_.wishart_df;
  const double eta = state_.hyper.eta;
  const int m = theta.clusters();

  const Matrix pp = prior_.wishart_scale(perm, perm);
  const Matrix p11_inv = cholesky(pp.topLeftCorner(p1, p1)).inverse();
  const Matrix p21 = pp.bottomLeftCorner(p2, p1);
  const Matrix t0 = p21 * p11_inv;
  const Matrix p2g1 = pp.bottomRightCorner(p2, p2) - t0 * p21.transpose();
  const Matrix p2g1_inv = cholesky(p2g1).inverse();

  // Conditional law of (Psi11, T = Psi21 Psi11^{-1}, Psi2|1) given theta.
  Matrix a_inv, t_mean, pstar;
  Matrix residual = Matrix::Zero(p1, p1);
  if (p2 > 0) {
    const Matrix a = p2g1_inv + theta.q22;
    a_inv = cholesky(a).inverse();
    t_mean = a_inv * (p2g1_inv * t0 - theta.q21);
    const Matrix q22_inv = cholesky(theta.q22).inverse();
    residual = t0.transpose() * p2g1_inv * t0 + theta.q21.transpose() * q22_inv * theta.q21 -
               t_mean.transpose() * a * t_mean;
  }
  const double df11 = big_n + m * (eta - p2) + p2;
  const double df2 = big_n - p1 + eta;
  if (p1 > 0) {
    Matrix pstar_inv = p11_inv + residual;
    for (int k = 0; k < m; ++k) pstar_inv += cholesky(theta.sigma11[k]).inverse();
    pstar_inv = 0.5 * (pstar_inv + pstar_inv.transpose());
    pstar = cholesky(pstar_inv).inverse();
  }

  auto to_blocks = [&](const Matrix& psi) {
    const Matrix q = psi(perm, perm);
    return q;
  };
  auto log_density = [&](const Matrix& psi) {
    const Matrix q = to_blocks(psi);
    const Matrix psi11 = q.topLeftCorner(p1, p1);
    double total = 0.0;
    Matrix psi11_inv(0, 0);
    if (p1 > 0) {
      const auto chol = cholesky(psi11);
      psi11_inv = chol.inverse();
      total += log_wishart_pdf(psi11, pstar, df11) - p2 * chol.log_det;
    }
    if (p2 > 0) {
      const Matrix psi21 = q.bottomLeftCorner(p2, p1);
      const Matrix t = psi21 * psi11_inv;
      Matrix psi2g1 = q.bottomRightCorner(p2, p2) - t * psi21.transpose();
      psi2g1 = 0.5 * (psi2g1 + psi2g1.transpose());
      if (p1 > 0) total += log_matrix_normal_pdf(t, t_mean, a_inv, psi11_inv);
      total += log_wishart_pdf(psi2g1, a_inv, df2);
    }
    return total;
  };

  Matrix qnew(p, p);
  Matrix psi11_new(p1, p1);
  if (p1 > 0) {
    psi11_new = sample_wishart(pstar, df11, rng_);
    qnew.topLeftCorner(p1, p1) = psi11_new;
  }
  if (p2 > 0) {
    Matrix t(p2, p1);
    if (p1 > 0) {
      t = sample_matrix_normal(t_mean, a_inv, RowParam::covariance, cholesky(psi11_new).inverse(), rng_);
    }
    const Matrix psi2g1 = sample_wishart(a_inv, df2, rng_);
    const Matrix psi21 = t * psi11_new;
    qnew.bottomLeftCorner(p2, p1) = psi21;
    qnew.topRightCorner(p1, p2) = psi21.transpose();
    qnew.bottomRightCorner(p2, p2) = psi2g1 + t * psi21.transpose();
  }
  Matrix psi_new(p, p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) psi_new(perm[r], perm[c]) = qnew(r, c);
  }
  psi_new = 0.5 * (psi_new + psi_new.transpose());

  Hyperparams proposed = state_.hyper;
  proposed.psi = psi_new;
  const double lm_old = current_log_marginal();
  const double lm_new = MarginalModel(proposed, state_.gamma, lik_).log_marginal(state_.stats);
  const double log_ratio = lm_new - lm_old +
                           log_wishart_pdf(psi_new, prior_.wishart_scale, big_n) -
                           log_wishart_pdf(state_.hyper.psi, prior_.wishart_scale, big_n) +
                           log_density(state_.hyper.psi) - log_density(psi_new);
  const bool acc = accept_log_ratio(log_ratio, rng_);
  if (acc) state_.hyper.psi = psi_new;
  count(Update::psi, acc);
  return acc;
}

// --- scalar hyperparameters ---------------------------------------------------------

std::pair<bool, bool> Sampler::update_lambda_eta() {
  const int p = state_.p();
  bool acc_lambda = false, acc_eta = false;
  {
    const double lambda = state_.hyper.lambda;
    const double proposed = std::exp(std::log(lambda) + cfg_.s_lambda * rng_.normal());
    Hyperparams h = state_.hyper;
    h.lambda = proposed;
    const double log_ratio = MarginalModel(h, state_.gamma, lik_).log_marginal(state_.stats) -
                             current_log_marginal() +
                             log_gamma_pdf(proposed, prior_.a_lambda, prior_.b_lambda) -
                             log_gamma_pdf(lambda, prior_.a_lambda, prior_.b_lambda) +
                             std::log(proposed) - std::log(lambda);
    acc_lambda = accept_log_ratio(log_ratio, rng_);
    if (acc_lambda) state_.hyper.lambda = proposed;
    count(Update::lambda, acc_lambda);
  }
  {
    const double excess = state_.hyper.eta - (p + 1);
    const double proposed = std::exp(std::log(excess) + cfg_.s_eta * rng_.normal());
    Hyperparams h = state_.hyper;
    h.eta = p + 1 + proposed;
    double log_ratio = -kInf;
    if (h.eta > p + 1) {
      log_ratio = MarginalModel(h, state_.gamma, lik_).log_marginal(state_.stats) -
                  current_log_marginal() + log_gamma_pdf(proposed, prior_.a_eta, prior_.b_eta) -
                  log_gamma_pdf(excess, prior_.a_eta, prior_.b_eta) + std::log(proposed) -
                  std::log(excess);
    }
    acc_eta = accept_log_ratio(log_ratio, rng_);
    if (acc_eta) state_.hyper.eta = h.eta;
    count(Update::eta, acc_eta);
  }
  return {acc_lambda, acc_eta};
}

bool Sampler::update_alpha() {
  const double alpha = state_.hyper.alpha;
  const double proposed = std::exp(std::log(alpha) + cfg_.s_alpha * rng_.normal());
  const double log_ratio = log_alpha_target(proposed) - log_alpha_target(alpha) +
                           std::log(proposed) - std::log(alpha);
  const bool acc = accept_log_ratio(log_ratio, rng_);
  if (acc) state_.hyper.alpha = proposed;
  count(Update::alpha, acc);
  return acc;
}

bool Sampler::update_gamma() {
  if (state_.p() == 0) return false;
  const auto prop = propose_gamma(state_.gamma, cfg_.swap_prob, rng_);
  const double prior_diff = log_gamma_prior(prop.gamma) - log_gamma_prior(state_.gamma);
  bool acc = false;
  if (std::isfinite(prior_diff)) {
    const double lm_new = MarginalModel(state_.hyper, prop.gamma, lik_).log_marginal(state_.stats);
    acc = accept_log_ratio(lm_new - current_log_marginal() + prior_diff + prop.log_reverse -
                               prop.log_forward,
                           rng_);
  }
  if (acc) state_.gamma = prop.gamma;
  count(Update::gamma, acc);
  return acc;
}

// --- partition updates ------------------------------------------------------------------

struct Sampler::SplitProposal {
  bool split = false;
  std::vector<int> phi;
  std::vector<int> removed;  // current labels replaced by the proposal
  std::vector<ClusterStats> added;
  double log_q_forward = 0.0;
  double log_q_reverse = 0.0;
  double log_crp = 0.0;
};

double Sampler::launch_and_score(const MarginalModel& model, int i, int i2,
                                 const std::vector<int>& rows, std::vector<char>& side,
                                 bool sample_final) {
  const int p1 = model.p1();
  const Vector a = model.local_row(state_.z, i);
  const Vector b = model.local_row(state_.z, i2);
  std::vector<Vector> zl;
  std::vector<Matrix> zz;
  zl.reserve(rows.size());
  zz.reserve(rows.size());
  std::array<LocalCluster, 2> c{empty_local(p1), empty_local(p1)};
  add_local(c[0], a, a * a.transpose());
  add_local(c[1], b, b * b.transpose());
  std::vector<char> cur(rows.size());
  for (std::size_t s = 0; s < rows.size(); ++s) {
    zl.push_back(model.local_row(state_.z, rows[s]));
    zz.push_back(zl.back() * zl.back().transpose());
    cur[s] = (zl[s] - a).squaredNorm() <= (zl[s] - b).squaredNorm() ? 0 : 1;
    add_local(c[cur[s]], zl[s], zz[s]);
  }
  model.refresh(c[0]);
  model.refresh(c[1]);

  double log_q = 0.0;
  auto visit = [&](std::size_t s, int mode) {
    // mode 0: sample; 1: sample and score; 2: score a fixed target
    remove_local(c[cur[s]], zl[s], zz[s]);
    model.refresh(c[cur[s]]);
    std::array<double, 2> with{};
    std::array<double, 2> w{};
    for (int k = 0; k < 2; ++k) {
      with[k] = model.cluster_term(c[k].count + 1, c[k].sum + zl[s], c[k].outer + zz[s]);
      w[k] = std::log(static_cast<double>(c[k].count)) + with[k] - c[k].term;
    }
    const double norm = log_sum_exp2(w[0], w[1]);
    int k;
    if (mode == 2) {
      k = side[s];
    } else {
      k = std::log(rng_.uniform()) < w[0] - norm ? 0 : 1;
    }
    if (mode != 0) log_q += w[k] - norm;
    cur[s] = static_cast<char>(k);
    add_local(c[k], zl[s], zz[s]);
    c[k].term = with[k];
  };
  for (int sweep = 0; sweep < cfg_.L; ++sweep) {
    for (std::size_t s = 0; s < rows.size(); ++s) visit(s, 0);
  }
  for (std::size_t s = 0; s < rows.size(); ++s) visit(s, sample_final ? 1 : 2);
  if (sample_final) side = cur;
  return log_q;
}

Sampler::SplitProposal Sampler::propose_split_merge(int i, int i2, const MarginalModel& forward_model,
                                                    const MarginalModel& reverse_model) {
  SplitProposal sp;
  const int ci = state_.phi[i];
  const int cj = state_.phi[i2];
  const double log_alpha = std::log(state_.hyper.alpha);
  std::vector<int> rows;
  for (int l = 0; l < state_.n(); ++l) {
    if ((state_.phi[l] == ci || state_.phi[l] == cj) && l != i && l != i2) rows.push_back(l);
  }
  sp.phi = state_.phi;
  if (ci == cj) {
    sp.split = true;
    std::vector<char> side(rows.size());
    sp.log_q_forward = launch_and_score(forward_model, i, i2, rows, side, true);
    std::vector<int> part0{i}, part1{i2};
    for (std::size_t s = 0; s < rows.size(); ++s) (side[s] ? part1 : part0).push_back(rows[s]);
    const int new_label = state_.m();
    for (int r : part1) sp.phi[r] = new_label;
    sp.removed = {ci};
    sp.added = {stats_of_rows(state_.z, part0), stats_of_rows(state_.z, part1)};
    sp.log_crp = log_alpha + std::lgamma(static_cast<double>(part0.size())) +
                 std::lgamma(static_cast<double>(part1.size())) -
                 std::lgamma(static_cast<double>(state_.cluster_size(ci)));
  } else {
    std::vector<char> side(rows.size());
    for (std::size_t s = 0; s < rows.size(); ++s) side[s] = state_.phi[rows[s]] == cj ? 1 : 0;
    sp.log_q_reverse = launch_and_score(reverse_model, i, i2, rows, side, false);
    for (auto& label : sp.phi) {
      if (label == cj) label = ci;
      if (label > cj) --label;
    }
    sp.removed = {ci, cj};
    ClusterStats merged = state_.stats.cluster(ci);
    const auto& other = state_.stats.cluster(cj);
    merged.count += other.count;
    merged.sum += other.sum;
    merged.outer += other.outer;
    sp.added = {merged};
    const int ni = state_.cluster_size(ci);
    const int nj = state_.cluster_size(cj);
    sp.log_crp = -(log_alpha + std::lgamma(static_cast<double>(ni)) +
                   std::lgamma(static_cast<double>(nj)) - std::lgamma(static_cast<double>(ni + nj)));
  }
  return sp;
}

bool Sampler::split_merge() {
  const int n = state_.n();
  if (n < 2) return false;
  const int i = static_cast<int>(rng_.index(static_cast<std::size_t>(n)));
  int i2 = static_cast<int>(rng_.index(static_cast<std::size_t>(n - 1)));
  if (i2 >= i) ++i2;
  const MarginalModel model(state_.hyper, state_.gamma, lik_);
  const auto sp = propose_split_merge(i, i2, model, model);
  double delta = 0.0;
  for (const auto& c : sp.added) delta += model.cluster_term(c);
  for (int label : sp.removed) delta -= model.cluster_term(state_.stats.cluster(label));
  const bool acc =
      accept_log_ratio(delta + sp.log_crp + sp.log_q_reverse - sp.log_q_forward, rng_);
  if (acc) state_.set_partition(sp.phi);
  count(Update::split_merge, acc);
  return acc;
}

void Sampler::gibbs_sweep() {
  const MarginalModel model(state_.hyper, state_.gamma, lik_);
  std::vector<LocalCluster> locals;
  locals.reserve(static_cast<std::size_t>(state_.m()) + 1);
  for (const auto& c : state_.stats.all()) locals.push_back(model.local(c));
  const double log_alpha = std::log(state_.hyper.alpha);
  std::vector<double> w, with;
  for (int i = 0; i < state_.n(); ++i) {
    const Vector zi = model.local_row(state_.z, i);
    const Matrix zz = zi * zi.transpose();
    const int old = state_.phi[i];
    remove_local(locals[old], zi, zz);
    model.refresh(locals[old]);
    const int m = static_cast<int>(locals.size());
    w.assign(static_cast<std::size_t>(m + 1), -kInf);
    with.assign(static_cast<std::size_t>(m + 1), 0.0);
    for (int k = 0; k < m; ++k) {
      if (locals[k].count == 0) continue;
      with[k] = model.cluster_term(locals[k].count + 1, locals[k].sum + zi, locals[k].outer + zz);
      w[k] = std::log(static_cast<double>(locals[k].count)) + with[k] - locals[k].term;
    }
    with[m] = model.cluster_term(1, zi, zz);
    w[m] = log_alpha + with[m];
    const int k = sample_log_weights(w, rng_);
    if (k == m) locals.push_back(empty_local(model.p1()));
    add_local(locals[k], zi, zz);
    locals[k].term = with[k];
    state_.move(i, k);
    if (k != old && locals[old].count == 0) locals.erase(locals.begin() + old);
  }
}

bool Sampler::joint_gamma_phi() {
  const int n = state_.n();
  if (n < 2 || state_.p() == 0) return false;
  GammaProposal gp;
  if (forced_gamma_) {
    gp.gamma = *forced_gamma_;
  } else {
    gp = propose_gamma(state_.gamma, cfg_.swap_prob, rng_);
  }
  const double prior_diff = log_gamma_prior(gp.gamma) - log_gamma_prior(state_.gamma);
  const int i = static_cast<int>(rng_.index(static_cast<std::size_t>(n)));
  int i2 = static_cast<int>(rng_.index(static_cast<std::size_t>(n - 1)));
  if (i2 >= i) ++i2;
  bool acc = false;
  if (std::isfinite(prior_diff)) {
    const MarginalModel model_new(state_.hyper, gp.gamma, lik_);
    const MarginalModel model_old(state_.hyper, state_.gamma, lik_);
    const auto sp = propose_split_merge(i, i2, model_new, model_old);
    std::vector<ClusterStats> clusters;
    for (int k = 0; k < state_.m(); ++k) {
      if (std::find(sp.removed.begin(), sp.removed.end(), k) == sp.removed.end()) {
        clusters.push_back(state_.stats.cluster(k));
      }
    }
    clusters.insert(clusters.end(), sp.added.begin(), sp.added.end());
    const double lm_new = model_new.log_marginal(clusters, state_.stats.global());
    const double lm_old = model_old.log_marginal(state_.stats);
    const double log_ratio = lm_new - lm_old + prior_diff + sp.log_crp + gp.log_reverse -
                             gp.log_forward + sp.log_q_reverse - sp.log_q_forward;
    acc = accept_log_ratio(log_ratio, rng_);
    if (acc) {
      state_.gamma = gp.gamma;
      state_.set_partition(sp.phi);
    }
  }
  count(Update::joint, acc);
  return acc;
}

// --- schedule -------------------------------------------------------------------------

std::array<bool, kUpdateCount> Sampler::iterate(int it) {
  std::array<bool, kUpdateCount> acc{};
  const bool select = cfg_.mode != RunMode::novs;
  if (switches_.latent && !latent_rows_.empty()) acc[0] = update_latent();
  if (switches_.psi) acc[static_cast<int>(Update::psi)] = update_psi();
  if (switches_.lambda_eta) {
    const auto [l, e] = update_lambda_eta();
    acc[static_cast<int>(Update::lambda)] = l;
    acc[static_cast<int>(Update::eta)] = e;
  }
  if (switches_.alpha) acc[static_cast<int>(Update::alpha)] = update_alpha();
  if (select && switches_.gamma) {
    const int reps = cfg_.gamma_updates(state_.p());
    bool any = false;
    for (int r = 0; r < reps; ++r) any = update_gamma() || any;
    acc[static_cast<int>(Update::gamma)] = any;
  }
  if (switches_.split_merge) acc[static_cast<int>(Update::split_merge)] = split_merge();
  if (switches_.gibbs) gibbs_sweep();
  if (select && switches_.joint && (cfg_.joint_every_iteration || it % 2 == 0)) {
    acc[static_cast<int>(Update::joint)] = joint_gamma_phi();
  }
  if (cfg_.recompute_every > 0 && it % cfg_.recompute_every == 0) state_.recompute_stats();
  if (cfg_.adapt_z_block && it <= cfg_.burn_in && it % 50 == 0 && window_attempts_ > 0) {
    const double rate = static_cast<double>(window_accepts_) / static_cast<double>(window_attempts_);
    const int max_block = std::max<int>(1, static_cast<int>(latent_rows_.size()));
    if (rate > 0.6) z_block_ = std::min(max_block, z_block_ * 2);
    if (rate < 0.2) z_block_ = std::max(1, z_block_ / 2);
    window_attempts_ = window_accepts_ = 0;
  }
  return acc;
}

SampleRecord Sampler::record(int it, const std::array<bool, kUpdateCount>& accept) const {
  SampleRecord r;
  r.iteration = it;
  r.gamma = state_.gamma;
  r.phi = state_.phi;
  r.m = state_.m();
  r.lambda = state_.hyper.lambda;
  r.eta = state_.hyper.eta;
  r.alpha = state_.hyper.alpha;
  r.log_marginal = current_log_marginal();
  r.accept = accept;
  return r;
}

void Sampler::run(const std::function<void(const SampleRecord&)>& sink) {
  for (int it = 1; it <= cfg_.iterations; ++it) {
    const auto acc = iterate(it);
    if (it > cfg_.burn_in && (it - cfg_.burn_in - 1) % cfg_.thin == 0) sink(record(it, acc));
  }
}

std::vector<SampleRecord> run_chain(const Dataset& ds, const PriorConfig& prior,
                                    const McmcConfig& cfg, std::uint64_t chain_index) {
  Sampler sampler(ds, prior, cfg, chain_index);
  std::vector<SampleRecord> out;
  sampler.run([&](const SampleRecord& r) { out.push_back(r); });
  return out;
}

std::vector<std::vector<SampleRecord>> run_chains(const Dataset& ds, const PriorConfig& prior,
                                                  const McmcConfig& cfg, int workers) {
  std::vector<std::vector<SampleRecord>> out(static_cast<std::size_t>(cfg.n_chains));
  std::vector<std::exception_ptr> errors(out.size());
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < cfg.n_chains; k = next++) {
      try {
        out[k] = run_chain(ds, prior, cfg, static_cast<std::uint64_t>(k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min(workers, cfg.n_chains));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace dpmvs
