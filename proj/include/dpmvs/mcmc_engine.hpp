#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpmvs/data_model.hpp"
#include "dpmvs/marginal_likelihood.hpp"
#include "dpmvs/model_state.hpp"

namespace dpmvs {

enum class RunMode { vs, novs, cont };

std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string& name);

struct McmcConfig {
  int iterations = 8000;
  int burn_in = 3000;
  int thin = 1;
  std::uint64_t seed = 20240611;
  int n_chains = 1;
  double s_alpha = 1.0;
  double s_lambda = 0.5;
  double s_eta = 1.0;
  double swap_prob = 0.5;
  int L = 3;
  int L_g = 0;  // 0 means max(10, p / 2)
  int z_block = 1;
  bool adapt_z_block = true;
  bool joint_every_iteration = false;
  int recompute_every = 1000;
  RunMode mode = RunMode::vs;

  void validate() const;
  int gamma_updates(int p) const;
};

/// Update kinds, in schedule order; used to index accept flags and counters.
enum class Update : int { latent, psi, lambda, eta, alpha, gamma, split_merge, joint, count };
inline constexpr int kUpdateCount = static_cast<int>(Update::count);
const char* update_name(Update u);

struct SampleRecord {
  int iteration = 0;
  std::vector<bool> gamma;
  std::vector<int> phi;
  int m = 0;
  double lambda = 0.0, eta = 0.0, alpha = 0.0;
  double log_marginal = 0.0;
  std::array<bool, kUpdateCount> accept{};
};

struct AcceptanceCounter {
  std::array<long, kUpdateCount> attempts{};
  std::array<long, kUpdateCount> accepts{};
  double rate(Update u) const;
};

/// Which updates run in an iteration. Turning pieces off gives the reduced
/// samplers used in the enumeration and prior-reproduction checks.
struct UpdateSwitches {
  bool latent = true, psi = true, lambda_eta = true, alpha = true;
  bool gamma = true, split_merge = true, gibbs = true, joint = true;
};

/// Proposed gamma plus the log proposal densities in both directions.
struct GammaProposal {
  std::vector<bool> gamma;
  double log_forward = 0.0;
  double log_reverse = 0.0;
};

GammaProposal propose_gamma(const std::vector<bool>& gamma, double swap_prob, RngStream& rng);
/// log d(to | from) under the add/delete/swap mechanism; -inf if unreachable.
double log_gamma_proposal_density(const std::vector<bool>& from, const std::vector<bool>& to,
                                  double swap_prob);

class Sampler {
 public:
  /// Starts from initialize_latent + initial_state; ds must be standardized.
  Sampler(const Dataset& ds, const PriorConfig& prior, const McmcConfig& cfg,
          std::uint64_t chain_index = 0);
  /// Starts from an explicit state. Without a dataset no cell is latent.
  Sampler(ChainState state, const PriorConfig& prior, const McmcConfig& cfg, RngStream rng,
          const Dataset* ds = nullptr);

  UpdateSwitches& switches() { return switches_; }
  void set_likelihood(Likelihood lik) { lik_ = lik; }
  /// Test hook: the gamma stage of the joint update proposes this value.
  void force_joint_gamma(std::optional<std::vector<bool>> gamma) { forced_gamma_ = std::move(gamma); }

  bool update_latent();
  bool update_psi();
  std::pair<bool, bool> update_lambda_eta();
  bool update_alpha();
  bool update_gamma();
  bool split_merge();
  void gibbs_sweep();
  bool joint_gamma_phi();

  /// One full iteration of the schedule; `it` is 1-based.
  std::array<bool, kUpdateCount> iterate(int it);
  /// Runs cfg.iterations iterations, handing post-burn-in records to `sink`.
  void run(const std::function<void(const SampleRecord&)>& sink);

  SampleRecord record(int it, const std::array<bool, kUpdateCount>& accept) const;
  const ChainState& state() const { return state_; }
  ChainState& mutable_state() { return state_; }
  const AcceptanceCounter& acceptance() const { return counter_; }
  const PriorConfig& prior() const { return prior_; }
  int z_block() const { return z_block_; }
  double current_log_marginal() const;

 private:
  struct LatentCell {
    int col;
    double lo, hi;
  };
  struct LatentRow {
    int row;
    std::vector<LatentCell> cells;
  };
  struct SplitProposal;

  void setup(const Dataset* ds);
  void count(Update u, bool accepted);
  double log_gamma_prior(const std::vector<bool>& gamma) const;
  double log_alpha_target(double alpha) const;
  bool latent_block(std::size_t begin, std::size_t end);
  SplitProposal propose_split_merge(int i, int i2, const MarginalModel& forward_model,
                                    const MarginalModel& reverse_model);
  double launch_and_score(const MarginalModel& model, int i, int i2, const std::vector<int>& rows,
                          std::vector<char>& side, bool sample_final);

  ChainState state_;
  PriorConfig prior_;
  McmcConfig cfg_;
  RngStream rng_;
  UpdateSwitches switches_;
  Likelihood lik_ = Likelihood::full;
  std::optional<std::vector<bool>> forced_gamma_;
  std::vector<LatentRow> latent_rows_;
  int z_block_ = 1;
  long window_attempts_ = 0;
  long window_accepts_ = 0;
  AcceptanceCounter counter_;
};

/// Prior adjusted for the run mode (novs forces rho = 1).
PriorConfig prior_for_mode(const PriorConfig& prior, RunMode mode);

std::vector<SampleRecord> run_chain(const Dataset& ds, const PriorConfig& prior,
                                    const McmcConfig& cfg, std::uint64_t chain_index = 0);

/// cfg.n_chains chains on up to `workers` threads; chain k uses stream k.
std::vector<std::vector<SampleRecord>> run_chains(const Dataset& ds, const PriorConfig& prior,
                                                  const McmcConfig& cfg, int workers);

}  // namespace dpmvs
