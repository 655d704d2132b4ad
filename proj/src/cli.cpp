#include "dpmvs/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "dpmvs/data_model.hpp"
#include "dpmvs/mcmc_engine.hpp"
#include "dpmvs/posterior_summary.hpp"
#include "dpmvs/sample_io.hpp"
#include "dpmvs/sim_bench.hpp"

namespace dpmvs {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
  }
  return hex.str();
}

json RunManifest::to_json() const {
  json in = json::array(), art = json::array();
  for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"sha256", h}});
  for (const auto& [p, h] : artifacts) art.push_back({{"path", p}, {"sha256", h}});
  return json{{"command", command}, {"argv", argv},    {"config", config},
              {"seed", seed},       {"inputs", in},    {"artifacts", art},
              {"version", version}, {"wall_clock_seconds", wall_clock_seconds}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.value("config", json::object());
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.value("inputs", json::array())) {
    m.inputs.emplace_back(e.at("path").get<std::string>(), e.at("sha256").get<std::string>());
  }
  for (const auto& e : j.value("artifacts", json::array())) {
    m.artifacts.emplace_back(e.at("path").get<std::string>(), e.at("sha256").get<std::string>());
  }
  m.version = j.value("version", std::string{});
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  return m;
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open manifest " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw UsageError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void RunManifest::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

namespace {

using Clock = std::chrono::steady_clock;

const std::vector<std::string> kPathFlags = {"--data", "--schema", "--config", "--samples-dir"};

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

/// Input paths become absolute so a manifest can be replayed from anywhere.
std::vector<std::string> normalized_argv(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < args.size(); ++k) {
    const std::string& a = args[k];
    const auto eq = a.find('=');
    const std::string flag = a.substr(0, eq);
    const bool is_path = std::find(kPathFlags.begin(), kPathFlags.end(), flag) != kPathFlags.end();
    if (is_path && eq != std::string::npos) {
      out.push_back(flag);
      out.push_back(fs::absolute(a.substr(eq + 1)).lexically_normal().string());
    } else if (is_path && k + 1 < args.size()) {
      out.push_back(a);
      out.push_back(fs::absolute(args[++k]).lexically_normal().string());
    } else {
      out.push_back(a);
    }
  }
  return out;
}

std::vector<std::string> with_out_dir(std::vector<std::string> args, const std::string& dir) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--out-dir") {
      ++k;
      continue;
    }
    if (args[k].rfind("--out-dir=", 0) == 0) continue;
    out.push_back(args[k]);
  }
  out.push_back("--out-dir");
  out.push_back(dir);
  return out;
}

int default_workers() {
  if (const char* w = std::getenv("DPMVS_WORKERS")) {
    try {
      const int v = std::stoi(w);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("DPMVS_WORKERS must be a positive integer, got '") + w + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// An explicit --out-dir wins, then DPMVS_OUT_DIR, then the fallback.
std::string resolve_out_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* d = std::getenv("DPMVS_OUT_DIR")) return d;
  return fallback;
}

/// Flags that mirror McmcConfig / PriorConfig fields; applied after any
/// config file so the command line wins.
struct Overrides {
  std::vector<std::function<void(McmcConfig&)>> mcmc;
  std::vector<std::function<void(PriorConfig&)>> prior;

  template <class T>
  void add(CLI::App* app, const std::string& name, T McmcConfig::*field, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app->add_option(name, *value, help);
    mcmc.push_back([o, value, field](McmcConfig& c) {
      if (o->count() > 0) c.*field = *value;
    });
  }
  template <class T>
  void add(CLI::App* app, const std::string& name, T PriorConfig::*field, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app->add_option(name, *value, help);
    prior.push_back([o, value, field](PriorConfig& c) {
      if (o->count() > 0) c.*field = *value;
    });
  }

  void add_mcmc_flags(CLI::App* app) {
    add(app, "--iterations", &McmcConfig::iterations, "total MCMC iterations");
    add(app, "--burn-in", &McmcConfig::burn_in, "burn-in iterations");
    add(app, "--thin", &McmcConfig::thin, "keep every thin-th post burn-in draw");
    add(app, "--seed", &McmcConfig::seed, "master seed");
    add(app, "--n-chains", &McmcConfig::n_chains, "independent chains");
    add(app, "--s-alpha", &McmcConfig::s_alpha, "random-walk scale for log alpha");
    add(app, "--s-lambda", &McmcConfig::s_lambda, "random-walk scale for log lambda");
    add(app, "--s-eta", &McmcConfig::s_eta, "random-walk scale for eta");
    add(app, "--swap-prob", &McmcConfig::swap_prob, "probability of a swap move for gamma");
    add(app, "--L", &McmcConfig::L, "restricted Gibbs sweeps in split-merge");
    add(app, "--L-g", &McmcConfig::L_g, "gamma updates per iteration (0 = max(10, p/2))");
    add(app, "--z-block", &McmcConfig::z_block, "rows per latent block update");
    add(app, "--adapt-z-block", &McmcConfig::adapt_z_block, "adapt the latent block size in burn-in");
    add(app, "--joint-every-iteration", &McmcConfig::joint_every_iteration,
        "run the joint gamma/phi move every iteration");
    add(app, "--recompute-every", &McmcConfig::recompute_every, "recompute cluster statistics period");
    auto mode = std::make_shared<std::string>();
    CLI::Option* o = app->add_option("--mode", *mode, "vs, novs or cont");
    mcmc.push_back([o, mode](McmcConfig& c) {
      if (o->count() > 0) c.mode = parse_run_mode(*mode);
    });
  }

  void add_prior_flags(CLI::App* app) {
    add(app, "--a-lambda", &PriorConfig::a_lambda, "gamma prior shape for lambda");
    add(app, "--b-lambda", &PriorConfig::b_lambda, "gamma prior rate for lambda");
    add(app, "--a-eta", &PriorConfig::a_eta, "gamma prior shape for eta - p - 1");
    add(app, "--b-eta", &PriorConfig::b_eta, "gamma prior rate for eta - p - 1");
    add(app, "--a-alpha", &PriorConfig::a_alpha, "gamma prior shape for alpha");
    add(app, "--b-alpha", &PriorConfig::b_alpha, "gamma prior rate for alpha");
    add(app, "--wishart-df", &PriorConfig::wishart_df, "Wishart degrees of freedom for Psi");
    auto rho = std::make_shared<double>();
    CLI::Option* o = app->add_option("--rho", *rho, "prior inclusion probability (all variables)");
    prior.push_back([o, rho](PriorConfig& c) {
      if (o->count() > 0) std::fill(c.rho.begin(), c.rho.end(), *rho);
    });
  }

  void apply(McmcConfig& c) const {
    for (const auto& f : mcmc) f(c);
  }
  void apply(PriorConfig& c) const {
    for (const auto& f : prior) f(c);
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void validate_or_usage(const McmcConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

std::vector<fs::path> chain_files(const fs::path& dir) {
  std::vector<std::pair<int, fs::path>> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("chain_", 0) != 0) continue;
    const auto dot = name.find('.');
    try {
      found.emplace_back(std::stoi(name.substr(6, dot - 6)), e.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

struct Context {
  std::vector<std::string> argv;
  std::ostream& out;
  std::ostream& err;
  Clock::time_point start = Clock::now();

  void finish(RunManifest& m, const fs::path& dir, const std::vector<std::string>& artifact_names) {
    m.argv = normalized_argv(argv);
    for (const auto& name : artifact_names) m.artifacts.emplace_back(name, sha256_file(dir / name));
    m.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    m.save(dir / (m.command + "_manifest.json"));
  }
};

struct FitArgs {
  std::string data, schema, config, out_dir, format = "csv";
  int workers = 0;
};

int cmd_fit(Context& ctx, const FitArgs& a, const Overrides& ov) {
  require_file(a.data, "data file");
  require_file(a.schema, "schema file");
  const Dataset raw = load_dataset(a.data, a.schema);
  McmcConfig cfg;
  PriorConfig prior = PriorConfig::defaults(raw.cols());
  if (!a.config.empty()) {
    require_file(a.config, "config file");
    const json j = read_json_file(a.config);
    try {
      update_from_json(j, cfg);
      if (j.contains("prior")) update_from_json(j.at("prior"), prior);
    } catch (const json::exception& e) {
      throw UsageError("bad config " + a.config + ": " + e.what());
    }
  }
  ov.apply(cfg);
  ov.apply(prior);
  validate_or_usage(cfg);
  try {
    prior.validate(raw.cols());
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const SampleFormat format = parse_sample_format(a.format);

  const Dataset ds = standardize(cfg.mode == RunMode::cont ? as_continuous(raw) : raw);
  const auto chains = run_chains(ds, prior, cfg, a.workers > 0 ? a.workers : default_workers());

  const fs::path dir = resolve_out_dir(a.out_dir, "dpmvs_fit");
  fs::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const std::string name =
        "chain_" + std::to_string(k + 1) + (format == SampleFormat::csv ? ".csv" : ".bin");
    write_samples(dir / name, chains[k], ds.rows(), ds.cols(), format);
    names.push_back(name);
  }
  std::vector<std::string> columns;
  for (const auto& s : raw.schema()) columns.push_back(s.name);

  RunManifest m;
  m.command = "fit";
  m.seed = cfg.seed;
  m.config = {{"mcmc", to_json(cfg)},
              {"prior", to_json(prior)},
              {"data", {{"data_path", fs::absolute(a.data).lexically_normal().string()},
                        {"schema_path", fs::absolute(a.schema).lexically_normal().string()},
                        {"n", raw.rows()},
                        {"p", raw.cols()},
                        {"columns", columns}}}};
  m.inputs = {{fs::absolute(a.data).lexically_normal().string(), sha256_file(a.data)},
              {fs::absolute(a.schema).lexically_normal().string(), sha256_file(a.schema)}};
  if (!a.config.empty()) {
    m.inputs.emplace_back(fs::absolute(a.config).lexically_normal().string(), sha256_file(a.config));
  }
  ctx.finish(m, dir, names);
  ctx.out << "wrote " << chains.size() << " chain(s) of " << (chains.empty() ? 0 : chains[0].size())
          << " samples to " << dir.string() << '\n';
  return 0;
}

struct SummarizeArgs {
  std::string samples_dir, out_dir;
};

int cmd_summarize(Context& ctx, const SummarizeArgs& a) {
  const fs::path src = a.samples_dir;
  if (!fs::is_directory(src)) throw UsageError("sample directory not found: " + src.string());
  const auto files = chain_files(src);
  if (files.empty()) throw UsageError("no chain_*.csv or chain_*.bin files in " + src.string());
  std::vector<std::vector<SampleRecord>> chains;
  for (const auto& f : files) {
    chains.push_back(read_samples(f));
    if (chains.back().empty()) throw std::runtime_error("empty sample file " + f.string());
  }
  const int p = static_cast<int>(chains.front().front().gamma.size());
  PriorConfig prior = PriorConfig::defaults(p);
  std::vector<std::string> columns;
  std::unique_ptr<Dataset> standardized;
  const fs::path fit_manifest = src / "fit_manifest.json";
  if (fs::is_regular_file(fit_manifest)) {
    const RunManifest fm = RunManifest::load(fit_manifest);
    if (fm.config.contains("prior")) update_from_json(fm.config.at("prior"), prior);
    if (fm.config.contains("data")) {
      const auto& d = fm.config.at("data");
      columns = d.value("columns", std::vector<std::string>{});
      const fs::path dp = d.value("data_path", std::string{});
      const fs::path sp = d.value("schema_path", std::string{});
      if (fs::is_regular_file(dp) && fs::is_regular_file(sp)) {
        McmcConfig cfg;
        if (fm.config.contains("mcmc")) update_from_json(fm.config.at("mcmc"), cfg);
        const Dataset raw = load_dataset(dp, sp);
        standardized = std::make_unique<Dataset>(
            standardize(cfg.mode == RunMode::cont ? as_continuous(raw) : raw));
      }
    }
  }

  const PosteriorSummary s = summarize_chains(chains, prior);
  const fs::path dir = resolve_out_dir(a.out_dir, src.string());
  fs::create_directories(dir);
  Matrix means;
  if (standardized && standardized->rows() == static_cast<int>(s.phi_hat.size())) {
    means = cluster_means(*standardized, s.phi_hat, static_cast<int>(s.p_hat.cols()));
  }
  json summary = summary_to_json(s, columns, means.size() > 0 ? &means : nullptr);
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::ostringstream ph;
  ph << std::setprecision(17);
  for (Eigen::Index c = 0; c < s.p_hat.cols(); ++c) ph << (c ? "," : "") << "cluster_" << c + 1;
  ph << '\n';
  for (Eigen::Index i = 0; i < s.p_hat.rows(); ++i) {
    for (Eigen::Index c = 0; c < s.p_hat.cols(); ++c) ph << (c ? "," : "") << s.p_hat(i, c);
    ph << '\n';
  }
  write_text(dir / "p_hat.csv", ph.str());

  std::ostringstream tr;
  tr << std::setprecision(17) << "chain,iteration,p1,m,lambda,eta,alpha,log_marginal\n";
  for (std::size_t k = 0; k < chains.size(); ++k) {
    for (const auto& r : chains[k]) {
      tr << k + 1 << ',' << r.iteration << ',' << std::count(r.gamma.begin(), r.gamma.end(), true)
         << ',' << r.m << ',' << r.lambda << ',' << r.eta << ',' << r.alpha << ',' << r.log_marginal
         << '\n';
    }
  }
  write_text(dir / "trace.csv", tr.str());

  RunManifest m;
  m.command = "summarize";
  m.config = {{"prior", to_json(prior)}, {"chains", files.size()}};
  for (const auto& f : files) m.inputs.emplace_back(fs::absolute(f).lexically_normal().string(), sha256_file(f));
  ctx.finish(m, dir, {"summary.json", "p_hat.csv", "trace.csv"});
  ctx.out << "modal M = " << s.modal_m() << ", p1 = " << s.p1() << ", samples = "
          << s.relabel_maps.size() << "; wrote " << dir.string() << '\n';
  return 0;
}

struct SimulateArgs {
  std::string case_id = "1a", out_dir;
  int replicate = 1;
  std::uint64_t seed = McmcConfig{}.seed;
};

int cmd_simulate(Context& ctx, const SimulateArgs& a) {
  if (a.replicate < 1) throw UsageError("--replicate must be >= 1");
  CaseId c;
  try {
    c = parse_case_id(a.case_id);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  RngStream rng(a.seed, data_stream_id(c, a.replicate - 1));
  const SimCase sim = generate_case(c, rng);
  const fs::path dir = resolve_out_dir(a.out_dir, "dpmvs_sim");
  fs::create_directories(dir);
  save_dataset(sim.data, dir / "data.csv", dir / "schema.json");
  std::ostringstream truth;
  truth << "row,phi_true\n";
  for (std::size_t i = 0; i < sim.truth.phi_true.size(); ++i) {
    truth << i + 1 << ',' << sim.truth.phi_true[i] + 1 << '\n';
  }
  write_text(dir / "truth.csv", truth.str());
  json tj = {{"case", to_string(c)},
             {"replicate", a.replicate},
             {"gamma_true", std::vector<int>(sim.truth.gamma_true.begin(), sim.truth.gamma_true.end())},
             {"n", sim.truth.params.n},
             {"p", sim.truth.params.p}};
  write_text(dir / "truth.json", tj.dump(2) + "\n");

  RunManifest m;
  m.command = "simulate";
  m.seed = a.seed;
  m.config = {{"case", to_string(c)}, {"replicate", a.replicate}};
  ctx.finish(m, dir, {"data.csv", "schema.json", "truth.csv", "truth.json"});
  ctx.out << "wrote case " << to_string(c) << " replicate " << a.replicate << " to " << dir.string()
          << '\n';
  return 0;
}

struct BenchmarkArgs {
  std::string cases = "1a", modes = "vs", out_dir;
  int replicates = 20;
  int workers = 0;
  bool full_budget = false;
};

int cmd_benchmark(Context& ctx, const BenchmarkArgs& a, const Overrides& ov) {
  BenchmarkOptions opt;
  try {
    for (const auto& c : split_list(a.cases)) opt.cases.push_back(parse_case_id(c));
    for (const auto& m : split_list(a.modes)) opt.modes.push_back(parse_run_mode(m));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (opt.cases.empty() || opt.modes.empty()) throw UsageError("--cases and --modes must be nonempty");
  opt.replicates = a.replicates;
  if (a.full_budget) {
    opt.replicates = 100;
    opt.cfg.iterations = 20000;
    opt.cfg.burn_in = 10000;
  }
  ov.apply(opt.cfg);
  validate_or_usage(opt.cfg);
  if (opt.replicates < 1) throw UsageError("--replicates must be >= 1");
  opt.workers = a.workers > 0 ? a.workers : default_workers();
  opt.progress = [&ctx](const ReplicateResult& r) {
    ctx.err << "case " << to_string(r.case_id) << " mode " << to_string(r.mode) << " rep "
            << r.replicate + 1 << ": "
            << (r.ok ? "Acc " + std::to_string(r.clustering.acc) + " PVC " +
                           std::to_string(r.selection.pvc)
                     : "failed")
            << '\n';
  };
  const BenchmarkReport report = run_benchmark(opt);

  const fs::path dir = resolve_out_dir(a.out_dir, "dpmvs_benchmark");
  fs::create_directories(dir);
  write_text(dir / "report.csv", report_csv(report));
  write_text(dir / "replicates.csv", replicates_csv(report));
  const std::string table = report_table(report);
  write_text(dir / "report.txt", table);

  // Timing-free copy of the per-replicate scores; this is the artifact a
  // rerun is expected to reproduce bit for bit.
  std::ostringstream scores;
  scores << std::setprecision(17) << "case,mode,replicate,ok,acc,fi,ari,modal_m,p1,pvc\n";
  for (const auto& r : report.replicates) {
    scores << to_string(r.case_id) << ',' << to_string(r.mode) << ',' << r.replicate + 1 << ','
           << (r.ok ? 1 : 0) << ',' << r.clustering.acc << ',' << r.clustering.fi << ','
           << r.clustering.ari << ',' << r.modal_m << ',' << r.selection.p1 << ','
           << r.selection.pvc << '\n';
  }
  write_text(dir / "scores.csv", scores.str());

  RunManifest m;
  m.command = "benchmark";
  m.seed = opt.cfg.seed;
  std::vector<std::string> cs, ms;
  for (CaseId c : opt.cases) cs.push_back(to_string(c));
  for (RunMode md : opt.modes) ms.push_back(to_string(md));
  m.config = {{"mcmc", to_json(opt.cfg)},
              {"cases", cs},
              {"modes", ms},
              {"replicates", opt.replicates},
              {"volatile_artifacts", {"report.csv", "replicates.csv", "report.txt"}}};
  ctx.finish(m, dir, {"scores.csv", "report.csv", "replicates.csv", "report.txt"});
  ctx.out << table;
  bool any_failed = false;
  for (const auto& row : report.rows) any_failed = any_failed || row.failed > 0;
  return any_failed ? 1 : 0;
}

struct RerunArgs {
  std::string manifest, out_dir;
};

int cmd_rerun(Context& ctx, const RerunArgs& a) {
  require_file(a.manifest, "manifest");
  const RunManifest m = RunManifest::load(a.manifest);
  for (const auto& [path, hash] : m.inputs) {
    if (!fs::is_regular_file(path)) throw UsageError("input recorded in manifest is missing: " + path);
    if (sha256_file(path) != hash) throw std::runtime_error("input changed since the run: " + path);
  }
  const fs::path dir = a.out_dir.empty() ? fs::path(a.manifest).parent_path() / "rerun" : fs::path(a.out_dir);
  const int code = run_cli(with_out_dir(m.argv, dir.string()), ctx.out, ctx.err);
  if (code != 0) return code;
  std::vector<std::string> volatile_names;
  if (m.config.contains("volatile_artifacts")) {
    volatile_names = m.config.at("volatile_artifacts").get<std::vector<std::string>>();
  }
  int differing = 0;
  for (const auto& [name, hash] : m.artifacts) {
    const bool vol = std::find(volatile_names.begin(), volatile_names.end(), name) != volatile_names.end();
    const bool same = fs::is_regular_file(dir / name) && sha256_file(dir / name) == hash;
    ctx.out << (same ? "identical " : (vol ? "timing-dependent " : "DIFFERS ")) << name << '\n';
    if (!same && !vol) ++differing;
  }
  return differing == 0 ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dirichlet-process mixture clustering with variable selection", "dpmvs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FitArgs fit;
  Overrides fit_ov;
  auto* fit_cmd = app.add_subcommand("fit", "run MCMC chains on a data set");
  fit_cmd->add_option("--data", fit.data, "CSV data file")->required();
  fit_cmd->add_option("--schema", fit.schema, "JSON schema file")->required();
  fit_cmd->add_option("--config", fit.config, "JSON config (McmcConfig fields, optional prior object)");
  fit_cmd->add_option("--out-dir", fit.out_dir, "output directory (env DPMVS_OUT_DIR)");
  fit_cmd->add_option("--format", fit.format, "sample format: csv or binary");
  fit_cmd->add_option("--workers", fit.workers, "worker threads (env DPMVS_WORKERS)");
  fit_ov.add_mcmc_flags(fit_cmd);
  fit_ov.add_prior_flags(fit_cmd);

  SummarizeArgs sum;
  auto* sum_cmd = app.add_subcommand("summarize", "relabel and summarize sample files");
  sum_cmd->add_option("--samples-dir", sum.samples_dir, "directory written by fit")->required();
  sum_cmd->add_option("--out-dir", sum.out_dir, "output directory (default: samples dir)");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "write a simulated data set");
  sim_cmd->add_option("--case", sim.case_id, "case id, 1a-1d or 2a-2d");
  sim_cmd->add_option("--replicate", sim.replicate, "replicate number (1-based)");
  sim_cmd->add_option("--seed", sim.seed, "master seed");
  sim_cmd->add_option("--out-dir", sim.out_dir, "output directory (env DPMVS_OUT_DIR)");

  BenchmarkArgs bench;
  Overrides bench_ov;
  auto* bench_cmd = app.add_subcommand("benchmark", "run the simulation benchmark");
  bench_cmd->add_option("--cases", bench.cases, "comma-separated case ids");
  bench_cmd->add_option("--modes", bench.modes, "comma-separated modes: vs, novs, cont");
  bench_cmd->add_option("--replicates", bench.replicates, "replicates per case and mode");
  bench_cmd->add_flag("--full-budget", bench.full_budget,
                      "100 replicates of 20000 iterations (10000 burn-in)");
  bench_cmd->add_option("--workers", bench.workers, "worker threads (env DPMVS_WORKERS)");
  bench_cmd->add_option("--out-dir", bench.out_dir, "output directory (env DPMVS_OUT_DIR)");
  bench_ov.add_mcmc_flags(bench_cmd);

  RerunArgs rerun;
  auto* rerun_cmd = app.add_subcommand("rerun", "repeat a run from its manifest and compare outputs");
  rerun_cmd->add_option("--manifest", rerun.manifest, "a *_manifest.json file")->required();
  rerun_cmd->add_option("--out-dir", rerun.out_dir, "where to write the repeated outputs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string(kVersion) + "\n"
                                                            : app.help());
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 2;
  }

  Context ctx{args, out, err};
  try {
    if (*fit_cmd) return cmd_fit(ctx, fit, fit_ov);
    if (*sum_cmd) return cmd_summarize(ctx, sum);
    if (*sim_cmd) return cmd_simulate(ctx, sim);
    if (*bench_cmd) return cmd_benchmark(ctx, bench, bench_ov);
    if (*rerun_cmd) return cmd_rerun(ctx, rerun);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace dpmvs
