#include "dpmvs/sample_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dpmvs {

namespace {

using nlohmann::json;

constexpr char kBinaryMagic[8] = {'D', 'P', 'M', 'V', 'S', 'B', '1', '\0'};
const char* const kCsvMagic = "# dpmvs samples v1";

std::string fmt(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

double parse_real(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("corrupt sample file: bad number '" + s + "'");
  }
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("corrupt sample file: bad integer '" + s + "'");
  }
  return v;
}

int digits(int x) {
  int d = 1;
  while (x >= 10) {
    x /= 10;
    ++d;
  }
  return d;
}

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("corrupt sample file: truncated binary record");
  return v;
}

std::uint16_t pack_accept(const std::array<bool, kUpdateCount>& a) {
  std::uint16_t bits = 0;
  for (int k = 0; k < kUpdateCount; ++k) {
    if (a[k]) bits |= static_cast<std::uint16_t>(1u << k);
  }
  return bits;
}

std::array<bool, kUpdateCount> unpack_accept(std::uint16_t bits) {
  std::array<bool, kUpdateCount> a{};
  for (int k = 0; k < kUpdateCount; ++k) a[k] = (bits >> k) & 1u;
  return a;
}

void write_csv(const std::filesystem::path& path, const std::vector<SampleRecord>& records, int n,
               int p) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const int width = digits(std::max(1, n));
  out << kCsvMagic << " n=" << n << " p=" << p << " width=" << width << '\n';
  out << "iteration,m,lambda,eta,alpha,log_marginal,gamma,phi,accept\n";
  for (const auto& r : records) {
    out << r.iteration << ',' << r.m << ',' << fmt(r.lambda) << ',' << fmt(r.eta) << ','
        << fmt(r.alpha) << ',' << fmt(r.log_marginal) << ',';
    for (bool g : r.gamma) out << (g ? '1' : '0');
    out << ',';
    for (int label : r.phi) {
      const std::string s = std::to_string(label + 1);
      out << std::string(static_cast<std::size_t>(width) - s.size(), '0') << s;
    }
    out << ',';
    for (bool a : r.accept) out << (a ? '1' : '0');
    out << '\n';
  }
}

std::vector<SampleRecord> read_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::getline(in, line);
  int n = -1, p = -1, width = -1;
  {
    std::istringstream hs(line.substr(std::strlen(kCsvMagic)));
    std::string tok;
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const auto key = tok.substr(0, eq);
      const int val = parse_int(tok.substr(eq + 1));
      if (key == "n") n = val;
      if (key == "p") p = val;
      if (key == "width") width = val;
    }
  }
  if (n < 0 || p < 0 || width < 1) throw std::runtime_error("corrupt sample header in " + source);
  std::getline(in, line);
  std::vector<SampleRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error("corrupt sample row in " + source);
    SampleRecord r;
    r.iteration = parse_int(f[0]);
    r.m = parse_int(f[1]);
    r.lambda = parse_real(f[2]);
    r.eta = parse_real(f[3]);
    r.alpha = parse_real(f[4]);
    r.log_marginal = parse_real(f[5]);
    if (static_cast<int>(f[6].size()) != p) throw std::runtime_error("corrupt gamma in " + source);
    for (char c : f[6]) r.gamma.push_back(c == '1');
    if (static_cast<int>(f[7].size()) != n * width) throw std::runtime_error("corrupt phi in " + source);
    for (int i = 0; i < n; ++i) r.phi.push_back(parse_int(f[7].substr(i * width, width)) - 1);
    if (static_cast<int>(f[8].size()) != kUpdateCount) {
      throw std::runtime_error("corrupt accept flags in " + source);
    }
    for (int k = 0; k < kUpdateCount; ++k) r.accept[k] = f[8][k] == '1';
    out.push_back(std::move(r));
  }
  return out;
}

void write_binary(const std::filesystem::path& path, const std::vector<SampleRecord>& records, int n,
                  int p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kBinaryMagic, sizeof(kBinaryMagic));
  put<std::int32_t>(out, n);
  put<std::int32_t>(out, p);
  put<std::uint64_t>(out, records.size());
  for (const auto& r : records) {
    put<std::int32_t>(out, r.iteration);
    put<std::int32_t>(out, r.m);
    put<double>(out, r.lambda);
    put<double>(out, r.eta);
    put<double>(out, r.alpha);
    put<double>(out, r.log_marginal);
    for (bool g : r.gamma) put<std::uint8_t>(out, g ? 1 : 0);
    for (int label : r.phi) put<std::int32_t>(out, label);
    put<std::uint16_t>(out, pack_accept(r.accept));
  }
}

std::vector<SampleRecord> read_binary(std::istream& in) {
  const int n = get<std::int32_t>(in);
  const int p = get<std::int32_t>(in);
  const auto count = get<std::uint64_t>(in);
  std::vector<SampleRecord> out;
  out.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    SampleRecord r;
    r.iteration = get<std::int32_t>(in);
    r.m = get<std::int32_t>(in);
    r.lambda = get<double>(in);
    r.eta = get<double>(in);
    r.alpha = get<double>(in);
    r.log_marginal = get<double>(in);
    for (int j = 0; j < p; ++j) r.gamma.push_back(get<std::uint8_t>(in) != 0);
    for (int i = 0; i < n; ++i) r.phi.push_back(get<std::int32_t>(in));
    r.accept = unpack_accept(get<std::uint16_t>(in));
    out.push_back(std::move(r));
  }
  return out;
}

template <class T>
void read_field(const json& j, const char* key, T& target) {
  if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

}  // namespace

SampleFormat parse_sample_format(const std::string& name) {
  if (name == "csv") return SampleFormat::csv;
  if (name == "binary") return SampleFormat::binary;
  throw std::invalid_argument("unknown sample format '" + name + "' (expected csv or binary)");
}

void write_samples(const std::filesystem::path& path, const std::vector<SampleRecord>& records,
                   int n, int p, SampleFormat format) {
  if (format == SampleFormat::csv) {
    write_csv(path, records, n, p);
  } else {
    write_binary(path, records, n, p);
  }
}

std::vector<SampleRecord> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open sample file " + path.string());
  char head[sizeof(kBinaryMagic)] = {};
  in.read(head, sizeof(head));
  if (in.gcount() == sizeof(head) && std::memcmp(head, kBinaryMagic, sizeof(head)) == 0) {
    return read_binary(in);
  }
  in.clear();
  in.seekg(0);
  std::string first;
  if (!std::getline(in, first) || first.rfind(kCsvMagic, 0) != 0) {
    throw std::runtime_error("not a sample file: " + path.string());
  }
  in.seekg(0);
  return read_csv(in, path.string());
}

json to_json(const McmcConfig& cfg) {
  return json{{"iterations", cfg.iterations},
              {"burn_in", cfg.burn_in},
              {"thin", cfg.thin},
              {"seed", cfg.seed},
              {"n_chains", cfg.n_chains},
              {"s_alpha", cfg.s_alpha},
              {"s_lambda", cfg.s_lambda},
              {"s_eta", cfg.s_eta},
              {"swap_prob", cfg.swap_prob},
              {"L", cfg.L},
              {"L_g", cfg.L_g},
              {"z_block", cfg.z_block},
              {"adapt_z_block", cfg.adapt_z_block},
              {"joint_every_iteration", cfg.joint_every_iteration},
              {"recompute_every", cfg.recompute_every},
              {"mode", to_string(cfg.mode)}};
}

json to_json(const PriorConfig& prior) {
  json scale = json::array();
  for (int r = 0; r < prior.wishart_scale.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < prior.wishart_scale.cols(); ++c) row.push_back(prior.wishart_scale(r, c));
    scale.push_back(row);
  }
  return json{{"a_lambda", prior.a_lambda}, {"b_lambda", prior.b_lambda},
              {"a_eta", prior.a_eta},       {"b_eta", prior.b_eta},
              {"a_alpha", prior.a_alpha},   {"b_alpha", prior.b_alpha},
              {"wishart_scale", scale},     {"wishart_df", prior.wishart_df},
              {"rho", prior.rho}};
}

void update_from_json(const json& j, McmcConfig& cfg) {
  read_field(j, "iterations", cfg.iterations);
  read_field(j, "burn_in", cfg.burn_in);
  read_field(j, "thin", cfg.thin);
  read_field(j, "seed", cfg.seed);
  read_field(j, "n_chains", cfg.n_chains);
  read_field(j, "s_alpha", cfg.s_alpha);
  read_field(j, "s_lambda", cfg.s_lambda);
  read_field(j, "s_eta", cfg.s_eta);
  read_field(j, "swap_prob", cfg.swap_prob);
  read_field(j, "L", cfg.L);
  read_field(j, "L_g", cfg.L_g);
  read_field(j, "z_block", cfg.z_block);
  read_field(j, "adapt_z_block", cfg.adapt_z_block);
  read_field(j, "joint_every_iteration", cfg.joint_every_iteration);
  read_field(j, "recompute_every", cfg.recompute_every);
  if (j.contains("mode")) cfg.mode = parse_run_mode(j.at("mode").get<std::string>());
}

void update_from_json(const json& j, PriorConfig& prior) {
  read_field(j, "a_lambda", prior.a_lambda);
  read_field(j, "b_lambda", prior.b_lambda);
  read_field(j, "a_eta", prior.a_eta);
  read_field(j, "b_eta", prior.b_eta);
  read_field(j, "a_alpha", prior.a_alpha);
  read_field(j, "b_alpha", prior.b_alpha);
  read_field(j, "wishart_df", prior.wishart_df);
  if (j.contains("wishart_scale")) {
    const auto rows = j.at("wishart_scale").get<std::vector<std::vector<double>>>();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw std::invalid_argument("wishart_scale must be square");
      for (std::size_t c = 0; c < rows.size(); ++c) m(r, c) = rows[r][c];
    }
    prior.wishart_scale = m;
  }
  if (j.contains("rho")) {
    const auto& r = j.at("rho");
    if (r.is_number()) {
      std::fill(prior.rho.begin(), prior.rho.end(), r.get<double>());
    } else {
      prior.rho = r.get<std::vector<double>>();
    }
  }
}

}  // namespace dpmvs
