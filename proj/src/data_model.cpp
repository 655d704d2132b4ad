#include "dpmvs/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace dpmvs {

namespace {

using nlohmann::json;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      current.push_back(c);
    } else if (c == ',' && !quoted) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

std::optional<double> parse_double(const std::string& s) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (!s.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::string format_double(double x) {
  if (x == kInf) return "inf";
  if (x == -kInf) return "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string cell_label(int i, const VariableSchema& s) {
  return "row " + std::to_string(i + 1) + ", column '" + s.name + "'";
}

double json_bound(const json& rec, const char* key, double fallback) {
  if (!rec.contains(key) || rec.at(key).is_null()) return fallback;
  const auto& v = rec.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "Infinity") return kInf;
    if (s == "-inf" || s == "-Infinity") return -kInf;
  }
  throw DataError(std::string("schema field '") + key + "' must be a number");
}

}  // namespace

// --- schema -------------------------------------------------------------------

std::vector<double> VariableSchema::cut_points() const {
  if (kind != VariableKind::ordinal || levels.size() < 2) return {};
  return {levels.begin(), levels.end() - 1};
}

void VariableSchema::validate() const {
  if (kind == VariableKind::ordinal) {
    if (levels.size() < 2) {
      throw DataError("ordinal column '" + name + "' needs at least two levels");
    }
    for (std::size_t l = 1; l < levels.size(); ++l) {
      if (!(levels[l - 1] < levels[l])) {
        throw DataError("levels of ordinal column '" + name + "' must be strictly increasing");
      }
    }
  } else if (!(lower < upper)) {
    throw DataError("continuous column '" + name + "' needs lower < upper");
  }
}

Standardizer Standardizer::identity(std::size_t p) {
  return {std::vector<double>(p, 0.0), std::vector<double>(p, 1.0)};
}

bool LatentInterval::contains(double z) const {
  if (point) return z == *point;
  return z >= lo && z <= hi;
}

std::vector<VariableSchema> parse_schema_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw DataError("schema must be a JSON array of column records");
  std::vector<VariableSchema> out;
  for (const auto& rec : doc) {
    if (!rec.is_object() || !rec.contains("name")) {
      throw DataError("every schema record needs a name");
    }
    VariableSchema s;
    s.name = rec.at("name").get<std::string>();
    const std::string kind = rec.value("kind", std::string("continuous"));
    if (kind == "continuous") {
      s.kind = VariableKind::continuous;
    } else if (kind == "ordinal") {
      s.kind = VariableKind::ordinal;
    } else {
      throw DataError("unknown kind '" + kind + "' for column '" + s.name + "'");
    }
    s.lower = json_bound(rec, "lower", -kInf);
    s.upper = json_bound(rec, "upper", kInf);
    if (rec.contains("levels") && !rec.at("levels").is_null()) {
      s.levels = rec.at("levels").get<std::vector<double>>();
    }
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::string schema_to_json(const std::vector<VariableSchema>& schema) {
  json doc = json::array();
  for (const auto& s : schema) {
    json rec;
    rec["name"] = s.name;
    rec["kind"] = s.kind == VariableKind::ordinal ? "ordinal" : "continuous";
    if (std::isfinite(s.lower)) rec["lower"] = s.lower;
    if (std::isfinite(s.upper)) rec["upper"] = s.upper;
    if (s.kind == VariableKind::ordinal) rec["levels"] = s.levels;
    doc.push_back(rec);
  }
  return doc.dump(2);
}

// --- Dataset --------------------------------------------------------------------

Dataset::Dataset(Matrix y, std::vector<std::vector<bool>> observed,
                 std::vector<VariableSchema> schema)
    : y_(std::move(y)), schema_(std::move(schema)) {
  const int n = rows();
  const int p = cols();
  if (static_cast<int>(schema_.size()) != p) {
    throw DataError("schema has " + std::to_string(schema_.size()) + " columns, data has " +
                    std::to_string(p));
  }
  if (static_cast<int>(observed.size()) != n) throw DataError("mask row count mismatch");
  for (const auto& s : schema_) s.validate();
  states_.assign(static_cast<std::size_t>(n) * p, CellState::missing);
  levels_.assign(static_cast<std::size_t>(n) * p, -1);
  standardizer_ = Standardizer::identity(static_cast<std::size_t>(p));
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(observed[i].size()) != p) throw DataError("mask column count mismatch");
    for (int j = 0; j < p; ++j) {
      const auto& s = schema_[j];
      if (!observed[i][j]) {
        y_(i, j) = kNaN;
        continue;
      }
      const double v = y_(i, j);
      if (!std::isfinite(v)) throw DataError("non-finite value at " + cell_label(i, s));
      if (s.kind == VariableKind::ordinal) {
        const auto it = std::find(s.levels.begin(), s.levels.end(), v);
        if (it == s.levels.end()) {
          throw DataError("value " + format_double(v) + " at " + cell_label(i, s) +
                          " is not one of the ordinal levels");
        }
        states_[index(i, j)] = CellState::ordinal;
        levels_[index(i, j)] = static_cast<std::int16_t>(it - s.levels.begin());
      } else {
        if (v < s.lower || v > s.upper) {
          throw DataError("value " + format_double(v) + " at " + cell_label(i, s) +
                          " lies outside [" + format_double(s.lower) + ", " +
                          format_double(s.upper) + "]");
        }
        if (v == s.lower) {
          states_[index(i, j)] = CellState::lower_censored;
        } else if (v == s.upper) {
          states_[index(i, j)] = CellState::upper_censored;
        } else {
          states_[index(i, j)] = CellState::interior;
        }
      }
    }
  }
}

std::size_t Dataset::missing_count() const {
  return static_cast<std::size_t>(
      std::count(states_.begin(), states_.end(), CellState::missing));
}

Dataset load_dataset(const std::filesystem::path& data_path,
                     const std::filesystem::path& schema_path) {
  std::ifstream schema_in(schema_path);
  if (!schema_in) throw DataError("cannot open schema file " + schema_path.string());
  std::stringstream schema_text;
  schema_text << schema_in.rdbuf();
  auto schema = parse_schema_json(schema_text.str());

  std::ifstream in(data_path);
  if (!in) throw DataError("cannot open data file " + data_path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("data file " + data_path.string() + " is empty");
  const auto header = split_csv_line(line);

  std::unordered_map<std::string, int> schema_index;
  for (std::size_t j = 0; j < schema.size(); ++j) schema_index[schema[j].name] = static_cast<int>(j);
  std::vector<int> column_of(header.size(), -1);
  std::vector<bool> seen(schema.size(), false);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto it = schema_index.find(header[c]);
    if (it == schema_index.end()) throw DataError("unknown column '" + header[c] + "' in data header");
    if (seen[it->second]) throw DataError("duplicate column '" + header[c] + "' in data header");
    seen[it->second] = true;
    column_of[c] = it->second;
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (!seen[j]) throw DataError("schema column '" + schema[j].name + "' missing from data");
  }

  std::vector<std::vector<double>> values;
  std::vector<std::vector<bool>> observed;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    std::vector<double> row(schema.size(), kNaN);
    std::vector<bool> mask(schema.size(), false);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const int j = column_of[c];
      if (is_missing_token(fields[c])) continue;
      const auto v = parse_double(fields[c]);
      if (!v) {
        throw DataError("unparsable cell '" + fields[c] + "' at " +
                        cell_label(static_cast<int>(values.size()), schema[j]));
      }
      row[j] = *v;
      mask[j] = true;
    }
    values.push_back(std::move(row));
    observed.push_back(std::move(mask));
  }
  Matrix y(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < schema.size(); ++j) {
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i][j];
    }
  }
  return Dataset(std::move(y), std::move(observed), std::move(schema));
}

void save_dataset(const Dataset& ds, const std::filesystem::path& data_path,
                  const std::filesystem::path& schema_path) {
  std::ofstream out(data_path);
  if (!out) throw DataError("cannot write data file " + data_path.string());
  const auto& schema = ds.schema();
  for (std::size_t j = 0; j < schema.size(); ++j) out << (j ? "," : "") << schema[j].name;
  out << '\n';
  for (int i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.cols(); ++j) {
      if (j) out << ',';
      out << (ds.observed(i, j) ? format_double(ds.value(i, j)) : std::string("NA"));
    }
    out << '\n';
  }
  std::ofstream sout(schema_path);
  if (!sout) throw DataError("cannot write schema file " + schema_path.string());
  sout << schema_to_json(schema) << '\n';
}

Dataset standardize(const Dataset& ds) {
  Dataset out = ds;
  const int n = ds.rows();
  for (int j = 0; j < ds.cols(); ++j) {
    double sum = 0.0;
    int count = 0;
    double first = kNaN;
    bool distinct = false;
    for (int i = 0; i < n; ++i) {
      if (!ds.observed(i, j)) continue;
      const double v = ds.value(i, j);
      if (count == 0) first = v;
      else if (v != first) distinct = true;
      sum += v;
      ++count;
    }
    if (!distinct) {
      throw DataError("column '" + ds.schema()[j].name +
                      "' needs at least two distinct observed values to standardize");
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      if (ds.observed(i, j)) ss += (ds.value(i, j) - mean) * (ds.value(i, j) - mean);
    }
    const double sd = std::sqrt(ss / (count - 1));
    auto map = [&](double x) { return (x - mean) / sd; };
    for (int i = 0; i < n; ++i) {
      if (ds.observed(i, j)) out.y_(i, j) = map(ds.value(i, j));
    }
    auto& s = out.schema_[j];
    s.lower = map(s.lower);
    s.upper = map(s.upper);
    for (auto& level : s.levels) level = map(level);
    const auto& prev = ds.standardizer_;
    out.standardizer_.mean[j] = prev.mean[j] + prev.sd[j] * mean;
    out.standardizer_.sd[j] = prev.sd[j] * sd;
  }
  return out;
}

Dataset as_continuous(const Dataset& ds) {
  Dataset out = ds;
  for (auto& s : out.schema_) {
    s.kind = VariableKind::continuous;
    s.lower = -kInf;
    s.upper = kInf;
    s.levels.clear();
  }
  for (auto& st : out.states_) {
    if (st != CellState::missing) st = CellState::interior;
  }
  std::fill(out.levels_.begin(), out.levels_.end(), -1);
  return out;
}

LatentInterval latent_interval(const Dataset& ds, int i, int j) {
  if (i < 0 || i >= ds.rows() || j < 0 || j >= ds.cols()) {
    throw std::out_of_range("latent_interval index out of range");
  }
  const auto& s = ds.schema()[j];
  switch (ds.state(i, j)) {
    case CellState::missing:
      return {};
    case CellState::interior:
      return {ds.value(i, j), ds.value(i, j), ds.value(i, j)};
    case CellState::lower_censored:
      return {-kInf, s.lower, std::nullopt};
    case CellState::upper_censored:
      return {s.upper, kInf, std::nullopt};
    case CellState::ordinal: {
      const auto l = static_cast<std::size_t>(ds.level_index(i, j));
      const double lo = l == 0 ? -kInf : s.levels[l - 1];
      const double hi = l + 1 == s.levels.size() ? kInf : s.levels[l];
      return {lo, hi, std::nullopt};
    }
  }
  return {};
}

Matrix initialize_latent(const Dataset& ds, RngStream& rng) {
  Matrix z(ds.rows(), ds.cols());
  for (int i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.cols(); ++j) {
      const auto iv = latent_interval(ds, i, j);
      z(i, j) = iv.point ? *iv.point : sample_truncated_normal(0.0, 1.0, iv.lo, iv.hi, rng);
    }
  }
  return z;
}

}  // namespace dpmvs
