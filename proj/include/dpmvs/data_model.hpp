#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpmvs/stats_kernels.hpp"

namespace dpmvs {

/// Raised for malformed input files and values that violate the schema.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class VariableKind { continuous, ordinal };

/// Column description. Ordinal columns threshold a latent Gaussian on the
/// cut-points a_1..a_{L-1} = d_1..d_{L-1}; continuous columns are censored at
/// finite bounds.
struct VariableSchema {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  double lower = -kInf;
  double upper = kInf;
  std::vector<double> levels;

  std::vector<double> cut_points() const;
  void validate() const;
};

/// Per-column affine map x -> (x - mean) / sd.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  double apply(std::size_t j, double x) const { return (x - mean[j]) / sd[j]; }
  double invert(std::size_t j, double x) const { return x * sd[j] + mean[j]; }
  static Standardizer identity(std::size_t p);
};

/// How a cell constrains its latent value. Fixed at ingestion on the raw scale.
enum class CellState : std::uint8_t { missing, interior, lower_censored, upper_censored, ordinal };

struct LatentInterval {
  double lo = -kInf;
  double hi = kInf;
  std::optional<double> point;

  bool is_latent() const { return !point.has_value(); }
  bool contains(double z) const;
};

/// Observed data matrix with missingness mask and schema. Immutable once built.
class Dataset {
 public:
  Dataset() = default;
  /// Validates every observed cell against the schema.
  Dataset(Matrix y, std::vector<std::vector<bool>> observed, std::vector<VariableSchema> schema);

  int rows() const { return static_cast<int>(y_.rows()); }
  int cols() const { return static_cast<int>(y_.cols()); }
  const Matrix& values() const { return y_; }
  double value(int i, int j) const { return y_(i, j); }
  bool observed(int i, int j) const { return state(i, j) != CellState::missing; }
  CellState state(int i, int j) const { return states_[index(i, j)]; }
  /// Level index l (0-based) of an observed ordinal cell.
  int level_index(int i, int j) const { return levels_[index(i, j)]; }
  const std::vector<VariableSchema>& schema() const { return schema_; }
  const Standardizer& standardizer() const { return standardizer_; }
  std::size_t missing_count() const;

 private:
  friend Dataset standardize(const Dataset& ds);
  friend Dataset as_continuous(const Dataset& ds);
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(y_.cols()) +
           static_cast<std::size_t>(j);
  }

  Matrix y_;
  std::vector<CellState> states_;
  std::vector<std::int16_t> levels_;
  std::vector<VariableSchema> schema_;
  Standardizer standardizer_;
};

/// Reads a CSV (header row, "NA" or empty = missing) and a JSON schema array.
Dataset load_dataset(const std::filesystem::path& data_path,
                     const std::filesystem::path& schema_path);

/// Writes the dataset back out; missing cells become "NA". Values use
/// round-trip precision so a reload is bit-exact.
void save_dataset(const Dataset& ds, const std::filesystem::path& data_path,
                  const std::filesystem::path& schema_path);

std::vector<VariableSchema> parse_schema_json(const std::string& text);
std::string schema_to_json(const std::vector<VariableSchema>& schema);

/// Shifts and scales every column to observed mean 0 and sd 1 (n-1 divisor),
/// carrying bounds and levels through the same map. Cell states are preserved.
Dataset standardize(const Dataset& ds);

/// Treats every column as continuous with infinite bounds (the "cont" mode):
/// ordinal codes become raw reals and no cell is censored.
Dataset as_continuous(const Dataset& ds);

LatentInterval latent_interval(const Dataset& ds, int i, int j);

/// Starting latent matrix: point cells copied, interval cells drawn from a
/// standard normal truncated to the interval, missing cells standard normal.
Matrix initialize_latent(const Dataset& ds, RngStream& rng);

}  // namespace dpmvs
