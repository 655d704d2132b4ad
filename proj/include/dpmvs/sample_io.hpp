#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpmvs/mcmc_engine.hpp"

namespace dpmvs {

enum class SampleFormat { csv, binary };

SampleFormat parse_sample_format(const std::string& name);

/// One row per record. gamma is a 0/1 bitstring, phi is 1-based labels padded
/// to a fixed width given in the leading comment line.
void write_samples(const std::filesystem::path& path, const std::vector<SampleRecord>& records,
                   int n, int p, SampleFormat format);
/// Detects the format from the file's first bytes.
std::vector<SampleRecord> read_samples(const std::filesystem::path& path);

nlohmann::json to_json(const McmcConfig& cfg);
nlohmann::json to_json(const PriorConfig& prior);
/// Every field optional; missing fields keep the values already in `cfg`.
void update_from_json(const nlohmann::json& j, McmcConfig& cfg);
void update_from_json(const nlohmann::json& j, PriorConfig& prior);

}  // namespace dpmvs
