#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ddnf/flow.hpp"
#include "ddnf/inference.hpp"
#include "ddnf/targets.hpp"

namespace ddnf {

inline constexpr int kModelFormatVersion = 1;

/// Model documents are JSON. Parameters are written with round-trip precision
/// so save followed by load is bit-exact.
std::string model_to_string(const VariationalModel& model);
VariationalModel model_from_string(const std::string& text);

void save_model(const VariationalModel& model, const std::filesystem::path& path);
VariationalModel load_model(const std::filesystem::path& path);
/// Convenience wrappers for a bare flow with a standard-normal base.
void save_flow(const FlowModel& flow, const std::filesystem::path& path);
FlowModel load_flow(const std::filesystem::path& path);

/// Two-column CSV with header `n,y`.
BetaBinomialModel read_betabinom_csv(const std::filesystem::path& path);
void write_betabinom_csv(const BetaBinomialModel& model, const std::filesystem::path& path);

/// Minimal CSV writer; doubles use %.17g.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  /// Leading integer column followed by doubles.
  void row(long long key, const std::vector<double>& values);
  void flush();

 private:
  std::filesystem::path path_;
  std::size_t columns_;
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file_{nullptr, &std::fclose};
};

/// `iter,loss,elbo,geo,invc,seconds`
void write_history_csv(const std::vector<TrainRecord>& history, const std::filesystem::path& path);
/// `step,z0,z1,...`; step numbers start after the burn-in.
void write_chain_csv(const std::vector<Vector>& samples, int first_step,
                     const std::filesystem::path& path);

using ManifestEntries = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// JSON manifest echoing the resolved configuration and the tool version.
void write_manifest(const std::filesystem::path& path, const std::string& command,
                    const ManifestEntries& config);
/// Flat JSON object of named numbers and strings.
void write_summary(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, double>>& numbers,
                   const std::vector<std::pair<std::string, std::string>>& strings = {});

std::string format_double(double x);

}  // namespace ddnf
