#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "opflearn/acopf.hpp"
#include "opflearn/load_profile.hpp"
#include "opflearn/netio.hpp"
#include "opflearn/powerflow.hpp"

namespace opflearn {

/// One (input, output, duals) triple.
struct DatasetRecord {
  LoadProfile x;
  Eigen::VectorXd vg;
  Eigen::VectorXd pg;
  /// Multipliers in the canonical dual layout.
  Eigen::VectorXd duals;
  double objective = 0.0;
  ActiveSet active;
  /// Full AC voltage profile. Kept in memory only; not written to disk.
  std::optional<VoltageState> voltage;
};

enum class SamplingMethod { OpfLearn, Typical };

std::string_view to_string(SamplingMethod method);

struct Dataset {
  std::string case_name;
  /// "<case name>:<content hash>".
  std::string fingerprint;
  SamplingMethod method = SamplingMethod::OpfLearn;
  std::uint64_t seed = 0;
  double active_tol = kDefaultActiveTol;
  /// Case bus ids of the loads and 1-based case rows of the generators.
  std::vector<int> load_buses;
  std::vector<int> gen_rows;
  std::vector<std::string> dual_labels;
  /// Echo of the generating configuration.
  nlohmann::json config = nlohmann::json::object();
  std::vector<DatasetRecord> records;

  int num_loads() const { return static_cast<int>(load_buses.size()); }
  int num_gens() const { return static_cast<int>(gen_rows.size()); }
  std::size_t size() const { return records.size(); }
};

/// Stable content hash of the network data, prefixed with the case name.
std::string fingerprint(const NetworkModel& model);

/// Empty dataset carrying the model's column layout.
Dataset make_dataset(const NetworkModel& model, SamplingMethod method,
                     std::uint64_t seed, double active_tol = kDefaultActiveTol);

DatasetRecord make_record(const LoadProfile& x, const AcOpfSolution& solution,
                          double active_tol = kDefaultActiveTol);

ActiveSet active_set_of(const Eigen::VectorXd& duals, double active_tol);

struct RecordCheck {
  bool converged = false;
  /// Largest balance mismatch at the recovered voltages: every enforced power
  /// flow row plus the slack bus active balance implied by the stored pg.
  double residual = 0.0;
  /// Largest deviation from the record's in-memory voltages, if it has them.
  std::optional<double> voltage_error;
};

/// Recovers the voltages of a record from (x, vg, pg) with a power flow.
RecordCheck check_record(const NetworkModel& model, const DatasetRecord& record);

/// Writes inputs.csv, outputs.csv, duals.csv and metadata.json, creating the
/// directory if needed. Throws Error{IoError}.
void write_csv(const Dataset& dataset, const std::filesystem::path& directory);

/// Inverse of write_csv. Throws Error{SchemaMismatch} or Error{IoError}.
Dataset read_csv(const std::filesystem::path& directory);

struct ActiveSetGrowth {
  std::size_t count = 0;
  /// Distinct active sets among the first k + 1 records.
  std::vector<std::size_t> curve;
};

ActiveSetGrowth unique_active_sets(const Dataset& dataset);

/// Seeded shuffle into floor(f n) training and n - floor(f n) test records.
/// Throws Error{InvalidArgument} unless 0 < train_fraction < 1.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

/// 17 significant digits, locale independent; reads back bit-exactly.
std::string format_double(double value);

}  // namespace opflearn
