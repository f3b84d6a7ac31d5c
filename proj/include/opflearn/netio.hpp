#pragma once

#include <complex>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SparseCore>

namespace opflearn {

using Table = std::vector<std::vector<double>>;

/// Numeric tables of a MATPOWER case exactly as written in the file.
struct RawCase {
  std::string name;
  double base_mva = 0.0;
  Table bus;
  Table gen;
  Table branch;
  Table gencost;
};

/// Parses MATPOWER `.m` case text. Throws Error{MissingBlock} when a required
/// table is absent and Error{MalformedRow} (with the line number) on a
/// non-numeric token.
RawCase parse_matpower(std::string_view text);

RawCase read_matpower_file(const std::filesystem::path& path);

/// Serializes a RawCase back to MATPOWER syntax with round-trip precision.
std::string write_matpower(const RawCase& raw);

struct Bus {
  int id = 0;
  int type = 1;
  double gs = 0.0;  // p.u. at |v| = 1
  double bs = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
};

struct Generator {
  int bus = 0;       // index into NetworkModel::buses
  int case_row = 0;  // 1-based row in the case gen table
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  /// Cost a*p^2 + b*p + c with p in p.u.
  double cost_a = 0.0;
  double cost_b = 0.0;
  double cost_c = 0.0;
  double v_setpoint = 1.0;
};

struct Branch {
  int from = 0;  // bus indices
  int to = 0;
  int case_row = 0;
  double r = 0.0;
  double x = 0.0;
  double b = 0.0;
  /// Apparent-power limit in p.u.; 0 means unlimited.
  double rate = 0.0;
  double tap = 1.0;
  double shift = 0.0;  // rad
  double angle_min = -std::numeric_limits<double>::infinity();  // rad
  double angle_max = std::numeric_limits<double>::infinity();

  bool has_flow_limit() const { return rate > 0.0; }
  bool has_angle_limit() const {
    return angle_min > -std::numeric_limits<double>::infinity() ||
           angle_max < std::numeric_limits<double>::infinity();
  }
};

struct Load {
  int bus = 0;  // bus index
  double p0 = 0.0;
  double q0 = 0.0;
};

/// Per-unit network. Buses are stored in case-file order; generators and
/// branches keep only in-service rows.
struct NetworkModel {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> gens;
  std::vector<Branch> branches;
  std::vector<Load> loads;
  int slack = 0;
  std::vector<std::string> warnings;

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_gens() const { return static_cast<int>(gens.size()); }
  int num_branches() const { return static_cast<int>(branches.size()); }
  int num_loads() const { return static_cast<int>(loads.size()); }

  int bus_index(int id) const;
  double total_p_max() const;
};

NetworkModel build_model(const RawCase& raw);

NetworkModel load_case(const std::filesystem::path& path);

/// Pi-model admittances of one branch in MATPOWER convention.
struct BranchAdmittance {
  std::complex<double> ff;
  std::complex<double> ft;
  std::complex<double> tf;
  std::complex<double> tt;
};

BranchAdmittance branch_admittance(const Branch& branch);

using AdmittanceMatrix = Eigen::SparseMatrix<std::complex<double>>;

AdmittanceMatrix admittance(const NetworkModel& model);

}  // namespace opflearn
