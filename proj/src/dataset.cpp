#include "opflearn/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "opflearn/error.hpp"

namespace opflearn {

using Eigen::VectorXd;
namespace fs = std::filesystem;

std::string_view to_string(SamplingMethod method) {
  return method == SamplingMethod::OpfLearn ? "OPF-Learn" : "typical";
}

namespace {

/// FNV-1a over the bit patterns of the model's numeric fields.
class Fnv1a {
 public:
  void add(double v) { add(std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v)); }
  void add(int v) { add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
  void add(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) {
      hash_ ^= (v >> (8 * k)) & 0xffu;
      hash_ *= 0x100000001b3ull;
    }
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

SamplingMethod method_from(std::string_view text) {
  if (text == "OPF-Learn") {
    return SamplingMethod::OpfLearn;
  }
  if (text == "typical") {
    return SamplingMethod::Typical;
  }
  throw Error(ErrorKind::SchemaMismatch, "unknown sampling method '" + std::string(text) + "'");
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& token, const std::string& where) {
  double value = 0.0;
  const char* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::SchemaMismatch, where + ": bad number '" + token + "'");
  }
  return value;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_table(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::SchemaMismatch, "missing " + path.filename().string());
  }
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  }
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::SchemaMismatch, path.filename().string() + " has no header");
  }
  table.header = split_line(line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const std::string where = path.filename().string() + " row " + std::to_string(row);
    const std::vector<std::string> tokens = split_line(line);
    if (tokens.size() != table.header.size()) {
      throw Error(ErrorKind::SchemaMismatch,
                  where + ": expected " + std::to_string(table.header.size()) +
                      " values, found " + std::to_string(tokens.size()));
    }
    std::vector<double> values;
    values.reserve(tokens.size());
    for (const std::string& t : tokens) {
      values.push_back(parse_double(t, where));
    }
    table.rows.push_back(std::move(values));
    ++row;
  }
  return table;
}

void write_table(const fs::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::IoError, "cannot write " + path.string());
  }
  for (std::size_t j = 0; j < header.size(); ++j) {
    out << (j ? "," : "") << header[j];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      out << (j ? "," : "") << format_double(row[j]);
    }
    out << '\n';
  }
  if (!out) {
    throw Error(ErrorKind::IoError, "failed writing " + path.string());
  }
}

std::vector<std::string> input_header(const Dataset& ds) {
  std::vector<std::string> h;
  for (int bus : ds.load_buses) h.push_back("pl_" + std::to_string(bus));
  for (int bus : ds.load_buses) h.push_back("ql_" + std::to_string(bus));
  return h;
}

std::vector<std::string> output_header(const Dataset& ds) {
  std::vector<std::string> h;
  for (int g : ds.gen_rows) h.push_back("vg_" + std::to_string(g));
  for (int g : ds.gen_rows) h.push_back("pg_" + std::to_string(g));
  return h;
}

std::vector<double> concat(const VectorXd& a, const VectorXd& b) {
  std::vector<double> out(a.data(), a.data() + a.size());
  out.insert(out.end(), b.data(), b.data() + b.size());
  return out;
}

VectorXd to_vector(const std::vector<double>& v, std::size_t offset, std::size_t n) {
  return Eigen::Map<const VectorXd>(v.data() + offset, static_cast<Eigen::Index>(n));
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::general, 17);
  return std::string(buf.data(), ptr);
}

std::string fingerprint(const NetworkModel& model) {
  Fnv1a h;
  h.add(model.base_mva);
  h.add(model.slack);
  for (const Bus& b : model.buses) {
    h.add(b.id);
    h.add(b.gs);
    h.add(b.bs);
    h.add(b.v_min);
    h.add(b.v_max);
  }
  for (const Generator& g : model.gens) {
    for (double v : {g.p_min, g.p_max, g.q_min, g.q_max, g.cost_a, g.cost_b, g.cost_c}) {
      h.add(v);
    }
    h.add(g.bus);
    h.add(g.case_row);
  }
  for (const Branch& br : model.branches) {
    for (double v : {br.r, br.x, br.b, br.rate, br.tap, br.shift, br.angle_min, br.angle_max}) {
      h.add(v);
    }
    h.add(br.from);
    h.add(br.to);
  }
  for (const Load& l : model.loads) {
    h.add(l.bus);
    h.add(l.p0);
    h.add(l.q0);
  }
  std::ostringstream out;
  out << model.name << ':' << std::hex;
  out.width(16);
  out.fill('0');
  out << h.value();
  return out.str();
}

Dataset make_dataset(const NetworkModel& model, SamplingMethod method,
                     std::uint64_t seed, double active_tol) {
  Dataset ds;
  ds.case_name = model.name;
  ds.fingerprint = fingerprint(model);
  ds.method = method;
  ds.seed = seed;
  ds.active_tol = active_tol;
  for (const Load& l : model.loads) {
    ds.load_buses.push_back(model.buses[l.bus].id);
  }
  for (const Generator& g : model.gens) {
    ds.gen_rows.push_back(g.case_row);
  }
  ds.dual_labels = dual_labels(model);
  return ds;
}

ActiveSet active_set_of(const VectorXd& duals, double active_tol) {
  ActiveSet set;
  set.bits.resize(duals.size());
  for (Eigen::Index i = 0; i < duals.size(); ++i) {
    set.bits[i] = std::abs(duals[i]) > active_tol ? 1 : 0;
  }
  return set;
}

DatasetRecord make_record(const LoadProfile& x, const AcOpfSolution& solution,
                          double active_tol) {
  DatasetRecord r;
  r.x = x;
  r.vg = solution.vg;
  r.pg = solution.pg;
  r.duals.resize(static_cast<Eigen::Index>(solution.duals.size()));
  for (std::size_t i = 0; i < solution.duals.size(); ++i) {
    r.duals[static_cast<Eigen::Index>(i)] = solution.duals[i].multiplier;
  }
  r.objective = solution.objective;
  r.active = active_set(solution, active_tol);
  r.voltage = solution.voltage;
  return r;
}

RecordCheck check_record(const NetworkModel& model, const DatasetRecord& record) {
  RecordCheck check;
  PowerFlowResult pf;
  try {
    pf = solve_pf(model, record.x, {record.vg, record.pg});
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoConvergence) {
      throw;
    }
    check.residual = std::numeric_limits<double>::infinity();
    return check;
  }
  check.converged = true;
  const InjectionSpec spec = make_injection_spec(model, record.x, {record.vg, record.pg});
  const double slack_p = std::abs((injections(model, pf.state) - spec.target)[model.slack].real());
  check.residual = std::max(residual(model, pf.state, spec).max_norm, slack_p);
  if (record.voltage) {
    check.voltage_error =
        std::max((pf.state.magnitude - record.voltage->magnitude).cwiseAbs().maxCoeff(),
                 (pf.state.angle - record.voltage->angle).cwiseAbs().maxCoeff());
  }
  return check;
}

void write_csv(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  }
  std::vector<std::vector<double>> inputs, outputs, duals;
  nlohmann::json objectives = nlohmann::json::array();
  for (const DatasetRecord& r : ds.records) {
    inputs.push_back(concat(r.x.p, r.x.q));
    outputs.push_back(concat(r.vg, r.pg));
    duals.emplace_back(r.duals.data(), r.duals.data() + r.duals.size());
    objectives.push_back(r.objective);
  }
  write_table(dir / "inputs.csv", input_header(ds), inputs);
  write_table(dir / "outputs.csv", output_header(ds), outputs);
  write_table(dir / "duals.csv", ds.dual_labels, duals);

  nlohmann::json meta;
  meta["case_name"] = ds.case_name;
  meta["fingerprint"] = ds.fingerprint;
  meta["method"] = std::string(to_string(ds.method));
  meta["seed"] = ds.seed;
  meta["active_tol"] = ds.active_tol;
  meta["num_records"] = ds.records.size();
  meta["load_buses"] = ds.load_buses;
  meta["gen_rows"] = ds.gen_rows;
  meta["config"] = ds.config;
  meta["objectives"] = std::move(objectives);
  std::ofstream out(dir / "metadata.json", std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::IoError, "cannot write metadata.json in " + dir.string());
  }
  out << meta.dump(2) << '\n';
}

Dataset read_csv(const fs::path& dir) {
  const fs::path meta_path = dir / "metadata.json";
  if (!fs::exists(meta_path)) {
    throw Error(ErrorKind::SchemaMismatch, "missing metadata.json in " + dir.string());
  }
  nlohmann::json meta;
  try {
    std::ifstream in(meta_path);
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, std::string("metadata.json: ") + e.what());
  }

  Dataset ds;
  try {
    ds.case_name = meta.at("case_name").get<std::string>();
    ds.fingerprint = meta.at("fingerprint").get<std::string>();
    ds.method = method_from(meta.at("method").get<std::string>());
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.active_tol = meta.at("active_tol").get<double>();
    ds.load_buses = meta.at("load_buses").get<std::vector<int>>();
    ds.gen_rows = meta.at("gen_rows").get<std::vector<int>>();
    ds.config = meta.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, std::string("metadata.json: ") + e.what());
  }
  const std::vector<double> objectives =
      meta.value("objectives", std::vector<double>{});

  const CsvTable inputs = read_table(dir / "inputs.csv");
  const CsvTable outputs = read_table(dir / "outputs.csv");
  const CsvTable duals = read_table(dir / "duals.csv");
  if (inputs.header != input_header(ds)) {
    throw Error(ErrorKind::SchemaMismatch, "inputs.csv header does not match metadata");
  }
  if (outputs.header != output_header(ds)) {
    throw Error(ErrorKind::SchemaMismatch, "outputs.csv header does not match metadata");
  }
  ds.dual_labels = duals.header;
  const std::size_t n = inputs.rows.size();
  if (outputs.rows.size() != n || duals.rows.size() != n) {
    throw Error(ErrorKind::SchemaMismatch,
                "row counts differ: inputs " + std::to_string(n) + ", outputs " +
                    std::to_string(outputs.rows.size()) + ", duals " +
                    std::to_string(duals.rows.size()));
  }
  if (objectives.size() != n) {
    throw Error(ErrorKind::SchemaMismatch, "metadata.json objectives do not match row count");
  }
  const std::size_t nl = ds.load_buses.size();
  const std::size_t ng = ds.gen_rows.size();
  for (std::size_t k = 0; k < n; ++k) {
    DatasetRecord r;
    r.x = LoadProfile{to_vector(inputs.rows[k], 0, nl), to_vector(inputs.rows[k], nl, nl)};
    r.vg = to_vector(outputs.rows[k], 0, ng);
    r.pg = to_vector(outputs.rows[k], ng, ng);
    r.duals = to_vector(duals.rows[k], 0, duals.rows[k].size());
    r.objective = objectives[k];
    r.active = active_set_of(r.duals, ds.active_tol);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

ActiveSetGrowth unique_active_sets(const Dataset& ds) {
  ActiveSetGrowth growth;
  std::set<ActiveSet> seen;
  growth.curve.reserve(ds.records.size());
  for (const DatasetRecord& r : ds.records) {
    seen.insert(r.active);
    growth.curve.push_back(seen.size());
  }
  growth.count = seen.size();
  return growth;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(ds.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(order.size())));

  Dataset train = ds;
  Dataset test = ds;
  train.records.clear();
  test.records.clear();
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_train ? train : test).records.push_back(ds.records[order[k]]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace opflearn
