#include "opflearn/netio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "opflearn/error.hpp"

namespace opflearn {

namespace {

bool is_separator(char c) {
  return c == ' ' || c == '\t' || c == ',' || c == '\r';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (is_separator(s.front()) || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (is_separator(s.back()) || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string_view strip_comment(std::string_view line) {
  auto pos = line.find('%');
  return pos == std::string_view::npos ? line : line.substr(0, pos);
}

double parse_number(std::string_view token, int line_no) {
  std::string_view t = token;
  if (!t.empty() && t.front() == '+') {
    t.remove_prefix(1);
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size()) {
    throw Error(ErrorKind::MalformedRow,
                "line " + std::to_string(line_no) + ": non-numeric token '" +
                    std::string(token) + "'");
  }
  return value;
}

/// Splits a row fragment into numbers and appends them to `row`.
void tokenize_into(std::string_view text, int line_no,
                   std::vector<double>& row) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_separator(text[i])) {
      ++i;
    }
    std::size_t j = i;
    while (j < text.size() && !is_separator(text[j])) {
      ++j;
    }
    if (j > i) {
      row.push_back(parse_number(text.substr(i, j - i), line_no));
    }
    i = j;
  }
}

struct BlockHeader {
  std::string name;
  std::string_view rest;
};

/// Recognizes `mpc.<name> = <rest>` and returns the name and remainder.
std::optional<BlockHeader> match_assignment(std::string_view line) {
  line = trim(line);
  constexpr std::string_view prefix = "mpc.";
  if (!line.starts_with(prefix)) {
    return std::nullopt;
  }
  line.remove_prefix(prefix.size());
  auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    return std::nullopt;
  }
  return BlockHeader{std::string(trim(line.substr(0, eq))),
                     trim(line.substr(eq + 1))};
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void check_columns(const Table& table, std::size_t min_cols,
                   const char* name) {
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (table[r].size() < min_cols) {
      throw Error(ErrorKind::MalformedRow,
                  std::string(name) + " row " + std::to_string(r + 1) +
                      " has " + std::to_string(table[r].size()) +
                      " columns, need " + std::to_string(min_cols));
    }
  }
}

double to_radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

}  // namespace

RawCase parse_matpower(std::string_view text) {
  RawCase raw;
  bool have_base = false;
  Table* current = nullptr;
  Table ignored;  // blocks we do not model, e.g. mpc.bus_name
  std::vector<double> row;
  std::set<std::string> seen;

  auto flush_row = [&] {
    if (!row.empty()) {
      current->push_back(std::move(row));
      row.clear();
    }
  };

  // Feeds block content; a closing bracket ends the block.
  auto consume = [&](std::string_view content, int line_no) {
    bool closed = false;
    auto close = content.find(']');
    if (close != std::string_view::npos) {
      content = content.substr(0, close);
      closed = true;
    }
    std::size_t start = 0;
    while (start <= content.size()) {
      auto semi = content.find(';', start);
      auto piece = content.substr(
          start, semi == std::string_view::npos ? std::string_view::npos
                                                : semi - start);
      tokenize_into(piece, line_no, row);
      if (semi == std::string_view::npos) {
        break;
      }
      flush_row();
      start = semi + 1;
    }
    // A newline also terminates a row in MATPOWER matrix syntax.
    flush_row();
    if (closed) {
      current = nullptr;
    }
  };

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    line = strip_comment(line);

    if (current != nullptr) {
      consume(line, line_no);
    } else if (auto header = match_assignment(line)) {
      if (header->name == "baseMVA") {
        auto value = header->rest;
        if (!value.empty() && value.back() == ';') {
          value.remove_suffix(1);
        }
        raw.base_mva = parse_number(trim(value), line_no);
        have_base = true;
      } else if (header->rest.starts_with("[")) {
        Table* target = nullptr;
        if (header->name == "bus") {
          target = &raw.bus;
        } else if (header->name == "gen") {
          target = &raw.gen;
        } else if (header->name == "branch") {
          target = &raw.branch;
        } else if (header->name == "gencost") {
          target = &raw.gencost;
        }
        current = target != nullptr ? target : &ignored;
        seen.insert(header->name);
        consume(header->rest.substr(1), line_no);
      }
    } else {
      auto t = trim(line);
      constexpr std::string_view fn = "function";
      if (t.starts_with(fn)) {
        auto eq = t.find('=');
        if (eq != std::string_view::npos) {
          raw.name = std::string(trim(t.substr(eq + 1)));
        }
      }
    }

    if (nl == std::string_view::npos) {
      break;
    }
    pos = nl + 1;
  }

  if (current != nullptr) {
    throw Error(ErrorKind::MalformedRow, "unterminated matrix block at EOF");
  }
  if (!have_base) {
    throw Error(ErrorKind::MissingBlock, "mpc.baseMVA not found");
  }
  for (const char* name : {"bus", "gen", "branch", "gencost"}) {
    if (!seen.contains(name)) {
      throw Error(ErrorKind::MissingBlock,
                  std::string("mpc.") + name + " not found");
    }
  }
  if (!(raw.base_mva > 0.0)) {
    throw Error(ErrorKind::InvalidCase, "baseMVA must be positive");
  }

  check_columns(raw.bus, 13, "bus");
  check_columns(raw.gen, 10, "gen");
  check_columns(raw.branch, 11, "branch");
  check_columns(raw.gencost, 4, "gencost");

  std::set<int> ids;
  for (const auto& b : raw.bus) {
    ids.insert(static_cast<int>(b[0]));
  }
  for (const auto& g : raw.gen) {
    if (!ids.contains(static_cast<int>(g[0]))) {
      throw Error(ErrorKind::InvalidCase,
                  "generator references unknown bus " +
                      std::to_string(static_cast<int>(g[0])));
    }
  }
  for (const auto& br : raw.branch) {
    for (int k = 0; k < 2; ++k) {
      if (!ids.contains(static_cast<int>(br[k]))) {
        throw Error(ErrorKind::InvalidCase,
                    "branch references unknown bus " +
                        std::to_string(static_cast<int>(br[k])));
      }
    }
  }
  return raw;
}

RawCase read_matpower_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::IoError, "cannot open " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  RawCase raw = parse_matpower(buffer.str());
  if (raw.name.empty()) {
    raw.name = path.stem().string();
  }
  return raw;
}

std::string write_matpower(const RawCase& raw) {
  std::string out;
  out += "function mpc = " + (raw.name.empty() ? "case" : raw.name) + "\n";
  out += "mpc.version = '2';\n";
  out += "mpc.baseMVA = " + format_double(raw.base_mva) + ";\n";
  auto emit = [&](const char* name, const Table& table) {
    out += std::string("mpc.") + name + " = [\n";
    for (const auto& row : table) {
      out += '\t';
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) {
          out += '\t';
        }
        out += format_double(row[i]);
      }
      out += ";\n";
    }
    out += "];\n";
  };
  emit("bus", raw.bus);
  emit("gen", raw.gen);
  emit("branch", raw.branch);
  emit("gencost", raw.gencost);
  return out;
}

int NetworkModel::bus_index(int id) const {
  for (int i = 0; i < num_buses(); ++i) {
    if (buses[i].id == id) {
      return i;
    }
  }
  throw Error(ErrorKind::InvalidCase, "unknown bus id " + std::to_string(id));
}

double NetworkModel::total_p_max() const {
  double total = 0.0;
  for (const auto& g : gens) {
    total += g.p_max;
  }
  return total;
}

NetworkModel build_model(const RawCase& raw) {
  NetworkModel model;
  model.name = raw.name;
  model.base_mva = raw.base_mva;
  const double base = raw.base_mva;

  int slack_count = 0;
  for (const auto& row : raw.bus) {
    Bus bus;
    bus.id = static_cast<int>(row[0]);
    bus.type = static_cast<int>(row[1]);
    bus.gs = row[4] / base;
    bus.bs = row[5] / base;
    bus.v_max = row[11];
    bus.v_min = row[12];
    if (bus.v_min > bus.v_max) {
      throw Error(ErrorKind::InvalidCase,
                  "bus " + std::to_string(bus.id) + " has v_min > v_max");
    }
    if (bus.type == 3) {
      model.slack = model.num_buses();
      ++slack_count;
    }
    const double pd = row[2] / base;
    const double qd = row[3] / base;
    if (pd != 0.0 || qd != 0.0) {
      model.loads.push_back(Load{model.num_buses(), pd, qd});
    }
    model.buses.push_back(bus);
  }
  if (slack_count != 1) {
    throw Error(ErrorKind::NoSlackBus,
                "expected exactly one type-3 bus, found " +
                    std::to_string(slack_count));
  }

  if (raw.gencost.size() < raw.gen.size()) {
    throw Error(ErrorKind::InvalidCase, "gencost has fewer rows than gen");
  }
  for (std::size_t r = 0; r < raw.gen.size(); ++r) {
    const auto& row = raw.gen[r];
    const auto& cost = raw.gencost[r];
    if (static_cast<int>(cost[0]) != 2 || static_cast<int>(cost[3]) != 3 ||
        cost.size() < 7) {
      throw Error(ErrorKind::InvalidCase,
                  "gencost row " + std::to_string(r + 1) +
                      ": only polynomial model 2 with 3 coefficients is "
                      "supported");
    }
    if (row[7] <= 0.0) {
      continue;
    }
    Generator g;
    g.bus = model.bus_index(static_cast<int>(row[0]));
    g.case_row = static_cast<int>(r) + 1;
    g.q_max = row[3] / base;
    g.q_min = row[4] / base;
    g.v_setpoint = row[5];
    g.p_max = row[8] / base;
    g.p_min = row[9] / base;
    g.cost_a = cost[4] * base * base;
    g.cost_b = cost[5] * base;
    g.cost_c = cost[6];
    if (g.p_min > g.p_max || g.q_min > g.q_max) {
      throw Error(ErrorKind::InvalidCase,
                  "generator " + std::to_string(r + 1) + " has inverted limits");
    }
    model.gens.push_back(g);
  }

  for (std::size_t r = 0; r < raw.branch.size(); ++r) {
    const auto& row = raw.branch[r];
    if (row[10] <= 0.0) {
      continue;
    }
    Branch br;
    br.from = model.bus_index(static_cast<int>(row[0]));
    br.to = model.bus_index(static_cast<int>(row[1]));
    br.case_row = static_cast<int>(r) + 1;
    br.r = row[2];
    br.x = row[3];
    br.b = row[4];
    br.rate = row[5] / base;
    br.tap = row[8] == 0.0 ? 1.0 : row[8];
    br.shift = to_radians(row[9]);
    if (br.from == br.to) {
      throw Error(ErrorKind::InvalidCase,
                  "branch " + std::to_string(r + 1) + " connects a bus to itself");
    }
    if (br.r * br.r + br.x * br.x <= 0.0) {
      throw Error(ErrorKind::InvalidCase,
                  "branch " + std::to_string(r + 1) + " has zero impedance");
    }
    if (row.size() >= 13) {
      // MATPOWER: a side is constrained when nonzero and within +-360 deg.
      const double lo = row[11];
      const double hi = row[12];
      const bool constrained =
          (lo != 0.0 && lo > -360.0) || (hi != 0.0 && hi < 360.0);
      if (constrained) {
        if (lo > -360.0) {
          br.angle_min = to_radians(lo);
        }
        if (hi < 360.0) {
          br.angle_max = to_radians(hi);
        }
      }
    }
    model.branches.push_back(br);
  }

  std::vector<bool> connected(model.buses.size(), false);
  for (const auto& br : model.branches) {
    connected[br.from] = connected[br.to] = true;
  }
  for (const auto& g : model.gens) {
    connected[g.bus] = true;
  }
  for (int i = 0; i < model.num_buses(); ++i) {
    if (!connected[i]) {
      model.warnings.push_back("IslandedBus: bus " +
                               std::to_string(model.buses[i].id) +
                               " has no branch and no generator");
    }
  }
  return model;
}

NetworkModel load_case(const std::filesystem::path& path) {
  return build_model(read_matpower_file(path));
}

BranchAdmittance branch_admittance(const Branch& branch) {
  using C = std::complex<double>;
  const C ys = 1.0 / C(branch.r, branch.x);
  const C ytt = ys + C(0.0, branch.b / 2.0);
  const C tap = std::polar(branch.tap, branch.shift);
  BranchAdmittance y;
  y.ff = ytt / (branch.tap * branch.tap);
  y.ft = -ys / std::conj(tap);
  y.tf = -ys / tap;
  y.tt = ytt;
  return y;
}

AdmittanceMatrix admittance(const NetworkModel& model) {
  using C = std::complex<double>;
  std::vector<Eigen::Triplet<C>> entries;
  entries.reserve(4 * model.branches.size() + model.buses.size());
  for (const auto& br : model.branches) {
    const auto y = branch_admittance(br);
    entries.emplace_back(br.from, br.from, y.ff);
    entries.emplace_back(br.from, br.to, y.ft);
    entries.emplace_back(br.to, br.from, y.tf);
    entries.emplace_back(br.to, br.to, y.tt);
  }
  for (int i = 0; i < model.num_buses(); ++i) {
    const auto& bus = model.buses[i];
    if (bus.gs != 0.0 || bus.bs != 0.0) {
      entries.emplace_back(i, i, C(bus.gs, bus.bs));
    }
  }
  AdmittanceMatrix y(model.num_buses(), model.num_buses());
  y.setFromTriplets(entries.begin(), entries.end());
  return y;
}

}  // namespace opflearn
