// Command-line front end: dataset generation, analysis, training and checks.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "opflearn/dataset.hpp"
#include "opflearn/error.hpp"
#include "opflearn/mlbench.hpp"
#include "opflearn/netio.hpp"
#include "opflearn/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace opflearn;

namespace {

constexpr std::string_view kVersion = "0.1.0";

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) {
    fs::create_directories(file.parent_path());
  }
  std::ofstream out(file);
  out << j.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorKind::IoError, "cannot write " + file.string());
  }
}

/// Run record next to the outputs. The only file that carries wall-clock data.
class Manifest {
 public:
  Manifest(std::string subcommand, json options)
      : subcommand_(std::move(subcommand)), options_(std::move(options)) {}

  void write(const fs::path& file, const json& extra = json::object()) const {
    json j = {
        {"tool", "opflearn"},
        {"version", kVersion},
        {"subcommand", subcommand_},
        {"options", options_},
        {"started_at", started_at_},
        {"elapsed_seconds",
         std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()},
    };
    j.update(extra);
    write_json(file, j);
  }

 private:
  std::string subcommand_;
  json options_;
  std::string started_at_ = utc_timestamp();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Seeds are always recorded; a missing one is drawn from the OS.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) {
    return *seed;
  }
  std::random_device rd;
  return (std::uint64_t{rd()} << 32) | rd();
}

void parse_max_load_mode(const std::string& text, RunConfig& config) {
  if (text == "solve") {
    config.max_load_mode = MaxLoadMode::Solve;
    return;
  }
  if (text == "nominal" || text.starts_with("nominal:")) {
    config.max_load_mode = MaxLoadMode::NominalMultiple;
    if (text.size() > 8) {
      std::size_t used = 0;
      try {
        config.kappa = std::stod(text.substr(8), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != text.size() - 8 || !(config.kappa > 0.0)) {
        throw std::invalid_argument("kappa must be a positive number");
      }
    }
    return;
  }
  throw std::invalid_argument("expected solve or nominal[:kappa]");
}

json stats_json(const RunResult& r) {
  json j = to_json(r.stats);
  j["status"] = to_string(r.status);
  j["unique_active_sets"] = unique_active_sets(r.dataset).count;
  return j;
}

json timings_json(const RunStats& s) {
  return {{"setup", s.seconds_setup},
          {"sampling", s.seconds_sampling},
          {"acopf", s.seconds_acopf},
          {"projection", s.seconds_projection}};
}

void write_certificates(const RunResult& r, const fs::path& file) {
  std::ofstream out(file);
  const HalfspacePolytope& p = r.polytope;
  out << "row";
  for (int j = 0; j < p.dim(); ++j) out << ",a_" << j;
  out << ",b";
  for (int j = 0; j < p.dim(); ++j) out << ",x_hat_" << j;
  for (int j = 0; j < p.dim(); ++j) out << ",x_star_" << j;
  out << '\n';
  for (const Certificate& c : r.certificates) {
    out << c.row;
    for (int j = 0; j < p.dim(); ++j) out << ',' << format_double(p.a()(c.row, j));
    out << ',' << format_double(p.b()[c.row]);
    for (int j = 0; j < p.dim(); ++j) out << ',' << format_double(c.x_hat[j]);
    for (int j = 0; j < p.dim(); ++j) out << ',' << format_double(c.x_star[j]);
    out << '\n';
  }
  if (!out) {
    throw Error(ErrorKind::IoError, "cannot write " + file.string());
  }
}

/// Writes a run's dataset, stats and manifest. Returns the exit status.
int finish_run(const RunResult& r, const fs::path& out, const Manifest& manifest) {
  write_csv(r.dataset, out);
  write_json(out / "stats.json", stats_json(r));
  manifest.write(out / "manifest.json", {{"timings_seconds", timings_json(r.stats)}});
  std::cout << "records: " << r.dataset.size() << "\n"
            << "attempted: " << r.stats.samples_attempted << "\n"
            << "certificates: " << r.stats.certificates_added << "\n"
            << "unique_active_sets: " << unique_active_sets(r.dataset).count << "\n"
            << "status: " << to_string(r.status) << "\n";
  if (!r.complete()) {
    std::cerr << "error: " << to_string(r.status) << ": collected " << r.dataset.size()
              << " of the requested records\n";
    return 1;
  }
  return 0;
}

struct Options {
  // generate / baseline
  std::string case_file;
  std::string out;
  long n = 100;
  std::optional<std::uint64_t> seed;
  std::string max_load_mode = "solve";
  double proj_tol = kDefaultProjTol;
  double active_tol = kDefaultActiveTol;
  long max_attempts = 0;
  int thinning = 0;
  int burn_in = -1;
  int workers = 1;
  double width = 0.2;
  bool reactive_from_active = false;
  // analyze / train / eval / pf-check
  std::string data;
  std::string curve_out;
  std::string target = "Pg";
  std::string model;
  std::string opf_learn_data;
  std::string typical_data;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  ml::TrainConfig train;
  std::string split_part = "test";
  double pf_tol = 1e-6;
};

int run_generate(const Options& o) {
  RunConfig c;
  c.n = o.n;
  c.seed = resolve_seed(o.seed);
  parse_max_load_mode(o.max_load_mode, c);
  c.proj_tol = o.proj_tol;
  c.active_tol = o.active_tol;
  c.max_attempts = o.max_attempts;
  c.sampler.thinning = o.thinning;
  c.sampler.burn_in = o.burn_in;
  c.workers = o.workers;
  json options = to_json(c);
  options["case"] = o.case_file;
  options["out"] = o.out;
  options["workers"] = c.workers;
  const Manifest manifest("generate", options);

  const NetworkModel model = load_case(o.case_file);
  const RunResult r = create_dataset(model, c);
  const int status = finish_run(r, o.out, manifest);
  write_certificates(r, fs::path(o.out) / "certificates.csv");
  return status;
}

int run_baseline(const Options& o) {
  TypicalConfig c;
  c.n = o.n;
  c.seed = resolve_seed(o.seed);
  c.width = o.width;
  c.active_tol = o.active_tol;
  c.max_attempts = o.max_attempts;
  c.workers = o.workers;
  c.reactive_from_active = o.reactive_from_active;
  json options = to_json(c);
  options["case"] = o.case_file;
  options["out"] = o.out;
  options["workers"] = c.workers;
  const Manifest manifest("baseline", options);

  const NetworkModel model = load_case(o.case_file);
  return finish_run(typical_dataset(model, c), o.out, manifest);
}

int run_analyze(const Options& o) {
  const Dataset ds = read_csv(o.data);
  const ActiveSetGrowth g = unique_active_sets(ds);
  std::cout << "records: " << ds.size() << "\n"
            << "unique_active_sets: " << g.count << "\n";
  if (!o.curve_out.empty()) {
    const fs::path file = o.curve_out;
    if (file.has_parent_path()) {
      fs::create_directories(file.parent_path());
    }
    std::ofstream out(file);
    out << "samples,unique_active_sets\n";
    for (std::size_t k = 0; k < g.curve.size(); ++k) {
      out << k + 1 << ',' << g.curve[k] << '\n';
    }
    if (!out) {
      throw Error(ErrorKind::IoError, "cannot write " + file.string());
    }
  }
  return 0;
}

json train_config_json(const ml::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},     {"beta2", c.beta2},
          {"epsilon", c.epsilon},             {"batch_size", c.batch_size},
          {"epochs", c.epochs},               {"seed", c.seed}};
}

int run_train(const Options& o) {
  json options = {{"train", train_config_json(o.train)},
                  {"train_fraction", o.train_fraction},
                  {"split_seed", o.split_seed},
                  {"out", o.out}};
  if (!o.data.empty()) {
    options["data"] = o.data;
    options["target"] = o.target;
    const Manifest manifest("train", options);
    const ml::Target target = ml::parse_target(o.target);
    const Dataset train_set = split(read_csv(o.data), o.train_fraction, o.split_seed).first;
    const ml::Model m = ml::train(train_set, target, o.train);
    ml::save_model(m, o.out);
    manifest.write(fs::path(o.out).replace_extension(".manifest.json"));
    std::cout << "final_train_loss: " << m.loss_history.back() << "\n";
    return 0;
  }
  options["opf_learn"] = o.opf_learn_data;
  options["typical"] = o.typical_data;
  options["workers"] = o.workers;
  const Manifest manifest("train", options);
  ml::CrossConfig c;
  c.train = o.train;
  c.train_fraction = o.train_fraction;
  c.split_seed = o.split_seed;
  c.workers = o.workers;
  const ml::CrossReport report =
      ml::cross_experiment(read_csv(o.opf_learn_data), read_csv(o.typical_data), c);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  // Models are ordered by target, then training method (OPF-Learn first).
  for (std::size_t i = 0; i < report.models.size(); ++i) {
    const ml::Model& m = report.models[i];
    ml::save_model(m, dir / (std::string(ml::to_string(m.target)) +
                             (i % 2 == 0 ? "_opf-learn.json" : "_typical.json")));
  }
  ml::write_report_csv(report, dir / "report.csv");
  manifest.write(dir / "manifest.json");
  std::cout << "target,train_set,test_set,mse,max_sample_error\n";
  for (const ml::CrossCell& cell : report.cells) {
    std::cout << ml::to_string(cell.target) << ',' << to_string(cell.train_method) << ','
              << to_string(cell.test_method) << ',' << cell.result.mse << ','
              << cell.result.max_sample_error << '\n';
  }
  return 0;
}

int run_eval(const Options& o) {
  const ml::Model m = ml::load_model(o.model);
  Dataset ds = read_csv(o.data);
  if (ds.fingerprint != m.fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch,
                "model trained on " + m.fingerprint + ", data from " + ds.fingerprint);
  }
  if (o.split_part != "all") {
    auto [train, test] = split(ds, o.train_fraction, o.split_seed);
    ds = o.split_part == "train" ? std::move(train) : std::move(test);
  }
  const ml::Evaluation e = ml::evaluate(m, ds);
  const json j = {{"records", ds.size()},
                  {"target", ml::to_string(m.target)},
                  {"mse", e.mse},
                  {"max_sample_error", e.max_sample_error}};
  std::cout << j.dump() << "\n";
  return 0;
}

int run_pf_check(const Options& o) {
  const NetworkModel model = load_case(o.case_file);
  const Dataset ds = read_csv(o.data);
  if (ds.fingerprint != fingerprint(model)) {
    throw Error(ErrorKind::FingerprintMismatch,
                "dataset from " + ds.fingerprint + ", case is " + fingerprint(model));
  }
  double worst = 0.0;
  long failures = 0;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const RecordCheck c = check_record(model, ds.records[k]);
    worst = std::max(worst, c.residual);
    if (!c.converged || !(c.residual <= o.pf_tol)) {
      ++failures;
      std::cout << "record " << k << ": "
                << (c.converged ? "residual " + format_double(c.residual) : "no convergence")
                << "\n";
    }
  }
  std::cout << "records: " << ds.size() << "\n"
            << "max_residual: " << worst << "\n"
            << "failures: " << failures << "\n";
  if (failures > 0) {
    std::cerr << "error: NoConvergence: " << failures << " records fail the power flow check\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representative AC OPF dataset generation and benchmarks", "opflearn"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Options o;

  const auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "RNG seed (drawn from the OS when absent)");
  };
  const auto add_run_common = [&](CLI::App* sub) {
    sub->add_option("--case", o.case_file, "MATPOWER case file")->required()->check(
        CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--n", o.n, "Number of AC-feasible records")->check(CLI::NonNegativeNumber);
    sub->add_option("--active-tol", o.active_tol, "Active-constraint dual threshold");
    sub->add_option("--max-attempts", o.max_attempts, "Candidate budget (0 = 100 n)");
    sub->add_option("--workers", o.workers, "Parallel solves")->check(CLI::PositiveNumber);
    add_seed(sub);
  };

  CLI::App* generate = app.add_subcommand("generate", "Build an OPF-Learn dataset");
  add_run_common(generate);
  generate
      ->add_option("--max-load-mode", o.max_load_mode,
                   "solve | nominal[:kappa] (upper bound on each load)")
      ->check(CLI::Validator(
          [](std::string& text) {
            try {
              RunConfig scratch;
              parse_max_load_mode(text, scratch);
            } catch (const std::invalid_argument& e) {
              return std::string(e.what());
            }
            return std::string();
          },
          "MODE"));
  generate->add_option("--proj-tol", o.proj_tol, "Projection distance tolerance");
  generate->add_option("--thinning", o.thinning, "Hit-and-run steps per sample (0 = auto)");
  generate->add_option("--burn-in", o.burn_in, "Steps after each restart (-1 = auto)");

  CLI::App* baseline = app.add_subcommand("baseline", "Build a typical (uniform box) dataset");
  add_run_common(baseline);
  baseline->add_option("--width", o.width, "Relative half-width around nominal loads");
  baseline->add_flag("--reactive-from-active", o.reactive_from_active,
                     "Centre reactive draws on nominal active demand");

  CLI::App* analyze = app.add_subcommand("analyze", "Count unique active sets");
  analyze->add_option("--data", o.data, "Dataset directory")->required()->check(
      CLI::ExistingDirectory);
  analyze->add_option("--curve", o.curve_out, "Write the growth curve CSV here");

  const auto add_split = [&](CLI::App* sub) {
    sub->add_option("--train-fraction", o.train_fraction, "Training share of each dataset");
    sub->add_option("--split-seed", o.split_seed, "Shuffle seed for the split");
  };

  CLI::App* train = app.add_subcommand("train", "Train MLP models");
  auto* train_data = train->add_option("--data", o.data, "Dataset directory (single model)");
  auto* learn_data = train->add_option("--opf-learn", o.opf_learn_data,
                                       "OPF-Learn dataset (cross experiment)");
  auto* typ_data =
      train->add_option("--typical", o.typical_data, "Typical dataset (cross experiment)");
  learn_data->needs(typ_data);
  typ_data->needs(learn_data);
  train_data->excludes(learn_data)->excludes(typ_data);
  train->add_option("--target", o.target, "Pg or Vg (single model)");
  train->add_option("--out", o.out, "Checkpoint file, or directory for the cross experiment")
      ->required();
  train->add_option("--epochs", o.train.epochs)->check(CLI::PositiveNumber);
  train->add_option("--learning-rate", o.train.learning_rate)->check(CLI::PositiveNumber);
  train->add_option("--batch-size", o.train.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--seed", o.train.seed, "Initialisation and shuffling seed");
  train->add_option("--workers", o.workers, "Models trained in parallel")
      ->check(CLI::PositiveNumber);
  add_split(train);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--model", o.model, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_option("--part", o.split_part, "test | train | all")
      ->check(CLI::IsMember({"test", "train", "all"}));
  add_split(eval);

  CLI::App* pf_check = app.add_subcommand("pf-check", "Re-verify records with a power flow");
  pf_check->add_option("--case", o.case_file, "MATPOWER case file")->required()->check(
      CLI::ExistingFile);
  pf_check->add_option("--data", o.data, "Dataset directory")->required();
  pf_check->add_option("--tol", o.pf_tol, "Residual tolerance (p.u.)");

  try {
    app.parse(argc, argv);
    if (train->parsed() && o.data.empty() && o.opf_learn_data.empty()) {
      throw CLI::RequiredError("train needs --data or --opf-learn/--typical");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return run_generate(o);
    if (baseline->parsed()) return run_baseline(o);
    if (analyze->parsed()) return run_analyze(o);
    if (train->parsed()) return run_train(o);
    if (eval->parsed()) return run_eval(o);
    if (pf_check->parsed()) return run_pf_check(o);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
