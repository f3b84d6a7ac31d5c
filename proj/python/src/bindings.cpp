#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "opflearn/acopf.hpp"
#include "opflearn/dataset.hpp"
#include "opflearn/error.hpp"
#include "opflearn/mlbench.hpp"
#include "opflearn/netio.hpp"
#include "opflearn/pipeline.hpp"
#include "opflearn/relax.hpp"

namespace py = pybind11;
using namespace opflearn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MaxLoadMode parse_mode(const std::string& text) {
  if (text == "solve") return MaxLoadMode::Solve;
  if (text == "nominal") return MaxLoadMode::NominalMultiple;
  throw Error(ErrorKind::InvalidArgument, "max_load_mode must be 'solve' or 'nominal'");
}

template <typename Field>
MatrixXd stack_rows(const Dataset& ds, Eigen::Index cols, Field field) {
  MatrixXd m(static_cast<Eigen::Index>(ds.size()), cols);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    m.row(static_cast<Eigen::Index>(k)) = field(ds.records[k]).transpose();
  }
  return m;
}

py::dict stats_dict(const RunStats& stats) {
  py::dict d;
  d["samples_attempted"] = stats.samples_attempted;
  d["feasible_found"] = stats.feasible_found;
  d["certificates_added"] = stats.certificates_added;
  d["relax_feasible_but_ac_failed"] = stats.relax_feasible_but_ac_failed;
  d["unique_active_set_curve"] = stats.unique_active_set_curve;
  return d;
}

py::tuple run_tuple(RunResult&& result) {
  return py::make_tuple(std::move(result.dataset), std::string(to_string(result.status)),
                        stats_dict(result.stats));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "AC OPF dataset generation and learning benchmarks";

  static py::exception<Error> error_type(m, "OpflearnError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<NetworkModel>(m, "NetworkModel")
      .def_readonly("name", &NetworkModel::name)
      .def_readonly("base_mva", &NetworkModel::base_mva)
      .def_readonly("warnings", &NetworkModel::warnings)
      .def_property_readonly("num_buses", &NetworkModel::num_buses)
      .def_property_readonly("num_gens", &NetworkModel::num_gens)
      .def_property_readonly("num_branches", &NetworkModel::num_branches)
      .def_property_readonly("num_loads", &NetworkModel::num_loads)
      .def_property_readonly("total_p_max", &NetworkModel::total_p_max)
      .def_property_readonly("fingerprint", [](const NetworkModel& n) { return fingerprint(n); })
      .def("nominal_load", [](const NetworkModel& n) {
        const LoadProfile x = LoadProfile::nominal(n);
        return py::make_tuple(x.p, x.q);
      }, "Nominal (p, q) per load in p.u.");

  m.def("load_case", &load_case, py::arg("path"), "Reads a MATPOWER case file.");
  m.def("parse_case", [](const std::string& text) { return build_model(parse_matpower(text)); },
        py::arg("text"));

  py::class_<AcOpfSolution>(m, "AcOpfSolution")
      .def_property_readonly("status", [](const AcOpfSolution& s) { return std::string(to_string(s.status)); })
      .def_property_readonly("ok", &AcOpfSolution::ok)
      .def_readonly("vg", &AcOpfSolution::vg)
      .def_readonly("pg", &AcOpfSolution::pg)
      .def_readonly("qg", &AcOpfSolution::qg)
      .def_readonly("objective", &AcOpfSolution::objective)
      .def_readonly("iterations", &AcOpfSolution::iterations)
      .def_readonly("max_violation", &AcOpfSolution::max_violation)
      .def_property_readonly("duals", [](const AcOpfSolution& s) {
        VectorXd d(static_cast<Eigen::Index>(s.duals.size()));
        for (std::size_t k = 0; k < s.duals.size(); ++k) d[static_cast<Eigen::Index>(k)] = s.duals[k].multiplier;
        return d;
      })
      .def("active_set", [](const AcOpfSolution& s, double tol) { return active_set(s, tol).to_string(); },
           py::arg("active_tol") = kDefaultActiveTol);

  m.def("dual_labels", &dual_labels, py::arg("model"));
  m.def("solve_acopf", [](const NetworkModel& n, const VectorXd& p, const VectorXd& q) {
    return solve_acopf(n, LoadProfile{p, q});
  }, py::arg("model"), py::arg("p"), py::arg("q"), py::call_guard<py::gil_scoped_release>());
  m.def("solve_relaxed", [](const NetworkModel& n, const VectorXd& p, const VectorXd& q) {
    const RelaxResult r = solve_relaxed(n, LoadProfile{p, q});
    return py::make_tuple(std::string(to_string(r.status)), r.objective, r.distance);
  }, py::arg("model"), py::arg("p"), py::arg("q"),
        "Relaxed cost lower bound as (status, objective, projection distance).");
  m.def("max_load", [](const NetworkModel& n, int k) { return max_load(n, k); },
        py::arg("model"), py::arg("load_index"));

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("case_name", &Dataset::case_name)
      .def_readonly("fingerprint", &Dataset::fingerprint)
      .def_readonly("seed", &Dataset::seed)
      .def_readonly("load_buses", &Dataset::load_buses)
      .def_readonly("gen_rows", &Dataset::gen_rows)
      .def_readonly("dual_labels", &Dataset::dual_labels)
      .def_property_readonly("method", [](const Dataset& d) { return std::string(to_string(d.method)); })
      .def("__len__", &Dataset::size)
      .def_property_readonly("inputs", [](const Dataset& d) { return ml::input_matrix(d); })
      .def_property_readonly("pg", [](const Dataset& d) { return stack_rows(d, d.num_gens(), [](const DatasetRecord& r) { return r.pg; }); })
      .def_property_readonly("vg", [](const Dataset& d) { return stack_rows(d, d.num_gens(), [](const DatasetRecord& r) { return r.vg; }); })
      .def_property_readonly("duals", [](const Dataset& d) {
        return stack_rows(d, static_cast<Eigen::Index>(d.dual_labels.size()), [](const DatasetRecord& r) { return r.duals; });
      })
      .def_property_readonly("objectives", [](const Dataset& d) {
        VectorXd v(static_cast<Eigen::Index>(d.size()));
        for (std::size_t k = 0; k < d.size(); ++k) v[static_cast<Eigen::Index>(k)] = d.records[k].objective;
        return v;
      })
      .def("unique_active_sets", [](const Dataset& d) { return unique_active_sets(d).count; })
      .def("write_csv", [](const Dataset& d, const std::filesystem::path& dir) { write_csv(d, dir); }, py::arg("directory"));

  m.def("read_csv", &read_csv, py::arg("directory"));
  m.def("split", [](const Dataset& d, double fraction, std::uint64_t seed) { return split(d, fraction, seed); },
        py::arg("dataset"), py::arg("train_fraction") = 0.8, py::arg("seed") = 0);

  m.def("create_dataset", [](const NetworkModel& n, long count, std::uint64_t seed, const std::string& mode,
                             double kappa, long max_attempts, int workers) {
    RunConfig c;
    c.n = count;
    c.seed = seed;
    c.max_load_mode = parse_mode(mode);
    c.kappa = kappa;
    c.max_attempts = max_attempts;
    c.workers = workers;
    py::gil_scoped_release release;
    RunResult r = create_dataset(n, c);
    py::gil_scoped_acquire acquire;
    return run_tuple(std::move(r));
  }, py::arg("model"), py::arg("n"), py::arg("seed") = 0, py::arg("max_load_mode") = "solve",
        py::arg("kappa") = 2.0, py::arg("max_attempts") = 0, py::arg("workers") = 1,
        "Shrinking-polytope sampling. Returns (dataset, status, stats).");

  m.def("typical_dataset", [](const NetworkModel& n, long count, std::uint64_t seed, double width,
                              long max_attempts, int workers) {
    TypicalConfig c;
    c.n = count;
    c.seed = seed;
    c.width = width;
    c.max_attempts = max_attempts;
    c.workers = workers;
    py::gil_scoped_release release;
    RunResult r = typical_dataset(n, c);
    py::gil_scoped_acquire acquire;
    return run_tuple(std::move(r));
  }, py::arg("model"), py::arg("n"), py::arg("seed") = 0, py::arg("width") = 0.2,
        py::arg("max_attempts") = 0, py::arg("workers") = 1,
        "Uniform draws around the nominal load. Returns (dataset, status, stats).");

  py::class_<ml::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &ml::TrainConfig::learning_rate)
      .def_readwrite("batch_size", &ml::TrainConfig::batch_size)
      .def_readwrite("epochs", &ml::TrainConfig::epochs)
      .def_readwrite("seed", &ml::TrainConfig::seed);

  py::class_<ml::Model>(m, "Model")
      .def_property_readonly("target", [](const ml::Model& model) { return std::string(ml::to_string(model.target)); })
      .def_readonly("fingerprint", &ml::Model::fingerprint)
      .def_readonly("loss_history", &ml::Model::loss_history)
      .def_property_readonly("widths", [](const ml::Model& model) { return model.network.widths(); })
      .def("predict", &ml::Model::predict, py::arg("inputs"))
      .def("save", [](const ml::Model& model, const std::filesystem::path& f) { ml::save_model(model, f); },
           py::arg("path"));

  m.def("load_model", &ml::load_model, py::arg("path"));
  m.def("train", [](const Dataset& d, const std::string& target, const ml::TrainConfig& c) {
    return ml::train(d, ml::parse_target(target), c);
  }, py::arg("dataset"), py::arg("target"), py::arg("config") = ml::TrainConfig{},
        py::call_guard<py::gil_scoped_release>());
  m.def("evaluate", [](const ml::Model& model, const Dataset& d) {
    const ml::Evaluation e = ml::evaluate(model, d);
    return py::make_tuple(e.mse, e.max_sample_error);
  }, py::arg("model"), py::arg("dataset"), "Returns (mse, max_sample_error).");

  m.def("cross_experiment", [](const Dataset& opf_learn, const Dataset& typical, const ml::TrainConfig& train,
                               double fraction, std::uint64_t split_seed, int workers) {
    ml::CrossConfig c{train, fraction, split_seed, workers};
    ml::CrossReport report;
    {
      py::gil_scoped_release release;
      report = ml::cross_experiment(opf_learn, typical, c);
    }
    py::list rows;
    for (const ml::CrossCell& cell : report.cells) {
      py::dict row;
      row["target"] = std::string(ml::to_string(cell.target));
      row["train_set"] = std::string(to_string(cell.train_method));
      row["test_set"] = std::string(to_string(cell.test_method));
      row["mse"] = cell.result.mse;
      row["max_sample_error"] = cell.result.max_sample_error;
      rows.append(row);
    }
    return rows;
  }, py::arg("opf_learn"), py::arg("typical"), py::arg("train") = ml::TrainConfig{},
        py::arg("train_fraction") = 0.8, py::arg("split_seed") = 0, py::arg("workers") = 4);

}
