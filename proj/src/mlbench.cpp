#include "opflearn/mlbench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "opflearn/error.hpp"

namespace opflearn::ml {

using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

std::string_view to_string(Target target) { return target == Target::Pg ? "Pg" : "Vg"; }

Target parse_target(std::string_view text) {
  if (text == "Pg" || text == "pg") {
    return Target::Pg;
  }
  if (text == "Vg" || text == "vg") {
    return Target::Vg;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown target '" + std::string(text) + "'");
}

Normalizer Normalizer::fit(const MatrixXd& samples) {
  Normalizer n;
  n.mean = samples.colwise().mean().transpose();
  n.scale = VectorXd::Ones(samples.cols());
  if (samples.rows() > 1) {
    const MatrixXd centered = samples.rowwise() - n.mean.transpose();
    const VectorXd var = centered.array().square().colwise().sum().transpose() /
                         static_cast<double>(samples.rows());
    for (Eigen::Index j = 0; j < var.size(); ++j) {
      if (var[j] > 0.0) {
        n.scale[j] = std::sqrt(var[j]);
      }
    }
  }
  return n;
}

MatrixXd Normalizer::apply(const MatrixXd& samples) const {
  return (samples.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

MatrixXd Normalizer::invert(const MatrixXd& normalized) const {
  return (normalized.array().rowwise() * scale.transpose().array()).matrix().rowwise() +
         mean.transpose();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size <= 0 || epochs <= 0) {
    throw Error(ErrorKind::InvalidArgument,
                "learning rate, batch size and epochs must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "Adam moments must lie in [0, 1)");
  }
}

namespace {

MatrixXd sigmoid(const MatrixXd& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

}  // namespace

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed) : widths_(std::move(widths)) {
  if (widths_.size() < 2 ||
      std::any_of(widths_.begin(), widths_.end(), [](int w) { return w <= 0; })) {
    throw Error(ErrorKind::InvalidArgument, "network needs at least two positive widths");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l];
    const int out = widths_[l + 1];
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    // Glorot's sigmoid variant (4x) on layers feeding a sigmoid.
    const double gain = l + 2 < widths_.size() ? 4.0 : 1.0;
    const double limit = gain * std::sqrt(6.0 / (in + out));
    MatrixXd w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) {
        w(r, c) = limit * dist(rng);
      }
    }
    weights_.push_back(std::move(w));
    biases_.push_back(VectorXd::Zero(out));
  }
}

std::vector<int> Mlp::standard_widths(int inputs, int outputs) {
  return {inputs, inputs, inputs, outputs, outputs};
}

MatrixXd Mlp::predict(const MatrixXd& inputs) const {
  if (inputs.cols() != num_inputs()) {
    throw Error(ErrorKind::InvalidArgument, "input width does not match the network");
  }
  MatrixXd a = inputs.transpose();
  for (int l = 0; l < num_layers(); ++l) {
    MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
    a = l + 1 < num_layers() ? sigmoid(z) : std::move(z);
  }
  return a.transpose();
}

double Mlp::loss_and_gradient(const MatrixXd& inputs, const MatrixXd& targets,
                              VectorXd& gradient) const {
  const int layers = num_layers();
  std::vector<MatrixXd> acts;
  acts.reserve(layers + 1);
  acts.push_back(inputs.transpose());
  for (int l = 0; l < layers; ++l) {
    MatrixXd z = (weights_[l] * acts.back()).colwise() + biases_[l];
    acts.push_back(l + 1 < layers ? sigmoid(z) : std::move(z));
  }
  const MatrixXd residual = acts.back() - targets.transpose();
  const double count = static_cast<double>(residual.size());
  const double loss = residual.squaredNorm() / count;

  gradient.resize(num_parameters());
  std::vector<Eigen::Index> offset(layers);
  Eigen::Index pos = 0;
  for (int l = 0; l < layers; ++l) {
    offset[l] = pos;
    pos += weights_[l].size() + biases_[l].size();
  }
  MatrixXd delta = (2.0 / count) * residual;
  for (int l = layers - 1; l >= 0; --l) {
    if (l + 1 < layers) {
      delta.array() *= acts[l + 1].array() * (1.0 - acts[l + 1].array());
    }
    const MatrixXd dw = delta * acts[l].transpose();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        gradient.data() + offset[l], dw.rows(), dw.cols()) = dw;
    gradient.segment(offset[l] + dw.size(), biases_[l].size()) = delta.rowwise().sum();
    if (l > 0) {
      delta = weights_[l].transpose() * delta;
    }
  }
  return loss;
}

int Mlp::num_parameters() const {
  Eigen::Index n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    n += weights_[l].size() + biases_[l].size();
  }
  return static_cast<int>(n);
}

VectorXd Mlp::parameters() const {
  VectorXd theta(num_parameters());
  Eigen::Index pos = 0;
  for (int l = 0; l < num_layers(); ++l) {
    const MatrixXd& w = weights_[l];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        theta.data() + pos, w.rows(), w.cols()) = w;
    pos += w.size();
    theta.segment(pos, biases_[l].size()) = biases_[l];
    pos += biases_[l].size();
  }
  return theta;
}

void Mlp::set_parameters(const VectorXd& theta) {
  if (theta.size() != num_parameters()) {
    throw Error(ErrorKind::InvalidArgument, "parameter vector has the wrong length");
  }
  Eigen::Index pos = 0;
  for (int l = 0; l < num_layers(); ++l) {
    MatrixXd& w = weights_[l];
    w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        theta.data() + pos, w.rows(), w.cols());
    pos += w.size();
    biases_[l] = theta.segment(pos, biases_[l].size());
    pos += biases_[l].size();
  }
}

namespace {

std::vector<double> to_list(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_list(const nlohmann::json& j, Eigen::Index expected, const char* what) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != expected) {
    throw Error(ErrorKind::SchemaMismatch, std::string("checkpoint ") + what + " has " +
                                               std::to_string(values.size()) +
                                               " entries, expected " + std::to_string(expected));
  }
  return Eigen::Map<const VectorXd>(values.data(), expected);
}

}  // namespace

nlohmann::json Mlp::to_json() const {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (int l = 0; l < num_layers(); ++l) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = weights_[l];
    weights.push_back(std::vector<double>(w.data(), w.data() + w.size()));
    biases.push_back(to_list(biases_[l]));
  }
  return {{"widths", widths_}, {"weights", weights}, {"biases", biases}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp m;
  m.widths_ = j.at("widths").get<std::vector<int>>();
  if (m.widths_.size() < 2) {
    throw Error(ErrorKind::SchemaMismatch, "checkpoint needs at least two widths");
  }
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  const std::size_t layers = m.widths_.size() - 1;
  if (weights.size() != layers || biases.size() != layers) {
    throw Error(ErrorKind::SchemaMismatch, "checkpoint layer count does not match widths");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = m.widths_[l];
    const int out = m.widths_[l + 1];
    const VectorXd flat = from_list(weights[l], Eigen::Index{in} * out, "weights");
    m.weights_.push_back(
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            flat.data(), out, in));
    m.biases_.push_back(from_list(biases[l], out, "biases"));
  }
  return m;
}

MatrixXd Model::predict(const MatrixXd& inputs) const {
  return output.invert(network.predict(input.apply(inputs)));
}

MatrixXd input_matrix(const Dataset& ds) {
  MatrixXd x(static_cast<Eigen::Index>(ds.size()), 2 * ds.num_loads());
  for (std::size_t k = 0; k < ds.size(); ++k) {
    x.row(static_cast<Eigen::Index>(k)) = ds.records[k].x.stacked().transpose();
  }
  return x;
}

MatrixXd target_matrix(const Dataset& ds, Target target) {
  MatrixXd y(static_cast<Eigen::Index>(ds.size()), ds.num_gens());
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const DatasetRecord& r = ds.records[k];
    y.row(static_cast<Eigen::Index>(k)) = (target == Target::Pg ? r.pg : r.vg).transpose();
  }
  return y;
}

Model fit(const MatrixXd& inputs, const MatrixXd& targets, const TrainConfig& config) {
  config.validate();
  if (inputs.rows() < 2) {
    throw Error(ErrorKind::DegenerateData, "training needs at least 2 samples, got " +
                                               std::to_string(inputs.rows()));
  }
  if (targets.rows() != inputs.rows() || inputs.cols() == 0 || targets.cols() == 0) {
    throw Error(ErrorKind::InvalidArgument, "inputs and targets disagree in shape");
  }
  Model model;
  model.config = config;
  model.input = Normalizer::fit(inputs);
  model.output = Normalizer::fit(targets);
  model.network = Mlp(Mlp::standard_widths(static_cast<int>(inputs.cols()),
                                           static_cast<int>(targets.cols())),
                      config.seed);
  const MatrixXd x = model.input.apply(inputs);
  const MatrixXd y = model.output.apply(targets);

  const Eigen::Index n = x.rows();
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  VectorXd theta = model.network.parameters();
  VectorXd m = VectorXd::Zero(theta.size());
  VectorXd v = VectorXd::Zero(theta.size());
  VectorXd grad;
  double beta1_t = 1.0;
  double beta2_t = 1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, n - start);
      MatrixXd xb(size, x.cols());
      MatrixXd yb(size, y.cols());
      for (Eigen::Index k = 0; k < size; ++k) {
        xb.row(k) = x.row(order[start + k]);
        yb.row(k) = y.row(order[start + k]);
      }
      model.network.loss_and_gradient(xb, yb, grad);
      beta1_t *= config.beta1;
      beta2_t *= config.beta2;
      m = config.beta1 * m + (1.0 - config.beta1) * grad;
      v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
      theta.array() -= config.learning_rate * (m.array() / (1.0 - beta1_t)) /
                       ((v.array() / (1.0 - beta2_t)).sqrt() + config.epsilon);
      model.network.set_parameters(theta);
    }
    model.loss_history.push_back((model.network.predict(x) - y).squaredNorm() /
                                 static_cast<double>(y.size()));
  }
  return model;
}

Model train(const Dataset& train_set, Target target, const TrainConfig& config) {
  Model model = fit(input_matrix(train_set), target_matrix(train_set, target), config);
  model.target = target;
  model.fingerprint = train_set.fingerprint;
  return model;
}

Evaluation evaluate(const Model& model, const MatrixXd& inputs, const MatrixXd& targets) {
  if (targets.cols() != model.network.num_outputs() || targets.rows() != inputs.rows()) {
    throw Error(ErrorKind::InvalidArgument, "test data does not match the model shape");
  }
  Evaluation e;
  if (inputs.rows() == 0) {
    return e;
  }
  const MatrixXd err = model.predict(inputs) - targets;
  e.mse = err.array().square().rowwise().mean().mean();
  e.max_sample_error = err.cwiseAbs().rowwise().sum().maxCoeff();
  return e;
}

Evaluation evaluate(const Model& model, const Dataset& test_set) {
  return evaluate(model, input_matrix(test_set), target_matrix(test_set, model.target));
}

namespace {

nlohmann::json normalizer_json(const Normalizer& n) {
  return {{"mean", to_list(n.mean)}, {"scale", to_list(n.scale)}};
}

Normalizer normalizer_from(const nlohmann::json& j, int width) {
  return {from_list(j.at("mean"), width, "normalizer mean"),
          from_list(j.at("scale"), width, "normalizer scale")};
}

}  // namespace

void save_model(const Model& model, const fs::path& file) {
  const TrainConfig& c = model.config;
  const nlohmann::json j = {
      {"target", to_string(model.target)},
      {"fingerprint", model.fingerprint},
      {"network", model.network.to_json()},
      {"input_normalizer", normalizer_json(model.input)},
      {"output_normalizer", normalizer_json(model.output)},
      {"train_config",
       {{"learning_rate", c.learning_rate},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"epsilon", c.epsilon},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"seed", c.seed}}},
      {"loss_history", model.loss_history},
  };
  if (file.has_parent_path()) {
    fs::create_directories(file.parent_path());
  }
  std::ofstream out(file);
  out << j.dump(2) << '\n';
  if (!out) {
    throw Error(ErrorKind::IoError, "cannot write " + file.string());
  }
}

Model load_model(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw Error(ErrorKind::IoError, "cannot open " + file.string());
  }
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    Model m;
    m.target = parse_target(j.at("target").get<std::string>());
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.network = Mlp::from_json(j.at("network"));
    m.input = normalizer_from(j.at("input_normalizer"), m.network.num_inputs());
    m.output = normalizer_from(j.at("output_normalizer"), m.network.num_outputs());
    const auto& c = j.at("train_config");
    m.config.learning_rate = c.at("learning_rate");
    m.config.beta1 = c.at("beta1");
    m.config.beta2 = c.at("beta2");
    m.config.epsilon = c.at("epsilon");
    m.config.batch_size = c.at("batch_size");
    m.config.epochs = c.at("epochs");
    m.config.seed = c.at("seed");
    m.loss_history = j.at("loss_history").get<std::vector<double>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, file.filename().string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) {
      throw Error(ErrorKind::SchemaMismatch, file.filename().string() + ": " + e.what());
    }
    throw;
  }
}

const CrossCell& CrossReport::cell(Target target, SamplingMethod train,
                                   SamplingMethod test) const {
  for (const CrossCell& c : cells) {
    if (c.target == target && c.train_method == train && c.test_method == test) {
      return c;
    }
  }
  throw Error(ErrorKind::InvalidArgument, "report has no such cell");
}

CrossReport cross_experiment(const Dataset& opf_learn, const Dataset& typical,
                             const CrossConfig& config) {
  if (opf_learn.fingerprint != typical.fingerprint) {
    throw Error(ErrorKind::FingerprintMismatch,
                "datasets come from different networks: " + opf_learn.fingerprint + " vs " +
                    typical.fingerprint);
  }
  const auto [learn_train, learn_test] = split(opf_learn, config.train_fraction, config.split_seed);
  const auto [typ_train, typ_test] = split(typical, config.train_fraction, config.split_seed);

  constexpr Target kTargets[] = {Target::Pg, Target::Vg};
  constexpr SamplingMethod kMethods[] = {SamplingMethod::OpfLearn, SamplingMethod::Typical};
  const Dataset* train_sets[] = {&learn_train, &typ_train};
  const Dataset* test_sets[] = {&learn_test, &typ_test};

  CrossReport report;
  report.case_name = opf_learn.case_name;
  report.models.resize(4);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    const int threads = std::clamp(config.workers, 1, 4);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int i = next++; i < 4; i = next++) {
          try {
            report.models[i] = train(*train_sets[i % 2], kTargets[i / 2], config.train);
          } catch (...) {
            const std::lock_guard lock(failure_mutex);
            if (!failure) {
              failure = std::current_exception();
            }
          }
        }
      });
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  for (int i = 0; i < 4; ++i) {
    for (int test = 0; test < 2; ++test) {
      report.cells.push_back({kTargets[i / 2], kMethods[i % 2], kMethods[test],
                              evaluate(report.models[i], *test_sets[test])});
    }
  }
  return report;
}

void write_report_csv(const CrossReport& report, const fs::path& file) {
  std::ofstream out(file);
  out << "target,train_set,test_set,mse,max_sample_error\n";
  for (const CrossCell& c : report.cells) {
    out << to_string(c.target) << ',' << to_string(c.train_method) << ','
        << to_string(c.test_method) << ',' << format_double(c.result.mse) << ','
        << format_double(c.result.max_sample_error) << '\n';
  }
  if (!out) {
    throw Error(ErrorKind::IoError, "cannot write " + file.string());
  }
}

}  // namespace opflearn::ml
