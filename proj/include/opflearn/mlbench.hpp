#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "opflearn/dataset.hpp"

namespace opflearn::ml {

enum class Target { Pg, Vg };

std::string_view to_string(Target target);
Target parse_target(std::string_view text);

/// Per-feature affine map to zero mean and unit deviation.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  /// Statistics over the rows of `samples`. Zero-deviation features keep
  /// scale 1.
  static Normalizer fit(const Eigen::MatrixXd& samples);

  /// Row-wise (x - mean) / scale and its inverse.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& samples) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& normalized) const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 0;

  /// Throws Error{InvalidArgument} on a non-positive rate, batch or epoch count.
  void validate() const;
};

/// Fully connected network: sigmoid on hidden layers, identity on the output.
class Mlp {
 public:
  Mlp() = default;

  /// Xavier-uniform weights and zero biases drawn from `seed`.
  Mlp(std::vector<int> widths, std::uint64_t seed);

  /// Widths for a network with `inputs` features and `outputs` targets:
  /// {inputs, inputs, inputs, outputs, outputs}.
  static std::vector<int> standard_widths(int inputs, int outputs);

  const std::vector<int>& widths() const { return widths_; }
  int num_inputs() const { return widths_.front(); }
  int num_outputs() const { return widths_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  const Eigen::MatrixXd& weight(int layer) const { return weights_[layer]; }
  const Eigen::VectorXd& bias(int layer) const { return biases_[layer]; }

  /// Predictions for the rows of `inputs`.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const;

  /// Mean squared error over every entry and its gradient with respect to
  /// parameters(). Rows are samples.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           Eigen::VectorXd& gradient) const;

  /// Weights (row-major) then bias of each layer, in layer order.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);
  int num_parameters() const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  std::vector<int> widths_;
  std::vector<Eigen::MatrixXd> weights_;  // out x in
  std::vector<Eigen::VectorXd> biases_;
};

/// A network with its normalizers. Training and prediction run in
/// normalized space; predictions are reported in the original units.
struct Model {
  Target target = Target::Pg;
  Mlp network;
  Normalizer input;
  Normalizer output;
  TrainConfig config;
  /// Training-set MSE (normalized) after each epoch.
  std::vector<double> loss_history;
  /// Fingerprint of the network the training data came from.
  std::string fingerprint;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& inputs) const;
};

/// Rows of stacked loads and of the chosen target.
Eigen::MatrixXd input_matrix(const Dataset& dataset);
Eigen::MatrixXd target_matrix(const Dataset& dataset, Target target);

/// Adam on minibatches of the MSE. Throws Error{DegenerateData} with fewer
/// than 2 samples.
Model fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
          const TrainConfig& config);

Model train(const Dataset& train_set, Target target, const TrainConfig& config);

struct Evaluation {
  /// Mean over records of the mean squared output error.
  double mse = 0.0;
  /// Largest per-record sum of absolute output errors.
  double max_sample_error = 0.0;
};

Evaluation evaluate(const Model& model, const Eigen::MatrixXd& inputs,
                    const Eigen::MatrixXd& targets);
Evaluation evaluate(const Model& model, const Dataset& test_set);

void save_model(const Model& model, const std::filesystem::path& file);
Model load_model(const std::filesystem::path& file);

struct CrossConfig {
  TrainConfig train;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  /// Models trained concurrently.
  int workers = 4;
};

struct CrossCell {
  Target target = Target::Pg;
  SamplingMethod train_method = SamplingMethod::OpfLearn;
  SamplingMethod test_method = SamplingMethod::OpfLearn;
  Evaluation result;
};

struct CrossReport {
  std::string case_name;
  /// Every (target, training set, test set) combination, targets outermost.
  std::vector<CrossCell> cells;
  /// Models indexed by target, then training method.
  std::vector<Model> models;

  const CrossCell& cell(Target target, SamplingMethod train, SamplingMethod test) const;
};

/// Splits both datasets, trains Pg and Vg models on each training split and
/// tests every model on both test splits. Throws Error{FingerprintMismatch}
/// when the datasets describe different networks.
CrossReport cross_experiment(const Dataset& opf_learn, const Dataset& typical,
                             const CrossConfig& config);

/// CSV with columns target,train_set,test_set,mse,max_sample_error.
void write_report_csv(const CrossReport& report, const std::filesystem::path& file);

}  // namespace opflearn::ml
