#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "opflearn/error.hpp"
#include "opflearn/mlbench.hpp"

using namespace opflearn;
using namespace opflearn::ml;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

/// Synthetic dataset with outputs linear in the loads.
Dataset linear_dataset(int n, std::uint64_t seed, const std::string& fp, SamplingMethod method) {
  Dataset ds;
  ds.fingerprint = fp;
  ds.method = method;
  ds.load_buses = {1, 2};
  ds.gen_rows = {1, 2};
  const MatrixXd x = uniform(n, 4, seed);
  for (int k = 0; k < n; ++k) {
    DatasetRecord r;
    r.x = LoadProfile::from_stacked(x.row(k).transpose());
    r.pg = VectorXd(2);
    r.pg << x(k, 0) + 0.5 * x(k, 3), x(k, 1) - x(k, 2);
    r.vg = VectorXd::Constant(2, 1.0) + 0.01 * r.pg;
    ds.records.push_back(r);
  }
  return ds;
}

}  // namespace

TEST_CASE("network shape") {
  const Mlp net(Mlp::standard_widths(6, 5), 1);
  CHECK(net.widths() == std::vector<int>{6, 6, 6, 5, 5});
  CHECK(net.num_layers() == 4);
  CHECK(net.num_parameters() == 6 * 6 + 6 + 6 * 6 + 6 + 5 * 6 + 5 + 5 * 5 + 5);
  CHECK(net.predict(uniform(3, 6, 2)).rows() == 3);
  CHECK(net.predict(uniform(3, 6, 2)).cols() == 5);
  CHECK_THROWS_AS(net.predict(uniform(3, 5, 2)), Error);

  Mlp copy = net;
  const VectorXd theta = net.parameters();
  copy.set_parameters(theta);
  CHECK(copy.parameters() == theta);
}

TEST_CASE("output layer is linear") {
  Mlp net({1, 2, 1}, 3);
  VectorXd theta = net.parameters();
  theta.setZero();
  theta[theta.size() - 1] = -7.5;  // output bias
  net.set_parameters(theta);
  CHECK(net.predict(MatrixXd::Constant(1, 1, 0.3))(0, 0) == -7.5);
}

TEST_CASE("backpropagation matches finite differences") {
  const Mlp net(Mlp::standard_widths(6, 5), 4);
  const MatrixXd x = uniform(10, 6, 5);
  const MatrixXd y = uniform(10, 5, 6);
  VectorXd grad;
  net.loss_and_gradient(x, y, grad);
  Mlp probe = net;
  const VectorXd theta = net.parameters();
  VectorXd scratch;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[i]));
    VectorXd t = theta;
    t[i] += h;
    probe.set_parameters(t);
    const double up = probe.loss_and_gradient(x, y, scratch);
    t[i] -= 2 * h;
    probe.set_parameters(t);
    const double down = probe.loss_and_gradient(x, y, scratch);
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i])));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("normalizer") {
  MatrixXd s(4, 2);
  s << 1, 5, 2, 5, 3, 5, 4, 5;
  const Normalizer n = Normalizer::fit(s);
  CHECK(n.mean[0] == 2.5);
  CHECK(n.scale[0] == doctest::Approx(std::sqrt(1.25)));
  CHECK(n.scale[1] == 1.0);
  const MatrixXd z = n.apply(s);
  CHECK(z.col(1).isZero());
  CHECK(z.col(0).mean() == doctest::Approx(0.0));
  CHECK(n.invert(z).isApprox(s));
}

TEST_CASE("constant targets are learned exactly") {
  const MatrixXd x = uniform(256, 4, 7);
  const MatrixXd y = MatrixXd::Constant(256, 3, 0.42);
  TrainConfig c;
  c.epochs = 50;
  const Model m = fit(x, y, c);
  CHECK(evaluate(m, x, y).mse <= 1e-6);
}

TEST_CASE("linear map is fitted") {
  const MatrixXd w = uniform(3, 6, 8);
  const MatrixXd x = uniform(1000, 6, 9);
  const MatrixXd y = x * w.transpose();
  const MatrixXd x_test = uniform(200, 6, 10);
  const MatrixXd y_test = x_test * w.transpose();
  const Model m = fit(x, y, TrainConfig{});
  REQUIRE(m.loss_history.size() == 200);
  CHECK(m.loss_history.back() < m.loss_history.front());
  const Evaluation e = evaluate(m, x_test, y_test);
  CHECK(e.mse < 1e-3);
  CHECK(e.max_sample_error > 0.0);
}

TEST_CASE("training is deterministic") {
  const MatrixXd x = uniform(100, 4, 11);
  const MatrixXd y = uniform(100, 2, 12);
  TrainConfig c;
  c.epochs = 5;
  c.seed = 3;
  const VectorXd first = fit(x, y, c).network.parameters();
  CHECK(fit(x, y, c).network.parameters() == first);
  c.seed = 4;
  CHECK(fit(x, y, c).network.parameters() != first);
}

TEST_CASE("training rejects degenerate input") {
  TrainConfig c;
  CHECK_THROWS_AS(fit(uniform(1, 3, 1), uniform(1, 2, 1), c), Error);
  try {
    fit(uniform(1, 3, 1), uniform(1, 2, 1), c);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateData);
  }
  c.batch_size = 0;
  CHECK_THROWS_AS(fit(uniform(5, 3, 1), uniform(5, 2, 1), c), Error);
}

TEST_CASE("evaluation metrics") {
  const MatrixXd x = uniform(50, 4, 13);
  const MatrixXd y = uniform(50, 2, 14);
  TrainConfig c;
  c.epochs = 1;
  const Model m = fit(x, y, c);
  const MatrixXd pred = m.predict(x);
  const Evaluation perfect = evaluate(m, x, pred);
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.max_sample_error == 0.0);

  MatrixXd shifted = pred;
  shifted(7, 0) += 0.3;
  shifted(7, 1) -= 0.4;
  const Evaluation e = evaluate(m, x, shifted);
  CHECK(e.mse == doctest::Approx((0.09 + 0.16) / 2 / 50));
  CHECK(e.max_sample_error == doctest::Approx(0.7));
}

TEST_CASE("evaluation uses the stored training statistics") {
  const Dataset train_set = linear_dataset(200, 15, "toy:1", SamplingMethod::Typical);
  TrainConfig c;
  c.epochs = 20;
  const Model m = train(train_set, Target::Pg, c);
  CHECK(m.input.mean.isApprox(input_matrix(train_set).colwise().mean().transpose()));

  // A shifted test set must not change the normalization applied at test time.
  Dataset test_set = linear_dataset(20, 16, "toy:1", SamplingMethod::Typical);
  for (DatasetRecord& r : test_set.records) r.x.p.array() += 5.0;
  const MatrixXd direct =
      m.output.invert(m.network.predict(m.input.apply(input_matrix(test_set))));
  CHECK(m.predict(input_matrix(test_set)) == direct);
}

TEST_CASE("checkpoint round trip") {
  const Dataset ds = linear_dataset(64, 17, "toy:1", SamplingMethod::OpfLearn);
  TrainConfig c;
  c.epochs = 3;
  c.seed = 99;
  const Model m = train(ds, Target::Vg, c);
  const auto file = std::filesystem::temp_directory_path() / "opflearn_test_model.json";
  save_model(m, file);
  const Model back = load_model(file);
  CHECK(back.target == Target::Vg);
  CHECK(back.fingerprint == "toy:1");
  CHECK(back.network.widths() == m.network.widths());
  CHECK(back.network.parameters() == m.network.parameters());
  CHECK(back.input.mean == m.input.mean);
  CHECK(back.output.scale == m.output.scale);
  CHECK(back.config.seed == 99);
  CHECK(back.loss_history == m.loss_history);
  CHECK(back.predict(input_matrix(ds)) == m.predict(input_matrix(ds)));
}

TEST_CASE("cross experiment") {
  const Dataset a = linear_dataset(100, 18, "toy:1", SamplingMethod::OpfLearn);
  CrossConfig c;
  c.train.epochs = 5;

  SUBCASE("report layout") {
    const Dataset b = linear_dataset(100, 19, "toy:1", SamplingMethod::Typical);
    const CrossReport r = cross_experiment(a, b, c);
    CHECK(r.cells.size() == 8);
    CHECK(r.models.size() == 4);
    CHECK(r.cell(Target::Vg, SamplingMethod::Typical, SamplingMethod::OpfLearn).result.mse >= 0);
    c.workers = 1;
    const CrossReport serial = cross_experiment(a, b, c);
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(serial.cells[k].result.mse == r.cells[k].result.mse);
    }
  }
  SUBCASE("identical datasets give a symmetric report") {
    Dataset b = a;
    b.method = SamplingMethod::Typical;
    const CrossReport r = cross_experiment(a, b, c);
    for (Target t : {Target::Pg, Target::Vg}) {
      for (SamplingMethod test : {SamplingMethod::OpfLearn, SamplingMethod::Typical}) {
        CHECK(r.cell(t, SamplingMethod::OpfLearn, test).result.mse ==
              r.cell(t, SamplingMethod::Typical, test).result.mse);
      }
      CHECK(r.cell(t, SamplingMethod::OpfLearn, SamplingMethod::OpfLearn).result.mse ==
            r.cell(t, SamplingMethod::OpfLearn, SamplingMethod::Typical).result.mse);
    }
  }
  SUBCASE("different networks are rejected") {
    const Dataset b = linear_dataset(100, 19, "other:2", SamplingMethod::Typical);
    try {
      cross_experiment(a, b, c);
      FAIL("expected FingerprintMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::FingerprintMismatch);
    }
  }
}
