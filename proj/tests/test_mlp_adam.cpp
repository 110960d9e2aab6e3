#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dre/adam.hpp"
#include "dre/mlp.hpp"
#include "dre/rng.hpp"

namespace {

std::string temp_path(const char* name) {
  return std::string("/tmp/dre_unit_") + name;
}

// Plain-double reference forward pass for one input row.
double reference_forward(const dre::MlpModel& m, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const dre::Tensor& w = m.weights[l];
    const dre::Tensor& b = m.biases[l];
    std::vector<double> next(static_cast<std::size_t>(w.cols), 0.0);
    for (int j = 0; j < w.cols; ++j) {
      double acc = b.at(0, j);
      for (int i = 0; i < w.rows; ++i) acc += h[static_cast<std::size_t>(i)] * w.at(i, j);
      next[static_cast<std::size_t>(j)] = acc;
    }
    if (l + 1 < m.weights.size())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    h = std::move(next);
  }
  return h[0];
}

// Scalar reference Adam, the textbook update sequence on one parameter.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  long t = 0;

  double step(double theta, double g) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

}  // namespace

TEST_CASE("zero model maps every input to zero") {
  dre::MlpModel m = dre::MlpModel::zeros(3, {8, 8});
  dre::Tensor x = dre::Tensor::from_rows({{1.0, -2.0, 0.5}, {0.0, 0.0, 0.0}});
  dre::Tensor y = m.forward(x);
  CHECK(y.rows == 2);
  CHECK(y.cols == 1);
  CHECK(y.v[0] == 0.0);
  CHECK(y.v[1] == 0.0);
}

TEST_CASE("single linear layer with identity weight passes inputs through") {
  dre::MlpModel m = dre::MlpModel::zeros(1, {});
  CHECK(m.layer_count() == 1u);
  m.weights[0].at(0, 0) = 1.0;
  dre::Tensor x = dre::Tensor::from_rows({{-1.5}, {0.0}, {2.25}});
  dre::Tensor y = m.forward(x);
  CHECK(y.v[0] == -1.5);
  CHECK(y.v[1] == 0.0);
  CHECK(y.v[2] == 2.25);
  m.biases[0].at(0, 0) = 3.0;
  y = m.forward(x);
  CHECK(y.v[0] == 1.5);
}

TEST_CASE("forward matches a plain-double reference network") {
  dre::rng_stream rng(41);
  dre::MlpModel m = dre::MlpModel::init(4, {6, 5}, rng);
  dre::Tensor x(7, 4);
  for (double& v : x.v) v = rng.uniform(-2.0, 2.0);
  dre::Tensor y = m.forward(x);
  for (int i = 0; i < x.rows; ++i) {
    std::vector<double> row(x.row_ptr(i), x.row_ptr(i) + 4);
    CHECK(y.at(i, 0) == doctest::Approx(reference_forward(m, row)).epsilon(1e-12));
  }
}

TEST_CASE("forward_graph reproduces the tape-free forward") {
  dre::rng_stream rng(42);
  dre::MlpModel m = dre::MlpModel::init(3, {8, 8, 8}, rng);
  dre::Tensor x(5, 3);
  for (double& v : x.v) v = rng.uniform(-1.0, 1.0);
  const dre::Tensor direct = m.forward(x);

  dre::Tape tape;
  const dre::MlpTapeBinding bind = dre::push_params(tape, m);
  const int xi = tape.leaf(x);
  const int out = dre::forward_graph(tape, bind, xi, m.layer_count());
  const dre::Tensor& taped = tape.val(out);
  REQUIRE(taped.same_shape(direct));
  for (std::size_t i = 0; i < taped.size(); ++i) CHECK(taped.v[i] == direct.v[i]);
}

TEST_CASE("init draws weights inside the fan bound and zero biases") {
  dre::rng_stream rng(43);
  dre::MlpModel m = dre::MlpModel::init(10, {32, 32}, rng);
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const dre::Tensor& w = m.weights[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    double acc = 0.0;
    for (double v : w.v) {
      CHECK(std::abs(v) <= bound);
      acc += v;
    }
    // Mean of U(-b, b) over size(w) draws: 4 sigma band, sigma = b/sqrt(3n).
    CHECK(std::abs(acc / static_cast<double>(w.size())) <
          4.0 * bound / std::sqrt(3.0 * static_cast<double>(w.size())));
    for (double v : m.biases[l].v) CHECK(v == 0.0);
  }
  CHECK(m.parameter_count() == 10u * 32 + 32 + 32u * 32 + 32 + 32u * 1 + 1);
}

TEST_CASE("init is reproducible by seed and rejects bad shapes") {
  dre::rng_stream a(44), b(44);
  dre::MlpModel m1 = dre::MlpModel::init(5, {16}, a);
  dre::MlpModel m2 = dre::MlpModel::init(5, {16}, b);
  CHECK(m1.weights[0].v == m2.weights[0].v);
  CHECK(m1.weights[1].v == m2.weights[1].v);

  dre::rng_stream c(45);
  CHECK_THROWS_AS(dre::MlpModel::init(0, {4}, c), dre::precondition_error);
  CHECK_THROWS_AS(dre::MlpModel::init(2, {0}, c), dre::precondition_error);
}

TEST_CASE("forward validates input width and finiteness") {
  dre::MlpModel m = dre::MlpModel::zeros(3, {4});
  dre::Tensor wrong = dre::Tensor::zeros(2, 2);
  CHECK_THROWS_AS(m.forward(wrong), dre::precondition_error);
  dre::Tensor bad = dre::Tensor::zeros(1, 3);
  bad.v[0] = std::nan("");
  CHECK_THROWS_AS(m.forward(bad), dre::non_finite_error);
}

TEST_CASE("checkpoint json round-trips the model exactly") {
  dre::rng_stream rng(46);
  dre::MlpModel m = dre::MlpModel::init(4, {8, 8}, rng);
  const std::string path = temp_path("ckpt.json");
  dre::save_checkpoint(m, path, {{"loss", "kl"}});

  nlohmann::json full;
  dre::MlpModel back = dre::load_checkpoint(path, &full);
  CHECK(full.at("loss") == "kl");
  CHECK(back.input_dim == m.input_dim);
  CHECK(back.hidden == m.hidden);
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    CHECK(back.weights[l].v == m.weights[l].v);
    CHECK(back.biases[l].v == m.biases[l].v);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects corruption with io_error") {
  CHECK_THROWS_AS(dre::load_checkpoint("/tmp/dre_unit_no_such_file.json"), dre::io_error);

  const std::string path = temp_path("ckpt_bad.json");
  {
    std::ofstream out(path);
    out << "{\"format\": \"something-else\", \"input_dim\": 1, \"hidden\": [], "
           "\"layers\": []}";
  }
  CHECK_THROWS_AS(dre::load_checkpoint(path), dre::io_error);
  {
    std::ofstream out(path);
    out << "this is not json";
  }
  CHECK_THROWS_AS(dre::load_checkpoint(path), dre::io_error);
  {
    // Right format tag, wrong layer count.
    std::ofstream out(path);
    out << "{\"format\": \"dre-mlp-v1\", \"input_dim\": 1, \"hidden\": [], "
           "\"layers\": []}";
  }
  CHECK_THROWS_AS(dre::load_checkpoint(path), dre::io_error);
  std::remove(path.c_str());
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  dre::rng_stream rng(47);
  dre::MlpModel m = dre::MlpModel::init(2, {4}, rng);
  const std::vector<double> before = m.weights[0].v;
  std::vector<dre::Tensor*> params = m.parameters();
  dre::AdamState adam = dre::AdamState::create(
      std::vector<const dre::Tensor*>(params.begin(), params.end()), 0.1);

  std::vector<dre::Tensor> zero_grads;
  for (const dre::Tensor* p : params) zero_grads.push_back(dre::Tensor::zeros(p->rows, p->cols));
  std::vector<const dre::Tensor*> gptrs;
  for (const auto& g : zero_grads) gptrs.push_back(&g);

  adam.step(m.parameters(), gptrs);
  CHECK(adam.step_count == 1);
  CHECK(m.weights[0].v == before);
}

TEST_CASE("adam moves against the gradient direction") {
  dre::MlpModel m = dre::MlpModel::zeros(1, {});
  std::vector<dre::Tensor*> params = m.parameters();
  dre::AdamState adam = dre::AdamState::create(
      std::vector<const dre::Tensor*>(params.begin(), params.end()), 0.05);

  std::vector<dre::Tensor> grads;
  for (const dre::Tensor* p : params) grads.push_back(dre::Tensor::full(p->rows, p->cols, 2.0));
  std::vector<const dre::Tensor*> gptrs;
  for (const auto& g : grads) gptrs.push_back(&g);

  adam.step(m.parameters(), gptrs);
  CHECK(m.weights[0].v[0] < 0.0);
  CHECK(m.biases[0].v[0] < 0.0);
}

TEST_CASE("adam trajectory matches the scalar reference on a quadratic") {
  // Minimize (theta - 3)^2 from theta = 0 with exact gradients.
  dre::MlpModel m = dre::MlpModel::zeros(1, {});
  m.biases.clear();  // single scalar weight is the whole parameter set
  std::vector<dre::Tensor*> params{&m.weights[0]};
  dre::AdamState adam = dre::AdamState::create(
      std::vector<const dre::Tensor*>(params.begin(), params.end()), 0.1);
  ScalarAdam ref{0.1};
  double theta_ref = 0.0;

  dre::Tensor grad(1, 1);
  for (int step = 0; step < 100; ++step) {
    grad.v[0] = 2.0 * (m.weights[0].v[0] - 3.0);
    const double gref = 2.0 * (theta_ref - 3.0);
    adam.step(params, {&grad});
    theta_ref = ref.step(theta_ref, gref);
    REQUIRE(m.weights[0].v[0] == doctest::Approx(theta_ref).epsilon(1e-12));
  }
  CHECK(std::abs(m.weights[0].v[0] - 3.0) < std::abs(0.0 - 3.0));
}

TEST_CASE("adam rejects non-finite gradients and shape drift") {
  dre::MlpModel m = dre::MlpModel::zeros(1, {});
  std::vector<dre::Tensor*> params = m.parameters();
  dre::AdamState adam = dre::AdamState::create(
      std::vector<const dre::Tensor*>(params.begin(), params.end()), 0.1);

  std::vector<dre::Tensor> grads;
  for (const dre::Tensor* p : params) grads.push_back(dre::Tensor::zeros(p->rows, p->cols));
  grads[0].v[0] = std::nan("");
  std::vector<const dre::Tensor*> gptrs;
  for (const auto& g : grads) gptrs.push_back(&g);
  CHECK_THROWS_AS(adam.step(m.parameters(), gptrs), dre::non_finite_error);

  gptrs.pop_back();
  CHECK_THROWS_AS(adam.step(m.parameters(), gptrs), dre::precondition_error);
}
