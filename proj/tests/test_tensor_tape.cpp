#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "dre/rng.hpp"
#include "dre/tape.hpp"
#include "dre/tensor.hpp"

namespace {

dre::Tensor random_tensor(int r, int c, dre::rng_stream& rng, double lo = -1.0,
                          double hi = 1.0) {
  dre::Tensor t(r, c);
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// Triple-loop reference product, independent of the Eigen-backed kernel.
dre::Tensor naive_matmul(const dre::Tensor& a, const dre::Tensor& b) {
  dre::Tensor out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k)
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

// Central finite differences of a scalar function of several tensor leaves
// against the tape gradient. Builds the graph fresh for every probe.
void check_gradients(const std::vector<dre::Tensor>& leaves,
                     const std::function<int(dre::Tape&, const std::vector<int>&)>& build,
                     double h = 1e-6, double tol = 1e-5) {
  dre::Tape tape;
  std::vector<int> ids;
  for (const auto& l : leaves) ids.push_back(tape.leaf(l));
  const int root = build(tape, ids);
  tape.backward(root);

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    for (std::size_t i = 0; i < leaves[li].size(); ++i) {
      auto probe = [&](double delta) {
        std::vector<dre::Tensor> shifted = leaves;
        shifted[li].v[i] += delta;
        dre::Tape t2;
        std::vector<int> ids2;
        for (const auto& l : shifted) ids2.push_back(t2.leaf(l));
        return t2.val(build(t2, ids2)).v[0];
      };
      const double fd = (probe(h) - probe(-h)) / (2.0 * h);
      const double ad = tape.grad(ids[li]).v[i];
      REQUIRE(std::abs(ad - fd) <= tol * (1.0 + std::abs(fd)));
    }
  }
}

}  // namespace

TEST_CASE("tensor construction and element access") {
  dre::Tensor t = dre::Tensor::zeros(2, 3);
  CHECK(t.rows == 2);
  CHECK(t.cols == 3);
  CHECK(t.size() == 6u);
  for (double x : t.v) CHECK(x == 0.0);

  dre::Tensor f = dre::Tensor::full(2, 2, 1.5);
  for (double x : f.v) CHECK(x == 1.5);

  dre::Tensor r = dre::Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  CHECK(r.at(0, 1) == 2.0);
  CHECK(r.at(1, 0) == 3.0);
  CHECK(r.row_ptr(1)[1] == 4.0);

  CHECK_THROWS_AS(dre::Tensor(-1, 2), dre::precondition_error);
}

TEST_CASE("gather_rows selects rows in order, repeats allowed") {
  dre::Tensor r = dre::Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
  dre::Tensor g = r.gather_rows({2, 0, 2});
  CHECK(g.rows == 3);
  CHECK(g.at(0, 0) == 5.0);
  CHECK(g.at(1, 1) == 2.0);
  CHECK(g.at(2, 0) == 5.0);
}

TEST_CASE("require_finite flags NaN and infinity") {
  dre::Tensor t = dre::Tensor::zeros(1, 2);
  CHECK_NOTHROW(dre::require_finite(t, "test"));
  t.v[1] = std::nan("");
  CHECK_THROWS_AS(dre::require_finite(t, "test"), dre::non_finite_error);
  t.v[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(dre::require_finite(t, "test"), dre::non_finite_error);
}

TEST_CASE("matmul agrees with the triple-loop reference") {
  dre::rng_stream rng(101);
  const dre::Tensor a = random_tensor(7, 5, rng);
  const dre::Tensor b = random_tensor(5, 3, rng);
  const dre::Tensor got = dre::matmul(a, b);
  const dre::Tensor want = naive_matmul(a, b);
  REQUIRE(got.same_shape(want));
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-12));
  CHECK_THROWS_AS(dre::matmul(a, a), dre::precondition_error);
}

TEST_CASE("matmul_bt_acc and matmul_at_acc accumulate the transposed products") {
  dre::rng_stream rng(102);
  const dre::Tensor g = random_tensor(4, 3, rng);  // upstream gradient
  const dre::Tensor a = random_tensor(4, 5, rng);
  const dre::Tensor b = random_tensor(5, 3, rng);

  // bt: acc += g b^T, shape 4 x 5.
  dre::Tensor acc_bt = random_tensor(4, 5, rng);
  dre::Tensor want_bt = acc_bt;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 3; ++k) want_bt.at(i, j) += g.at(i, k) * b.at(j, k);
  dre::matmul_bt_acc(acc_bt, g, b);
  for (std::size_t i = 0; i < acc_bt.size(); ++i)
    CHECK(acc_bt.v[i] == doctest::Approx(want_bt.v[i]).epsilon(1e-12));

  // at: acc += a^T g, shape 5 x 3.
  dre::Tensor acc_at = random_tensor(5, 3, rng);
  dre::Tensor want_at = acc_at;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 4; ++k) want_at.at(i, j) += a.at(k, i) * g.at(k, j);
  dre::matmul_at_acc(acc_at, a, g);
  for (std::size_t i = 0; i < acc_at.size(); ++i)
    CHECK(acc_at.v[i] == doctest::Approx(want_at.v[i]).epsilon(1e-12));
}

TEST_CASE("add_row_broadcast adds the bias row to every row") {
  dre::Tensor x = dre::Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  dre::Tensor b = dre::Tensor::from_rows({{10.0, 20.0}});
  dre::Tensor out = dre::add_row_broadcast(x, b);
  CHECK(out.at(0, 0) == 11.0);
  CHECK(out.at(0, 1) == 22.0);
  CHECK(out.at(1, 0) == 13.0);
  CHECK(out.at(1, 1) == 24.0);
  dre::Tensor bad = dre::Tensor::zeros(2, 2);
  CHECK_THROWS_AS(dre::add_row_broadcast(x, bad), dre::precondition_error);
}

TEST_CASE("stable_softplus and sigmoid survive extreme arguments") {
  CHECK(dre::stable_softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(dre::stable_softplus(800.0) == doctest::Approx(800.0));
  CHECK(dre::stable_softplus(-800.0) == doctest::Approx(0.0).epsilon(1e-300));
  CHECK(std::isfinite(dre::stable_softplus(-800.0)));
  CHECK(dre::sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(dre::sigmoid(800.0) == doctest::Approx(1.0));
  CHECK(dre::sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(dre::sigmoid(-800.0)));
}

TEST_CASE("tape forward values match the tensor kernels") {
  dre::rng_stream rng(103);
  const dre::Tensor a = random_tensor(3, 4, rng);
  const dre::Tensor b = random_tensor(4, 2, rng);
  dre::Tape tape;
  const int ia = tape.leaf(a);
  const int ib = tape.leaf(b);
  const int prod = tape.matmul(ia, ib);
  const dre::Tensor want = naive_matmul(a, b);
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(tape.val(prod).v[i] == doctest::Approx(want.v[i]).epsilon(1e-12));

  const int m = tape.mean_all(prod);
  double acc = 0.0;
  for (double x : want.v) acc += x;
  CHECK(tape.val(m).v[0] == doctest::Approx(acc / want.size()).epsilon(1e-12));
}

TEST_CASE("gradient of matmul against finite differences") {
  dre::rng_stream rng(104);
  check_gradients({random_tensor(3, 4, rng), random_tensor(4, 2, rng)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    return t.mean_all(t.matmul(ids[0], ids[1]));
                  });
}

TEST_CASE("gradient of add_bias against finite differences") {
  dre::rng_stream rng(105);
  check_gradients({random_tensor(3, 4, rng), random_tensor(1, 4, rng)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    return t.mean_all(t.add_bias(ids[0], ids[1]));
                  });
}

TEST_CASE("gradients of add, sub, mul, scale, add_scalar") {
  dre::rng_stream rng(106);
  check_gradients({random_tensor(2, 3, rng), random_tensor(2, 3, rng)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    const int s = t.add(ids[0], ids[1]);
                    const int d = t.sub(s, ids[1]);
                    const int m = t.mul(d, ids[0]);
                    const int sc = t.scale(m, -1.7);
                    return t.mean_all(t.add_scalar(sc, 0.3));
                  });
}

TEST_CASE("gradient of relu away from the kink") {
  dre::rng_stream rng(107);
  dre::Tensor x = random_tensor(3, 3, rng);
  for (double& v : x.v)
    if (std::abs(v) < 0.05) v = 0.1;  // keep probes away from the kink
  check_gradients({x}, [](dre::Tape& t, const std::vector<int>& ids) {
    return t.mean_all(t.relu(ids[0]));
  });
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  dre::Tensor x = dre::Tensor::from_rows({{0.0, -1.0, 2.0}});
  dre::Tape tape;
  const int ix = tape.leaf(x);
  const int root = tape.mean_all(tape.relu(ix));
  tape.backward(root);
  CHECK(tape.grad(ix).v[0] == 0.0);
  CHECK(tape.grad(ix).v[1] == 0.0);
  CHECK(tape.grad(ix).v[2] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("gradients of exp, log, softplus") {
  dre::rng_stream rng(108);
  check_gradients({random_tensor(2, 4, rng)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    return t.mean_all(t.exp_elem(ids[0]));
                  });
  check_gradients({random_tensor(2, 4, rng, 0.2, 3.0)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    return t.mean_all(t.log_elem(ids[0]));
                  });
  check_gradients({random_tensor(2, 4, rng, -3.0, 3.0)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    return t.mean_all(t.softplus(ids[0]));
                  });
}

TEST_CASE("gradient of pow_scalar for fractional and integer exponents") {
  dre::rng_stream rng(109);
  check_gradients({random_tensor(2, 3, rng, 0.3, 2.0)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    return t.mean_all(t.pow_scalar(ids[0], 2.5));
                  });
  check_gradients({random_tensor(2, 3, rng, -2.0, 2.0)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    return t.mean_all(t.pow_scalar(ids[0], 3.0));
                  });
}

TEST_CASE("gradient flows through a fan-out node from both consumers") {
  dre::rng_stream rng(110);
  check_gradients({random_tensor(2, 2, rng, 0.3, 1.5)},
                  [](dre::Tape& t, const std::vector<int>& ids) {
                    const int e = t.exp_elem(ids[0]);
                    const int l = t.log_elem(ids[0]);
                    return t.mean_all(t.add(e, l));
                  });
}

TEST_CASE("pow_scalar rejects non-positive bases for fractional exponents") {
  dre::Tape tape;
  const int x = tape.leaf(dre::Tensor::from_rows({{-1.0}}));
  CHECK_THROWS_AS(tape.pow_scalar(x, 0.5), dre::precondition_error);
  CHECK_NOTHROW(tape.pow_scalar(x, 2.0));
}

TEST_CASE("log_elem rejects non-positive inputs") {
  dre::Tape tape;
  const int x = tape.leaf(dre::Tensor::from_rows({{0.0}}));
  CHECK_THROWS_AS(tape.log_elem(x), dre::precondition_error);
}

TEST_CASE("tape misuse is rejected with typed errors") {
  dre::Tape tape;
  const int x = tape.leaf(dre::Tensor::from_rows({{1.0, 2.0}}));

  // Gradient before backward.
  CHECK_THROWS_AS(tape.grad(x), dre::precondition_error);

  // Non-scalar root.
  CHECK_THROWS_AS(tape.backward(x), dre::precondition_error);

  const int m = tape.mean_all(x);
  tape.backward(m);

  // Second backward without reset, and appending after backward.
  CHECK_THROWS_AS(tape.backward(m), dre::precondition_error);
  CHECK_THROWS_AS(tape.scale(x, 2.0), dre::precondition_error);

  // Reset restores a usable tape.
  tape.reset();
  CHECK(tape.size() == 0u);
  const int y = tape.leaf(dre::Tensor::from_rows({{3.0}}));
  const int m2 = tape.mean_all(y);
  tape.backward(m2);
  CHECK(tape.grad(y).v[0] == doctest::Approx(1.0));
}

TEST_CASE("non-finite values are rejected at the leaf and at backward") {
  dre::Tape tape;
  dre::Tensor bad = dre::Tensor::from_rows({{std::nan("")}});
  CHECK_THROWS_AS(tape.leaf(bad), dre::non_finite_error);

  // An overflowing exp produces an infinite loss; backward must refuse it.
  const int x = tape.leaf(dre::Tensor::from_rows({{1000.0}}));
  const int e = tape.exp_elem(x);
  const int m = tape.mean_all(e);
  CHECK_THROWS_AS(tape.backward(m), dre::non_finite_error);
}

TEST_CASE("tape node id bounds are checked") {
  dre::Tape tape;
  CHECK_THROWS_AS(tape.val(0), dre::precondition_error);
  CHECK_THROWS_AS(tape.val(-1), dre::precondition_error);
}
