#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dre/mixture.hpp"
#include "dre/rng.hpp"
#include "dre/stats.hpp"

namespace {

// Density quotient computed from first principles: explicit normal densities
// with their normalization constants (which cancel in the ratio) and a plain
// sum over mixture components.
double reference_ratio(const dre::MixtureSpec& s, const double* x) {
  const double mu = s.mu();
  auto sq_dist = [&](const std::vector<double>& center) {
    double acc = 0.0;
    for (int j = 0; j < s.d; ++j) {
      const double dx = x[j] - mu * center[static_cast<std::size_t>(j)];
      acc += dx * dx;
    }
    return acc;
  };
  double p_sq = 0.0;
  for (int j = 0; j < s.d; ++j) p_sq += x[j] * x[j];
  const double norm = std::pow(2.0 * 3.14159265358979323846, -0.5 * s.d);
  const double p_density = norm * std::exp(-0.5 * p_sq);
  double q_density = 0.0;
  for (const auto& c : s.directions) q_density += norm * std::exp(-0.5 * sq_dist(c));
  q_density /= static_cast<double>(s.M);
  return q_density / p_density;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/dre_unit_") + name;
}

}  // namespace

TEST_CASE("create validates arguments and normalizes directions") {
  CHECK_THROWS_AS(dre::MixtureSpec::create(0, 1, 1.0, 1), dre::config_error);
  CHECK_THROWS_AS(dre::MixtureSpec::create(3, 0, 1.0, 1), dre::config_error);
  CHECK_THROWS_AS(dre::MixtureSpec::create(3, 1, -0.5, 1), dre::config_error);

  const dre::MixtureSpec s = dre::MixtureSpec::create(4, 3, 2.0, 77);
  CHECK(s.directions.size() == 3u);
  for (const auto& r : s.directions) {
    REQUIRE(r.size() == 4u);
    double norm2 = 0.0;
    for (double x : r) norm2 += x * x;
    CHECK(norm2 == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(s.mu() == doctest::Approx(2.0));  // sqrt(2 * 2.0)
  CHECK(dre::analytic_kl(s) == 2.0);

  // Same seed, same directions; different seed, different directions.
  const dre::MixtureSpec s2 = dre::MixtureSpec::create(4, 3, 2.0, 77);
  CHECK(s.directions == s2.directions);
  const dre::MixtureSpec s3 = dre::MixtureSpec::create(4, 3, 2.0, 78);
  CHECK(s.directions != s3.directions);

  dre::MixtureSpec broken = s;
  broken.directions[0][0] *= 2.0;
  CHECK_THROWS_AS(broken.validate(), dre::config_error);
}

TEST_CASE("true_ratio matches the explicit density quotient") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(3, 4, 2.0, 5);
  dre::rng_stream rng(500);
  std::vector<double> x(3);
  for (int rep = 0; rep < 200; ++rep) {
    for (double& c : x) c = rng.uniform(-4.0, 4.0);
    const double want = reference_ratio(s, x.data());
    const double got = dre::true_ratio(s, x.data());
    REQUIRE(got == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("energy is the negative log ratio") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(2, 3, 1.5, 9);
  dre::rng_stream rng(501);
  std::vector<double> x(2);
  for (int rep = 0; rep < 100; ++rep) {
    for (double& c : x) c = rng.uniform(-3.0, 3.0);
    REQUIRE(std::exp(-dre::energy(s, x.data())) ==
            doctest::Approx(dre::true_ratio(s, x.data())).epsilon(1e-12));
  }
}

TEST_CASE("single-mode energy is exactly affine") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(3, 1, 2.0, 11);
  const double mu = s.mu();
  dre::rng_stream rng(502);
  std::vector<double> x(3);
  for (int rep = 0; rep < 100; ++rep) {
    for (double& c : x) c = rng.uniform(-5.0, 5.0);
    double dot = 0.0;
    for (int j = 0; j < 3; ++j) dot += s.directions[0][static_cast<std::size_t>(j)] * x[j];
    const double want = 0.5 * mu * mu - mu * dot;
    REQUIRE(dre::energy(s, x.data()) == doctest::Approx(want).epsilon(1e-12));
  }
  // At the mode center the ratio peaks at exp(mu^2 / 2).
  std::vector<double> center(3);
  for (int j = 0; j < 3; ++j) center[static_cast<std::size_t>(j)] =
      mu * s.directions[0][static_cast<std::size_t>(j)];
  CHECK(dre::true_ratio(s, center.data()) ==
        doctest::Approx(std::exp(0.5 * mu * mu)).epsilon(1e-12));
}

TEST_CASE("zero target collapses the ratio to one") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(3, 2, 0.0, 13);
  dre::rng_stream rng(503);
  std::vector<double> x(3);
  for (int rep = 0; rep < 50; ++rep) {
    for (double& c : x) c = rng.uniform(-3.0, 3.0);
    REQUIRE(dre::true_ratio(s, x.data()) == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(dre::energy(s, x.data()) == doctest::Approx(0.0));
  }
}

TEST_CASE("sample_p draws standard normal coordinates") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(5, 1, 1.0, 17);
  dre::rng_stream rng(504);
  const int n = 100000;
  const dre::Tensor x = dre::sample_p(s, n, rng);
  REQUIRE(x.rows == n);
  REQUIRE(x.cols == 5);
  for (int j = 0; j < 5; ++j) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = x.at(i, j);
    const auto m = dre::mean_and_stderr(col);
    CHECK(std::abs(m.value) < 4.0 * m.se);
    CHECK(dre::sample_variance(col) == doctest::Approx(1.0).epsilon(0.03));
  }
  // Distinct coordinates stay uncorrelated.
  for (int a = 0; a < 5; ++a)
    for (int b = a + 1; b < 5; ++b) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += x.at(i, a) * x.at(i, b);
      CHECK(std::abs(acc / n) < 0.02);
    }
}

TEST_CASE("sample_q centers on the single mode") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(4, 1, 2.0, 19);
  const double mu = s.mu();
  dre::rng_stream rng(505);
  const int n = 50000;
  const dre::Tensor x = dre::sample_q(s, n, rng);
  for (int j = 0; j < 4; ++j) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = x.at(i, j);
    const auto m = dre::mean_and_stderr(col);
    CHECK(std::abs(m.value - mu * s.directions[0][static_cast<std::size_t>(j)]) <
          5.0 * m.se);
    CHECK(dre::sample_variance(col) == doctest::Approx(1.0).epsilon(0.03));
  }
}

TEST_CASE("sample_q balances modes uniformly") {
  // Hand-built spec with orthogonal unit directions so mode assignment by
  // largest projection is unambiguous at mu = 4.
  dre::MixtureSpec s;
  s.d = 3;
  s.M = 3;
  s.kl_target = 8.0;  // mu = 4
  s.seed = 0;
  s.directions = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  s.validate();

  dre::rng_stream rng(506);
  const int n = 60000;
  const dre::Tensor x = dre::sample_q(s, n, rng);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) {
    int arg = 0;
    for (int j = 1; j < 3; ++j)
      if (x.at(i, j) > x.at(i, arg)) arg = j;
    ++counts[static_cast<std::size_t>(arg)];
  }
  const double expect = n / 3.0;
  const double band = 5.0 * std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
  for (int c : counts) CHECK(std::abs(c - expect) < band);
}

TEST_CASE("ratio moments match the lognormal closed forms at one mode") {
  // E_P[r^k] = exp(k (k-1) mu^2 / 2); k = 1 gives exactly 1.
  const dre::MixtureSpec s = dre::MixtureSpec::create(2, 1, 0.5, 23);  // mu = 1
  dre::rng_stream rng(507);
  const int n = 200000;
  const dre::Tensor x = dre::sample_p(s, n, rng);
  const std::vector<double> r = dre::true_ratio_batch(s, x);

  const auto m1 = dre::mean_and_stderr(r);
  CHECK(std::abs(m1.value - 1.0) < 4.0 * m1.se);

  std::vector<double> r2(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) r2[i] = r[i] * r[i];
  const auto m2 = dre::mean_and_stderr(r2);
  CHECK(std::abs(m2.value - std::exp(1.0)) < 5.0 * m2.se);
}

TEST_CASE("sampling is reproducible from the stream seed") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(3, 2, 1.0, 29);
  dre::rng_stream a(508), b(508);
  const dre::Tensor xa = dre::sample_q(s, 100, a);
  const dre::Tensor xb = dre::sample_q(s, 100, b);
  CHECK(xa.v == xb.v);
  CHECK_THROWS_AS(dre::sample_p(s, 0, a), dre::precondition_error);
  CHECK_THROWS_AS(dre::sample_q(s, -1, a), dre::precondition_error);
}

TEST_CASE("true_ratio_batch validates the width") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(3, 1, 1.0, 31);
  dre::Tensor wrong(4, 2);
  CHECK_THROWS_AS(dre::true_ratio_batch(s, wrong), dre::precondition_error);
}

TEST_CASE("empirical_diag is the largest coordinate extent over the pool") {
  dre::Tensor a = dre::Tensor::from_rows({{0.0, 0.0}, {1.0, 3.0}});
  CHECK(dre::empirical_diag({&a}) == doctest::Approx(3.0));
  dre::Tensor single = dre::Tensor::from_rows({{2.0, 2.0}});
  CHECK(dre::empirical_diag({&single}) == 0.0);
  dre::Tensor b = dre::Tensor::from_rows({{-2.0, 0.0}});
  CHECK(dre::empirical_diag({&a, &b}) == doctest::Approx(3.0));
  // Pooled with c the first coordinate spans [0, 6], the second [0, 3].
  dre::Tensor c = dre::Tensor::from_rows({{6.0, 0.0}});
  CHECK(dre::empirical_diag({&a, &c}) == doctest::Approx(6.0));
  CHECK_THROWS_AS(dre::empirical_diag({}), dre::precondition_error);
  dre::Tensor wrong(1, 3);
  CHECK_THROWS_AS(dre::empirical_diag({&a, &wrong}), dre::precondition_error);
}

TEST_CASE("mixture spec json round-trips exactly") {
  const dre::MixtureSpec s = dre::MixtureSpec::create(3, 2, 1.25, 37);
  const std::string path = temp_path("mixture.json");
  dre::write_mixture_json(s, path);
  const dre::MixtureSpec back = dre::read_mixture_json(path);
  CHECK(back.d == s.d);
  CHECK(back.M == s.M);
  CHECK(back.kl_target == s.kl_target);
  CHECK(back.seed == s.seed);
  CHECK(back.directions == s.directions);
  std::remove(path.c_str());

  CHECK_THROWS_AS(dre::read_mixture_json("/tmp/dre_unit_absent.json"), dre::io_error);
  {
    std::ofstream out(path);
    out << "{\"format\": \"wrong\"}";
  }
  CHECK_THROWS_AS(dre::read_mixture_json(path), dre::io_error);
  std::remove(path.c_str());
}

TEST_CASE("dataset csv round-trips doubles bit for bit") {
  dre::rng_stream rng(509);
  dre::Tensor x(37, 4);
  for (double& v : x.v) v = rng.normal() * 1e3;
  x.v[5] = 1.0 / 3.0;  // a value needing all 17 digits
  const std::string path = temp_path("data.csv");
  dre::write_dataset_csv(x, path);
  const dre::Tensor back = dre::read_dataset_csv(path);
  REQUIRE(back.rows == x.rows);
  REQUIRE(back.cols == x.cols);
  CHECK(back.v == x.v);
  std::remove(path.c_str());

  CHECK_THROWS_AS(dre::read_dataset_csv("/tmp/dre_unit_absent.csv"), dre::io_error);
}
