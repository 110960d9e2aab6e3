#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dre/errors.hpp"
#include "dre/mixture.hpp"
#include "dre/rng.hpp"
#include "dre/stats.hpp"
#include "dre/tensor.hpp"

namespace dre {

struct LpError {
  double p = 1.0;
  double value = 0.0;
  double se = 0.0;  // delta-method standard error
};

// Monte Carlo L_p distance ((1/n) sum |truth_i - est_i|^p)^{1/p} between the
// true ratio and an estimate on a shared test sample. The standard error
// propagates the p-th-moment stderr through the 1/p power.
inline LpError lp_error(std::span<const double> truth, std::span<const double> estimate,
                        double p) {
  if (truth.size() != estimate.size())
    throw precondition_error("lp_error: sample size mismatch");
  if (truth.empty()) throw precondition_error("lp_error: empty sample");
  if (!(p >= 1.0)) throw precondition_error("lp_error: order must be >= 1");
  std::vector<double> powed(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    powed[i] = std::pow(std::abs(truth[i] - estimate[i]), p);
  const mean_with_error m = mean_and_stderr(powed);
  LpError out;
  out.p = p;
  out.value = std::pow(m.value, 1.0 / p);
  out.se = m.value > 0.0
               ? (1.0 / p) * std::pow(m.value, 1.0 / p - 1.0) * m.se
               : 0.0;
  return out;
}

// Brute-force nearest neighbor in the max norm. Strictly smaller distance
// wins; equal distances keep the lowest index.
inline int nearest_neighbor_index(const Tensor& points, const double* x) {
  if (points.rows < 1) throw precondition_error("nearest_neighbor_index: empty point set");
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points.rows; ++i) {
    double dist = 0.0;
    const double* row = points.row_ptr(i);
    for (int j = 0; j < points.cols; ++j) dist = std::max(dist, std::abs(row[j] - x[j]));
    if (dist < best_dist) {
      best_dist = dist;
      best = i;
    }
  }
  return best;
}

inline double max_norm_distance(const double* a, const double* b, int d) {
  double dist = 0.0;
  for (int j = 0; j < d; ++j) dist = std::max(dist, std::abs(a[j] - b[j]));
  return dist;
}

struct NnMomentEstimate {
  int d = 0;
  long N = 0;
  double order = 1.0;  // kappa for the upper check, p for the lower check
  double estimate = 0.0;
  double se = 0.0;
  double bound = 0.0;
  bool satisfied = false;
  bool inconclusive = false;
};

inline constexpr double kLowerSlack = 0.25;
inline constexpr std::size_t kStderrGroups = 20;

namespace detail {

struct nn_upper_domain {
  // Either the unit cube in dimension d, or draws (with replacement) from a
  // fixed cloud whose bounding box supplies the diameter proxy.
  int d = 0;
  const Tensor* cloud = nullptr;
  double diag = 1.0;

  void draw(double* out, rng_stream& rng) const {
    if (cloud == nullptr) {
      for (int j = 0; j < d; ++j) out[j] = rng.uniform01();
    } else {
      const int i = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cloud->rows)));
      for (int j = 0; j < d; ++j) out[j] = cloud->at(i, j);
    }
  }
};

inline NnMomentEstimate nn_upper_run(const nn_upper_domain& dom, long N, double kappa,
                                     int trials, rng_stream& rng) {
  if (N < 1) throw precondition_error("nn upper check: N must be >= 1");
  if (trials < 1) throw precondition_error("nn upper check: trials must be >= 1");
  if (!(kappa >= 1.0) || kappa > static_cast<double>(dom.d))
    throw precondition_error("nn upper check: kappa must lie in [1, d]");
  std::vector<double> draws(static_cast<std::size_t>(trials));
  Tensor pts(static_cast<int>(N), dom.d);
  std::vector<double> x(static_cast<std::size_t>(dom.d));
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < static_cast<int>(N); ++i) dom.draw(pts.row_ptr(i), rng);
    dom.draw(x.data(), rng);
    const int nn = nearest_neighbor_index(pts, x.data());
    const double dist = max_norm_distance(pts.row_ptr(nn), x.data(), dom.d);
    draws[static_cast<std::size_t>(t)] = std::pow(dist, kappa);
  }
  const mean_with_error m = grouped_mean_stderr(draws, kStderrGroups);
  NnMomentEstimate out;
  out.d = dom.d;
  out.N = N;
  out.order = kappa;
  out.estimate = m.value;
  out.se = m.se;
  out.bound = std::pow(dom.diag, kappa) *
              std::pow(1.0 / static_cast<double>(N + 1), kappa / static_cast<double>(dom.d));
  out.satisfied = out.estimate <= out.bound + 3.0 * out.se;
  return out;
}

}  // namespace detail

// Checks the non-asymptotic moment bound
//   E ||X^(1)(x) - x||_inf^kappa <= diag^kappa (1/(N+1))^(kappa/d)
// by Monte Carlo on the uniform unit cube (x and the N points i.i.d.).
// Requires 1 <= kappa <= d; any N >= 1 is covered.
inline NnMomentEstimate nn_moment_upper_check_cube(int d, long N, double kappa, int trials,
                                                   rng_stream& rng) {
  if (d < 1) throw precondition_error("nn upper check: d must be >= 1");
  detail::nn_upper_domain dom;
  dom.d = d;
  dom.diag = 1.0;
  return detail::nn_upper_run(dom, N, kappa, trials, rng);
}

// Same check with draws resampled from a fixed cloud; the diameter proxy is
// the cloud's largest coordinate extent. A degenerate one-point cloud gives
// estimate 0 and bound 0.
inline NnMomentEstimate nn_moment_upper_check_cloud(const Tensor& cloud, long N,
                                                    double kappa, int trials,
                                                    rng_stream& rng) {
  if (cloud.rows < 1) throw precondition_error("nn upper check: empty cloud");
  detail::nn_upper_domain dom;
  dom.d = cloud.cols;
  dom.cloud = &cloud;
  dom.diag = empirical_diag({&cloud});
  return detail::nn_upper_run(dom, N, kappa, trials, rng);
}

struct MomentEstimate {
  double value = 0.0;
  double se = 0.0;
};

// Monte Carlo estimate of E_P[(dQ/dP)^k] on n fresh P draws.
inline MomentEstimate moment_estimate(const MixtureSpec& spec, double k, long n,
                                      rng_stream& rng) {
  if (n < 2) throw precondition_error("moment_estimate: need n >= 2");
  std::vector<double> vals(static_cast<std::size_t>(n));
  std::vector<double> x(static_cast<std::size_t>(spec.d));
  for (long i = 0; i < n; ++i) {
    for (double& c : x) c = rng.normal();
    vals[static_cast<std::size_t>(i)] = std::exp(k * log_ratio(spec, x.data()));
  }
  const mean_with_error m = mean_and_stderr(vals);
  return {m.value, m.se};
}

// Directional check of the asymptotic lower bound: the scaled weighted moment
//   N^{1/d} { E[ (dQ/dP(X^(1)))^p  ||X^(1)(x) - x||_inf^p ] }^{1/p}
// (x and the N reference points all drawn from P) must not fall below
// (1 - slack) e^{-1} {E_P[(dQ/dP)^p]}^{1/p} once N is large. Marked
// inconclusive when the relative stderr of the inner moment exceeds 50%.
inline NnMomentEstimate nn_moment_lower_check(const MixtureSpec& spec, long N, double p,
                                              int trials, rng_stream& rng) {
  if (N < 1) throw precondition_error("nn lower check: N must be >= 1");
  if (trials < 1) throw precondition_error("nn lower check: trials must be >= 1");
  if (!(p >= 1.0)) throw precondition_error("nn lower check: p must be >= 1");
  std::vector<double> draws(static_cast<std::size_t>(trials));
  Tensor pts(static_cast<int>(N), spec.d);
  std::vector<double> x(static_cast<std::size_t>(spec.d));
  for (int t = 0; t < trials; ++t) {
    rng.fill_normal(pts.v.data(), pts.size());
    for (double& c : x) c = rng.normal();
    const int nn = nearest_neighbor_index(pts, x.data());
    const double dist = max_norm_distance(pts.row_ptr(nn), x.data(), spec.d);
    const double w = std::exp(p * log_ratio(spec, pts.row_ptr(nn)));
    draws[static_cast<std::size_t>(t)] = w * std::pow(dist, p);
  }
  const mean_with_error m = grouped_mean_stderr(draws, kStderrGroups);
  const double scale = std::pow(static_cast<double>(N), 1.0 / static_cast<double>(spec.d));

  // Reference moment from an independent large P sample.
  const MomentEstimate ref = moment_estimate(spec, p, 100000, rng);

  NnMomentEstimate out;
  out.d = spec.d;
  out.N = N;
  out.order = p;
  out.estimate = scale * std::pow(m.value, 1.0 / p);
  out.se = m.value > 0.0
               ? scale * (1.0 / p) * std::pow(m.value, 1.0 / p - 1.0) * m.se
               : 0.0;
  out.bound = std::exp(-1.0) * std::pow(ref.value, 1.0 / p);
  out.inconclusive = m.value <= 0.0 || m.se / m.value > 0.5;
  out.satisfied = !out.inconclusive && out.estimate >= (1.0 - kLowerSlack) * out.bound;
  return out;
}

struct BoundRhs {
  double upper = 0.0;
  double lower_moment = 0.0;
  double lower_kl = 0.0;
};

// Evaluates the sample-requirement bound right-hand sides for order p:
//   upper        = L diag E_P[r^{2p}]^{1/(2p)} + K diag
//   lower_moment = (1/L) E_P[r^p]^{1/p} - K diag
//   lower_kl     = (1/L) exp(((p-1)/p) KL(Q||P) - 1) - K diag
// lower_kl <= lower_moment always (Jensen on the moment, then e^{-1} < 1).
inline BoundRhs bound_rhs(double L, double K, double diag, double moment_p,
                          double moment_2p, double kl, double p) {
  if (!(L > 0.0)) throw precondition_error("bound_rhs: L must be positive");
  if (!(K >= 0.0) || !(diag >= 0.0))
    throw precondition_error("bound_rhs: K and diag must be non-negative");
  if (!(moment_p > 0.0) || !(moment_2p > 0.0))
    throw precondition_error("bound_rhs: moments must be positive");
  if (!(kl >= 0.0)) throw precondition_error("bound_rhs: kl must be non-negative");
  if (!(p >= 1.0)) throw precondition_error("bound_rhs: p must be >= 1");
  BoundRhs out;
  out.upper = L * diag * std::pow(moment_2p, 1.0 / (2.0 * p)) + K * diag;
  out.lower_moment = (1.0 / L) * std::pow(moment_p, 1.0 / p) - K * diag;
  out.lower_kl = (1.0 / L) * std::exp((p - 1.0) / p * kl - 1.0) - K * diag;
  return out;
}

// One evaluated estimator: L_p errors against the true ratio plus everything
// needed to place them against the bound right-hand sides.
struct EvalReport {
  // provenance
  std::string experiment;
  std::string loss_name;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  int d = 0;
  int M = 1;
  double kl_target = 0.0;
  long n_train = 0;
  long n_val = 0;
  long n_test = 0;
  // training outcome
  int epochs_run = 0;
  double best_val_loss = 0.0;
  double val_gap = 0.0;
  std::string stop_reason;
  // evaluation
  std::vector<LpError> lp;  // orders 1, 2, 3 by default
  double lipschitz_energy = 0.0;    // L proxy
  double lipschitz_estimator = 0.0; // K proxy
  double diag = 0.0;
  std::vector<BoundRhs> bounds;  // aligned with lp
  double runtime_sec = 0.0;
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["format"] = "dre-eval-v1";
  j["experiment"] = r.experiment;
  j["loss"] = r.loss_name;
  j["seed"] = r.seed;
  j["trial"] = r.trial;
  j["d"] = r.d;
  j["M"] = r.M;
  j["kl_target"] = r.kl_target;
  j["n_train"] = r.n_train;
  j["n_val"] = r.n_val;
  j["n_test"] = r.n_test;
  j["epochs_run"] = r.epochs_run;
  j["best_val_loss"] = r.best_val_loss;
  j["val_gap"] = r.val_gap;
  j["stop_reason"] = r.stop_reason;
  nlohmann::json lp = nlohmann::json::array();
  for (std::size_t i = 0; i < r.lp.size(); ++i) {
    nlohmann::json e;
    e["p"] = r.lp[i].p;
    e["error"] = r.lp[i].value;
    e["stderr"] = r.lp[i].se;
    if (i < r.bounds.size()) {
      e["upper_bound"] = r.bounds[i].upper;
      e["lower_bound_moment"] = r.bounds[i].lower_moment;
      e["lower_bound_kl"] = r.bounds[i].lower_kl;
    }
    lp.push_back(std::move(e));
  }
  j["lp"] = std::move(lp);
  j["lipschitz_energy"] = r.lipschitz_energy;
  j["lipschitz_estimator"] = r.lipschitz_estimator;
  j["diag"] = r.diag;
  j["runtime_sec"] = r.runtime_sec;
  return j;
}

}  // namespace dre
