#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dre/errors.hpp"
#include "dre/rng.hpp"
#include "dre/tensor.hpp"

namespace dre {

// Synthetic benchmark family with a closed-form density ratio:
//   P = N(0, I_d)
//   Q = (1/M) sum_m N(mu r_m, I_d),   r_m unit vectors, mu = sqrt(2 kl_target).
// For M = 1 the divergence KL(P||Q) = KL(Q||P) = mu^2/2 = kl_target exactly;
// for M > 1 kl_target is the design-level proxy used throughout (the exact
// mixture KL falls below it by a Jensen gap).
struct MixtureSpec {
  int d = 1;
  int M = 1;
  double kl_target = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> directions;  // M rows of unit d-vectors

  double mu() const { return std::sqrt(2.0 * kl_target); }

  static MixtureSpec create(int d, int M, double kl_target, std::uint64_t seed) {
    if (d < 1) throw config_error("mixture: d must be >= 1");
    if (M < 1) throw config_error("mixture: M must be >= 1");
    if (!(kl_target >= 0.0)) throw config_error("mixture: kl_target must be >= 0");
    MixtureSpec s;
    s.d = d;
    s.M = M;
    s.kl_target = kl_target;
    s.seed = seed;
    rng_stream rng = derive_stream(seed, 0, split_id::aux, source_id::directions);
    s.directions.resize(static_cast<std::size_t>(M));
    for (auto& r : s.directions) {
      r.resize(static_cast<std::size_t>(d));
      double norm2 = 0.0;
      do {
        norm2 = 0.0;
        for (double& x : r) {
          x = rng.normal();
          norm2 += x * x;
        }
      } while (norm2 == 0.0);
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& x : r) x *= inv;
    }
    return s;
  }

  void validate() const {
    if (d < 1 || M < 1 || !(kl_target >= 0.0))
      throw config_error("mixture: invalid d/M/kl_target");
    if (static_cast<int>(directions.size()) != M)
      throw config_error("mixture: direction count must equal M");
    for (const auto& r : directions) {
      if (static_cast<int>(r.size()) != d)
        throw config_error("mixture: direction dimension must equal d");
      double norm2 = 0.0;
      for (double x : r) norm2 += x * x;
      if (std::abs(norm2 - 1.0) > 1e-9)
        throw config_error("mixture: directions must be unit vectors");
    }
  }
};

inline Tensor sample_p(const MixtureSpec& spec, int n, rng_stream& rng) {
  if (n < 1) throw precondition_error("sample_p: n must be >= 1");
  Tensor x(n, spec.d);
  rng.fill_normal(x.v.data(), x.size());
  return x;
}

inline Tensor sample_q(const MixtureSpec& spec, int n, rng_stream& rng) {
  if (n < 1) throw precondition_error("sample_q: n must be >= 1");
  const double mu = spec.mu();
  Tensor x(n, spec.d);
  for (int i = 0; i < n; ++i) {
    const std::size_t m =
        spec.M == 1 ? 0 : static_cast<std::size_t>(rng.uniform_index(spec.M));
    double* row = x.row_ptr(i);
    for (int j = 0; j < spec.d; ++j)
      row[j] = mu * spec.directions[m][static_cast<std::size_t>(j)] + rng.normal();
  }
  return x;
}

// log dQ/dP at x: logsumexp_m( mu <r_m, x> - mu^2/2 ) - log M. Kept in log
// space so large offsets cannot overflow.
inline double log_ratio(const MixtureSpec& spec, const double* x) {
  const double mu = spec.mu();
  const double shift = -0.5 * mu * mu;
  if (spec.M == 1) {
    double dot = 0.0;
    for (int j = 0; j < spec.d; ++j) dot += spec.directions[0][static_cast<std::size_t>(j)] * x[j];
    return mu * dot + shift;
  }
  double maxe = -std::numeric_limits<double>::infinity();
  std::vector<double> exps(static_cast<std::size_t>(spec.M));
  for (int m = 0; m < spec.M; ++m) {
    double dot = 0.0;
    for (int j = 0; j < spec.d; ++j)
      dot += spec.directions[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] * x[j];
    exps[static_cast<std::size_t>(m)] = mu * dot + shift;
    maxe = std::max(maxe, exps[static_cast<std::size_t>(m)]);
  }
  double acc = 0.0;
  for (double e : exps) acc += std::exp(e - maxe);
  return maxe + std::log(acc) - std::log(static_cast<double>(spec.M));
}

inline double true_ratio(const MixtureSpec& spec, const double* x) {
  return std::exp(log_ratio(spec, x));
}

// Energy of the ratio: T*(x) = -log dQ/dP(x). Affine in x when M = 1.
inline double energy(const MixtureSpec& spec, const double* x) {
  return -log_ratio(spec, x);
}

inline std::vector<double> true_ratio_batch(const MixtureSpec& spec, const Tensor& x) {
  if (x.cols != spec.d) throw precondition_error("true_ratio_batch: width mismatch");
  std::vector<double> out(static_cast<std::size_t>(x.rows));
  for (int i = 0; i < x.rows; ++i) out[static_cast<std::size_t>(i)] = true_ratio(spec, x.row_ptr(i));
  return out;
}

// Design-level KL: mu^2/2 = kl_target by construction (exact at M = 1).
inline double analytic_kl(const MixtureSpec& spec) { return spec.kl_target; }

// Largest per-coordinate extent over the pooled sample clouds; the bounding
// box side used as the diameter proxy in the bound evaluations.
inline double empirical_diag(const std::vector<const Tensor*>& clouds) {
  if (clouds.empty()) throw precondition_error("empirical_diag: no sample clouds");
  const int d = clouds.front()->cols;
  double best = 0.0;
  for (int j = 0; j < d; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Tensor* c : clouds) {
      if (c->cols != d) throw precondition_error("empirical_diag: mixed widths");
      for (int i = 0; i < c->rows; ++i) {
        const double x = c->at(i, j);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    best = std::max(best, hi - lo);
  }
  return best;
}

// ---- serialization ----

inline constexpr const char* kMixtureFormat = "dre-mixture-v1";

inline nlohmann::json to_json(const MixtureSpec& spec) {
  nlohmann::json j;
  j["format"] = kMixtureFormat;
  j["d"] = spec.d;
  j["M"] = spec.M;
  j["kl_target"] = spec.kl_target;
  j["seed"] = spec.seed;
  j["directions"] = spec.directions;
  return j;
}

inline MixtureSpec mixture_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != kMixtureFormat)
    throw io_error("mixture spec: missing or unsupported format tag");
  MixtureSpec s;
  s.d = j.at("d").get<int>();
  s.M = j.at("M").get<int>();
  s.kl_target = j.at("kl_target").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.directions = j.at("directions").get<std::vector<std::vector<double>>>();
  s.validate();
  return s;
}

inline void write_mixture_json(const MixtureSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open mixture spec for writing: " + path);
  out << to_json(spec).dump(2) << "\n";
  if (!out) throw io_error("failed writing mixture spec: " + path);
}

inline MixtureSpec read_mixture_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open mixture spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("mixture spec parse failure in " + path + ": " + e.what());
  }
  return mixture_from_json(j);
}

// Dataset rows as CSV with header x0,...,x{d-1}; %.17g round-trips doubles.
inline void write_dataset_csv(const Tensor& x, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open dataset for writing: " + path);
  for (int j = 0; j < x.cols; ++j) out << (j ? ",x" : "x") << j;
  out << "\n";
  char buf[40];
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", x.at(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw io_error("failed writing dataset: " + path);
}

inline Tensor read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw io_error("dataset is empty: " + path);
  int cols = 1;
  for (char c : line)
    if (c == ',') ++cols;
  std::vector<double> vals;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int got = 0;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::strtod(cell.c_str(), nullptr));
      ++got;
    }
    if (got != cols) throw io_error("dataset has ragged rows: " + path);
    ++rows;
  }
  Tensor t(rows, cols);
  t.v = std::move(vals);
  return t;
}

}  // namespace dre
