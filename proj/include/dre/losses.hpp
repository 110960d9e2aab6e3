#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dre/errors.hpp"
#include "dre/generators.hpp"
#include "dre/stats.hpp"
#include "dre/tape.hpp"

namespace dre {

// How the raw network output T is mapped to a positive ratio candidate phi.
enum class Parameterization { log_scale, direct };

inline constexpr double kDirectEps = 1e-6;

struct LossSpec {
  ConvexGenerator gen;
  Parameterization param = Parameterization::log_scale;

  std::string name() const {
    std::string n = gen.name();
    if (param == Parameterization::direct) n += "+direct";
    return n;
  }

  static LossSpec parse(std::string_view generator_name,
                        Parameterization param = Parameterization::log_scale) {
    return LossSpec{ConvexGenerator::parse(generator_name), param};
  }
};

inline double phi_of_T(double T, const LossSpec& spec) {
  return spec.param == Parameterization::log_scale ? std::exp(T)
                                                   : stable_softplus(T) + kDirectEps;
}

namespace detail {

// Scalar per-sample loss terms. The Q-side term is -f'(phi), the P-side term
// is f*(f'(phi)); under log-scale both are written directly in T so large
// negative outputs cannot overflow through an intermediate exp. These must
// mirror the tape compositions in loss_graph() operation for operation.

inline double q_term(const LossSpec& s, double T) {
  const ConvexGenerator& g = s.gen;
  if (s.param == Parameterization::log_scale) {
    switch (g.kind) {
      case GenKind::kl: return -T - 1.0;
      case GenKind::pearson_chi2: return std::exp(T) * -2.0 + 2.0;
      case GenKind::squared_hellinger: return std::exp(T * -0.5) - 1.0;
      case GenKind::gan: return stable_softplus(-T);
      case GenKind::alpha:
        return std::exp(T * (g.alpha - 1.0)) * (1.0 / (1.0 - g.alpha));
    }
  }
  const double phi = phi_of_T(T, s);
  switch (g.kind) {
    case GenKind::kl: return std::log(phi) * -1.0 + -1.0;
    case GenKind::pearson_chi2: return phi * -2.0 + 2.0;
    case GenKind::squared_hellinger: return std::pow(phi, -0.5) + -1.0;
    case GenKind::gan: return std::log(std::pow(phi, -1.0) + 1.0);
    case GenKind::alpha: return std::pow(phi, g.alpha - 1.0) * (1.0 / (1.0 - g.alpha));
  }
  return 0.0;
}

inline double p_term(const LossSpec& s, double T) {
  const ConvexGenerator& g = s.gen;
  if (s.param == Parameterization::log_scale) {
    switch (g.kind) {
      case GenKind::kl: return std::exp(T);
      case GenKind::pearson_chi2: return std::exp(T * 2.0) + -1.0;
      case GenKind::squared_hellinger: return std::exp(T * 0.5) + -1.0;
      case GenKind::gan: return stable_softplus(T);
      case GenKind::alpha: return std::exp(T * g.alpha) * (1.0 / g.alpha);
    }
  }
  const double phi = phi_of_T(T, s);
  switch (g.kind) {
    case GenKind::kl: return phi;
    case GenKind::pearson_chi2: return std::pow(phi, 2.0) + -1.0;
    case GenKind::squared_hellinger: return std::pow(phi, 0.5) + -1.0;
    case GenKind::gan: return std::log(phi + 1.0);
    case GenKind::alpha: return std::pow(phi, g.alpha) * (1.0 / g.alpha);
  }
  return 0.0;
}

inline double mean_of_terms(const LossSpec& s, std::span<const double> T,
                            double (*term)(const LossSpec&, double),
                            const char* side) {
  if (T.empty()) throw precondition_error(std::string("empirical loss: empty ") + side +
                                          " sample array");
  double acc = 0.0;
  for (double t : T) {
    if (!std::isfinite(t))
      throw non_finite_error(std::string("empirical loss: non-finite score on ") + side);
    acc += term(s, t);
  }
  return acc / static_cast<double>(T.size());
}

}  // namespace detail

// Sample-based f-divergence loss
//   (1/S) sum_{Q} -f'(phi) + (1/R) sum_{P} f*(f'(phi)),
// evaluated on raw scores T (phi = parameterization(T)). Minimized over rich
// enough phi it approaches -D_f(Q||P). Overflow inside the exp compositions is
// reported as non_finite_error so callers can treat it as divergence.
inline double empirical_loss(std::span<const double> T_on_P,
                             std::span<const double> T_on_Q, const LossSpec& spec) {
  const double lq = detail::mean_of_terms(spec, T_on_Q, detail::q_term, "Q");
  const double lp = detail::mean_of_terms(spec, T_on_P, detail::p_term, "P");
  const double loss = lq + lp;
  if (!std::isfinite(loss))
    throw non_finite_error("empirical loss overflowed to non-finite");
  return loss;
}

// mean(exp T on P) - mean(T on Q). Equals empirical_loss with the kl
// generator under log-scale plus the constant 1.
inline double kl_loss(std::span<const double> T_on_P, std::span<const double> T_on_Q) {
  if (T_on_P.empty() || T_on_Q.empty())
    throw precondition_error("kl_loss: empty sample array");
  double accp = 0.0;
  for (double t : T_on_P) accp += std::exp(t);
  double accq = 0.0;
  for (double t : T_on_Q) accq += t;
  const double loss = accp / static_cast<double>(T_on_P.size()) -
                      accq / static_cast<double>(T_on_Q.size());
  if (!std::isfinite(loss)) throw non_finite_error("kl_loss overflowed to non-finite");
  return loss;
}

// (1/alpha) mean(exp(alpha T) on P) + (1/(1-alpha)) mean(exp((alpha-1) T) on Q).
// Stationary in T exactly at T = log(dQ/dP); recovers kl_loss + 1/(alpha(1-alpha)) - 1
// in the alpha -> 1 limit. Identical to empirical_loss with the alpha
// generator under log-scale.
inline double alpha_loss(std::span<const double> T_on_P, std::span<const double> T_on_Q,
                         double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw config_error("alpha_loss requires alpha in (0,1)");
  if (T_on_P.empty() || T_on_Q.empty())
    throw precondition_error("alpha_loss: empty sample array");
  double accp = 0.0;
  for (double t : T_on_P) accp += std::exp(alpha * t);
  double accq = 0.0;
  for (double t : T_on_Q) accq += std::exp((alpha - 1.0) * t);
  const double loss = accp / static_cast<double>(T_on_P.size()) / alpha +
                      accq / static_cast<double>(T_on_Q.size()) / (1.0 - alpha);
  if (!std::isfinite(loss)) throw non_finite_error("alpha_loss overflowed to non-finite");
  return loss;
}

// Densities of P and Q relative to a common dominating measure at one point.
struct MuPoint {
  double dp_dmu = 0.0;
  double dq_dmu = 0.0;
};

inline void validate(const MuPoint& pt) {
  if (!(pt.dp_dmu >= 0.0) || !(pt.dq_dmu >= 0.0))
    throw precondition_error("MuPoint densities must be non-negative");
  if (pt.dp_dmu == 0.0 && pt.dq_dmu == 0.0)
    throw precondition_error("MuPoint densities must not both vanish");
}

// MuPoint for mu = (P+Q)/2 written in terms of the ratio r = dQ/dP; the two
// densities always sum to 2.
inline MuPoint mu_point_from_ratio(double r) {
  if (!(r >= 0.0)) throw precondition_error("ratio must be non-negative");
  return MuPoint{2.0 / (1.0 + r), 2.0 * r / (1.0 + r)};
}

// Pointwise integrand of the loss in the dominating-measure representation:
//   l(u) = -f'(u) dQ/dmu + f*(f'(u)) dP/dmu.
// Strictly convex in u with its minimum at u = dQ/dP where the value is
// -f(dQ/dP) dP/dmu.
inline double mu_loss_pointwise(const ConvexGenerator& gen, double u, const MuPoint& pt) {
  validate(pt);
  return -gen.fprime(u) * pt.dq_dmu + gen.conj_of_fprime(u) * pt.dp_dmu;
}

// First and second u-derivatives of mu_loss_pointwise:
//   l'(u)  = f''(u) (u dP/dmu - dQ/dmu)
//   l''(u) = f'''(u) (u dP/dmu - dQ/dmu) + f''(u) dP/dmu.
// The first derivative carries the sign of (u - dQ/dP).
inline std::pair<double, double> mu_loss_derivative(const ConvexGenerator& gen, double u,
                                                    const MuPoint& pt) {
  validate(pt);
  const double gap = u * pt.dp_dmu - pt.dq_dmu;
  return {gen.fsecond(u) * gap, gen.fthird(u) * gap + gen.fsecond(u) * pt.dp_dmu};
}

// Plain Monte Carlo of D_f(Q||P) = E_P[f(dQ/dP)] from ratio values evaluated
// on a P sample.
inline double monte_carlo_Df(const ConvexGenerator& gen, std::span<const double> ratios_on_P) {
  if (ratios_on_P.empty()) throw precondition_error("monte_carlo_Df: empty sample");
  double acc = 0.0;
  for (double r : ratios_on_P) {
    if (!(r > 0.0)) throw precondition_error("monte_carlo_Df: ratio values must be positive");
    acc += gen.f(r);
  }
  return acc / static_cast<double>(ratios_on_P.size());
}

inline mean_with_error monte_carlo_Df_with_stderr(const ConvexGenerator& gen,
                                                  std::span<const double> ratios_on_P) {
  std::vector<double> fs;
  fs.reserve(ratios_on_P.size());
  for (double r : ratios_on_P) {
    if (!(r > 0.0)) throw precondition_error("monte_carlo_Df: ratio values must be positive");
    fs.push_back(gen.f(r));
  }
  if (fs.empty()) throw precondition_error("monte_carlo_Df: empty sample");
  return mean_and_stderr(fs);
}

namespace detail {

inline int phi_graph(Tape& tape, int t_node, const LossSpec& s) {
  // Only used for the direct parameterization; log-scale terms stay in T.
  return tape.add_scalar(tape.softplus(t_node), kDirectEps);
}

inline int q_term_graph(Tape& tape, int t_node, const LossSpec& s) {
  const ConvexGenerator& g = s.gen;
  if (s.param == Parameterization::log_scale) {
    switch (g.kind) {
      case GenKind::kl: return tape.add_scalar(tape.scale(t_node, -1.0), -1.0);
      case GenKind::pearson_chi2:
        return tape.add_scalar(tape.scale(tape.exp_elem(t_node), -2.0), 2.0);
      case GenKind::squared_hellinger:
        return tape.add_scalar(tape.exp_elem(tape.scale(t_node, -0.5)), -1.0);
      case GenKind::gan: return tape.softplus(tape.scale(t_node, -1.0));
      case GenKind::alpha:
        return tape.scale(tape.exp_elem(tape.scale(t_node, g.alpha - 1.0)),
                          1.0 / (1.0 - g.alpha));
    }
  }
  const int phi = phi_graph(tape, t_node, s);
  switch (g.kind) {
    case GenKind::kl:
      return tape.add_scalar(tape.scale(tape.log_elem(phi), -1.0), -1.0);
    case GenKind::pearson_chi2: return tape.add_scalar(tape.scale(phi, -2.0), 2.0);
    case GenKind::squared_hellinger:
      return tape.add_scalar(tape.pow_scalar(phi, -0.5), -1.0);
    case GenKind::gan:
      return tape.log_elem(tape.add_scalar(tape.pow_scalar(phi, -1.0), 1.0));
    case GenKind::alpha:
      return tape.scale(tape.pow_scalar(phi, g.alpha - 1.0), 1.0 / (1.0 - g.alpha));
  }
  return -1;
}

inline int p_term_graph(Tape& tape, int t_node, const LossSpec& s) {
  const ConvexGenerator& g = s.gen;
  if (s.param == Parameterization::log_scale) {
    switch (g.kind) {
      case GenKind::kl: return tape.exp_elem(t_node);
      case GenKind::pearson_chi2:
        return tape.add_scalar(tape.exp_elem(tape.scale(t_node, 2.0)), -1.0);
      case GenKind::squared_hellinger:
        return tape.add_scalar(tape.exp_elem(tape.scale(t_node, 0.5)), -1.0);
      case GenKind::gan: return tape.softplus(t_node);
      case GenKind::alpha:
        return tape.scale(tape.exp_elem(tape.scale(t_node, g.alpha)), 1.0 / g.alpha);
    }
  }
  const int phi = phi_graph(tape, t_node, s);
  switch (g.kind) {
    case GenKind::kl: return phi;
    case GenKind::pearson_chi2: return tape.add_scalar(tape.pow_scalar(phi, 2.0), -1.0);
    case GenKind::squared_hellinger:
      return tape.add_scalar(tape.pow_scalar(phi, 0.5), -1.0);
    case GenKind::gan: return tape.log_elem(tape.add_scalar(phi, 1.0));
    case GenKind::alpha: return tape.scale(tape.pow_scalar(phi, g.alpha), 1.0 / g.alpha);
  }
  return -1;
}

}  // namespace detail

// Differentiable version of empirical_loss: builds the scalar loss node from
// the raw-score nodes of the P batch and the Q batch.
inline int loss_graph(Tape& tape, int T_on_P_node, int T_on_Q_node, const LossSpec& spec) {
  const int lq = tape.mean_all(detail::q_term_graph(tape, T_on_Q_node, spec));
  const int lp = tape.mean_all(detail::p_term_graph(tape, T_on_P_node, spec));
  return tape.add(lq, lp);
}

}  // namespace dre
