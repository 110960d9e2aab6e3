#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "dre/errors.hpp"

namespace dre {

// Convex generator f of an f-divergence D_f(Q||P) = E_P[f(dQ/dP)], together
// with the derivatives the pointwise analysis needs and the convex conjugate
// composed with f' that appears in the sample-based loss.
//
// conj_of_fprime(u) always equals u*f'(u) - f(u) (checked by the test suite on
// a log-spaced grid). f(1) = 0 holds for kl / pearson_chi2 /
// squared_hellinger; the gan and alpha rows are the classical unnormalized
// forms with f(1) = -log 4 and -1/(alpha(1-alpha)) respectively.
enum class GenKind { kl, pearson_chi2, squared_hellinger, gan, alpha };

struct ConvexGenerator {
  GenKind kind = GenKind::kl;
  double alpha = 0.5;  // only meaningful for GenKind::alpha, must lie in (0,1)

  static ConvexGenerator make(GenKind kind, double alpha = 0.5) {
    if (kind == GenKind::alpha && !(alpha > 0.0 && alpha < 1.0))
      throw config_error("alpha generator requires alpha in (0,1)");
    ConvexGenerator g;
    g.kind = kind;
    g.alpha = alpha;
    return g;
  }

  double f(double u) const {
    check_domain(u);
    switch (kind) {
      case GenKind::kl: return u * std::log(u);
      case GenKind::pearson_chi2: return (u - 1.0) * (u - 1.0);
      case GenKind::squared_hellinger: {
        const double s = std::sqrt(u) - 1.0;
        return s * s;
      }
      case GenKind::gan: return u * std::log(u) - (u + 1.0) * std::log(u + 1.0);
      case GenKind::alpha: return -std::pow(u, alpha) / (alpha * (1.0 - alpha));
    }
    return 0.0;
  }

  double fprime(double u) const {
    check_domain(u);
    switch (kind) {
      case GenKind::kl: return std::log(u) + 1.0;
      case GenKind::pearson_chi2: return 2.0 * u - 2.0;
      case GenKind::squared_hellinger: return 1.0 - 1.0 / std::sqrt(u);
      case GenKind::gan: return -std::log1p(1.0 / u);
      case GenKind::alpha: return -std::pow(u, alpha - 1.0) / (1.0 - alpha);
    }
    return 0.0;
  }

  double fsecond(double u) const {
    check_domain(u);
    switch (kind) {
      case GenKind::kl: return 1.0 / u;
      case GenKind::pearson_chi2: return 2.0;
      case GenKind::squared_hellinger: return 0.5 * std::pow(u, -1.5);
      case GenKind::gan: return 1.0 / (u * (u + 1.0));
      case GenKind::alpha: return std::pow(u, alpha - 2.0);
    }
    return 0.0;
  }

  double fthird(double u) const {
    check_domain(u);
    switch (kind) {
      case GenKind::kl: return -1.0 / (u * u);
      case GenKind::pearson_chi2: return 0.0;
      case GenKind::squared_hellinger: return -0.75 * std::pow(u, -2.5);
      case GenKind::gan: return -(2.0 * u + 1.0) / (u * u * (u + 1.0) * (u + 1.0));
      case GenKind::alpha: return (alpha - 2.0) * std::pow(u, alpha - 3.0);
    }
    return 0.0;
  }

  double conj_of_fprime(double u) const {
    check_domain(u);
    switch (kind) {
      case GenKind::kl: return u;
      case GenKind::pearson_chi2: return u * u - 1.0;
      case GenKind::squared_hellinger: return std::sqrt(u) - 1.0;
      case GenKind::gan: return std::log1p(u);
      case GenKind::alpha: return std::pow(u, alpha) / alpha;
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case GenKind::kl: return "kl";
      case GenKind::pearson_chi2: return "pearson_chi2";
      case GenKind::squared_hellinger: return "squared_hellinger";
      case GenKind::gan: return "gan";
      case GenKind::alpha: {
        char buf[48];
        std::snprintf(buf, sizeof buf, "alpha:%.17g", alpha);
        return buf;
      }
    }
    return "?";
  }

  // Accepted spellings: kl, pearson_chi2, squared_hellinger, gan,
  // alpha (defaults to 0.5), alpha:<value>.
  static ConvexGenerator parse(std::string_view s) {
    if (s == "kl") return make(GenKind::kl);
    if (s == "pearson_chi2") return make(GenKind::pearson_chi2);
    if (s == "squared_hellinger") return make(GenKind::squared_hellinger);
    if (s == "gan") return make(GenKind::gan);
    if (s == "alpha") return make(GenKind::alpha, 0.5);
    constexpr std::string_view prefix = "alpha:";
    if (s.substr(0, prefix.size()) == prefix) {
      const std::string num(s.substr(prefix.size()));
      char* end = nullptr;
      const double a = std::strtod(num.c_str(), &end);
      if (end == num.c_str() || *end != '\0')
        throw config_error("unparseable alpha value in generator name: " + std::string(s));
      return make(GenKind::alpha, a);
    }
    throw config_error("unknown generator name: " + std::string(s));
  }

  static std::vector<ConvexGenerator> all_standard() {
    return {make(GenKind::kl), make(GenKind::pearson_chi2),
            make(GenKind::squared_hellinger), make(GenKind::gan),
            make(GenKind::alpha, 0.5)};
  }

 private:
  static void check_domain(double u) {
    if (!(u > 0.0)) throw precondition_error("generator evaluated at u <= 0");
  }
};

}  // namespace dre
