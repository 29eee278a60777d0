#include "selinf/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace selinf {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kLogSqrt2Pi = 0.9189385332046727;
}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double norm_logsf(double x) {
  if (std::isnan(x)) return kNaN;
  if (x == kInf) return -kInf;
  if (x == -kInf) return 0.0;
  if (x < 0.0) {
    // P[Z > x] = 1 - P[Z > -x]
    return std::log1p(-std::exp(norm_logsf(-x)));
  }
  if (x <= 18.0) return std::log(norm_sf(x));
  // Mills ratio expansion: sf(x) = phi(x)/x * (1 - 1/x^2 + 3/x^4 - ...).
  const double r = 1.0 / (x * x);
  double series = 1.0, term = 1.0;
  for (int k = 1; k <= 7; ++k) {
    term *= -(2.0 * k - 1.0) * r;
    series += term;
  }
  return -0.5 * x * x - kLogSqrt2Pi - std::log(x) + std::log(series);
}

double norm_quantile(double p) {
  boost::math::normal_distribution<double> dist;
  return boost::math::quantile(dist, p);
}

double truncnorm_cdf(double x, double a, double b) {
  if (std::isnan(x) || std::isnan(a) || std::isnan(b) || !(a < b)) return kNaN;
  x = std::clamp(x, a, b);
  // Work in the orientation with the window mass on the right so that log
  // survival differences do not cancel.
  const bool reflect = (b == kInf) ? false : (a == -kInf ? (b < 0.0) : (a + b < 0.0));
  if (reflect) {
    const double f = truncnorm_cdf(-x, -b, -a);
    return std::isnan(f) ? kNaN : 1.0 - f;
  }
  const double la = norm_logsf(a);
  const double lx = norm_logsf(x);
  const double lb = norm_logsf(b);
  // (sf(a) - sf(x)) / (sf(a) - sf(b)), with the common factor sf(a) removed.
  const double num = -std::expm1(lx - la);
  const double den = -std::expm1(lb - la);
  if (!(den > 0.0) || !std::isfinite(den)) return kNaN;
  return std::clamp(num / den, 0.0, 1.0);
}

double student_t_cdf(double t, double df) {
  if (!std::isfinite(df)) return norm_cdf(t);
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(dist, t);
}

double student_t_quantile(double p, double df) {
  if (!std::isfinite(df)) return norm_quantile(p);
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

double f_quantile(double p, double d1, double d2) {
  if (!std::isfinite(d2)) {
    boost::math::chi_squared_distribution<double> dist(d1);
    return boost::math::quantile(dist, p) / d1;
  }
  boost::math::fisher_f_distribution<double> dist(d1, d2);
  return boost::math::quantile(dist, p);
}

}  // namespace selinf
