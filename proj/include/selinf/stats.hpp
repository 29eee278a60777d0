#pragma once

#include <limits>

namespace selinf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double norm_cdf(double x);
double norm_sf(double x);

// log P[Z > x] for standard normal Z, stable across the whole real line.
// Beyond ~37 standard deviations erfc underflows, so the far tail switches
// to the Mills-ratio asymptotic expansion.
double norm_logsf(double x);

double norm_quantile(double p);

// CDF at x of a standard normal truncated to [a, b] (either bound may be
// infinite). Evaluated through differences of log survival functions so the
// result stays meaningful when the window sits far out in one tail.
// Returns NaN when the window is degenerate at double precision.
double truncnorm_cdf(double x, double a, double b);

// Student-t distribution with df degrees of freedom (df = inf -> normal).
double student_t_cdf(double t, double df);
double student_t_quantile(double p, double df);

// 1 - alpha quantile of the F(d1, d2) distribution; d2 = inf uses the
// chi-square(d1)/d1 limit.
double f_quantile(double p, double d1, double d2);

}  // namespace selinf
