#pragma once

namespace twolevel {

/// log B(a, b).
double log_beta(double a, double b);

/// Regularized incomplete beta I_x(a, b). `one_minus_x` lets callers pass
/// 1 - x without cancellation when x is close to 1.
double incomplete_beta(double a, double b, double x, double one_minus_x);
inline double incomplete_beta(double a, double b, double x) { return incomplete_beta(a, b, x, 1.0 - x); }

}  // namespace twolevel
