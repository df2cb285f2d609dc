#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "twolevel/errors.hpp"
#include "twolevel/measures.hpp"
#include "twolevel/test_function.hpp"

namespace twolevel {

// -- characteristic flow -------------------------------------------------------
//
// Positions move by dx/dt = -x(1-x). The flow and its inverse are Moebius maps
// fixing 0 and 1:
//   phi_t(p)     = p e^{-t} / (1 - p + p e^{-t})
//   phi_t^{-1}(x) = x / (e^{-t} + x (1 - e^{-t}))

template <typename Scalar>
Scalar phi(double t, Scalar p) {
  const double e = std::exp(-t);
  return p * e / (1.0 - p + p * e);
}

template <typename Scalar>
Scalar phi_inv(double t, Scalar x) {
  const double e = std::exp(-t);
  return x / (e + x * (1.0 - e));
}

template <typename Derived>
auto phi(double t, const Eigen::ArrayBase<Derived>& p) {
  const double e = std::exp(-t);
  return (p * e / (1.0 - p + p * e)).eval();
}

template <typename Derived>
auto phi_inv(double t, const Eigen::ArrayBase<Derived>& x) {
  const double e = std::exp(-t);
  return (x / (e + x * (1.0 - e))).eval();
}

/// Checked flow map at a fixed time.
class FlowMap {
 public:
  explicit FlowMap(double t);

  double t() const { return t_; }
  double forward(double p) const;
  double inverse(double x) const;
  /// 1 - phi_t(p), computed from 1 - p without cancellation.
  double forward_complement(double p, double one_minus_p) const;

 private:
  double t_;
  double decay_;
};

// -- solution operator ---------------------------------------------------------

struct SolutionState {
  LimitMeasure measure;
  double t = 0.0;
  std::vector<std::pair<double, double>> h_history;
};

/// Closed-form solution mu_t of the deterministic limit with parameter lambda.
///
/// Atoms follow the flow with weights a_i(0) (1 - x_i + x_i e^{-t})^{-lambda};
/// densities are transported on their grid, eta_t(x) proportional to
/// eta_0(phi_t^{-1}(x)) (e^{-t} + x(1 - e^{-t}))^{lambda - 2}; Beta laws with the
/// same lambda are returned unchanged. Mixture components are transported
/// unnormalized and rescaled jointly. Throws ResolutionError when a density
/// grid cannot normalize the transported profile to 1e-6.
SolutionState evolve(const LimitMeasure& mu0, double lambda, double t);
/// Continues `state` for a further `dt`.
SolutionState evolve(const SolutionState& state, double lambda, double dt);

/// States at each of `times` (nondecreasing, >= 0), each with the h history up to it.
std::vector<SolutionState> trajectory(const LimitMeasure& mu0, double lambda, const std::vector<double>& times);

/// RK4 integration of the atom system
///   dx_i/dt = -x_i (1 - x_i),  da_i/dt = lambda a_i (x_i - sum_j a_j x_j).
/// Throws ResolutionError if a weight leaves [0,1] by more than 1e-6.
AtomicMeasure evolve_atoms_ode(const AtomicMeasure& mu0, double lambda, double t, double dt = 1e-3);

/// h(t) = <x, mu_t>; appended to the state's history.
double h_of_t(SolutionState& state);

struct ResidualSample {
  double t;
  double value;
};

/// Central-difference residual of the weak equation
///   d/dt <f, mu_t> = -<x(1-x) f', mu_t> + lambda (<x f, mu_t> - <f, mu_t><x, mu_t>)
/// at each interior sample of `states`.
std::vector<ResidualSample> weak_residual(const std::vector<SolutionState>& states, const TestFunction& f, double lambda);

/// Right-hand side of the weak equation for one measure.
double weak_rhs(const LimitMeasure& mu, const TestFunction& f, double lambda);

/// (P_t f)(x) = f(x e^{-st} / (1 - x + x e^{-st})), derivatives by the chain rule.
TestFunction flux_semigroup(const TestFunction& f, double t, double s);

// -- long-time behaviour -------------------------------------------------------

struct LongTimeLimit {
  enum class Kind { Delta0, Delta1, BetaLimit };
  Kind kind;
  std::optional<BetaSpec> beta;

  LimitMeasure measure() const;
  std::string verdict() const;
};

LongTimeLimit classify_longtime(const TailDescriptor& tail, double lambda);

/// Tail class of an initial measure. Densities reaching 1 need tail metadata;
/// without it UnclassifiableError is thrown.
TailDescriptor tail_of(const LimitMeasure& mu0);

// -- closed-form examples ------------------------------------------------------

struct ExampleParams {
  double x0 = 0.5;     // example 1: initial atom position
  double c = 0.8;      // example 4: support [0, c]
  double a = 0.5;      // example 5: initial mass of the atom at 0
  double alpha = 1.0;  // example 5: Beta(lambda - alpha, alpha)
};

/// mu_0 of example 1..5: delta_{x0}, uniform, 2(1-x), uniform on [0,c],
/// a delta_0 + (1-a) Beta(lambda - alpha, alpha).
LimitMeasure example_initial(int example_id, double lambda, const ExampleParams& params = {});

/// Closed-form mu_t of example 1..5, normalized by its own formula.
LimitMeasure reference_solution(int example_id, double lambda, const ExampleParams& params, double t);

}  // namespace twolevel
