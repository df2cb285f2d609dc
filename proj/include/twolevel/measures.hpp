#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "twolevel/quadrature.hpp"
#include "twolevel/rng.hpp"
#include "twolevel/test_function.hpp"

namespace twolevel {

inline constexpr double kMassTolerance = 1e-12;
inline constexpr double kDensityMassTolerance = 1e-8;
inline constexpr double kAtomMergeTolerance = 1e-12;

/// Finite quadrature representation of a measure: sum_i w_i delta_{x_i}.
struct WeightedPoints {
  Eigen::VectorXd x;
  Eigen::VectorXd w;
};

/// Probability vector on the lattice {0, 1/n, ..., 1}.
class GridMeasure {
 public:
  /// Weights must be nonnegative with positive sum; they are rescaled to sum to 1.
  GridMeasure(int n, Eigen::VectorXd weights);

  static GridMeasure point_mass(int n, int site);
  static GridMeasure uniform(int n);
  /// Empirical measure (1/m) sum_i delta_{counts[i]/n}.
  static GridMeasure empirical(int n, const std::vector<int>& counts);

  int n() const { return n_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  Eigen::VectorXd positions() const { return Eigen::VectorXd::LinSpaced(n_ + 1, 0.0, 1.0); }

  /// mu([0, x]).
  double cdf(double x) const;
  /// mu([0, x)).
  double cdf_left(double x) const;

 private:
  int n_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd cumulative_;
};

/// Finite sum of weighted point masses on [0,1], sorted by position.
class AtomicMeasure {
 public:
  /// Atoms closer than kAtomMergeTolerance are merged. Weights must sum to 1
  /// within kMassTolerance.
  AtomicMeasure(const Eigen::VectorXd& positions, const Eigen::VectorXd& weights);

  static AtomicMeasure delta(double x);

  Eigen::Index size() const { return positions_.size(); }
  const Eigen::VectorXd& positions() const { return positions_; }
  const Eigen::VectorXd& weights() const { return weights_; }

  double cdf(double x) const;
  double cdf_left(double x) const;

 private:
  Eigen::VectorXd positions_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd cumulative_;
};

/// Behaviour of mu([1-x, 1]) as x -> 0.
struct TailDescriptor {
  enum class Kind { MassAtOne, VanishingNearOne, PowerTail };
  Kind kind = Kind::VanishingNearOne;
  double alpha = 0.0;
  double constant = 0.0;

  static TailDescriptor mass_at_one() { return {Kind::MassAtOne, 0.0, 0.0}; }
  static TailDescriptor vanishing() { return {Kind::VanishingNearOne, 0.0, 0.0}; }
  static TailDescriptor power(double alpha, double constant);

  bool operator==(const TailDescriptor&) const = default;
};

std::string_view to_string(TailDescriptor::Kind kind);
TailDescriptor::Kind tail_kind_from_string(std::string_view s);

/// Unnormalized density evaluated as f(x, 1 - x); the second argument lets
/// callers supply 1 - x without cancellation.
using DensityProfile = std::function<double(double, double)>;

/// Density on [lo, hi] tabulated on a quadrature grid.
///
/// When built from a profile the closed form is retained and used for
/// pointwise evaluation and partial integrals; otherwise the nodal values are
/// interpolated panel by panel.
class GridDensity {
 public:
  /// Tabulates `profile` on `grid`. With `normalize` the result is rescaled to
  /// unit mass; without it the profile must already integrate to 1 within
  /// kDensityMassTolerance.
  static GridDensity from_profile(DensityProfile profile, QuadratureGrid grid,
                                  std::optional<TailDescriptor> tail = std::nullopt, bool normalize = true);
  /// Nodal values on `grid`; rescaled to unit mass unless already within
  /// kMassTolerance of it.
  static GridDensity from_values(QuadratureGrid grid, Eigen::VectorXd values,
                                 std::optional<TailDescriptor> tail = std::nullopt);

  static GridDensity uniform(double lo = 0.0, double hi = 1.0);

  const QuadratureGrid& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  double lo() const { return grid_.lo(); }
  double hi() const { return grid_.hi(); }
  bool has_profile() const { return static_cast<bool>(profile_); }
  const std::optional<TailDescriptor>& tail() const { return tail_; }

  double density_at(double x) const { return density_at(x, 1.0 - x); }
  double density_at(double x, double one_minus_x) const;
  double cdf(double x) const;

  WeightedPoints points() const;

 private:
  GridDensity(QuadratureGrid grid, Eigen::VectorXd values, DensityProfile profile, double scale,
              std::optional<TailDescriptor> tail);

  QuadratureGrid grid_;
  Eigen::VectorXd values_;
  Eigen::VectorXd panel_cumulative_;
  DensityProfile profile_;
  double scale_ = 1.0;
  std::optional<TailDescriptor> tail_;
};

/// Beta(lambda - alpha, alpha), the stationary density family of the
/// deterministic limit.
class BetaSpec {
 public:
  BetaSpec(double lambda, double alpha);

  double lambda() const { return lambda_; }
  double alpha() const { return alpha_; }
  double shape_a() const { return lambda_ - alpha_; }
  double shape_b() const { return alpha_; }
  double mean() const { return shape_a() / lambda_; }

  double pdf(double x) const { return pdf(x, 1.0 - x); }
  double pdf(double x, double one_minus_x) const;
  double cdf(double x) const;

  /// Graded panels used to refine CDF comparisons.
  const QuadratureGrid& grid() const;
  /// 1024-node rule for integrals against the density, with the endpoint
  /// powers removed by substitution.
  WeightedPoints points() const;

  bool operator==(const BetaSpec& o) const { return lambda_ == o.lambda_ && alpha_ == o.alpha_; }

 private:
  double lambda_;
  double alpha_;
  double log_norm_;
};

class LimitMeasure;

struct MixtureComponent {
  double weight;
  std::shared_ptr<const LimitMeasure> measure;
};

/// Measure-valued solutions of the deterministic limit: atoms, tabulated
/// densities, named Beta laws, or mixtures of these. Components always carry
/// unit mass; mixture weights hold the proportions.
class LimitMeasure {
 public:
  using Mixture = std::vector<MixtureComponent>;
  using Repr = std::variant<AtomicMeasure, GridDensity, BetaSpec, Mixture>;

  LimitMeasure(AtomicMeasure atoms) : repr_(std::move(atoms)) {}
  LimitMeasure(GridDensity density) : repr_(std::move(density)) {}
  LimitMeasure(BetaSpec beta) : repr_(beta) {}

  /// Weights must be nonnegative and sum to 1 within kDensityMassTolerance.
  static LimitMeasure mixture(std::vector<std::pair<double, LimitMeasure>> components);
  static LimitMeasure mixture(Mixture components);

  static LimitMeasure delta(double x) { return LimitMeasure(AtomicMeasure::delta(x)); }

  const Repr& repr() const { return repr_; }

  const AtomicMeasure* atomic() const { return std::get_if<AtomicMeasure>(&repr_); }
  const GridDensity* density() const { return std::get_if<GridDensity>(&repr_); }
  const BetaSpec* beta() const { return std::get_if<BetaSpec>(&repr_); }
  const Mixture* components() const { return std::get_if<Mixture>(&repr_); }

  std::string_view kind_name() const;

 private:
  explicit LimitMeasure(Mixture m) : repr_(std::move(m)) {}
  Repr repr_;
};

// -- functionals ---------------------------------------------------------------

WeightedPoints weighted_points(const GridMeasure& mu);
WeightedPoints weighted_points(const LimitMeasure& mu);

/// <f, mu>. Throws EvaluationError if f is not finite at an evaluation point.
double integrate(const GridMeasure& mu, const TestFunction& f);
double integrate(const LimitMeasure& mu, const TestFunction& f);
double integrate(const WeightedPoints& mu, const TestFunction& f);

double mean(const GridMeasure& mu);
double mean(const LimitMeasure& mu);

double cdf(const LimitMeasure& mu, double x);
double cdf_left(const LimitMeasure& mu, double x);

/// mu([1 - x, 1]); x must lie in [0, 1].
double tail_mass(const GridMeasure& mu, double x);
double tail_mass(const LimitMeasure& mu, double x);

/// Points where a CDF may jump or change analytic form.
std::vector<double> breakpoints(const LimitMeasure& mu);

/// W1 = int_0^1 |F_mu - F_nu| dx.
double wasserstein1(const GridMeasure& mu, const GridMeasure& nu);
double wasserstein1(const LimitMeasure& mu, const LimitMeasure& nu);
double wasserstein1(const GridMeasure& mu, const LimitMeasure& nu);
double wasserstein1(const LimitMeasure& mu, const GridMeasure& nu);

AtomicMeasure to_atomic(const GridMeasure& mu);

/// Weights proportional to (k/n)^{lambda-alpha-1} (1-k/n)^{alpha-1} on 0 < k < n.
GridMeasure discretized_beta(int n, const BetaSpec& spec);

/// Mass of mu on each lattice cell [(k-1/2)/n, (k+1/2)/n), clipped to [0,1].
GridMeasure project_to_lattice(const LimitMeasure& mu, int n);

/// i.i.d. lattice sites by inverse CDF.
std::vector<int> sample(const GridMeasure& mu, std::size_t count, Rng& rng);

/// Graded Gauss-Legendre grid used by default for densities on [lo, hi].
QuadratureGrid default_density_grid(double lo = 0.0, double hi = 1.0);

}  // namespace twolevel
