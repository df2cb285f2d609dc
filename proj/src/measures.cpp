#include "twolevel/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "twolevel/errors.hpp"
#include "twolevel/special.hpp"

namespace twolevel {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::VectorXd cumulative_sum(const Eigen::VectorXd& w) {
  Eigen::VectorXd c(w.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) c(i) = (acc += w(i));
  return c;
}

void check_unit_interval(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError(std::string(what) + " must lie in [0,1], got " + std::to_string(x));
}

}  // namespace

// -- GridMeasure ---------------------------------------------------------------

GridMeasure::GridMeasure(int n, Eigen::VectorXd weights) : n_(n), weights_(std::move(weights)) {
  if (n_ < 1) throw ValidationError("grid measure needs n >= 1");
  if (weights_.size() != n_ + 1) throw ValidationError("grid measure needs n+1 weights");
  if ((weights_.array() < 0.0).any() || !weights_.allFinite())
    throw ValidationError("grid measure weights must be finite and nonnegative");
  const double total = weights_.sum();
  if (!(total > 0.0)) throw ValidationError("grid measure weights must have positive sum");
  weights_ /= total;
  cumulative_ = cumulative_sum(weights_);
}

GridMeasure GridMeasure::point_mass(int n, int site) {
  if (site < 0 || site > n) throw ValidationError("point mass site outside lattice");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n + 1);
  w(site) = 1.0;
  return GridMeasure(n, std::move(w));
}

GridMeasure GridMeasure::uniform(int n) { return GridMeasure(n, Eigen::VectorXd::Ones(n + 1)); }

GridMeasure GridMeasure::empirical(int n, const std::vector<int>& counts) {
  if (counts.empty()) throw ValidationError("empirical measure of an empty population");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n + 1);
  for (int k : counts) {
    if (k < 0 || k > n) throw ValidationError("count outside [0, n]");
    w(k) += 1.0;
  }
  return GridMeasure(n, std::move(w));
}

double GridMeasure::cdf(double x) const {
  if (x < 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Largest site k with k/n <= x; guard the division against round-off.
  auto k = static_cast<Eigen::Index>(std::floor(x * n_));
  if (static_cast<double>(k + 1) / n_ <= x) ++k;
  if (static_cast<double>(k) / n_ > x) --k;
  return k < 0 ? 0.0 : cumulative_(std::min<Eigen::Index>(k, n_));
}

double GridMeasure::cdf_left(double x) const {
  if (x <= 0.0) return 0.0;
  if (x > 1.0) return 1.0;
  // Largest site k with k/n < x.
  auto k = static_cast<Eigen::Index>(std::ceil(x * n_)) - 1;
  if (static_cast<double>(k + 1) / n_ < x) ++k;
  if (k >= 0 && static_cast<double>(k) / n_ >= x) --k;
  return k < 0 ? 0.0 : cumulative_(std::min<Eigen::Index>(k, n_));
}

// -- AtomicMeasure -------------------------------------------------------------

AtomicMeasure::AtomicMeasure(const Eigen::VectorXd& positions, const Eigen::VectorXd& weights) {
  if (positions.size() != weights.size() || positions.size() == 0)
    throw ValidationError("atomic measure needs matching, nonempty positions and weights");
  std::vector<Eigen::Index> order(positions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return positions(a) < positions(b); });

  std::vector<double> xs, ws;
  for (auto i : order) {
    const double x = positions(i), w = weights(i);
    check_unit_interval(x, "atom position");
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("atom weights must be finite and nonnegative");
    if (!xs.empty() && x - xs.back() < kAtomMergeTolerance) {
      ws.back() += w;
    } else {
      xs.push_back(x);
      ws.push_back(w);
    }
  }
  const double total = std::accumulate(ws.begin(), ws.end(), 0.0);
  if (std::abs(total - 1.0) > kMassTolerance)
    throw ValidationError("atom weights must sum to 1, got " + std::to_string(total));
  positions_ = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  weights_ = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(ws.size())) / total;
  cumulative_ = cumulative_sum(weights_);
}

AtomicMeasure AtomicMeasure::delta(double x) {
  return AtomicMeasure(Eigen::VectorXd::Constant(1, x), Eigen::VectorXd::Ones(1));
}

double AtomicMeasure::cdf(double x) const {
  const auto* b = positions_.data();
  const auto idx = std::upper_bound(b, b + positions_.size(), x) - b;
  return idx == 0 ? 0.0 : cumulative_(idx - 1);
}

double AtomicMeasure::cdf_left(double x) const {
  const auto* b = positions_.data();
  const auto idx = std::lower_bound(b, b + positions_.size(), x) - b;
  return idx == 0 ? 0.0 : cumulative_(idx - 1);
}

// -- TailDescriptor ------------------------------------------------------------

TailDescriptor TailDescriptor::power(double alpha, double constant) {
  if (!(alpha > 0.0) || !(constant > 0.0)) throw ValidationError("power tail needs alpha > 0 and C > 0");
  return {Kind::PowerTail, alpha, constant};
}

std::string_view to_string(TailDescriptor::Kind kind) {
  switch (kind) {
    case TailDescriptor::Kind::MassAtOne: return "MassAtOne";
    case TailDescriptor::Kind::VanishingNearOne: return "VanishingNearOne";
    case TailDescriptor::Kind::PowerTail: return "PowerTail";
  }
  return "?";
}

TailDescriptor::Kind tail_kind_from_string(std::string_view s) {
  if (s == "MassAtOne") return TailDescriptor::Kind::MassAtOne;
  if (s == "VanishingNearOne") return TailDescriptor::Kind::VanishingNearOne;
  if (s == "PowerTail") return TailDescriptor::Kind::PowerTail;
  throw ValidationError("unknown tail kind '" + std::string(s) + "'");
}

// -- GridDensity ---------------------------------------------------------------

QuadratureGrid default_density_grid(double lo, double hi) { return QuadratureGrid::graded(lo, hi, 16, 64, 1e-12); }

GridDensity::GridDensity(QuadratureGrid grid, Eigen::VectorXd values, DensityProfile profile, double scale,
                         std::optional<TailDescriptor> tail)
    : grid_(std::move(grid)), values_(std::move(values)), profile_(std::move(profile)), scale_(scale),
      tail_(std::move(tail)) {
  if (grid_.lo() < 0.0 || grid_.hi() > 1.0) throw ValidationError("density support must lie in [0,1]");
  if (values_.size() != grid_.size()) throw ValidationError("density values do not match grid size");
  if (!values_.allFinite() || (values_.array() < 0.0).any())
    throw ValidationError("density values must be finite and nonnegative");
  const Eigen::Index panels = grid_.panel_count();
  panel_cumulative_ = Eigen::VectorXd::Zero(panels + 1);
  const Eigen::VectorXd mass = grid_.weights().cwiseProduct(values_);
  if (grid_.kind() == QuadratureKind::Trapezoid) {
    for (Eigen::Index p = 0; p < panels; ++p)
      panel_cumulative_(p + 1) =
          panel_cumulative_(p) + 0.5 * (grid_.nodes()(p + 1) - grid_.nodes()(p)) * (values_(p) + values_(p + 1));
  } else {
    const int k = grid_.per_panel();
    for (Eigen::Index p = 0; p < panels; ++p) panel_cumulative_(p + 1) = panel_cumulative_(p) + mass.segment(p * k, k).sum();
  }
}

GridDensity GridDensity::from_profile(DensityProfile profile, QuadratureGrid grid, std::optional<TailDescriptor> tail,
                                      bool normalize) {
  const auto& x = grid.nodes();
  Eigen::VectorXd raw(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    raw(i) = profile(x(i), grid.complements()(i));
    if (!std::isfinite(raw(i)) || raw(i) < 0.0)
      throw ResolutionError("density profile is not finite and nonnegative at x=" + std::to_string(x(i)));
  }
  const double mass = grid.weights().dot(raw);
  if (!(mass > 0.0)) throw ResolutionError("density profile has no mass on its grid");
  double scale = 1.0;
  if (normalize) {
    scale = 1.0 / mass;
  } else if (std::abs(mass - 1.0) > kDensityMassTolerance) {
    throw ResolutionError("density profile integrates to " + std::to_string(mass) + " instead of 1");
  }
  return GridDensity(std::move(grid), raw * scale, std::move(profile), scale, std::move(tail));
}

GridDensity GridDensity::from_values(QuadratureGrid grid, Eigen::VectorXd values, std::optional<TailDescriptor> tail) {
  if (values.size() != grid.size()) throw ValidationError("density values do not match grid size");
  const double mass = grid.weights().dot(values);
  if (!(mass > 0.0)) throw ValidationError("density values have no mass");
  if (std::abs(mass - 1.0) > kMassTolerance) values /= mass;
  return GridDensity(std::move(grid), std::move(values), nullptr, 1.0, std::move(tail));
}

GridDensity GridDensity::uniform(double lo, double hi) {
  std::optional<TailDescriptor> tail;
  if (hi >= 1.0) tail = TailDescriptor::power(1.0, 1.0 / (hi - lo));
  return from_profile([](double, double) { return 1.0; }, default_density_grid(lo, hi), tail);
}

double GridDensity::density_at(double x, double one_minus_x) const {
  if (x < lo() || x > hi()) return 0.0;
  if (profile_) return scale_ * profile_(x, one_minus_x);
  return std::max(0.0, grid_.interpolate(values_, x));
}

double GridDensity::cdf(double x) const {
  if (x <= lo()) return 0.0;
  if (x >= hi()) return 1.0;
  const Eigen::Index p = grid_.panel_of(x);
  const double a = grid_.breakpoints()(p);
  double partial;
  if (!profile_ && grid_.kind() == QuadratureKind::Trapezoid) {
    partial = 0.5 * (x - a) * (values_(p) + grid_.interpolate(values_, x));
  } else {
    partial = gauss_integrate([this](double y) { return density_at(y); }, a, x, 32);
  }
  const double lo_c = panel_cumulative_(p), hi_c = panel_cumulative_(p + 1);
  return std::clamp(lo_c + partial, lo_c, hi_c);
}

WeightedPoints GridDensity::points() const { return {grid_.nodes(), grid_.weights().cwiseProduct(values_)}; }

// -- BetaSpec ------------------------------------------------------------------

BetaSpec::BetaSpec(double lambda, double alpha) : lambda_(lambda), alpha_(alpha) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("Beta spec needs lambda > 0");
  if (!(alpha > 0.0 && alpha < lambda)) throw ValidationError("Beta spec needs 0 < alpha < lambda");
  log_norm_ = -log_beta(shape_a(), shape_b());
}

double BetaSpec::pdf(double x, double one_minus_x) const {
  if (x <= 0.0 || one_minus_x <= 0.0) {
    // Endpoint values only matter for finite exponents.
    if (x <= 0.0) return shape_a() == 1.0 ? std::exp(log_norm_) : (shape_a() > 1.0 ? 0.0 : INFINITY);
    return shape_b() == 1.0 ? std::exp(log_norm_) : (shape_b() > 1.0 ? 0.0 : INFINITY);
  }
  return std::exp(log_norm_ + (shape_a() - 1.0) * std::log(x) + (shape_b() - 1.0) * std::log(one_minus_x));
}

double BetaSpec::cdf(double x) const { return incomplete_beta(shape_a(), shape_b(), x); }

const QuadratureGrid& BetaSpec::grid() const {
  static const QuadratureGrid grid = QuadratureGrid::graded(0.0, 1.0, 64, 16, 1e-14);
  return grid;
}

WeightedPoints BetaSpec::points() const {
  // x = u^{1/a} on [0, 1/2] and 1 - x = v^{1/b} on [1/2, 1] absorb the endpoint powers.
  static const QuadratureGrid unit = QuadratureGrid::graded(0.0, 1.0, 32, 16, 1e-10);
  const double a = shape_a(), b = shape_b();
  const double norm = std::exp(log_norm_);
  const Eigen::Index k = unit.size();
  WeightedPoints out{Eigen::VectorXd(2 * k), Eigen::VectorXd(2 * k)};
  const double u_max = std::pow(0.5, a), v_max = std::pow(0.5, b);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double u = u_max * unit.nodes()(i);
    const double x = std::pow(u, 1.0 / a);
    out.x(i) = x;
    out.w(i) = u_max * unit.weights()(i) * norm / a * std::exp((b - 1.0) * std::log1p(-x));
    const double v = v_max * unit.nodes()(k - 1 - i);
    const double om = std::pow(v, 1.0 / b);
    out.x(k + i) = 1.0 - om;
    out.w(k + i) = v_max * unit.weights()(k - 1 - i) * norm / b * std::exp((a - 1.0) * std::log1p(-om));
  }
  return out;
}

// -- LimitMeasure --------------------------------------------------------------

LimitMeasure LimitMeasure::mixture(std::vector<std::pair<double, LimitMeasure>> components) {
  Mixture m;
  m.reserve(components.size());
  for (auto& [w, mu] : components) m.push_back({w, std::make_shared<const LimitMeasure>(std::move(mu))});
  return mixture(std::move(m));
}

LimitMeasure LimitMeasure::mixture(Mixture components) {
  if (components.empty()) throw ValidationError("mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight) || !c.measure)
      throw ValidationError("mixture weights must be finite and nonnegative");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > kDensityMassTolerance)
    throw ValidationError("mixture weights must sum to 1, got " + std::to_string(total));
  for (auto& c : components) c.weight /= total;
  return LimitMeasure(std::move(components));
}

std::string_view LimitMeasure::kind_name() const {
  return std::visit(overloaded{[](const AtomicMeasure&) { return "atomic"; },
                               [](const GridDensity&) { return "density"; },
                               [](const BetaSpec&) { return "beta"; }, [](const Mixture&) { return "mixture"; }},
                    repr_);
}

// -- functionals ---------------------------------------------------------------

WeightedPoints weighted_points(const GridMeasure& mu) { return {mu.positions(), mu.weights()}; }

WeightedPoints weighted_points(const LimitMeasure& mu) {
  return std::visit(overloaded{[](const AtomicMeasure& a) { return WeightedPoints{a.positions(), a.weights()}; },
                               [](const GridDensity& d) { return d.points(); },
                               [](const BetaSpec& b) { return b.points(); },
                               [](const LimitMeasure::Mixture& m) {
                                 std::vector<WeightedPoints> parts;
                                 Eigen::Index total = 0;
                                 for (const auto& c : m) {
                                   parts.push_back(weighted_points(*c.measure));
                                   parts.back().w *= c.weight;
                                   total += parts.back().x.size();
                                 }
                                 WeightedPoints out{Eigen::VectorXd(total), Eigen::VectorXd(total)};
                                 Eigen::Index at = 0;
                                 for (const auto& p : parts) {
                                   out.x.segment(at, p.x.size()) = p.x;
                                   out.w.segment(at, p.x.size()) = p.w;
                                   at += p.x.size();
                                 }
                                 return out;
                               }},
                    mu.repr());
}

double integrate(const WeightedPoints& mu, const TestFunction& f) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.x.size(); ++i) {
    if (mu.w(i) == 0.0) continue;
    const double v = f(mu.x(i));
    if (!std::isfinite(v))
      throw EvaluationError("test function '" + f.name() + "' is not finite at x=" + std::to_string(mu.x(i)));
    acc += mu.w(i) * v;
  }
  return acc;
}

double integrate(const GridMeasure& mu, const TestFunction& f) { return integrate(weighted_points(mu), f); }
double integrate(const LimitMeasure& mu, const TestFunction& f) { return integrate(weighted_points(mu), f); }

double mean(const GridMeasure& mu) { return mu.positions().dot(mu.weights()); }

double mean(const LimitMeasure& mu) {
  return std::visit(overloaded{[](const BetaSpec& b) { return b.mean(); },
                               [](const LimitMeasure::Mixture& m) {
                                 double acc = 0.0;
                                 for (const auto& c : m) acc += c.weight * mean(*c.measure);
                                 return acc;
                               },
                               [&](const auto&) {
                                 const auto p = weighted_points(mu);
                                 return p.x.dot(p.w);
                               }},
                    mu.repr());
}

double cdf(const LimitMeasure& mu, double x) {
  return std::visit(overloaded{[x](const AtomicMeasure& a) { return a.cdf(x); },
                               [x](const GridDensity& d) { return d.cdf(x); },
                               [x](const BetaSpec& b) { return b.cdf(x); },
                               [x](const LimitMeasure::Mixture& m) {
                                 double acc = 0.0;
                                 for (const auto& c : m) acc += c.weight * cdf(*c.measure, x);
                                 return std::min(acc, 1.0);
                               }},
                    mu.repr());
}

double cdf_left(const LimitMeasure& mu, double x) {
  return std::visit(overloaded{[x](const AtomicMeasure& a) { return a.cdf_left(x); },
                               [x](const GridDensity& d) { return d.cdf(x); },
                               [x](const BetaSpec& b) { return b.cdf(x); },
                               [x](const LimitMeasure::Mixture& m) {
                                 double acc = 0.0;
                                 for (const auto& c : m) acc += c.weight * cdf_left(*c.measure, x);
                                 return std::min(acc, 1.0);
                               }},
                    mu.repr());
}

double tail_mass(const GridMeasure& mu, double x) {
  check_unit_interval(x, "tail_mass argument");
  return std::clamp(1.0 - mu.cdf_left(1.0 - x), 0.0, 1.0);
}

double tail_mass(const LimitMeasure& mu, double x) {
  check_unit_interval(x, "tail_mass argument");
  return std::clamp(1.0 - cdf_left(mu, 1.0 - x), 0.0, 1.0);
}

std::vector<double> breakpoints(const LimitMeasure& mu) {
  std::vector<double> out;
  std::visit(overloaded{[&](const AtomicMeasure& a) { out.assign(a.positions().begin(), a.positions().end()); },
                        [&](const GridDensity& d) {
                          const auto& b = d.grid().breakpoints();
                          out.assign(b.begin(), b.end());
                        },
                        [&](const BetaSpec& b) {
                          const auto& bp = b.grid().breakpoints();
                          out.assign(bp.begin(), bp.end());
                        },
                        [&](const LimitMeasure::Mixture& m) {
                          for (const auto& c : m) {
                            auto sub = breakpoints(*c.measure);
                            out.insert(out.end(), sub.begin(), sub.end());
                          }
                        }},
             mu.repr());
  return out;
}

namespace {

template <typename CdfA, typename CdfB>
double cdf_l1_distance(std::vector<double> breaks, CdfA&& fa, CdfB&& fb) {
  breaks.push_back(0.0);
  breaks.push_back(1.0);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  constexpr int kSubdivisions = 4;
  const auto& rule = gauss_legendre(16);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = std::max(0.0, breaks[i]), b = std::min(1.0, breaks[i + 1]);
    if (!(b > a)) continue;
    const double h = (b - a) / kSubdivisions;
    for (int s = 0; s < kSubdivisions; ++s) {
      const double lo = a + s * h;
      const double half = 0.5 * h, mid = lo + half;
      double part = 0.0;
      for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
        const double x = mid + half * rule.nodes(j);
        part += rule.weights(j) * std::abs(fa(x) - fb(x));
      }
      acc += part * half;
    }
  }
  return acc;
}

}  // namespace

double wasserstein1(const GridMeasure& mu, const GridMeasure& nu) {
  if (mu.n() != nu.n()) return wasserstein1(LimitMeasure(to_atomic(mu)), LimitMeasure(to_atomic(nu)));
  double acc = 0.0, fa = 0.0, fb = 0.0;
  for (int k = 0; k < mu.n(); ++k) {
    fa += mu.weights()(k);
    fb += nu.weights()(k);
    acc += std::abs(fa - fb);
  }
  return acc / mu.n();
}

double wasserstein1(const LimitMeasure& mu, const LimitMeasure& nu) {
  auto breaks = breakpoints(mu);
  auto other = breakpoints(nu);
  breaks.insert(breaks.end(), other.begin(), other.end());
  return cdf_l1_distance(std::move(breaks), [&](double x) { return cdf(mu, x); }, [&](double x) { return cdf(nu, x); });
}

double wasserstein1(const GridMeasure& mu, const LimitMeasure& nu) {
  auto breaks = breakpoints(nu);
  for (int k = 0; k <= mu.n(); ++k)
    if (mu.weights()(k) > 0.0) breaks.push_back(static_cast<double>(k) / mu.n());
  return cdf_l1_distance(std::move(breaks), [&](double x) { return mu.cdf(x); }, [&](double x) { return cdf(nu, x); });
}

double wasserstein1(const LimitMeasure& mu, const GridMeasure& nu) { return wasserstein1(nu, mu); }

AtomicMeasure to_atomic(const GridMeasure& mu) {
  std::vector<double> xs, ws;
  for (int k = 0; k <= mu.n(); ++k) {
    if (mu.weights()(k) <= 0.0) continue;
    xs.push_back(static_cast<double>(k) / mu.n());
    ws.push_back(mu.weights()(k));
  }
  return AtomicMeasure(Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size())),
                       Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(ws.size())));
}

GridMeasure discretized_beta(int n, const BetaSpec& spec) {
  if (n < 2) throw ValidationError("discretized Beta needs n >= 2");
  Eigen::VectorXd logw = Eigen::VectorXd::Constant(n + 1, -INFINITY);
  for (int k = 1; k < n; ++k) {
    const double x = static_cast<double>(k) / n;
    logw(k) = (spec.shape_a() - 1.0) * std::log(x) + (spec.shape_b() - 1.0) * std::log1p(-x);
  }
  const double top = logw.maxCoeff();
  // std::exp keeps exp(-inf) = 0 exactly; the vectorized kernel does not.
  Eigen::VectorXd w = (logw.array() - top).unaryExpr([](double v) { return std::exp(v); }).matrix();
  if (!w.allFinite() || !(w.sum() > 0.0)) throw ValidationError("discretized Beta weights overflow");
  return GridMeasure(n, std::move(w));
}

GridMeasure project_to_lattice(const LimitMeasure& mu, int n) {
  if (n < 1) throw ValidationError("lattice projection needs n >= 1");
  Eigen::VectorXd w(n + 1);
  double prev = 0.0;
  for (int k = 0; k < n; ++k) {
    const double edge = cdf_left(mu, (k + 0.5) / n);
    w(k) = std::max(0.0, edge - prev);
    prev = std::max(prev, edge);
  }
  w(n) = std::max(0.0, 1.0 - prev);
  return GridMeasure(n, std::move(w));
}

std::vector<int> sample(const GridMeasure& mu, std::size_t count, Rng& rng) {
  const auto& w = mu.weights();
  std::vector<double> cum(w.size());
  std::partial_sum(w.begin(), w.end(), cum.begin());
  const double total = cum.back();
  int last_positive = 0;
  for (Eigen::Index k = 0; k < w.size(); ++k)
    if (w(k) > 0.0) last_positive = static_cast<int>(k);
  std::vector<int> out(count);
  for (auto& site : out) {
    const double u = rng.uniform() * total;
    const auto idx = static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    site = std::min(idx, last_positive);
  }
  return out;
}

}  // namespace twolevel
