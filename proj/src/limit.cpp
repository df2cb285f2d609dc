#include "twolevel/limit.hpp"

#include "twolevel/special.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <variant>

namespace twolevel {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kResolutionTolerance = 1e-6;

void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be positive and finite");
}

void check_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("time must be finite and nonnegative");
}

// Transported measure with its log-mass relative to a factor shared by all
// components of a mixture.
struct Transported {
  LimitMeasure measure;
  double log_mass;
};

Transported transport(const LimitMeasure& mu, double lambda, double t);

Transported transport_atoms(const AtomicMeasure& a, double lambda, double t) {
  const FlowMap flow(t);
  const double decay = std::exp(-t);
  const Eigen::Index n = a.size();
  Eigen::VectorXd x(n), logw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = a.positions()(i);
    const double d = (1.0 - p) + p * decay;
    x(i) = flow.forward(p);
    logw(i) = a.weights()(i) > 0.0 ? std::log(a.weights()(i)) - lambda * t - lambda * std::log(d) : -INFINITY;
  }
  const double top = logw.maxCoeff();
  Eigen::VectorXd w = (logw.array() - top).unaryExpr([](double v) { return std::exp(v); }).matrix();
  const double total = w.sum();
  w /= total;
  return {LimitMeasure(AtomicMeasure(x, w)), top + std::log(total)};
}

Transported transport_density(const GridDensity& d, double lambda, double t) {
  const FlowMap flow(t);
  const double decay = std::exp(-t);
  const double growth = -std::expm1(-t);
  auto source = std::make_shared<const GridDensity>(d);
  DensityProfile profile = [source, decay, growth, lambda](double x, double om) {
    const double e = x < 0.5 ? decay + x * growth : 1.0 - om * growth;
    const double p = x / e;
    const double q = decay * om / e;
    const double v = source->density_at(p, q);
    if (v == 0.0) return 0.0;
    return v * std::exp((lambda - 2.0) * std::log(e));
  };
  const double lo = flow.forward(d.lo());
  const double hi = d.hi() >= 1.0 ? 1.0 : flow.forward(d.hi());
  QuadratureGrid grid = d.grid().remapped(lo, hi);
  auto eval = [&profile](double x, double om) { return profile(x, om); };
  const double fine = grid.integrate(eval);
  const double coarse = grid.integrate_coarse(eval);
  if (!(fine > 0.0) || !std::isfinite(fine)) throw ResolutionError("transported density has no resolvable mass");
  if (std::abs(fine - coarse) > kResolutionTolerance * fine)
    throw ResolutionError("density grid under-resolves the transported profile at t=" + std::to_string(t) +
                          " (relative discrepancy " + std::to_string(std::abs(fine - coarse) / fine) + ")");
  std::optional<TailDescriptor> tail;
  if (d.tail()) {
    tail = *d.tail();
    if (tail->kind == TailDescriptor::Kind::PowerTail)
      tail->constant = tail->constant * std::exp((1.0 - tail->alpha) * t) / fine;
  }
  auto out = GridDensity::from_profile(std::move(profile), std::move(grid), tail, true);
  return {LimitMeasure(std::move(out)), std::log(fine) - t};
}

Transported transport_beta(const BetaSpec& b, double lambda, double t) {
  if (std::abs(b.lambda() - lambda) <= 1e-12 * lambda) return {LimitMeasure(b), -b.alpha() * t};
  const double c = 1.0 / (b.alpha() * std::exp(log_beta(b.shape_a(), b.shape_b())));
  auto d = GridDensity::from_profile([b](double x, double om) { return b.pdf(x, om); }, default_density_grid(),
                                     TailDescriptor::power(b.alpha(), c), true);
  return transport_density(d, lambda, t);
}

Transported transport_mixture(const LimitMeasure::Mixture& m, double lambda, double t) {
  std::vector<Transported> parts;
  std::vector<double> logw;
  for (const auto& c : m) {
    if (c.weight <= 0.0) continue;
    parts.push_back(transport(*c.measure, lambda, t));
    logw.push_back(std::log(c.weight) + parts.back().log_mass);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& l : logw) total += (l = std::exp(l - top));
  if (parts.size() == 1) return {parts.front().measure, top + std::log(total)};
  LimitMeasure::Mixture out;
  for (std::size_t i = 0; i < parts.size(); ++i)
    out.push_back({logw[i] / total, std::make_shared<const LimitMeasure>(std::move(parts[i].measure))});
  return {LimitMeasure::mixture(std::move(out)), top + std::log(total)};
}

Transported transport(const LimitMeasure& mu, double lambda, double t) {
  return std::visit(overloaded{[&](const AtomicMeasure& a) { return transport_atoms(a, lambda, t); },
                               [&](const GridDensity& d) { return transport_density(d, lambda, t); },
                               [&](const BetaSpec& b) { return transport_beta(b, lambda, t); },
                               [&](const LimitMeasure::Mixture& m) { return transport_mixture(m, lambda, t); }},
                    mu.repr());
}

}  // namespace

// -- FlowMap -------------------------------------------------------------------

FlowMap::FlowMap(double t) : t_(t), decay_(std::exp(-t)) { check_time(t); }

double FlowMap::forward(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("flow argument must lie in [0,1]");
  return p * decay_ / ((1.0 - p) + p * decay_);
}

double FlowMap::inverse(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("flow argument must lie in [0,1]");
  return x / (decay_ + x * -std::expm1(-t_));
}

double FlowMap::forward_complement(double p, double one_minus_p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("flow argument must lie in [0,1]");
  return one_minus_p / (one_minus_p + p * decay_);
}

// -- solution operator ---------------------------------------------------------

SolutionState evolve(const LimitMeasure& mu0, double lambda, double t) {
  check_lambda(lambda);
  check_time(t);
  SolutionState out{t == 0.0 ? mu0 : transport(mu0, lambda, t).measure, t, {}};
  h_of_t(out);
  return out;
}

SolutionState evolve(const SolutionState& state, double lambda, double dt) {
  check_lambda(lambda);
  check_time(dt);
  SolutionState out{dt == 0.0 ? state.measure : transport(state.measure, lambda, dt).measure, state.t + dt,
                    state.h_history};
  h_of_t(out);
  return out;
}

std::vector<SolutionState> trajectory(const LimitMeasure& mu0, double lambda, const std::vector<double>& times) {
  check_lambda(lambda);
  std::vector<SolutionState> out;
  out.reserve(times.size());
  std::vector<std::pair<double, double>> history;
  for (std::size_t i = 0; i < times.size(); ++i) {
    check_time(times[i]);
    if (i > 0 && times[i] < times[i - 1]) throw ValidationError("trajectory times must be nondecreasing");
    // Each state is transported from mu0 directly so errors do not compound.
    SolutionState s = evolve(mu0, lambda, times[i]);
    history.push_back(s.h_history.back());
    s.h_history = history;
    out.push_back(std::move(s));
  }
  return out;
}

AtomicMeasure evolve_atoms_ode(const AtomicMeasure& mu0, double lambda, double t, double dt) {
  check_lambda(lambda);
  check_time(t);
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("ODE step must be positive");
  const Eigen::Index n = mu0.size();
  Eigen::VectorXd y(2 * n);
  y << mu0.positions(), mu0.weights();
  auto rhs = [n, lambda](const Eigen::VectorXd& s) {
    Eigen::VectorXd out(2 * n);
    const auto x = s.head(n).array();
    const auto a = s.tail(n).array();
    const double h = (x * a).sum();
    out.head(n) = -x * (1.0 - x);
    out.tail(n) = lambda * a * (x - h);
    return out;
  };
  const long steps = std::max<long>(1, static_cast<long>(std::ceil(t / dt)));
  const double h = t / static_cast<double>(steps);
  for (long i = 0; i < steps && t > 0.0; ++i) {
    const Eigen::VectorXd k1 = rhs(y);
    const Eigen::VectorXd k2 = rhs(y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = rhs(y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = rhs(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  Eigen::VectorXd x = y.head(n).cwiseMax(0.0).cwiseMin(1.0);
  Eigen::VectorXd w = y.tail(n);
  if ((w.array() < -kResolutionTolerance).any() || std::abs(w.sum() - 1.0) > kResolutionTolerance)
    throw ResolutionError("ODE step too large: weights left the simplex");
  w = w.cwiseMax(0.0);
  w /= w.sum();
  return AtomicMeasure(x, w);
}

double h_of_t(SolutionState& state) {
  const double h = mean(state.measure);
  if (state.h_history.empty() || state.h_history.back().first != state.t) state.h_history.emplace_back(state.t, h);
  return h;
}

double weak_rhs(const LimitMeasure& mu, const TestFunction& f, double lambda) {
  const auto pts = weighted_points(mu);
  double flux = 0.0, xf = 0.0, ff = 0.0, xx = 0.0;
  for (Eigen::Index i = 0; i < pts.x.size(); ++i) {
    const double w = pts.w(i);
    if (w == 0.0) continue;
    const double x = pts.x(i);
    const double v = f(x), dv = f.d1(x);
    if (!std::isfinite(v) || !std::isfinite(dv))
      throw EvaluationError("test function '" + f.name() + "' is not finite at x=" + std::to_string(x));
    flux += w * x * (1.0 - x) * dv;
    xf += w * x * v;
    ff += w * v;
    xx += w * x;
  }
  return -flux + lambda * (xf - ff * xx);
}

std::vector<ResidualSample> weak_residual(const std::vector<SolutionState>& states, const TestFunction& f,
                                          double lambda) {
  if (states.size() < 3) throw ValidationError("weak residual needs at least three samples");
  std::vector<double> values;
  values.reserve(states.size());
  for (const auto& s : states) values.push_back(integrate(s.measure, f));
  std::vector<ResidualSample> out;
  for (std::size_t i = 1; i + 1 < states.size(); ++i) {
    const double span = states[i + 1].t - states[i - 1].t;
    if (!(span > 0.0)) throw ValidationError("weak residual needs strictly increasing times");
    const double lhs = (values[i + 1] - values[i - 1]) / span;
    out.push_back({states[i].t, lhs - weak_rhs(states[i].measure, f, lambda)});
  }
  return out;
}

TestFunction flux_semigroup(const TestFunction& f, double t, double s) {
  check_time(t);
  if (!std::isfinite(s)) throw ValidationError("flux speed must be finite");
  const double e = std::exp(-s * t);
  // y = x e / D, D = 1 - x + x e; y' = e / D^2, y'' = -2 e (e - 1) / D^3.
  auto map = [e](double x) { return x * e / (1.0 - x + x * e); };
  auto d1 = [e](double x) {
    const double d = 1.0 - x + x * e;
    return e / (d * d);
  };
  auto d2 = [e](double x) {
    const double d = 1.0 - x + x * e;
    return -2.0 * e * (e - 1.0) / (d * d * d);
  };
  return TestFunction(
      "P(" + f.name() + ")", [f, map](double x) { return f(map(x)); },
      [f, map, d1](double x) { return f.d1(map(x)) * d1(x); },
      [f, map, d1, d2](double x) {
        const double g1 = d1(x);
        return f.d2(map(x)) * g1 * g1 + f.d1(map(x)) * d2(x);
      });
}

// -- long-time behaviour -------------------------------------------------------

LimitMeasure LongTimeLimit::measure() const {
  switch (kind) {
    case Kind::Delta0:
      return LimitMeasure::delta(0.0);
    case Kind::Delta1:
      return LimitMeasure::delta(1.0);
    case Kind::BetaLimit:
      break;
  }
  return LimitMeasure(*beta);
}

std::string LongTimeLimit::verdict() const {
  switch (kind) {
    case Kind::Delta0:
      return "delta0";
    case Kind::Delta1:
      return "delta1";
    case Kind::BetaLimit:
      break;
  }
  std::ostringstream out;
  out.precision(12);
  out << "beta(" << beta->shape_a() << "," << beta->shape_b() << ")";
  return out.str();
}

LongTimeLimit classify_longtime(const TailDescriptor& tail, double lambda) {
  check_lambda(lambda);
  switch (tail.kind) {
    case TailDescriptor::Kind::MassAtOne:
      return {LongTimeLimit::Kind::Delta1, std::nullopt};
    case TailDescriptor::Kind::VanishingNearOne:
      return {LongTimeLimit::Kind::Delta0, std::nullopt};
    case TailDescriptor::Kind::PowerTail:
      break;
  }
  if (!(tail.alpha > 0.0) || !(tail.constant > 0.0)) throw ValidationError("power tail needs alpha > 0 and C > 0");
  if (tail.alpha < lambda) return {LongTimeLimit::Kind::BetaLimit, BetaSpec(lambda, tail.alpha)};
  return {LongTimeLimit::Kind::Delta0, std::nullopt};
}

TailDescriptor tail_of(const LimitMeasure& mu0) {
  return std::visit(
      overloaded{[](const AtomicMeasure& a) {
                   for (Eigen::Index i = 0; i < a.size(); ++i)
                     if (a.positions()(i) >= 1.0 && a.weights()(i) > 0.0) return TailDescriptor::mass_at_one();
                   return TailDescriptor::vanishing();
                 },
                 [](const GridDensity& d) {
                   if (d.hi() < 1.0) return TailDescriptor::vanishing();
                   if (!d.tail()) throw UnclassifiableError("density reaching 1 carries no tail metadata");
                   return *d.tail();
                 },
                 [](const BetaSpec& b) {
                   return TailDescriptor::power(b.alpha(),
                                                1.0 / (b.alpha() * std::exp(log_beta(b.shape_a(), b.shape_b()))));
                 },
                 [](const LimitMeasure::Mixture& m) {
                   std::optional<TailDescriptor> best;
                   for (const auto& c : m) {
                     if (c.weight <= 0.0) continue;
                     const TailDescriptor t = tail_of(*c.measure);
                     if (t.kind == TailDescriptor::Kind::MassAtOne) return t;
                     if (t.kind != TailDescriptor::Kind::PowerTail) continue;
                     if (!best || t.alpha < best->alpha) {
                       best = TailDescriptor::power(t.alpha, c.weight * t.constant);
                     } else if (t.alpha == best->alpha) {
                       best->constant += c.weight * t.constant;
                     }
                   }
                   return best ? *best : TailDescriptor::vanishing();
                 }},
      mu0.repr());
}

// -- closed-form examples ------------------------------------------------------

namespace {

void check_example(int id, double lambda, const ExampleParams& p) {
  check_lambda(lambda);
  if (id < 1 || id > 5) throw ValidationError("example id must be 1..5");
  if (id == 1 && !(p.x0 >= 0.0 && p.x0 <= 1.0)) throw ValidationError("example 1 needs x0 in [0,1]");
  if (id == 4 && !(p.c > 0.0 && p.c < 1.0)) throw ValidationError("example 4 needs c in (0,1)");
  if (id == 5) {
    if (!(p.a > 0.0 && p.a < 1.0)) throw ValidationError("example 5 needs a in (0,1)");
    if (!(p.alpha > 0.0 && p.alpha < lambda)) throw ValidationError("example 5 needs 0 < alpha < lambda");
  }
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

LimitMeasure example_initial(int id, double lambda, const ExampleParams& p) {
  check_example(id, lambda, p);
  switch (id) {
    case 1:
      return LimitMeasure::delta(p.x0);
    case 2:
      return LimitMeasure(GridDensity::uniform());
    case 3:
      return LimitMeasure(GridDensity::from_profile([](double, double om) { return 2.0 * om; },
                                                    default_density_grid(), TailDescriptor::power(2.0, 1.0)));
    case 4:
      return LimitMeasure(GridDensity::uniform(0.0, p.c));
    default:
      break;
  }
  return LimitMeasure::mixture({{p.a, LimitMeasure::delta(0.0)}, {1.0 - p.a, LimitMeasure(BetaSpec(lambda, p.alpha))}});
}

LimitMeasure reference_solution(int id, double lambda, const ExampleParams& p, double t) {
  check_example(id, lambda, p);
  check_time(t);
  const double eps = std::exp(-t);
  const double c = -std::expm1(-t);
  auto e_of = [eps, c](double x, double om) { return x < 0.5 ? eps + x * c : 1.0 - om * c; };

  if (id == 1) return LimitMeasure::delta(FlowMap(t).forward(p.x0));
  if (id == 5) {
    const double grow = std::exp((lambda - p.alpha) * t);
    const double at = p.a / (p.a + (1.0 - p.a) * grow);
    return LimitMeasure::mixture({{at, LimitMeasure::delta(0.0)}, {1.0 - at, LimitMeasure(BetaSpec(lambda, p.alpha))}});
  }
  if (t == 0.0) return example_initial(id, lambda, p);

  if (id == 2) {
    const double k = near(lambda, 1.0) ? c / t : (lambda - 1.0) * c / -std::expm1(-(lambda - 1.0) * t);
    return LimitMeasure(GridDensity::from_profile(
        [k, lambda, e_of](double x, double om) { return k * std::pow(e_of(x, om), lambda - 2.0); },
        default_density_grid(), std::nullopt, false));
  }
  if (id == 3) {
    double integral;
    if (near(lambda, 2.0)) {
      integral = 2.0 * (t - c) / (c * c);
    } else if (near(lambda, 1.0)) {
      integral = 2.0 * (std::expm1(t) - t) / (c * c);
    } else {
      const double k = (lambda - 2.0) * c / 2.0 /
                       (1.0 / ((lambda - 1.0) * c) - std::pow(eps, lambda - 1.0) / ((lambda - 1.0) * c) -
                        std::pow(eps, lambda - 2.0));
      integral = 1.0 / k;
    }
    const double k = 1.0 / integral;
    return LimitMeasure(GridDensity::from_profile(
        [k, lambda, e_of](double x, double om) { return 2.0 * k * om * std::pow(e_of(x, om), lambda - 3.0); },
        default_density_grid(), std::nullopt, false));
  }
  const double dc = 1.0 - p.c + p.c * eps;
  const double b = FlowMap(t).forward(p.c);
  const double norm = near(lambda, 1.0) ? -std::log(dc) / c
                                        : std::pow(eps, lambda - 1.0) * std::expm1(-(lambda - 1.0) * std::log(dc)) /
                                              ((lambda - 1.0) * c);
  return LimitMeasure(GridDensity::from_profile(
      [norm, lambda, e_of](double x, double om) { return std::pow(e_of(x, om), lambda - 2.0) / norm; },
      default_density_grid(0.0, b), std::nullopt, false));
}

}  // namespace twolevel
