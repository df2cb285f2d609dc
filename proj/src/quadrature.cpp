#include "twolevel/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "twolevel/errors.hpp"

namespace twolevel {
namespace {

GaussLegendreRule build_rule(int n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  rule.barycentric.resize(n);
  // Newton iteration on P_n from the Chebyshev-like initial guess.
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged node.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    // Ascending order.
    rule.nodes(n - 1 - i) = x;
    rule.weights(n - 1 - i) = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  for (int j = 0; j < n; ++j) {
    const double x = rule.nodes(j);
    rule.barycentric(j) = ((j % 2 == 0) ? 1.0 : -1.0) * std::sqrt((1.0 - x * x) * rule.weights(j));
  }
  return rule;
}

}  // namespace

const GaussLegendreRule& gauss_legendre(int n) {
  if (n < 1) throw ValidationError("Gauss-Legendre rule needs at least one node");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussLegendreRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussLegendreRule>(build_rule(n));
  return *slot;
}

std::string_view to_string(QuadratureKind kind) {
  return kind == QuadratureKind::Trapezoid ? "trapezoid" : "gauss_legendre_panels";
}

QuadratureKind quadrature_kind_from_string(std::string_view s) {
  if (s == "trapezoid") return QuadratureKind::Trapezoid;
  if (s == "gauss_legendre_panels") return QuadratureKind::GaussLegendrePanels;
  throw ValidationError("unknown quadrature rule '" + std::string(s) + "'");
}

QuadratureGrid::QuadratureGrid(QuadratureKind kind, Eigen::VectorXd breakpoints, int per_panel)
    : kind_(kind), breakpoints_(std::move(breakpoints)), per_panel_(per_panel) {
  const Eigen::Index panels = breakpoints_.size() - 1;
  if (panels < 1) throw ValidationError("quadrature grid needs at least one panel");
  for (Eigen::Index p = 0; p < panels; ++p)
    if (!(breakpoints_(p + 1) > breakpoints_(p)))
      throw ValidationError("quadrature breakpoints must be strictly increasing");

  if (kind_ == QuadratureKind::Trapezoid) {
    nodes_ = breakpoints_;
    complements_ = (1.0 - nodes_.array()).matrix();
    weights_ = Eigen::VectorXd::Zero(nodes_.size());
    for (Eigen::Index p = 0; p < panels; ++p) {
      const double h = breakpoints_(p + 1) - breakpoints_(p);
      weights_(p) += 0.5 * h;
      weights_(p + 1) += 0.5 * h;
    }
    return;
  }

  const auto& rule = gauss_legendre(per_panel_);
  nodes_.resize(panels * per_panel_);
  weights_.resize(panels * per_panel_);
  complements_.resize(panels * per_panel_);
  for (Eigen::Index p = 0; p < panels; ++p) {
    const double a = breakpoints_(p), b = breakpoints_(p + 1);
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    nodes_.segment(p * per_panel_, per_panel_) = (mid + half * rule.nodes.array()).matrix();
    complements_.segment(p * per_panel_, per_panel_) = (((1.0 - hi()) + (hi() - b)) + half * (1.0 - rule.nodes.array())).matrix();
    weights_.segment(p * per_panel_, per_panel_) = half * rule.weights;
  }
}

QuadratureGrid QuadratureGrid::graded(double lo, double hi, int panels, int per_panel, double smallest) {
  if (!(hi > lo)) throw ValidationError("graded grid needs hi > lo");
  if (panels < 2 || panels % 2 != 0) throw ValidationError("graded grid needs an even panel count >= 2");
  if (!(smallest > 0.0 && smallest < 0.5)) throw ValidationError("graded grid smallest panel must lie in (0, 0.5)");
  const int half_panels = panels / 2;
  Eigen::VectorXd rel(panels + 1);
  rel(0) = 0.0;
  rel(half_panels) = 0.5;
  rel(panels) = 1.0;
  if (half_panels > 1) {
    const double q = std::pow(2.0 * smallest, 1.0 / (half_panels - 1));
    for (int k = 1; k < half_panels; ++k) {
      const double d = 0.5 * std::pow(q, half_panels - k);
      rel(k) = d;
      rel(panels - k) = 1.0 - d;
    }
  }
  Eigen::VectorXd breaks = (lo + (hi - lo) * rel.array()).matrix();
  breaks(0) = lo;
  breaks(panels) = hi;
  return QuadratureGrid(QuadratureKind::GaussLegendrePanels, std::move(breaks), per_panel);
}

QuadratureGrid QuadratureGrid::uniform_panels(double lo, double hi, int panels, int per_panel) {
  if (!(hi > lo) || panels < 1) throw ValidationError("uniform panel grid needs hi > lo and panels >= 1");
  Eigen::VectorXd breaks = Eigen::VectorXd::LinSpaced(panels + 1, lo, hi);
  return QuadratureGrid(QuadratureKind::GaussLegendrePanels, std::move(breaks), per_panel);
}

QuadratureGrid QuadratureGrid::from_breakpoints(Eigen::VectorXd breakpoints, int per_panel) {
  return QuadratureGrid(QuadratureKind::GaussLegendrePanels, std::move(breakpoints), per_panel);
}

QuadratureGrid QuadratureGrid::trapezoid(double lo, double hi, int nodes) {
  if (!(hi > lo) || nodes < 2) throw ValidationError("trapezoid grid needs hi > lo and >= 2 nodes");
  return QuadratureGrid(QuadratureKind::Trapezoid, Eigen::VectorXd::LinSpaced(nodes, lo, hi), 2);
}

Eigen::Index QuadratureGrid::panel_of(double x) const {
  const auto* begin = breakpoints_.data();
  const auto* end = begin + breakpoints_.size();
  const auto* it = std::upper_bound(begin, end, x);
  Eigen::Index p = (it - begin) - 1;
  return std::clamp<Eigen::Index>(p, 0, panel_count() - 1);
}

QuadratureGrid QuadratureGrid::remapped(double lo, double hi) const {
  if (!(hi > lo)) throw ValidationError("remapped grid needs hi > lo");
  const double a = this->lo(), b = this->hi();
  Eigen::VectorXd breaks = (lo + (hi - lo) * ((breakpoints_.array() - a) / (b - a))).matrix();
  breaks(0) = lo;
  breaks(breaks.size() - 1) = hi;
  return QuadratureGrid(kind_, std::move(breaks), per_panel_);
}

const GaussLegendreRule& QuadratureGrid::coarse_rule() const { return gauss_legendre(std::max(1, per_panel_ / 2)); }

double QuadratureGrid::interpolate(const Eigen::VectorXd& values, double x) const {
  const Eigen::Index p = panel_of(x);
  if (kind_ == QuadratureKind::Trapezoid) {
    const double a = nodes_(p), b = nodes_(p + 1);
    const double u = std::clamp((x - a) / (b - a), 0.0, 1.0);
    return (1.0 - u) * values(p) + u * values(p + 1);
  }
  const auto& rule = gauss_legendre(per_panel_);
  const double a = breakpoints_(p), b = breakpoints_(p + 1);
  const double z = std::clamp((2.0 * x - a - b) / (b - a), -1.0, 1.0);
  double num = 0.0, den = 0.0;
  for (int j = 0; j < per_panel_; ++j) {
    const double diff = z - rule.nodes(j);
    if (diff == 0.0) return values(p * per_panel_ + j);
    const double c = rule.barycentric(j) / diff;
    num += c * values(p * per_panel_ + j);
    den += c;
  }
  return num / den;
}

}  // namespace twolevel
