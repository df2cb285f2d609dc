#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string_view>
#include <type_traits>

namespace twolevel {

/// Gauss-Legendre rule on [-1, 1] with barycentric interpolation weights.
struct GaussLegendreRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::VectorXd barycentric;
};

/// Cached n-point rule; thread-safe.
const GaussLegendreRule& gauss_legendre(int n);

enum class QuadratureKind { GaussLegendrePanels, Trapezoid };

std::string_view to_string(QuadratureKind kind);
QuadratureKind quadrature_kind_from_string(std::string_view s);

/// A fixed set of abscissae and weights on [lo, hi].
///
/// Gauss-Legendre grids are composite: `breakpoints` delimits panels and each
/// panel carries `per_panel` open nodes, so 0 and 1 are never evaluated. The
/// trapezoid grid treats every pair of neighbouring nodes as a panel.
class QuadratureGrid {
 public:
  /// Panels geometrically refined towards both ends of [lo, hi]. The panels
  /// touching the ends have width `smallest * (hi - lo)`.
  static QuadratureGrid graded(double lo, double hi, int panels = 16, int per_panel = 64,
                               double smallest = 1e-12);
  static QuadratureGrid uniform_panels(double lo, double hi, int panels, int per_panel);
  static QuadratureGrid from_breakpoints(Eigen::VectorXd breakpoints, int per_panel);
  static QuadratureGrid trapezoid(double lo, double hi, int nodes);

  QuadratureKind kind() const { return kind_; }
  double lo() const { return breakpoints_(0); }
  double hi() const { return breakpoints_(breakpoints_.size() - 1); }
  Eigen::Index size() const { return nodes_.size(); }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  /// 1 - node, accurate even where node rounds to 1.
  const Eigen::VectorXd& complements() const { return complements_; }
  const Eigen::VectorXd& breakpoints() const { return breakpoints_; }
  int per_panel() const { return per_panel_; }
  Eigen::Index panel_count() const { return breakpoints_.size() - 1; }

  /// Index of the panel containing x (clamped to the grid).
  Eigen::Index panel_of(double x) const;

  /// Same panel layout with a different span; used when a support moves.
  QuadratureGrid remapped(double lo, double hi) const;

  /// fn(x) or fn(x, 1 - x).
  template <typename F>
  double integrate(F&& fn) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nodes_.size(); ++i) acc += weights_(i) * call(fn, nodes_(i), complements_(i));
    return acc;
  }

  /// Lower-order estimate on the same panels (half the nodes per panel, or
  /// every other trapezoid node). Used to detect under-resolved integrands.
  template <typename F>
  double integrate_coarse(F&& fn) const {
    if (kind_ == QuadratureKind::Trapezoid) {
      // Every other node; a trailing odd panel keeps its fine weight.
      double acc = 0.0;
      const Eigen::Index last = nodes_.size() - 1;
      auto at = [&](Eigen::Index i) { return call(fn, nodes_(i), complements_(i)); };
      Eigen::Index i = 0;
      for (; i + 2 <= last; i += 2) acc += 0.5 * (nodes_(i + 2) - nodes_(i)) * (at(i) + at(i + 2));
      if (i < last) acc += 0.5 * (nodes_(last) - nodes_(i)) * (at(i) + at(last));
      return acc;
    }
    const auto& rule = coarse_rule();
    double acc = 0.0;
    for (Eigen::Index p = 0; p < panel_count(); ++p) {
      const double a = breakpoints_(p), b = breakpoints_(p + 1);
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b), tail = (1.0 - hi()) + (hi() - b);
      for (Eigen::Index j = 0; j < rule.nodes.size(); ++j)
        acc += half * rule.weights(j) * call(fn, mid + half * rule.nodes(j), tail + half * (1.0 - rule.nodes(j)));
    }
    return acc;
  }

  /// Interpolates nodal values at x using the panel containing x.
  double interpolate(const Eigen::VectorXd& values, double x) const;

 private:
  template <typename F>
  static double call(F& fn, double x, double om) {
    if constexpr (std::is_invocable_v<F&, double, double>) {
      return fn(x, om);
    } else {
      return fn(x);
    }
  }
  const GaussLegendreRule& coarse_rule() const;

  QuadratureGrid(QuadratureKind kind, Eigen::VectorXd breakpoints, int per_panel);

  QuadratureKind kind_;
  Eigen::VectorXd breakpoints_;
  int per_panel_;
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd complements_;
};

/// n-point Gauss-Legendre integral of fn over [a, b].
template <typename F>
double gauss_integrate(F&& fn, double a, double b, int n = 32) {
  const auto& rule = gauss_legendre(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) acc += rule.weights(i) * fn(mid + half * rule.nodes(i));
  return acc * half;
}

}  // namespace twolevel
