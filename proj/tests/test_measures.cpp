#include <doctest.h>

#include <cmath>
#include <vector>

#include "twolevel/errors.hpp"
#include "twolevel/measure_io.hpp"
#include "twolevel/measures.hpp"

using namespace twolevel;

namespace {

LimitMeasure two_minus_two_x() {
  return LimitMeasure(GridDensity::from_profile([](double, double om) { return 2.0 * om; }, default_density_grid(),
                                                TailDescriptor::power(2.0, 1.0)));
}

std::vector<LimitMeasure> zoo() {
  std::vector<LimitMeasure> out;
  out.push_back(LimitMeasure::delta(0.3));
  out.push_back(LimitMeasure(AtomicMeasure((Eigen::VectorXd(3) << 0.0, 0.5, 1.0).finished(),
                                           (Eigen::VectorXd(3) << 0.2, 0.3, 0.5).finished())));
  out.push_back(LimitMeasure(GridDensity::uniform()));
  out.push_back(LimitMeasure(GridDensity::uniform(0.0, 0.6)));
  out.push_back(two_minus_two_x());
  out.push_back(LimitMeasure(BetaSpec(3.0, 1.0)));
  out.push_back(LimitMeasure(BetaSpec(2.5, 0.5)));
  out.push_back(LimitMeasure::mixture({{0.4, LimitMeasure::delta(0.0)}, {0.6, LimitMeasure(BetaSpec(4.0, 1.5))}}));
  return out;
}

// Brute-force discretized Beta straight from the lattice formula.
std::vector<double> beta_weights(int n, double lambda, double alpha) {
  std::vector<double> w(n + 1, 0.0);
  double z = 0.0;
  for (int k = 1; k < n; ++k) {
    const double x = double(k) / n;
    w[k] = std::pow(x, lambda - alpha - 1.0) * std::pow(1.0 - x, alpha - 1.0);
    z += w[k];
  }
  for (double& v : w) v /= z;
  return w;
}

}  // namespace

TEST_CASE("integrate examples") {
  for (const auto& mu : zoo()) CHECK(integrate(mu, TestFunction::constant(1.0)) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(integrate(LimitMeasure(BetaSpec(3.0, 1.0)), TestFunction::monomial(1)) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-10));
  GridMeasure g(2, (Eigen::VectorXd(3) << 0.5, 0.0, 0.5).finished());
  CHECK(integrate(g, TestFunction::monomial(1)) == doctest::Approx(0.5));
}

TEST_CASE("integrate rejects non-finite test functions") {
  TestFunction bad("log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; },
                   [](double x) { return -1.0 / (x * x); });
  CHECK_THROWS_AS(integrate(LimitMeasure::delta(0.0), bad), EvaluationError);
  CHECK_THROWS_AS(integrate(GridMeasure::point_mass(4, 0), bad), EvaluationError);
}

TEST_CASE("mean examples") {
  CHECK(mean(LimitMeasure::delta(0.0)) == 0.0);
  CHECK(mean(LimitMeasure(GridDensity::uniform())) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mean(LimitMeasure(BetaSpec(2.0, 1.0))) == doctest::Approx(0.5));
  CHECK(integrate(LimitMeasure(BetaSpec(2.0, 1.0)), TestFunction::monomial(1)) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("tail_mass examples") {
  CHECK(tail_mass(LimitMeasure::delta(1.0), 0.0) == 1.0);
  CHECK(tail_mass(two_minus_two_x(), 0.1) == doctest::Approx(0.01).epsilon(1e-10));
  CHECK(tail_mass(LimitMeasure(GridDensity::uniform()), 0.25) == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(tail_mass(GridMeasure::point_mass(4, 3), 0.25) == 1.0);
  CHECK(tail_mass(GridMeasure::point_mass(4, 3), 0.2) == 0.0);
  CHECK_THROWS_AS(tail_mass(LimitMeasure::delta(1.0), 1.5), ValidationError);
  CHECK_THROWS_AS(tail_mass(LimitMeasure::delta(1.0), -0.1), ValidationError);
}

TEST_CASE("tail_mass is monotone and full at x = 1") {
  for (const auto& mu : zoo()) {
    CHECK(tail_mass(mu, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    double prev = 1.0;
    for (int i = 100; i >= 0; --i) {
      const double t = tail_mass(mu, i / 100.0);
      CHECK(t <= prev + 1e-12);
      prev = t;
    }
  }
}

TEST_CASE("wasserstein1 examples") {
  const auto u = LimitMeasure(GridDensity::uniform());
  CHECK(wasserstein1(u, u) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(wasserstein1(LimitMeasure::delta(0.0), LimitMeasure::delta(1.0)) == doctest::Approx(1.0));
  // Oracle: trapezoid sum of F_delta0 - F_uniform = 1 - x.
  const int k = 10000;
  double oracle = 0.0;
  for (int i = 0; i < k; ++i) oracle += 0.5 * ((1.0 - double(i) / k) + (1.0 - double(i + 1) / k)) / k;
  CHECK(wasserstein1(LimitMeasure::delta(0.0), u) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("wasserstein1 is a metric on the zoo") {
  const auto ms = zoo();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(wasserstein1(ms[i], ms[i]) == doctest::Approx(0.0).epsilon(1e-12));
    for (std::size_t j = 0; j < ms.size(); ++j) {
      const double dij = wasserstein1(ms[i], ms[j]);
      CHECK(dij == doctest::Approx(wasserstein1(ms[j], ms[i])).epsilon(1e-12));
      for (std::size_t k = 0; k < ms.size(); ++k) CHECK(dij <= wasserstein1(ms[i], ms[k]) + wasserstein1(ms[k], ms[j]) + 1e-10);
    }
  }
}

TEST_CASE("lattice fast path agrees with the general path") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial;
    Eigen::VectorXd a(n + 1), b(n + 1);
    for (int k = 0; k <= n; ++k) {
      a(k) = rng.uniform();
      b(k) = rng.uniform();
    }
    GridMeasure ga(n, a), gb(n, b);
    const double fast = wasserstein1(ga, gb);
    const double general = wasserstein1(LimitMeasure(to_atomic(ga)), LimitMeasure(to_atomic(gb)));
    CHECK(fast == doctest::Approx(general).epsilon(1e-12));
    CHECK(wasserstein1(ga, LimitMeasure(to_atomic(gb))) == doctest::Approx(fast).epsilon(1e-12));
  }
}

TEST_CASE("discretized_beta examples") {
  const auto g2 = discretized_beta(2, BetaSpec(3.0, 1.5));
  CHECK(g2.weights()(1) == doctest::Approx(1.0));
  CHECK(g2.weights()(0) == 0.0);
  CHECK(g2.weights()(2) == 0.0);

  for (auto [lambda, alpha] : {std::pair{2.0, 1.0}, std::pair{3.0, 1.0}}) {
    const auto g = discretized_beta(4, BetaSpec(lambda, alpha));
    const auto oracle = beta_weights(4, lambda, alpha);
    for (int k = 0; k <= 4; ++k) CHECK(g.weights()(k) == doctest::Approx(oracle[k]).epsilon(1e-14));
  }
  // lambda = 2, alpha = 1 has flat interior weights; lambda = 3 gives k/6.
  CHECK(discretized_beta(4, BetaSpec(2.0, 1.0)).weights()(1) == doctest::Approx(1.0 / 3.0));
  CHECK(discretized_beta(4, BetaSpec(3.0, 1.0)).weights()(3) == doctest::Approx(3.0 / 6.0));

  const auto g10 = discretized_beta(10, BetaSpec(2.0, 1.0));
  const auto w10 = beta_weights(10, 2.0, 1.0);
  double m = 0.0;
  for (int k = 0; k <= 10; ++k) m += k / 10.0 * w10[k];
  CHECK(mean(g10) == doctest::Approx(m).epsilon(1e-14));
  CHECK(std::abs(mean(g10) - 0.5) < 0.05);
}

TEST_CASE("discretized_beta validates its lattice") {
  CHECK_THROWS_AS(discretized_beta(1, BetaSpec(2.0, 1.0)), ValidationError);
  // Extreme exponents are handled in log space.
  const auto extreme = discretized_beta(1000, BetaSpec(5000.0, 1e-3));
  CHECK(extreme.weights().allFinite());
  CHECK(extreme.weights().sum() == doctest::Approx(1.0));
  CHECK(extreme.weights()(999) > 0.99);
}

TEST_CASE("sample examples") {
  Rng rng(11);
  for (int s : sample(GridMeasure::point_mass(5, 3), 1000, rng)) CHECK(s == 3);

  const int n = 9;
  const std::size_t count = 100000;
  std::vector<int> freq(n + 1, 0);
  for (int s : sample(GridMeasure::uniform(n), count, rng)) ++freq[s];
  double chi2 = 0.0;
  const double expect = double(count) / (n + 1);
  for (int f : freq) chi2 += (f - expect) * (f - expect) / expect;
  CHECK(chi2 < 27.88);  // 0.999 quantile, 9 degrees of freedom

  GridMeasure g(1, (Eigen::VectorXd(2) << 0.25, 0.75).finished());
  Rng r1(42), r2(42);
  CHECK(sample(g, 50, r1) == sample(g, 50, r2));
}

TEST_CASE("constructors normalize") {
  GridMeasure g(3, (Eigen::VectorXd(4) << 1.0, 2.0, 3.0, 4.0).finished());
  CHECK(g.weights().sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(integrate(g, TestFunction::constant(1.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(GridMeasure(3, Eigen::VectorXd::Zero(4)), ValidationError);
  CHECK_THROWS_AS(GridMeasure(3, (Eigen::VectorXd(4) << 1.0, -1.0, 1.0, 1.0).finished()), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure((Eigen::VectorXd(2) << 0.1, 0.2).finished(), (Eigen::VectorXd(2) << 0.5, 0.4).finished()),
                  ValidationError);
  CHECK_THROWS_AS(BetaSpec(2.0, 2.0), ValidationError);
  CHECK_THROWS_AS(LimitMeasure::mixture({{0.5, LimitMeasure::delta(0.0)}}), ValidationError);

  AtomicMeasure merged((Eigen::VectorXd(2) << 0.5, 0.5 + 1e-13).finished(), (Eigen::VectorXd(2) << 0.5, 0.5).finished());
  CHECK(merged.size() == 1);
}

TEST_CASE("CDFs are monotone from 0 to 1") {
  for (const auto& mu : zoo()) {
    double prev = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      const double f = cdf(mu, i / 1000.0);
      CHECK(f >= prev - 1e-14);
      prev = f;
    }
    CHECK(cdf(mu, 1.0) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("Beta quadrature consistency") {
  for (auto [lambda, alpha] : {std::pair{3.0, 1.0}, std::pair{2.5, 0.5}, std::pair{4.0, 2.5}, std::pair{1.5, 0.7}}) {
    const BetaSpec b(lambda, alpha);
    const auto grid = default_density_grid();
    REQUIRE(grid.size() >= 512);
    const auto d = GridDensity::from_profile([b](double x, double om) { return b.pdf(x, om); }, grid);
    CHECK(std::abs(mean(LimitMeasure(d)) - b.mean()) < 1e-6);
    CHECK(std::abs(integrate(LimitMeasure(b), TestFunction::monomial(1)) - b.mean()) < 1e-6);
  }
}

TEST_CASE("JSON round trip") {
  auto same = [](const LimitMeasure& a, const LimitMeasure& b) {
    const auto pa = weighted_points(a), pb = weighted_points(b);
    REQUIRE(pa.x.size() == pb.x.size());
    for (Eigen::Index i = 0; i < pa.x.size(); ++i) {
      CHECK(std::abs(pa.x(i) - pb.x(i)) <= 1e-15 * std::max(1.0, std::abs(pa.x(i))));
      CHECK(std::abs(pa.w(i) - pb.w(i)) <= 1e-15 * std::max(1e-300, std::abs(pa.w(i))) + 1e-300);
    }
  };
  for (const auto& mu : zoo()) {
    const auto text = to_json(mu).dump();
    const auto back = limit_measure_from_json(nlohmann::json::parse(text));
    CHECK(back.kind_name() == mu.kind_name());
    same(mu, back);
  }
  GridMeasure g(4, (Eigen::VectorXd(5) << 0.1, 0.2, 0.3, 0.15, 0.25).finished());
  const auto gb = grid_measure_from_json(nlohmann::json::parse(to_json(g).dump()));
  CHECK((gb.weights() - g.weights()).cwiseAbs().maxCoeff() <= 1e-15);
  const auto t = TailDescriptor::power(1.5, 0.25);
  CHECK(tail_from_json(to_json(t)) == t);
  CHECK_THROWS_AS(limit_measure_from_json(nlohmann::json{{"kind", "bogus"}}), ValidationError);
}
