#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <vector>

#include "twolevel/errors.hpp"
#include "twolevel/limit.hpp"
#include "twolevel/moran.hpp"
#include "twolevel/replicas.hpp"

using namespace twolevel;

namespace {

// Every transition of the generator with its rate, enumerated literally:
// individual births/deaths per group and an overwrite for each ordered pair.
struct Transition {
  std::vector<int> to;
  double rate;
};

std::vector<Transition> enumerate(const std::vector<int>& counts, const ChainParams& p) {
  std::vector<Transition> out;
  const int m = p.m, n = p.n;
  for (int i = 0; i < m; ++i) {
    const int k = counts[i];
    const double base = double(k) * (n - k) / n;
    if (base > 0) {
      auto up = counts;
      ++up[i];
      out.push_back({up, base});
      auto down = counts;
      --down[i];
      out.push_back({down, (1.0 + p.s) * base});
    }
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      auto copy = counts;
      copy[i] = counts[j];
      out.push_back({copy, p.w / m * (1.0 + p.r * double(counts[j]) / n)});
    }
  return out;
}

double psi(const std::vector<int>& counts, const ChainParams& p, const TestFunction& f) {
  double acc = 0.0;
  for (int k : counts) acc += f(double(k) / p.n);
  return acc / p.m;
}

double brute_drift(const std::vector<int>& c, const ChainParams& p, const TestFunction& f) {
  double acc = 0.0;
  const double base = psi(c, p, f);
  for (const auto& t : enumerate(c, p)) acc += t.rate * (psi(t.to, p, f) - base);
  return acc;
}

// L(psi^2) - 2 psi L(psi), written as the sum of squared jumps.
double brute_qv(const std::vector<int>& c, const ChainParams& p, const TestFunction& f) {
  double acc = 0.0;
  const double base = psi(c, p, f);
  for (const auto& t : enumerate(c, p)) {
    const double d = psi(t.to, p, f) - base;
    acc += t.rate * d * d;
  }
  return acc;
}

template <typename Fn>
void for_each_state(int m, int n, Fn&& fn) {
  std::vector<int> c(m, 0);
  while (true) {
    fn(c);
    int i = 0;
    while (i < m && c[i] == n) c[i++] = 0;
    if (i == m) return;
    ++c[i];
  }
}

bool close(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

struct Stats {
  double mean, se, var;
};

Stats stats(const std::vector<double>& v) {
  const double n = v.size();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double var = ss / (n - 1);
  return {mean, std::sqrt(var / n), var};
}

}  // namespace

TEST_CASE("event_rates examples") {
  ChainParams p{3, 4, 0.5, 1.0, 1.0, 1.0};
  for (const auto& counts : {std::vector<int>{0, 0, 0}, std::vector<int>{4, 4, 4}, std::vector<int>{0, 4, 0}}) {
    const auto t = event_rates({counts, 0.0}, p);
    CHECK(t.up_total == 0.0);
    CHECK(t.down_total == 0.0);
  }
  const auto one = event_rates({{1}, 0.0}, ChainParams{1, 2, 0.0, 0.0, 1.0, 1.0});
  CHECK(one.up[0] == doctest::Approx(0.5));
  CHECK(one.down[0] == doctest::Approx(0.5));

  const ChainParams q{2, 2, 0.0, 1.0, 1.0, 1.0};
  const ChainState st{{0, 2}, 0.0};
  double pairs = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) pairs += group_copy_rate(st, q, i, j);
  CHECK(pairs == doctest::Approx(3.0));
  CHECK(event_rates(st, q).group_total == doctest::Approx(3.0));
  CHECK_THROWS_AS(event_rates({{0, 3}, 0.0}, q), ValidationError);
  CHECK_THROWS_AS(event_rates({{0}, 0.0}, q), ValidationError);
}

TEST_CASE("chain parameters are validated") {
  CHECK_THROWS_AS((ChainParams{0, 4}).validate(), ValidationError);
  CHECK_THROWS_AS((ChainParams{2, 4, -0.1}).validate(), ValidationError);
  CHECK_THROWS_AS((ChainParams{2, 4, 0.1, 0.0, 0.0}).validate(), ValidationError);
  CHECK_THROWS_AS((ChainParams{2, 4, 0.1, 0.0, 1.0, 0.0}).validate(), ValidationError);
  const ChainParams p{3, 5, 0.25, 1.5, 2.0, 4.0};
  CHECK(chain_params_from_json(to_json(p)) == p);
}

TEST_CASE("gillespie_step examples") {
  Rng rng(1);
  const ChainParams p{3, 4, 0.1, 1.0, 1.0, 1.0};
  for (int k : {0, 4}) {
    const auto res = gillespie_step({{k, k, k}, 0.0}, p, rng);
    CHECK(res.absorbed);
    CHECK(!res.event);
    CHECK(res.state.counts == std::vector<int>{k, k, k});
  }
  CHECK(!gillespie_step({{0, 4, 4}, 0.0}, p, rng).absorbed);

  // m=1, n=2 from k=1: the first individual event lands on 0 or 2 evenly.
  const ChainParams q{1, 2, 0.0, 0.0, 1.0, 1.0};
  const int reps = 100000;
  int ups = 0;
  for (int i = 0; i < reps; ++i) {
    ChainState st{{1}, 0.0};
    while (st.counts[0] == 1) st = gillespie_step(st, q, rng).state;
    ups += st.counts[0] == 2;
  }
  CHECK(std::abs(ups - reps / 2.0) < 3.0 * std::sqrt(reps * 0.25));

  auto run = [&](std::uint64_t seed) {
    EventLog log;
    Rng r(seed);
    SimulateOptions opt;
    opt.log = &log;
    simulate(GridMeasure::uniform(6), ChainParams{40, 6, 0.2, 1.0, 1.0, 1.0}, 3.0, {}, {}, r, opt);
    return log;
  };
  const auto a = run(42), b = run(42);
  CHECK(a.size() > 10);
  CHECK(a == b);
  CHECK(!(a == run(43)));
}

TEST_CASE("engine reproduces the generator's jump law") {
  const ChainParams p{3, 3, 0.5, 2.0, 1.5, 2.0};
  const std::vector<int> start{1, 2, 3};
  std::map<std::vector<int>, double> expected;
  double total = 0.0;
  for (const auto& t : enumerate(start, p)) {
    expected[t.to] += t.rate;
    total += t.rate;
  }
  CHECK(event_rates({start, 0.0}, p).total == doctest::Approx(total));
  Rng rng(9);
  const int draws = 200000;
  std::map<std::vector<int>, int> seen;
  double wait = 0.0;
  for (int i = 0; i < draws; ++i) {
    MoranChain chain(p, {start, 0.0});
    chain.step(rng);
    wait += chain.time();
    ++seen[chain.counts()];
  }
  double chi2 = 0.0;
  for (const auto& [state, rate] : expected) {
    const double e = draws * rate / total;
    const double o = seen[state];
    chi2 += (o - e) * (o - e) / e;
  }
  CHECK(seen.size() == expected.size());
  // Upper 0.999 quantile of chi-square with up to 20 degrees of freedom.
  CHECK(chi2 < 45.3);
  const double mean_wait = 1.0 / (total * p.time_factor);
  CHECK(std::abs(wait / draws - mean_wait) < 4.0 * mean_wait / std::sqrt(double(draws)));
}

TEST_CASE("empirical_measure examples") {
  const auto mu = empirical_measure({{0, 2, 3}, 0.0}, ChainParams{3, 3});
  CHECK(mu.weights()(0) == doctest::Approx(1.0 / 3.0));
  CHECK(mu.weights()(1) == 0.0);
  CHECK(mu.weights()(2) == doctest::Approx(1.0 / 3.0));
  CHECK(mu.weights()(3) == doctest::Approx(1.0 / 3.0));
  const auto pm = empirical_measure({{2, 2, 2, 2}, 0.0}, ChainParams{4, 5});
  CHECK(pm.weights()(2) == 1.0);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    ChainParams p{1 + int(rng.index(30)), 1 + int(rng.index(30))};
    std::vector<int> c(p.m);
    for (int& k : c) k = int(rng.index(p.n + 1));
    CHECK(empirical_measure({c, 0.0}, p).weights().sum() == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("drift and QV examples") {
  const ChainParams p{4, 5, 0.3, 1.2, 0.8, 1.0};
  const auto one = TestFunction::constant(1.0);
  CHECK(drift_functional({{1, 2, 3, 4}, 0.0}, p, one) == 0.0);
  CHECK(qv_functional({{1, 2, 3, 4}, 0.0}, p, one) == 0.0);
  CHECK(drift_functional({{0, 0, 0, 0}, 0.0}, p, TestFunction::monomial(2)) == 0.0);
  for (int k : {0, 5}) CHECK(qv_functional({{k, k, k, k}, 0.0}, p, TestFunction::sine(1.0)) == 0.0);

  ChainParams neutral_s = p;
  neutral_s.s = 0.0;
  const std::vector<int> c{0, 2, 3, 5};
  const double d = drift_functional({c, 0.0}, neutral_s, TestFunction::monomial(1));
  CHECK(d >= 0.0);
  const auto mu = empirical_measure({c, 0.0}, neutral_s);
  const double var = integrate(mu, TestFunction::monomial(2)) - std::pow(mean(mu), 2);
  CHECK(d == doctest::Approx(neutral_s.w * neutral_s.r * var).epsilon(1e-12));
  CHECK(close(d, brute_drift(c, neutral_s, TestFunction::monomial(1))));
}

TEST_CASE("generator brute-force equivalence on small chains") {
  const std::vector<TestFunction> fs{TestFunction::monomial(1), TestFunction::monomial(2), TestFunction::monomial(3),
                                     TestFunction::sine(1.0)};
  const std::vector<std::array<double, 3>> srw{{0.0, 0.0, 1.0}, {0.3, 1.7, 0.6}, {1.0, 0.5, 2.0}};
  int checked = 0;
  for (int m = 1; m <= 4; ++m)
    for (int n = 1; n <= 4; ++n)
      for (const auto& [s, r, w] : srw) {
        const ChainParams p{m, n, s, r, w, 1.0};
        for_each_state(m, n, [&](const std::vector<int>& c) {
          const ChainState st{c, 0.0};
          std::vector<int> occ(n + 1, 0);
          for (int k : c) ++occ[k];
          for (const auto& f : fs) {
            const double bd = brute_drift(c, p, f), bq = brute_qv(c, p, f);
            CHECK(close(drift_functional(st, p, f), bd));
            CHECK(close(qv_functional(st, p, f), bq));
            ObservableTracker tr(f, p);
            tr.reset(occ);
            CHECK(close(tr.drift(), bd, 1e-11));
            CHECK(close(tr.qv(), bq, 1e-11));
            CHECK(close(tr.value(), psi(c, p, f)));
            ++checked;
          }
        });
      }
  CHECK(checked > 1000);
}

TEST_CASE("functionals are exchangeable") {
  const ChainParams p{5, 6, 0.4, 1.1, 0.9, 1.0};
  std::vector<int> c{0, 3, 6, 2, 2};
  const auto f = TestFunction::sine(1.0);
  const double d = drift_functional({c, 0.0}, p, f), q = qv_functional({c, 0.0}, p, f);
  std::sort(c.begin(), c.end());
  do {
    CHECK(drift_functional({c, 0.0}, p, f) == doctest::Approx(d).epsilon(1e-14));
    CHECK(qv_functional({c, 0.0}, p, f) == doctest::Approx(q).epsilon(1e-14));
  } while (std::next_permutation(c.begin(), c.end()));
}

TEST_CASE("counts stay on the lattice and trackers stay exact") {
  const ChainParams p{30, 12, 0.2, 1.5, 1.0, 1.0};
  Rng rng(77);
  MoranChain chain(p, {std::vector<int>(30, 6), 0.0});
  ObservableTracker tr(TestFunction::monomial(2), p);
  tr.reset(chain.occupancy());
  for (int i = 0; i < 20000; ++i) {
    const auto e = chain.step(rng);
    if (!e) break;
    tr.move(e->from_site, e->to_site);
    if (i % 997 == 0) {
      for (int k : chain.counts()) REQUIRE((k >= 0 && k <= p.n));
      const ChainState st = chain.state();
      CHECK(empirical_measure(st, p).weights().sum() == doctest::Approx(1.0));
      CHECK(tr.drift() == doctest::Approx(drift_functional(st, p, TestFunction::monomial(2))).epsilon(1e-9));
      CHECK(tr.qv() == doctest::Approx(qv_functional(st, p, TestFunction::monomial(2))).epsilon(1e-9));
    }
  }
}

TEST_CASE("absorbing states are fixed") {
  const ChainParams p{4, 3, 0.2, 1.0, 1.0, 1.0};
  Rng rng(2);
  for (int k : {0, 3}) {
    const ChainState st{{k, k, k, k}, 0.0};
    CHECK(is_absorbed(st, p));
    const auto path = simulate_from(st, p, 5.0, {TestFunction::monomial(1)}, {1.0, 5.0}, rng);
    CHECK(path.absorbed);
    CHECK(path.events == 0);
    for (const auto& pt : martingale_residual(path, p, TestFunction::monomial(1))) CHECK(pt.value == 0.0);
  }
  CHECK(!is_absorbed({{0, 3, 3, 3}, 0.0}, p));
}

TEST_CASE("simulate at T = 0 returns the initial observables") {
  const ChainParams p{10, 8, 0.1, 1.0, 1.0, 1.0};
  Rng rng(3);
  const auto path = simulate(GridMeasure::uniform(8), p, 0.0, {TestFunction::monomial(1)}, {0.0}, rng);
  CHECK(path.events == 0);
  CHECK(path.values[0][0] == path.initial_values[0]);
  CHECK(martingale_residual(path, p, TestFunction::monomial(1))[0].value == 0.0);
  CHECK_THROWS_AS(simulate(GridMeasure::uniform(7), p, 1.0, {}, {}, rng), ValidationError);
  CHECK_THROWS_AS(simulate(GridMeasure::uniform(8), p, 1.0, {}, {2.0}, rng), ValidationError);
}

TEST_CASE("neutral chain keeps the mean a martingale") {
  const ChainParams p{20, 20, 0.0, 0.0, 1.0, 1.0};
  const auto inc = run_replicas(500, 11, [&](std::size_t, Rng& rng) {
    const auto path = simulate(GridMeasure::uniform(20), p, 1.0, {TestFunction::monomial(1)}, {1.0}, rng);
    return path.values[0][0] - path.initial_values[0];
  });
  const auto st = stats(inc);
  CHECK(std::abs(st.mean) < 3.0 * st.se);
}

TEST_CASE("martingale residual statistics") {
  const ChainParams p{20, 20, 0.5, 1.0, 1.0, 1.0};
  const std::vector<TestFunction> fs{TestFunction::monomial(1), TestFunction::monomial(2)};
  struct Out {
    double m[2], q[2];
  };
  const auto outs = run_replicas(500, 5, [&](std::size_t, Rng& rng) {
    const auto path = simulate(GridMeasure::uniform(20), p, 1.0, fs, {0.5, 1.0}, rng);
    Out o{};
    for (int i = 0; i < 2; ++i) {
      o.m[i] = martingale_residual(path, p, fs[i]).back().value;
      o.q[i] = accumulated_qv(path, p, fs[i]).back().value;
    }
    return o;
  });
  for (int i = 0; i < 2; ++i) {
    std::vector<double> m, q;
    for (const auto& o : outs) {
      m.push_back(o.m[i]);
      q.push_back(o.q[i]);
    }
    const auto sm = stats(m);
    const double qbar = stats(q).mean;
    INFO("f = " << fs[i].name() << " mean " << sm.mean << " se " << sm.se << " var " << sm.var << " qv " << qbar);
    CHECK(std::abs(sm.mean) <= 3.0 * sm.se);
    CHECK(std::abs(sm.var - qbar) <= 0.15 * qbar);
  }
}

namespace {

Stats chain_mean_at_one(int m, int n, std::size_t reps, std::uint64_t seed) {
  const double s = 0.1;
  const ChainParams p{m, n, s, 1.0, 1.0, 1.0 / s};
  const auto ends = run_replicas(reps, seed, [&](std::size_t, Rng& rng) {
    return simulate(GridMeasure::uniform(n), p, 1.0, {TestFunction::monomial(1)}, {1.0}, rng).values[0][0];
  });
  return stats(ends);
}

double limit_mean_at_one(int n) {
  const auto mu0 = LimitMeasure(to_atomic(GridMeasure::uniform(n)));
  return mean(evolve(mu0, 1.0 / 0.1, 1.0).measure);
}

}  // namespace

// At m = n = 50 the chain mean sits about 0.04 above the limit: within-group
// drift at ns = 5 widens the group distribution and speeds up group selection.
TEST_CASE("chain mean tracks the deterministic limit at m = n = 50" * doctest::may_fail()) {
  const auto st = chain_mean_at_one(50, 50, 200, 21);
  const double h = limit_mean_at_one(50);
  INFO("chain " << st.mean << " +- " << st.se << " limit " << h);
  CHECK(std::abs(st.mean - h) < 3.0 * st.se);
}

TEST_CASE("chain mean converges to the deterministic limit") {
  const auto st = chain_mean_at_one(1000, 1000, 12, 22);
  const double h = limit_mean_at_one(1000);
  INFO("chain " << st.mean << " +- " << st.se << " limit " << h);
  CHECK(std::abs(st.mean - h) < 3.0 * st.se);
}

TEST_CASE("martingale residual validates its inputs") {
  const ChainParams p{5, 5, 0.1, 1.0, 1.0, 1.0};
  Rng rng(8);
  const auto path = simulate(GridMeasure::uniform(5), p, 1.0, {TestFunction::monomial(1)}, {1.0}, rng);
  CHECK_THROWS_AS(martingale_residual(path, p, TestFunction::monomial(2)), ValidationError);
  ChainParams other = p;
  other.s = 0.2;
  CHECK_THROWS_AS(martingale_residual(path, other, TestFunction::monomial(1)), ValidationError);
}

TEST_CASE("path CSV is reproducible") {
  const ChainParams p{10, 10, 0.1, 1.0, 1.0, 1.0};
  auto csv = [&](std::uint64_t seed) {
    Rng rng(seed);
    const auto path = simulate(GridMeasure::uniform(10), p, 1.0, {TestFunction::monomial(1), TestFunction::monomial(2)},
                               {0.25, 0.5, 1.0}, rng);
    std::ostringstream out;
    write_path_csv(path, out);
    return out.str();
  };
  const auto a = csv(42);
  CHECK(a == csv(42));
  CHECK(a.rfind("time,observable_id,value\n", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 1 + 2 * 4);
}

TEST_CASE("replica streams are independent of the thread count") {
  auto draw = [](std::size_t i, Rng& rng) { return rng.uniform() + double(i); };
  CHECK(run_replicas(64, 3, draw, 1) == run_replicas(64, 3, draw, 4));
  CHECK_THROWS_AS(run_replicas(8, 3, [](std::size_t i, Rng&) -> int {
                    if (i == 5) throw ValidationError("boom");
                    return 0;
                  }),
                  ValidationError);
}
