#include "twolevel/fleming_viot.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "twolevel/errors.hpp"
#include "twolevel/replicas.hpp"

namespace twolevel {

void FVParams::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be finite and >= 0");
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ValidationError("rho must be finite and >= 0");
  if (!(theta > 0.0) || !std::isfinite(theta)) throw ValidationError("theta must be finite and > 0");
  if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("w must be finite and > 0");
}

nlohmann::json to_json(const FVParams& p) {
  return {{"sigma", p.sigma}, {"rho", p.rho}, {"theta", p.theta}, {"w", p.w}};
}

FVParams fv_params_from_json(const nlohmann::json& j) {
  FVParams p;
  try {
    p.sigma = j.value("sigma", 0.0);
    p.rho = j.value("rho", 0.0);
    p.theta = j.value("theta", 1.0);
    p.w = j.value("w", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fv parameters: ") + e.what());
  }
  p.validate();
  return p;
}

ChainParams rescaled_chain(int m, int n, const FVParams& fv) {
  fv.validate();
  if (m < 1 || n < 1) throw ValidationError("m and n must be positive integers");
  ChainParams p{m, n, fv.sigma / n, fv.rho / m, fv.w, static_cast<double>(n)};
  p.validate();
  return p;
}

int n_for_theta(double theta, int m) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw ValidationError("theta must be finite and > 0");
  if (m < 1) throw ValidationError("m must be a positive integer");
  const double n = std::ceil(theta * m - 1e-9);
  if (n > 1e9) throw ValidationError("theta * m is too large");
  return std::max(1, static_cast<int>(n));
}

TestFunction operator_A(const TestFunction& f, double sigma) {
  auto none = [](double) -> double { throw EvaluationError("derivatives of Af are not available"); };
  return TestFunction(
      "A[" + f.name() + "]", [f, sigma](double x) { return x * (1.0 - x) * (f.d2(x) - sigma * f.d1(x)); }, none,
      none);
}

namespace {

struct Moments {
  double f = 0, f2 = 0, x = 0, xf = 0, af = 0;
};

Moments moments(const WeightedPoints& nu, const TestFunction& f, double sigma) {
  Moments m;
  for (Eigen::Index i = 0; i < nu.x.size(); ++i) {
    const double w = nu.w(i);
    if (w == 0.0) continue;
    const double x = nu.x(i);
    const double v = f(x);
    if (!std::isfinite(v)) throw EvaluationError("test function '" + f.name() + "' is not finite");
    m.f += w * v;
    m.f2 += w * v * v;
    m.x += w * x;
    m.xf += w * x * v;
    m.af += w * x * (1.0 - x) * (f.d2(x) - sigma * f.d1(x));
  }
  return m;
}

void check_rescaled(const ChainState& state, const ChainParams& params) {
  params.validate();
  state.validate(params);
  if (params.time_factor != static_cast<double>(params.n))
    throw ValidationError("rescaled functionals need time_factor = n");
}

std::vector<double> lattice_measure(const ChainState& state, const ChainParams& params) {
  std::vector<double> mu(params.n + 1, 0.0);
  for (int k : state.counts) mu[k] += 1.0 / params.m;
  return mu;
}

std::vector<double> lattice_values(const TestFunction& f, int n) {
  std::vector<double> v(n + 1);
  for (int k = 0; k <= n; ++k) {
    v[k] = f(static_cast<double>(k) / n);
    if (!std::isfinite(v[k])) throw EvaluationError("test function '" + f.name() + "' is not finite");
  }
  return v;
}

}  // namespace

double limit_drift(const WeightedPoints& nu, const TestFunction& f, const FVParams& fv) {
  fv.validate();
  const auto m = moments(nu, f, fv.sigma);
  return m.af + fv.w * fv.theta * fv.rho * (m.xf - m.f * m.x);
}

double limit_drift(const GridMeasure& nu, const TestFunction& f, const FVParams& fv) {
  return limit_drift(weighted_points(nu), f, fv);
}

double limit_drift(const LimitMeasure& nu, const TestFunction& f, const FVParams& fv) {
  return limit_drift(weighted_points(nu), f, fv);
}

QvRate limit_qv_rate(const WeightedPoints& nu, const TestFunction& f, const FVParams& fv) {
  fv.validate();
  const auto m = moments(nu, f, fv.sigma);
  const Eigen::Index size = nu.x.size();
  std::vector<double> v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = f(nu.x(i));
  double pair = 0.0;
  for (Eigen::Index i = 0; i < size; ++i) {
    if (nu.w(i) == 0.0) continue;
    double row = 0.0;
    for (Eigen::Index j = 0; j < size; ++j) {
      const double d = v[i] - v[j];
      row += nu.w(j) * d * d;
    }
    pair += nu.w(i) * row;
  }
  const double wt = fv.w * fv.theta;
  return {2.0 * wt * (m.f2 - m.f * m.f), wt * pair};
}

QvRate limit_qv_rate(const GridMeasure& nu, const TestFunction& f, const FVParams& fv) {
  return limit_qv_rate(weighted_points(nu), f, fv);
}

QvRate limit_qv_rate(const LimitMeasure& nu, const TestFunction& f, const FVParams& fv) {
  return limit_qv_rate(weighted_points(nu), f, fv);
}

double rescaled_drift(const ChainState& state, const ChainParams& params, const TestFunction& f) {
  check_rescaled(state, params);
  const int n = params.n;
  const double nd = n, md = params.m;
  const double sigma = params.s * nd, rho = params.r * md;
  const auto mu = lattice_measure(state, params);
  const auto v = lattice_values(f, n);
  double diffusion = 0.0, xf = 0.0, ff = 0.0, xx = 0.0;
  for (int i = 0; i <= n; ++i) {
    if (mu[i] == 0.0) continue;
    const double x = i / nd;
    xf += mu[i] * x * v[i];
    ff += mu[i] * v[i];
    xx += mu[i] * x;
    if (i == 0 || i == n) continue;
    const double dxx = nd * nd * (v[i + 1] - 2.0 * v[i] + v[i - 1]);
    const double dminus = nd * (v[i] - v[i - 1]);
    diffusion += mu[i] * x * (1.0 - x) * (dxx - sigma * dminus);
  }
  return diffusion + params.w * rho * (nd / md) * (xf - ff * xx);
}

double rescaled_qv(const ChainState& state, const ChainParams& params, const TestFunction& f) {
  check_rescaled(state, params);
  const int n = params.n;
  const double nd = n, md = params.m;
  const double sigma = params.s * nd, rho = params.r * md;
  const auto mu = lattice_measure(state, params);
  const auto v = lattice_values(f, n);
  double individual = 0.0;
  for (int i = 1; i < n; ++i) {
    if (mu[i] == 0.0) continue;
    const double x = i / nd;
    const double dplus = nd * (v[i + 1] - v[i]);
    const double dminus = nd * (v[i] - v[i - 1]);
    individual += mu[i] * x * (1.0 - x) * (dplus * dplus + (1.0 + sigma / nd) * dminus * dminus);
  }
  double group = 0.0;
  for (int i = 0; i <= n; ++i) {
    if (mu[i] == 0.0) continue;
    for (int j = 0; j <= n; ++j) {
      if (mu[j] == 0.0) continue;
      const double d = v[i] - v[j];
      group += mu[i] * mu[j] * (1.0 + rho / md * j / nd) * d * d;
    }
  }
  return individual / md + params.w * (nd / md) * group;
}

FVStudyResult fv_martingale_study(const GridMeasure& nu0, int m, int n, const FVParams& fv, const TestFunction& f,
                                  double horizon, std::size_t replicas, Rng& rng, const FVStudyTolerances& tol,
                                  unsigned threads) {
  if (replicas < 100)
    throw ValidationError("martingale study needs at least 100 replicas for a standard error, got " +
                          std::to_string(replicas));
  if (!(tol.mean_se > 0.0) || !(tol.variance_rel > 0.0)) throw ValidationError("study tolerances must be positive");
  const ChainParams params = rescaled_chain(m, n, fv);
  if (nu0.n() != n) throw ValidationError("initial measure must live on the n-lattice");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be finite and >= 0");

  FVStudyResult res;
  res.fv = fv;
  res.m = m;
  res.n = n;
  res.horizon = horizon;
  res.observable = f.name();
  res.seed = rng.next_u64();
  res.tolerances = tol;

  struct Replica {
    double n_t, qv, limit_qv;
  };
  const double wt = fv.w * fv.theta;
  const auto out = run_replicas(
      replicas, res.seed,
      [&](std::size_t, Rng& r) {
        const auto path = simulate(nu0, params, horizon, {f}, {horizon}, r);
        if (horizon == 0.0) return Replica{0.0, 0.0, 0.0};
        return Replica{martingale_residual(path, params, f).back().value, accumulated_qv(path, params, f).back().value,
                       2.0 * wt * path.variance_integral[0].back()};
      },
      threads);

  for (const auto& o : out) {
    res.samples.push_back(o.n_t);
    res.qv_samples.push_back(o.qv);
    res.limit_qv_samples.push_back(o.limit_qv);
  }
  const double count = static_cast<double>(replicas);
  res.mean = std::accumulate(res.samples.begin(), res.samples.end(), 0.0) / count;
  double ss = 0.0;
  for (double x : res.samples) ss += (x - res.mean) * (x - res.mean);
  res.variance = ss / (count - 1.0);
  res.se = std::sqrt(res.variance / count);
  res.qv_mean = std::accumulate(res.qv_samples.begin(), res.qv_samples.end(), 0.0) / count;
  res.limit_qv_mean = std::accumulate(res.limit_qv_samples.begin(), res.limit_qv_samples.end(), 0.0) / count;
  res.mean_pass = std::abs(res.mean) <= tol.mean_se * res.se;
  res.variance_pass = std::abs(res.variance - res.qv_mean) <= tol.variance_rel * res.qv_mean;
  res.limit_variance_pass = std::abs(res.variance - res.limit_qv_mean) <= tol.variance_rel * res.limit_qv_mean;
  return res;
}

nlohmann::json to_json(const FVStudyResult& r) {
  return {{"params", to_json(r.fv)},
          {"chain", to_json(rescaled_chain(r.m, r.n, r.fv))},
          {"horizon", r.horizon},
          {"observable", r.observable},
          {"seed", r.seed},
          {"replicas", r.samples.size()},
          {"mean", r.mean},
          {"se", r.se},
          {"var", r.variance},
          {"qv_mean", r.qv_mean},
          {"limit_qv_mean", r.limit_qv_mean},
          {"tolerances", {{"mean_se", r.tolerances.mean_se}, {"variance_rel", r.tolerances.variance_rel}}},
          {"pass", {{"mean", r.mean_pass}, {"variance", r.variance_pass}, {"limit_variance", r.limit_variance_pass}}}};
}

void write_samples_csv(const FVStudyResult& r, std::ostream& out) {
  const auto old = out.precision(17);
  out << "replica,n_t,qv,limit_qv\n";
  for (std::size_t i = 0; i < r.samples.size(); ++i)
    out << i << ',' << r.samples[i] << ',' << r.qv_samples[i] << ',' << r.limit_qv_samples[i] << '\n';
  out.precision(old);
}

}  // namespace twolevel
