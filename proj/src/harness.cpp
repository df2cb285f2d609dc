#include "twolevel/harness.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "twolevel/errors.hpp"
#include "twolevel/initial_spec.hpp"
#include "twolevel/limit.hpp"
#include "twolevel/replicas.hpp"

namespace twolevel {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double var = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  const double n = static_cast<double>(v.size());
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.var = ss / (n - 1.0);
  out.se = std::sqrt(out.var / n);
  return out;
}

std::string rung_name(int m, int n) { return "(" + std::to_string(m) + "," + std::to_string(n) + ")"; }

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

void add_verdict(StudyResult& res, std::string name, bool ok, std::string detail,
                 Verdict::Level failure = Verdict::Level::Fail) {
  res.verdicts.push_back({std::move(name), ok ? Verdict::Level::Pass : failure, std::move(detail)});
}

// Consecutive means may rise by at most `slack` standard errors of their difference.
void monotone_verdicts(StudyResult& res, const std::string& label, const std::vector<double>& mean,
                       const std::vector<double>& se, bool increasing, double slack, Verdict::Level failure) {
  for (std::size_t i = 1; i < mean.size(); ++i) {
    const double tol = slack * std::hypot(se[i - 1], se[i]);
    const double step = increasing ? mean[i - 1] - mean[i] : mean[i] - mean[i - 1];
    const bool ok = step <= tol;
    add_verdict(res, label + " " + std::to_string(i - 1) + "->" + std::to_string(i), ok,
                fmt(mean[i - 1]) + " -> " + fmt(mean[i]) + " (slack " + fmt(tol) + ")", failure);
  }
}

std::vector<std::pair<std::string, nlohmann::json>> rung_columns(const ChainParams& p, const StudyConfig& cfg,
                                                                  const std::string& initial, std::uint64_t seed) {
  return {{"m", p.m},         {"n", p.n},
          {"s", p.s},         {"r", p.r},
          {"w", p.w},         {"time_factor", p.time_factor},
          {"horizon", cfg.horizon}, {"initial", initial},
          {"replicas", cfg.replicas}, {"seed", seed}};
}

ChainParams chain_for(const StudyConfig& cfg, int m, int n, double time_factor) {
  ChainParams p{m, n, cfg.s, cfg.r, cfg.w, time_factor};
  p.validate();
  return p;
}

void report(const Progress& progress, const StudyRow& row) {
  if (!progress) return;
  std::string line;
  for (const auto& [k, v] : row.columns) {
    if (k == "initial" || k == "seed" || k == "replicas") continue;
    line += (line.empty() ? "" : " ") + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
  }
  progress(line + " (" + fmt(row.wall_seconds) + " s)");
}

}  // namespace

// -- config --------------------------------------------------------------------

std::string_view to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::DetConvergence:
      return "det_convergence";
    case StudyKind::QvScaling:
      return "qv_scaling";
    case StudyKind::FvMartingale:
      return "fv_martingale";
    case StudyKind::SteadyState:
      return "steady_state";
    case StudyKind::QuasiInvariance:
      break;
  }
  return "quasi_invariance";
}

StudyKind study_kind_from_string(std::string_view s) {
  for (auto k : {StudyKind::DetConvergence, StudyKind::QvScaling, StudyKind::FvMartingale, StudyKind::SteadyState,
                 StudyKind::QuasiInvariance})
    if (to_string(k) == s) return k;
  throw ValidationError("unknown study kind '" + std::string(s) + "'");
}

std::string_view to_string(Verdict::Level level) {
  switch (level) {
    case Verdict::Level::Pass:
      return "PASS";
    case Verdict::Level::Warn:
      return "WARN";
    case Verdict::Level::Fail:
      break;
  }
  return "FAIL";
}

StudyConfig StudyConfig::defaults(StudyKind kind) {
  StudyConfig c;
  c.kind = kind;
  switch (kind) {
    case StudyKind::DetConvergence:
      c.ladder = {{10, 10}, {30, 30}, {100, 100}};
      c.replicas = 50;
      break;
    case StudyKind::QvScaling:
      c.ladder = {{20, 20}, {40, 20}, {80, 20}};
      c.s = 0.5;
      c.r = 1.0;
      c.replicas = 400;
      break;
    case StudyKind::FvMartingale:
      c.ladder = {{50, 50}};
      c.horizon = 0.5;
      c.replicas = 300;
      break;
    case StudyKind::SteadyState:
      c.ladder = {};
      c.initial = "example2";
      c.final_threshold = 1e-2;
      break;
    case StudyKind::QuasiInvariance:
      c.ladder = {{10, 10}, {40, 40}};
      c.replicas = 100;
      c.horizon = 50.0;
      break;
  }
  return c;
}

void StudyConfig::validate() const {
  if (replicas < 1) throw ValidationError("replicas must be >= 1");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be finite and >= 0");
  if (kind != StudyKind::SteadyState) {
    if (ladder.empty()) throw ValidationError("ladder must not be empty");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      const auto [m, n] = ladder[i];
      if (m < 1 || n < 1) throw ValidationError("ladder rungs need m, n >= 1");
      if (i == 0) continue;
      const auto [pm, pn] = ladder[i - 1];
      if (m < pm || n < pn || (m == pm && n == pn))
        throw ValidationError("ladder must increase: " + rung_name(pm, pn) + " then " + rung_name(m, n));
    }
  }
  switch (kind) {
    case StudyKind::DetConvergence:
      if (!(s > 0.0)) throw ValidationError("det_convergence needs s > 0 (lambda = w r / s is undefined for s = 0)");
      if (ladder.size() < 3) throw ValidationError("det_convergence needs at least 3 ladder rungs");
      chain_for(*this, 1, 1, 1.0 / s);
      break;
    case StudyKind::QvScaling:
      if (ladder.size() < 3) throw ValidationError("qv_scaling needs at least 3 ladder rungs");
      for (const auto& [m, n] : ladder)
        if (n != ladder.front().second) throw ValidationError("qv_scaling keeps n fixed along the ladder");
      chain_for(*this, 1, 1, time_factor);
      break;
    case StudyKind::FvMartingale:
      fv.validate();
      if (replicas < 100) throw ValidationError("fv_martingale needs at least 100 replicas");
      break;
    case StudyKind::SteadyState:
      if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and > 0");
      if (horizons.empty()) throw ValidationError("steady_state needs at least one horizon");
      for (std::size_t i = 0; i < horizons.size(); ++i)
        if (!(horizons[i] >= 0.0) || !std::isfinite(horizons[i]) || (i > 0 && horizons[i] <= horizons[i - 1]))
          throw ValidationError("horizons must be finite, >= 0 and increasing");
      break;
    case StudyKind::QuasiInvariance: {
      if (!(exit_threshold > 0.0)) throw ValidationError("exit threshold must be > 0");
      BetaSpec(lambda, alpha);
      chain_for(*this, 1, 1, 1.0);
      if (!(s > 0.0)) throw ValidationError("quasi_invariance needs s > 0");
      const double implied = w * r / s;
      if (std::abs(implied - lambda) > 1e-9 * lambda)
        throw ValidationError("lambda=" + fmt(lambda) + " does not match w r / s = " + fmt(implied));
      break;
    }
  }
  if (!(final_threshold > 0.0) || !(slack_se >= 0.0) || !(slope_tolerance > 0.0))
    throw ValidationError("verdict thresholds must be positive");
}

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError("config key '" + key + "' has an invalid value");
  }
}

void check_keys(const YAML::Node& node, const std::string& prefix, std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) throw ValidationError("config section '" + prefix + "' must be a map");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ValidationError("unknown config key '" + prefix + key + "'");
  }
}

}  // namespace

StudyConfig parse_study_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  if (!root.IsMap()) throw ValidationError("config must be a map");
  check_keys(root, "",
             {"kind", "ladder", "model", "fv", "lambda", "alpha", "initial", "observable", "horizon", "horizons",
              "replicas", "seed", "threads", "output", "verdict"});
  if (!root["kind"]) throw ValidationError("config key 'kind' is required");
  StudyConfig c = StudyConfig::defaults(study_kind_from_string(scalar<std::string>(root["kind"], "kind")));

  if (const auto n = root["ladder"]) {
    if (!n.IsSequence()) throw ValidationError("config key 'ladder' must be a list of [m, n] pairs");
    c.ladder.clear();
    for (const auto& rung : n) {
      if (!rung.IsSequence() || rung.size() != 2) throw ValidationError("config key 'ladder' must hold [m, n] pairs");
      c.ladder.emplace_back(scalar<int>(rung[0], "ladder"), scalar<int>(rung[1], "ladder"));
    }
  }
  if (const auto n = root["model"]) {
    check_keys(n, "model.", {"s", "r", "w", "time_factor"});
    if (n["s"]) c.s = scalar<double>(n["s"], "model.s");
    if (n["r"]) c.r = scalar<double>(n["r"], "model.r");
    if (n["w"]) c.w = scalar<double>(n["w"], "model.w");
    if (n["time_factor"]) c.time_factor = scalar<double>(n["time_factor"], "model.time_factor");
  }
  if (const auto n = root["fv"]) {
    check_keys(n, "fv.", {"sigma", "rho", "theta", "w"});
    if (n["sigma"]) c.fv.sigma = scalar<double>(n["sigma"], "fv.sigma");
    if (n["rho"]) c.fv.rho = scalar<double>(n["rho"], "fv.rho");
    if (n["theta"]) c.fv.theta = scalar<double>(n["theta"], "fv.theta");
    if (n["w"]) c.fv.w = scalar<double>(n["w"], "fv.w");
  }
  if (root["lambda"]) c.lambda = scalar<double>(root["lambda"], "lambda");
  if (root["alpha"]) c.alpha = scalar<double>(root["alpha"], "alpha");
  if (root["initial"]) c.initial = scalar<std::string>(root["initial"], "initial");
  if (root["observable"]) c.observable = scalar<std::string>(root["observable"], "observable");
  if (root["horizon"]) c.horizon = scalar<double>(root["horizon"], "horizon");
  if (const auto n = root["horizons"]) {
    if (!n.IsSequence()) throw ValidationError("config key 'horizons' must be a list");
    c.horizons.clear();
    for (const auto& t : n) c.horizons.push_back(scalar<double>(t, "horizons"));
  }
  if (root["replicas"]) {
    const auto r = scalar<long long>(root["replicas"], "replicas");
    if (r < 1) throw ValidationError("config key 'replicas' must be >= 1");
    c.replicas = static_cast<std::size_t>(r);
  }
  if (root["seed"]) c.seed = scalar<std::uint64_t>(root["seed"], "seed");
  if (root["threads"]) c.threads = scalar<unsigned>(root["threads"], "threads");
  if (root["output"]) c.output = scalar<std::string>(root["output"], "output");
  if (const auto n = root["verdict"]) {
    check_keys(n, "verdict.",
               {"final_threshold", "slack_se", "slope_target", "slope_tolerance", "exit_threshold", "mean_se",
                "variance_rel"});
    if (n["final_threshold"]) c.final_threshold = scalar<double>(n["final_threshold"], "verdict.final_threshold");
    if (n["slack_se"]) c.slack_se = scalar<double>(n["slack_se"], "verdict.slack_se");
    if (n["slope_target"]) c.slope_target = scalar<double>(n["slope_target"], "verdict.slope_target");
    if (n["slope_tolerance"]) c.slope_tolerance = scalar<double>(n["slope_tolerance"], "verdict.slope_tolerance");
    if (n["exit_threshold"]) c.exit_threshold = scalar<double>(n["exit_threshold"], "verdict.exit_threshold");
    if (n["mean_se"]) c.fv_tolerances.mean_se = scalar<double>(n["mean_se"], "verdict.mean_se");
    if (n["variance_rel"]) c.fv_tolerances.variance_rel = scalar<double>(n["variance_rel"], "verdict.variance_rel");
  }
  c.validate();
  return c;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_study_config(buf.str());
}

nlohmann::json to_json(const StudyConfig& c) {
  nlohmann::json ladder = nlohmann::json::array();
  for (const auto& [m, n] : c.ladder) ladder.push_back({m, n});
  return {{"kind", to_string(c.kind)},
          {"ladder", ladder},
          {"model", {{"s", c.s}, {"r", c.r}, {"w", c.w}, {"time_factor", c.time_factor}}},
          {"fv", to_json(c.fv)},
          {"lambda", c.lambda},
          {"alpha", c.alpha},
          {"initial", c.initial},
          {"observable", c.observable},
          {"horizon", c.horizon},
          {"horizons", c.horizons},
          {"replicas", c.replicas},
          {"seed", c.seed},
          {"threads", c.threads},
          {"output", c.stem()},
          {"verdict",
           {{"final_threshold", c.final_threshold},
            {"slack_se", c.slack_se},
            {"slope_target", c.slope_target},
            {"slope_tolerance", c.slope_tolerance},
            {"exit_threshold", c.exit_threshold},
            {"mean_se", c.fv_tolerances.mean_se},
            {"variance_rel", c.fv_tolerances.variance_rel}}}};
}

double StudyRow::at(std::string_view key) const {
  for (const auto& [k, v] : columns)
    if (k == key) return v.get<double>();
  throw ValidationError("row has no column '" + std::string(key) + "'");
}

bool StudyResult::passed() const {
  for (const auto& v : verdicts)
    if (v.level == Verdict::Level::Fail) return false;
  return true;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("slope fit needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ValidationError("slope fit needs distinct x values");
  return sxy / sxx;
}

// -- studies -------------------------------------------------------------------

StudyResult det_convergence_study(const StudyConfig& cfg, const Progress& progress) {
  if (cfg.kind != StudyKind::DetConvergence) throw ValidationError("config is not a det_convergence study");
  cfg.validate();
  const auto start = Clock::now();
  StudyResult res;
  res.config = cfg;
  const double lambda = cfg.w * cfg.r / cfg.s;
  const LimitMeasure mu0 = parse_initial(cfg.initial, lambda);
  const LimitMeasure target = evolve(mu0, lambda, cfg.horizon).measure;
  res.summary.push_back({"lambda", lambda});

  std::vector<double> means, ses;
  for (std::size_t i = 0; i < cfg.ladder.size(); ++i) {
    const auto t0 = Clock::now();
    const auto [m, n] = cfg.ladder[i];
    const ChainParams p = chain_for(cfg, m, n, 1.0 / cfg.s);
    const GridMeasure init = project_to_lattice(mu0, n);
    const std::uint64_t seed = stream_seed(cfg.seed, i);
    const auto dist = run_replicas(
        cfg.replicas, seed,
        [&](std::size_t, Rng& rng) {
          const auto path = simulate(init, p, cfg.horizon, {}, {}, rng);
          return wasserstein1(empirical_measure(path.final_state, p), target);
        },
        cfg.threads);
    const auto st = mean_se(dist);
    means.push_back(st.mean);
    ses.push_back(st.se);
    StudyRow row{rung_columns(p, cfg, cfg.initial, seed), seconds_since(t0)};
    row.columns.push_back({"lambda", lambda});
    row.columns.push_back({"mean_w1", st.mean});
    row.columns.push_back({"se_w1", st.se});
    report(progress, res.rows.emplace_back(std::move(row)));
    res.samples.push_back(dist);
  }
  monotone_verdicts(res, "mean W1 nonincreasing", means, ses, false, cfg.slack_se, Verdict::Level::Fail);
  add_verdict(res, "final mean W1 below threshold", means.back() < cfg.final_threshold,
              fmt(means.back()) + " < " + fmt(cfg.final_threshold));
  res.wall_seconds = seconds_since(start);
  return res;
}

StudyResult qv_scaling_study(const StudyConfig& cfg, const Progress& progress) {
  if (cfg.kind != StudyKind::QvScaling) throw ValidationError("config is not a qv_scaling study");
  cfg.validate();
  const auto start = Clock::now();
  StudyResult res;
  res.config = cfg;
  const auto f = TestFunction::parse(cfg.observable);
  std::vector<double> log_m, log_var;
  for (std::size_t i = 0; i < cfg.ladder.size(); ++i) {
    const auto t0 = Clock::now();
    const auto [m, n] = cfg.ladder[i];
    const ChainParams p = chain_for(cfg, m, n, cfg.time_factor);
    const GridMeasure init = initial_on_lattice(cfg.initial, cfg.lambda, n);
    const std::uint64_t seed = stream_seed(cfg.seed, i);
    const auto mt = run_replicas(
        cfg.replicas, seed,
        [&](std::size_t, Rng& rng) {
          const auto path = simulate(init, p, cfg.horizon, {f}, {cfg.horizon}, rng);
          return martingale_residual(path, p, f).back().value;
        },
        cfg.threads);
    const auto st = mean_se(mt);
    if (!(st.var > 0.0))
      throw ValidationError("qv_scaling rung " + rung_name(m, n) +
                            " has zero martingale variance (degenerate initial state or zero rates)");
    double m4 = 0.0;
    for (double x : mt) m4 += std::pow(x - st.mean, 4);
    m4 /= static_cast<double>(mt.size());
    const double se_var = std::sqrt(std::max(0.0, m4 - st.var * st.var) / static_cast<double>(mt.size()));
    log_m.push_back(std::log(double(m)));
    log_var.push_back(std::log(st.var));
    StudyRow row{rung_columns(p, cfg, cfg.initial, seed), seconds_since(t0)};
    row.columns.push_back({"observable", f.name()});
    row.columns.push_back({"mean_m_t", st.mean});
    row.columns.push_back({"var_m_t", st.var});
    row.columns.push_back({"se_var", se_var});
    row.columns.push_back({"m_times_var", m * st.var});
    report(progress, res.rows.emplace_back(std::move(row)));
    res.samples.push_back(mt);
  }
  const double slope = fit_slope(log_m, log_var);
  res.summary.push_back({"slope", slope});
  add_verdict(res, "log-variance slope", std::abs(slope - cfg.slope_target) <= cfg.slope_tolerance,
              fmt(slope) + " within " + fmt(cfg.slope_target) + " +- " + fmt(cfg.slope_tolerance));
  res.wall_seconds = seconds_since(start);
  return res;
}

StudyResult steady_state_study(const StudyConfig& cfg, const Progress& progress) {
  if (cfg.kind != StudyKind::SteadyState) throw ValidationError("config is not a steady_state study");
  cfg.validate();
  const auto start = Clock::now();
  StudyResult res;
  res.config = cfg;
  const LimitMeasure mu0 = parse_initial(cfg.initial, cfg.lambda);
  const LongTimeLimit lim = classify_longtime(tail_of(mu0), cfg.lambda);
  const LimitMeasure target = lim.measure();
  res.summary.push_back({"verdict", lim.verdict()});

  const auto states = trajectory(mu0, cfg.lambda, cfg.horizons);
  std::vector<double> dist;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto t0 = Clock::now();
    const double d = wasserstein1(states[i].measure, target);
    dist.push_back(d);
    res.rows.push_back({{{"horizon", cfg.horizons[i]},
                         {"lambda", cfg.lambda},
                         {"initial", cfg.initial},
                         {"limit", lim.verdict()},
                         {"w1", d}},
                        seconds_since(t0)});
    report(progress, res.rows.back());
  }
  for (std::size_t i = 1; i < dist.size(); ++i)
    add_verdict(res, "W1 nonincreasing " + std::to_string(i - 1) + "->" + std::to_string(i),
                dist[i] <= dist[i - 1] + 1e-9, fmt(dist[i - 1]) + " -> " + fmt(dist[i]));
  add_verdict(res, "final W1 below threshold", dist.back() < cfg.final_threshold,
              fmt(dist.back()) + " < " + fmt(cfg.final_threshold));
  res.wall_seconds = seconds_since(start);
  return res;
}

double w1_exit_time(const ChainState& initial, const ChainParams& params, const GridMeasure& target, double threshold,
                    double horizon, Rng& rng) {
  if (!(threshold > 0.0)) throw ValidationError("exit threshold must be > 0");
  if (target.n() != params.n) throw ValidationError("target measure must live on the chain's lattice");
  MoranChain chain(params, initial);
  auto outside = [&] { return wasserstein1(empirical_measure(chain.occupancy(), params.m), target) > threshold; };
  if (outside()) return initial.time;
  while (true) {
    const auto e = chain.step_until(horizon, rng);
    if (!e) return horizon;
    if (e->from_site != e->to_site && outside()) return e->time;
  }
}

StudyResult quasi_invariance_study(const StudyConfig& cfg, const Progress& progress) {
  if (cfg.kind != StudyKind::QuasiInvariance) throw ValidationError("config is not a quasi_invariance study");
  cfg.validate();
  const auto start = Clock::now();
  StudyResult res;
  res.config = cfg;
  const BetaSpec spec(cfg.lambda, cfg.alpha);
  std::vector<double> means, ses;
  for (std::size_t i = 0; i < cfg.ladder.size(); ++i) {
    const auto t0 = Clock::now();
    const auto [m, n] = cfg.ladder[i];
    const ChainParams p = chain_for(cfg, m, n, 1.0);
    const GridMeasure target = discretized_beta(n, spec);
    const std::uint64_t seed = stream_seed(cfg.seed, i);
    const auto exits = run_replicas(
        cfg.replicas, seed,
        [&](std::size_t, Rng& rng) {
          const ChainState st{sample(target, static_cast<std::size_t>(m), rng), 0.0};
          return w1_exit_time(st, p, target, cfg.exit_threshold, cfg.horizon, rng);
        },
        cfg.threads);
    const auto st = mean_se(exits);
    means.push_back(st.mean);
    ses.push_back(st.se);
    StudyRow row{rung_columns(p, cfg, "beta:" + fmt(cfg.lambda) + "," + fmt(cfg.alpha), seed), seconds_since(t0)};
    row.columns.push_back({"lambda", cfg.lambda});
    row.columns.push_back({"alpha", cfg.alpha});
    row.columns.push_back({"threshold", cfg.exit_threshold});
    row.columns.push_back({"mean_exit", st.mean});
    row.columns.push_back({"se_exit", st.se});
    row.columns.push_back({"censored", static_cast<double>(std::count(exits.begin(), exits.end(), cfg.horizon))});
    report(progress, res.rows.emplace_back(std::move(row)));
    res.samples.push_back(exits);
  }
  monotone_verdicts(res, "mean exit time nondecreasing", means, ses, true, cfg.slack_se, Verdict::Level::Warn);
  res.wall_seconds = seconds_since(start);
  return res;
}

StudyResult fv_martingale_wrapper(const StudyConfig& cfg, const Progress& progress) {
  if (cfg.kind != StudyKind::FvMartingale) throw ValidationError("config is not an fv_martingale study");
  cfg.validate();
  const auto start = Clock::now();
  StudyResult res;
  res.config = cfg;
  const auto f = TestFunction::parse(cfg.observable);
  for (std::size_t i = 0; i < cfg.ladder.size(); ++i) {
    const auto t0 = Clock::now();
    const auto [m, n] = cfg.ladder[i];
    const std::uint64_t seed = stream_seed(cfg.seed, i);
    Rng rng(seed);
    const auto st = fv_martingale_study(initial_on_lattice(cfg.initial, cfg.lambda, n), m, n, cfg.fv, f, cfg.horizon,
                                        cfg.replicas, rng, cfg.fv_tolerances, cfg.threads);
    const std::string rung = rung_name(m, n);
    StudyRow row{{{"m", m},
                  {"n", n},
                  {"sigma", cfg.fv.sigma},
                  {"rho", cfg.fv.rho},
                  {"theta", cfg.fv.theta},
                  {"w", cfg.fv.w},
                  {"horizon", cfg.horizon},
                  {"initial", cfg.initial},
                  {"observable", f.name()},
                  {"replicas", cfg.replicas},
                  {"seed", seed},
                  {"mean", st.mean},
                  {"se", st.se},
                  {"var", st.variance},
                  {"qv_mean", st.qv_mean},
                  {"limit_qv_mean", st.limit_qv_mean}},
                 seconds_since(t0)};
    report(progress, res.rows.emplace_back(std::move(row)));
    res.samples.push_back(st.samples);
    add_verdict(res, "mean N_T " + rung, st.mean_pass,
                "|" + fmt(st.mean) + "| <= " + fmt(cfg.fv_tolerances.mean_se) + " * " + fmt(st.se));
    add_verdict(res, "variance vs rescaled QV " + rung, st.variance_pass, fmt(st.variance) + " vs " + fmt(st.qv_mean));
    add_verdict(res, "variance vs limit QV " + rung, st.limit_variance_pass,
                fmt(st.variance) + " vs " + fmt(st.limit_qv_mean));
  }
  res.wall_seconds = seconds_since(start);
  return res;
}

StudyResult run_study(const StudyConfig& cfg, const Progress& progress) {
  switch (cfg.kind) {
    case StudyKind::DetConvergence:
      return det_convergence_study(cfg, progress);
    case StudyKind::QvScaling:
      return qv_scaling_study(cfg, progress);
    case StudyKind::FvMartingale:
      return fv_martingale_wrapper(cfg, progress);
    case StudyKind::SteadyState:
      return steady_state_study(cfg, progress);
    case StudyKind::QuasiInvariance:
      break;
  }
  return quasi_invariance_study(cfg, progress);
}

// -- persistence ---------------------------------------------------------------

void write_result_csv(const StudyResult& result, std::ostream& out) {
  if (result.rows.empty()) return;
  const auto& head = result.rows.front().columns;
  for (std::size_t c = 0; c < head.size(); ++c) out << (c ? "," : "") << head[c].first;
  out << '\n';
  for (const auto& row : result.rows) {
    for (std::size_t c = 0; c < row.columns.size(); ++c) {
      const auto& v = row.columns[c].second;
      out << (c ? "," : "");
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s.find_first_of(",\"") != std::string::npos) {
          out << '"';
          for (char ch : s) out << (ch == '"' ? "\"\"" : std::string(1, ch));
          out << '"';
        } else {
          out << s;
        }
      } else {
        out << v.dump();
      }
    }
    out << '\n';
  }
}

nlohmann::json result_manifest(const StudyResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : r.columns) j[k] = v;
    j["wall_seconds"] = r.wall_seconds;
    rows.push_back(j);
  }
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : result.verdicts)
    verdicts.push_back({{"name", v.name}, {"level", to_string(v.level)}, {"detail", v.detail}});
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [k, v] : result.summary) summary[k] = v;
  return {{"config", to_json(result.config)}, {"rows", rows},       {"verdicts", verdicts},
          {"summary", summary},              {"passed", result.passed()}, {"wall_seconds", result.wall_seconds}};
}

void persist(const StudyResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto stem = result.config.stem();
  std::ofstream csv(dir / (stem + ".csv"));
  if (!csv) throw ValidationError("cannot write to '" + (dir / (stem + ".csv")).string() + "'");
  write_result_csv(result, csv);
  std::ofstream js(dir / (stem + ".json"));
  if (!js) throw ValidationError("cannot write to '" + (dir / (stem + ".json")).string() + "'");
  js << result_manifest(result).dump(2) << '\n';
}

}  // namespace twolevel
