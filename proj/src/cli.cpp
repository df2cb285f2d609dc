#include "twolevel/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "twolevel/errors.hpp"
#include "twolevel/harness.hpp"
#include "twolevel/initial_spec.hpp"
#include "twolevel/limit.hpp"
#include "twolevel/measure_io.hpp"
#include "twolevel/moran.hpp"

namespace twolevel {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string out_dir;
  std::string name;
  int verbosity = 0;
  bool quiet = false;
};

struct SimulateArgs {
  int m = 10, n = 10;
  double s = 0.0, r = 0.0, w = 1.0, time_factor = 1.0, horizon = 1.0;
  std::uint64_t seed = 1;
  std::string initial = "uniform";
  double lambda = 1.0;
  std::vector<std::string> observables{"x"};
  int samples = 10;
  bool log_events = false;
};

struct SolveArgs {
  std::string initial;
  double lambda = 0.0;
  std::vector<double> times{0.0};
  int grid = 201;
};

struct OracleArgs {
  int example = 2;
  double lambda = 0.0;
  std::vector<double> times{0.0};
  ExampleParams params;
  int grid = 201;
};

struct StudyArgs {
  std::string config;
  std::string kind;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<unsigned> threads;
  std::optional<double> horizon;
  std::optional<std::string> initial;
};

fs::path output_dir(const Common& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  return ".";
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot write '" + path.string() + "'");
  return f;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

// Snapshot table: CDF on a uniform grid, which every measure kind supports.
void write_snapshots(const fs::path& json_path, const fs::path& csv_path, const std::vector<SolutionState>& states,
                     const LimitMeasure& reference, nlohmann::json header, int grid) {
  if (grid < 2) throw ValidationError("--grid must be at least 2");
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& st : states)
    snaps.push_back({{"t", st.t},
                     {"h", st.h_history.back().second},
                     {"w1_to_initial", wasserstein1(st.measure, reference)},
                     {"measure", to_json(st.measure)}});
  header["snapshots"] = snaps;
  write_json(json_path, header);
  auto csv = open_out(csv_path);
  csv.precision(17);
  csv << "t,x,cdf\n";
  for (const auto& st : states)
    for (int i = 0; i < grid; ++i) {
      const double x = static_cast<double>(i) / (grid - 1);
      csv << st.t << ',' << x << ',' << cdf(st.measure, x) << '\n';
    }
}

std::string kind_label(LongTimeLimit::Kind k) {
  switch (k) {
    case LongTimeLimit::Kind::Delta0:
      return "Delta0";
    case LongTimeLimit::Kind::Delta1:
      return "Delta1";
    case LongTimeLimit::Kind::BetaLimit:
      break;
  }
  return "Beta";
}

int do_simulate(const SimulateArgs& a, const Common& c, std::ostream& out) {
  const ChainParams p{a.m, a.n, a.s, a.r, a.w, a.time_factor};
  p.validate();
  if (a.samples < 1) throw ValidationError("--samples must be >= 1");
  std::vector<TestFunction> fs;
  for (const auto& o : a.observables) fs.push_back(TestFunction::parse(o));
  std::vector<double> times;
  for (int k = 1; k <= a.samples; ++k) times.push_back(a.horizon * k / a.samples);
  Rng rng(a.seed);
  EventLog log;
  SimulateOptions opt;
  if (a.log_events) opt.log = &log;
  const auto path = simulate(initial_on_lattice(a.initial, a.lambda, a.n), p, a.horizon, fs, times, rng, opt);

  const fs::path dir = output_dir(c);
  const std::string stem = c.name.empty() ? "simulate" : c.name;
  {
    auto csv = open_out(dir / (stem + ".csv"));
    write_path_csv(path, csv);
  }
  auto manifest = path_manifest(path, a.seed);
  manifest["initial"] = a.initial;
  write_json(dir / (stem + ".json"), manifest);
  if (a.log_events) {
    auto ev = open_out(dir / (stem + "_events.csv"));
    ev.precision(17);
    ev << "time,kind,group,parent,from,to\n";
    for (const auto& e : log.events())
      ev << e.time << ',' << to_string(e.kind) << ',' << e.group << ',' << e.parent << ',' << e.from_site << ','
         << e.to_site << '\n';
  }
  out << "simulate: " << path.events << " events, absorbed=" << (path.absorbed ? "yes" : "no") << ", wrote "
      << (dir / (stem + ".csv")).string() << '\n';
  return kExitOk;
}

int do_solve(const SolveArgs& a, const Common& c, std::ostream& out) {
  const LimitMeasure mu0 = parse_initial(a.initial, a.lambda);
  const auto states = trajectory(mu0, a.lambda, a.times);
  const fs::path dir = output_dir(c);
  const std::string stem = c.name.empty() ? "solve" : c.name;
  write_snapshots(dir / (stem + ".json"), dir / (stem + ".csv"), states, mu0,
                  {{"initial", a.initial}, {"lambda", a.lambda}}, a.grid);
  for (const auto& st : states)
    out << "t=" << st.t << " mean=" << mean(st.measure) << " W1(mu_t, mu_0)=" << wasserstein1(st.measure, mu0)
        << '\n';
  return kExitOk;
}

int do_classify(const std::string& initial, double lambda, const Common& c, std::ostream& out) {
  const LimitMeasure mu0 = parse_initial(initial, lambda);
  const TailDescriptor tail = tail_of(mu0);
  const LongTimeLimit lim = classify_longtime(tail, lambda);
  nlohmann::json j{{"initial", initial},
                   {"lambda", lambda},
                   {"tail", to_json(tail)},
                   {"verdict", kind_label(lim.kind)},
                   {"limit", lim.verdict()}};
  if (lim.beta) j["beta"] = {{"lambda", lim.beta->lambda()}, {"alpha", lim.beta->alpha()}};
  write_json(output_dir(c) / ((c.name.empty() ? "classify" : c.name) + ".json"), j);
  out << j.dump() << '\n';
  return kExitOk;
}

int do_oracle(const OracleArgs& a, const Common& c, std::ostream& out) {
  std::vector<SolutionState> states;
  const LimitMeasure mu0 = example_initial(a.example, a.lambda, a.params);
  for (double t : a.times) {
    SolutionState st{reference_solution(a.example, a.lambda, a.params, t), t, {}};
    h_of_t(st);
    states.push_back(std::move(st));
  }
  const fs::path dir = output_dir(c);
  const std::string stem = c.name.empty() ? "oracle" : c.name;
  write_snapshots(dir / (stem + ".json"), dir / (stem + ".csv"), states, mu0,
                  {{"example", a.example},
                   {"lambda", a.lambda},
                   {"params", {{"x0", a.params.x0}, {"c", a.params.c}, {"a", a.params.a}, {"alpha", a.params.alpha}}}},
                  a.grid);
  for (const auto& st : states) out << "t=" << st.t << " mean=" << mean(st.measure) << '\n';
  return kExitOk;
}

template <typename T>
void override_key(T& slot, const std::optional<T>& flag, const std::string& key, bool from_file, std::ostream& err) {
  if (!flag) return;
  if (from_file && !(slot == *flag)) err << "notice: --" << key << " overrides the config file value\n";
  slot = *flag;
}

int do_study(const StudyArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  if (a.config.empty() == a.kind.empty()) throw ValidationError("study needs exactly one of --config or --kind");
  const bool from_file = !a.config.empty();
  StudyConfig cfg = from_file ? load_study_config(a.config) : StudyConfig::defaults(study_kind_from_string(a.kind));
  override_key(cfg.seed, a.seed, "seed", from_file, err);
  override_key(cfg.replicas, a.replicas, "replicas", from_file, err);
  override_key(cfg.threads, a.threads, "threads", from_file, err);
  override_key(cfg.horizon, a.horizon, "horizon", from_file, err);
  override_key(cfg.initial, a.initial, "initial", from_file, err);
  if (!c.name.empty()) {
    if (from_file && !cfg.output.empty() && cfg.output != c.name)
      err << "notice: --name overrides the config file value\n";
    cfg.output = c.name;
  }
  cfg.validate();

  Progress progress;
  if (!c.quiet) progress = [&err, &cfg](const std::string& line) { err << to_string(cfg.kind) << ": " << line << '\n'; };
  const StudyResult res = run_study(cfg, progress);
  const fs::path dir = output_dir(c);
  persist(res, dir);
  if (c.verbosity > 0)
    for (const auto& row : res.rows) {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& [k, v] : row.columns) j[k] = v;
      err << j.dump() << '\n';
    }
  for (const auto& v : res.verdicts) out << to_string(v.level) << ' ' << v.name << ": " << v.detail << '\n';
  out << to_string(cfg.kind) << ": " << (res.passed() ? "passed" : "FAILED") << ", wrote "
      << (dir / (cfg.stem() + ".csv")).string() << '\n';
  return res.passed() ? kExitOk : kExitStudyFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-level selection: Moran chain simulation, limit solutions and studies", "twolevel"};
  app.require_subcommand(1, 1);
  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--out", common.out_dir,
                    std::string("Output directory (default: $") + kOutputEnv + " or the current directory)");
    sub->add_option("--name", common.name, "File stem of the outputs");
    sub->add_flag_function(
        "-v,--verbose", [&common](std::int64_t count) { common.verbosity = static_cast<int>(count); },
        "Also log each rung's row as JSON");
    sub->add_flag("-q,--quiet", common.quiet, "Suppress per-rung log lines");
  };

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "Run the two-level Moran chain and write a path CSV");
  s_sim->add_option("--m", sim.m, "Number of groups")->capture_default_str();
  s_sim->add_option("--n", sim.n, "Individuals per group")->capture_default_str();
  s_sim->add_option("--s", sim.s, "Individual selection coefficient")->capture_default_str();
  s_sim->add_option("--r", sim.r, "Group selection coefficient")->capture_default_str();
  s_sim->add_option("--w", sim.w, "Group to individual event rate ratio")->capture_default_str();
  s_sim->add_option("--time-factor", sim.time_factor, "Clock speed-up")->capture_default_str();
  s_sim->add_option("--T", sim.horizon, "Horizon")->capture_default_str();
  s_sim->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s_sim->add_option("--initial", sim.initial, "Initial measure")->capture_default_str();
  s_sim->add_option("--lambda", sim.lambda, "lambda for example initial measures")->capture_default_str();
  s_sim->add_option("--observables", sim.observables, "Test functions, e.g. x,x2,sin:1")->delimiter(',');
  s_sim->add_option("--samples", sim.samples, "Equally spaced sample times in (0, T]")->capture_default_str();
  s_sim->add_flag("--events", sim.log_events, "Also write the event log");
  add_common(s_sim);

  SolveArgs solve;
  auto* s_solve = app.add_subcommand("solve", "Evolve the deterministic limit and write snapshots");
  s_solve->add_option("--initial", solve.initial, "Initial measure")->required();
  s_solve->add_option("--lambda", solve.lambda, "lambda = w r / s")->required();
  s_solve->add_option("--times", solve.times, "Snapshot times, e.g. 0,1,10")->delimiter(',');
  s_solve->add_option("--grid", solve.grid, "CDF grid points in the CSV")->capture_default_str();
  add_common(s_solve);

  std::string cl_initial;
  double cl_lambda = 0.0;
  auto* s_cls = app.add_subcommand("classify", "Classify the long-time limit of an initial measure");
  s_cls->add_option("--initial", cl_initial, "Initial measure")->required();
  s_cls->add_option("--lambda", cl_lambda, "lambda = w r / s")->required();
  add_common(s_cls);

  StudyArgs study;
  auto* s_study = app.add_subcommand("study", "Run a study and write CSV and JSON results");
  s_study->add_option("--config", study.config, "YAML study config");
  s_study->add_option("--kind", study.kind,
                      "Run a study with default settings: det_convergence, qv_scaling, fv_martingale, "
                      "steady_state, quasi_invariance");
  s_study->add_option("--seed", study.seed, "Master seed (key: seed)");
  s_study->add_option("--replicas", study.replicas, "Replicas per rung (key: replicas)");
  s_study->add_option("--threads", study.threads, "Worker threads, 0 for all cores (key: threads)");
  s_study->add_option("--horizon", study.horizon, "Horizon T (key: horizon)");
  s_study->add_option("--initial", study.initial, "Initial measure (key: initial)");
  add_common(s_study);

  OracleArgs oracle;
  auto* s_or = app.add_subcommand("oracle", "Write closed-form reference solutions of examples 1-5");
  s_or->add_option("--example", oracle.example, "Example number 1-5")->required();
  s_or->add_option("--lambda", oracle.lambda, "lambda = w r / s")->required();
  s_or->add_option("--times", oracle.times, "Snapshot times")->delimiter(',');
  s_or->add_option("--x0", oracle.params.x0, "Example 1 atom position")->capture_default_str();
  s_or->add_option("--c", oracle.params.c, "Example 4 support bound")->capture_default_str();
  s_or->add_option("--a", oracle.params.a, "Example 5 atom mass")->capture_default_str();
  s_or->add_option("--alpha", oracle.params.alpha, "Example 5 tail exponent")->capture_default_str();
  s_or->add_option("--grid", oracle.grid, "CDF grid points in the CSV")->capture_default_str();
  add_common(s_or);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (s_sim->parsed()) return do_simulate(sim, common, out);
    if (s_solve->parsed()) return do_solve(solve, common, out);
    if (s_cls->parsed()) return do_classify(cl_initial, cl_lambda, common, out);
    if (s_study->parsed()) return do_study(study, common, out, err);
    return do_oracle(oracle, common, out);
  } catch (const ResolutionError& e) {
    err << "resolution error: " << e.what() << '\n';
    return kExitResolution;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace twolevel
