#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "twolevel/fleming_viot.hpp"

namespace twolevel {

enum class StudyKind { DetConvergence, QvScaling, FvMartingale, SteadyState, QuasiInvariance };
std::string_view to_string(StudyKind kind);
StudyKind study_kind_from_string(std::string_view s);

struct StudyConfig {
  StudyKind kind = StudyKind::DetConvergence;
  std::vector<std::pair<int, int>> ladder;  // (m, n) rungs
  // chain model
  double s = 1.0;
  double r = 3.0;
  double w = 1.0;
  double time_factor = 1.0;  // qv_scaling only; det_convergence uses 1/s
  FVParams fv{1.0, 1.0, 1.0, 1.0};
  // limit model
  double lambda = 3.0;
  double alpha = 1.0;  // quasi_invariance: Beta(lambda - alpha, alpha)
  std::string initial = "uniform";
  std::string observable = "x";
  double horizon = 1.0;
  std::vector<double> horizons{1.0, 2.0, 5.0, 10.0, 20.0};  // steady_state
  std::size_t replicas = 50;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  // verdict settings
  double final_threshold = 0.05;  // det_convergence, steady_state
  double slack_se = 1.0;          // monotonicity slack in standard errors
  double slope_target = -1.0;     // qv_scaling
  double slope_tolerance = 0.2;
  double exit_threshold = 0.1;    // quasi_invariance W1 radius
  FVStudyTolerances fv_tolerances;
  std::string output;  // file stem; defaults to the kind name

  /// Kind-specific defaults for everything not given explicitly.
  static StudyConfig defaults(StudyKind kind);
  void validate() const;
  std::string stem() const { return output.empty() ? std::string(to_string(kind)) : output; }
};

/// YAML with nested sections `model`, `fv` and `verdict`. Unknown keys are
/// rejected by name.
StudyConfig load_study_config(const std::filesystem::path& path);
StudyConfig parse_study_config(const std::string& yaml_text);
nlohmann::json to_json(const StudyConfig& cfg);

/// One ladder rung (or one horizon for steady_state). Columns are ordered.
struct StudyRow {
  std::vector<std::pair<std::string, nlohmann::json>> columns;
  double wall_seconds = 0.0;

  double at(std::string_view key) const;
};

struct Verdict {
  enum class Level { Pass, Warn, Fail };
  std::string name;
  Level level;
  std::string detail;
};
std::string_view to_string(Verdict::Level level);

struct StudyResult {
  StudyConfig config;
  std::vector<StudyRow> rows;
  std::vector<Verdict> verdicts;
  std::vector<std::pair<std::string, nlohmann::json>> summary;  // e.g. fitted slope
  std::vector<std::vector<double>> samples;  // per row, raw replica statistics
  double wall_seconds = 0.0;

  /// No verdict at Fail level.
  bool passed() const;
};

/// Receives one line per finished rung.
using Progress = std::function<void(const std::string&)>;

StudyResult det_convergence_study(const StudyConfig& cfg, const Progress& progress = {});
StudyResult qv_scaling_study(const StudyConfig& cfg, const Progress& progress = {});
StudyResult steady_state_study(const StudyConfig& cfg, const Progress& progress = {});
StudyResult quasi_invariance_study(const StudyConfig& cfg, const Progress& progress = {});
StudyResult fv_martingale_wrapper(const StudyConfig& cfg, const Progress& progress = {});
StudyResult run_study(const StudyConfig& cfg, const Progress& progress = {});

/// Rows as CSV, wall clock excluded, so equal configs give equal bytes.
void write_result_csv(const StudyResult& result, std::ostream& out);
/// Config, rows, verdicts, summary and timings.
nlohmann::json result_manifest(const StudyResult& result);
/// Writes <dir>/<stem>.csv and <dir>/<stem>.json.
void persist(const StudyResult& result, const std::filesystem::path& dir);

/// Least-squares slope of y on x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

/// First time the W1 distance between the chain's empirical measure and
/// `target` exceeds `threshold`, or `horizon` if it never does. Checked after
/// every event.
double w1_exit_time(const ChainState& initial, const ChainParams& params, const GridMeasure& target, double threshold,
                    double horizon, Rng& rng);

}  // namespace twolevel
