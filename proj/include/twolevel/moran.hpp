#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "twolevel/measures.hpp"
#include "twolevel/rng.hpp"
#include "twolevel/test_function.hpp"

namespace twolevel {

/// m groups of n individuals; type I has individual advantage s, groups rich
/// in type G have replication advantage r; w scales group events relative to
/// individual ones. time_factor multiplies every rate, so recorded times are
/// in the units of the limit being compared against.
struct ChainParams {
  int m = 1;
  int n = 1;
  double s = 0.0;
  double r = 0.0;
  double w = 1.0;
  double time_factor = 1.0;

  void validate() const;
  bool operator==(const ChainParams&) const = default;
};

nlohmann::json to_json(const ChainParams& p);
ChainParams chain_params_from_json(const nlohmann::json& j);

/// Type-G count of each group.
struct ChainState {
  std::vector<int> counts;
  double time = 0.0;

  void validate(const ChainParams& p) const;
};

enum class EventKind { IndivUp, IndivDown, GroupCopy };
std::string_view to_string(EventKind kind);

struct EventRecord {
  double time;
  EventKind kind;
  int group;       // the group whose count is replaced or moved
  int parent;      // copied group for GroupCopy, -1 otherwise
  int from_site;   // count of `group` before the event
  int to_site;     // count of `group` after the event
};

class EventLog {
 public:
  /// Event times must be strictly increasing.
  void append(const EventRecord& e);
  const std::vector<EventRecord>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool operator==(const EventLog& o) const;

 private:
  std::vector<EventRecord> events_;
};

/// Unscaled transition rates of the current state.
struct RateTable {
  std::vector<double> up;    // per group, k(n-k)/n
  std::vector<double> down;  // per group, (1+s)k(n-k)/n
  double up_total = 0.0;
  double down_total = 0.0;
  double group_total = 0.0;  // sum over ordered (victim, parent) pairs, i = j included
  double total = 0.0;
};

RateTable event_rates(const ChainState& state, const ChainParams& params);

/// Rate at which `victim` is overwritten by a copy of `parent`: (w/m)(1 + r k_parent/n).
double group_copy_rate(const ChainState& state, const ChainParams& params, int victim, int parent);

/// Absorbing: no individual events possible and every group identical.
bool is_absorbed(const ChainState& state, const ChainParams& params);

/// Exact event-driven simulator.
///
/// Groups are kept in per-count buckets with Fenwick trees over the
/// count-indexed weights c_k k(n-k) and c_k k, so one event costs O(log n)
/// regardless of m.
class MoranChain {
 public:
  MoranChain(ChainParams params, ChainState state);

  const ChainParams& params() const { return params_; }
  const std::vector<int>& counts() const { return counts_; }
  /// Number of groups at each count 0..n.
  const std::vector<int>& occupancy() const { return occupancy_; }
  double time() const { return time_; }
  ChainState state() const { return {counts_, time_}; }

  /// Unscaled total rate.
  double total_rate() const;
  bool absorbed() const;

  /// Performs one event. Returns nullopt, leaving the state untouched, when absorbed.
  std::optional<EventRecord> step(Rng& rng);
  /// As step(), but if the next event would fall after `horizon` the clock is
  /// set to `horizon` and nullopt is returned. The exponential clock is
  /// memoryless, so discarding the overshooting draw is exact.
  std::optional<EventRecord> step_until(double horizon, Rng& rng);

 private:
  class Fenwick {
   public:
    explicit Fenwick(int size = 0) : tree_(size + 1, 0) {}
    void add(int i, std::int64_t delta);
    std::int64_t total() const { return total_; }
    /// Smallest i with prefix(i) > target.
    int find(std::int64_t target) const;

   private:
    std::vector<std::int64_t> tree_;
    std::int64_t total_ = 0;
  };

  EventRecord draw_event(Rng& rng);
  void move(int group, int to);
  int pick_in_bucket(int site, Rng& rng) const;

  ChainParams params_;
  std::vector<int> counts_;
  double time_;
  std::vector<int> occupancy_;
  std::vector<std::vector<int>> buckets_;
  std::vector<int> slot_;
  Fenwick individual_;  // c_k k (n - k)
  Fenwick type_g_;      // c_k k
};

struct StepResult {
  ChainState state;
  std::optional<EventRecord> event;
  bool absorbed = false;
};

/// One exact step from `state`.
StepResult gillespie_step(const ChainState& state, const ChainParams& params, Rng& rng);

GridMeasure empirical_measure(const ChainState& state, const ChainParams& params);
GridMeasure empirical_measure(const std::vector<int>& occupancy, int m);

/// Drift a(f) of <f, mu> under the unscaled generator:
///   sum_k mu_k x(1-x) [(1/n) D_xx f - s D^- f] + w r (<x f> - <f><x>),  x = k/n.
double drift_functional(const ChainState& state, const ChainParams& params, const TestFunction& f);
/// Quadratic-variation rate of <f, mu> under the unscaled generator:
///   (1/m) { (1/n) sum_k mu_k x(1-x) [(D^+ f)^2 + (1+s)(D^- f)^2]
///           + w sum_{i,j} mu_i mu_j (1 + r j/n) (f(i/n) - f(j/n))^2 }.
double qv_functional(const ChainState& state, const ChainParams& params, const TestFunction& f);

/// O(1) drift and QV rates of one observable, maintained from the occupancy.
class ObservableTracker {
 public:
  ObservableTracker(const TestFunction& f, const ChainParams& params);

  void reset(const std::vector<int>& occupancy);
  void move(int from, int to);

  double value() const;
  double drift() const;
  double qv() const;
  /// <f^2, mu> - <f, mu>^2.
  double variance() const;

 private:
  struct Sums {
    double f = 0, f2 = 0, x = 0, xf = 0, xf2 = 0, a = 0, b = 0;
  };
  void add(int site, double sign);

  ChainParams params_;
  std::vector<double> f_, a_, b_;
  Sums sums_;
};

/// Sampled observables with the running integrals of their drift and QV rates.
/// Integrals are in recorded time and unscaled; multiply by time_factor to
/// obtain generator units.
struct PathRecord {
  ChainParams params;
  std::vector<std::string> observable_ids;
  std::vector<double> sample_times;
  std::vector<double> initial_values;                    // per observable at t = 0
  std::vector<std::vector<double>> values;               // [observable][sample]
  std::vector<std::vector<double>> drift_integral;       // int_0^t a(f)
  std::vector<std::vector<double>> qv_integral;          // int_0^t qv(f)
  std::vector<std::vector<double>> variance_integral;    // int_0^t (<f^2> - <f>^2)
  ChainState initial_state;
  ChainState final_state;
  std::uint64_t events = 0;
  bool absorbed = false;
};

struct SimulateOptions {
  EventLog* log = nullptr;
  /// Tracker sums are recomputed from the occupancy after this many events.
  std::uint64_t rebuild_interval = 4096;
};

/// Draws m i.i.d. group counts from `initial` and runs to `horizon`.
PathRecord simulate(const GridMeasure& initial, const ChainParams& params, double horizon,
                    const std::vector<TestFunction>& observables, std::vector<double> sample_times, Rng& rng,
                    const SimulateOptions& options = {});
/// Runs from a given state.
PathRecord simulate_from(const ChainState& initial, const ChainParams& params, double horizon,
                         const std::vector<TestFunction>& observables, std::vector<double> sample_times, Rng& rng,
                         const SimulateOptions& options = {});

struct SeriesPoint {
  double t;
  double value;
};

/// M_t = <f, mu_t> - <f, mu_0> - time_factor * int_0^t a(f) at each sample time.
std::vector<SeriesPoint> martingale_residual(const PathRecord& path, const ChainParams& params, const TestFunction& f);
/// time_factor * int_0^t qv(f): the predictable quadratic variation of M.
std::vector<SeriesPoint> accumulated_qv(const PathRecord& path, const ChainParams& params, const TestFunction& f);

/// CSV with columns time, observable_id, value; the t = 0 row comes first.
void write_path_csv(const PathRecord& path, std::ostream& out);
nlohmann::json path_manifest(const PathRecord& path, std::uint64_t seed);

}  // namespace twolevel
