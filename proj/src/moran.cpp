#include "twolevel/moran.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>

#include "twolevel/errors.hpp"

namespace twolevel {

namespace {

std::vector<int> occupancy_of(const std::vector<int>& counts, int n) {
  std::vector<int> c(n + 1, 0);
  for (int k : counts) ++c[k];
  return c;
}

}  // namespace

// -- parameters and state ------------------------------------------------------

void ChainParams::validate() const {
  if (m < 1) throw ValidationError("m must be a positive integer");
  if (n < 1) throw ValidationError("n must be a positive integer");
  if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("s must be finite and >= 0");
  if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("r must be finite and >= 0");
  if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("w must be finite and > 0");
  if (!(time_factor > 0.0) || !std::isfinite(time_factor)) throw ValidationError("time_factor must be finite and > 0");
}

nlohmann::json to_json(const ChainParams& p) {
  return {{"m", p.m}, {"n", p.n}, {"s", p.s}, {"r", p.r}, {"w", p.w}, {"time_factor", p.time_factor}};
}

ChainParams chain_params_from_json(const nlohmann::json& j) {
  ChainParams p;
  try {
    p.m = j.at("m").get<int>();
    p.n = j.at("n").get<int>();
    p.s = j.value("s", 0.0);
    p.r = j.value("r", 0.0);
    p.w = j.value("w", 1.0);
    p.time_factor = j.value("time_factor", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("chain parameters: ") + e.what());
  }
  p.validate();
  return p;
}

void ChainState::validate(const ChainParams& p) const {
  if (static_cast<int>(counts.size()) != p.m)
    throw ValidationError("state has " + std::to_string(counts.size()) + " groups, expected m=" + std::to_string(p.m));
  for (int k : counts)
    if (k < 0 || k > p.n) throw ValidationError("group count " + std::to_string(k) + " outside [0, n]");
  if (!(time >= 0.0) || !std::isfinite(time)) throw ValidationError("state time must be finite and >= 0");
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::IndivUp:
      return "IndivUp";
    case EventKind::IndivDown:
      return "IndivDown";
    case EventKind::GroupCopy:
      break;
  }
  return "GroupCopy";
}

void EventLog::append(const EventRecord& e) {
  if (!events_.empty() && !(e.time > events_.back().time)) throw ValidationError("event times must increase");
  events_.push_back(e);
}

bool EventLog::operator==(const EventLog& o) const {
  if (events_.size() != o.events_.size()) return false;
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto &a = events_[i], &b = o.events_[i];
    if (a.time != b.time || a.kind != b.kind || a.group != b.group || a.parent != b.parent ||
        a.from_site != b.from_site || a.to_site != b.to_site)
      return false;
  }
  return true;
}

// -- rates ---------------------------------------------------------------------

RateTable event_rates(const ChainState& state, const ChainParams& params) {
  params.validate();
  state.validate(params);
  RateTable t;
  const double n = params.n;
  double total_g = 0.0;
  for (int k : state.counts) {
    const double base = k * (n - k) / n;
    t.up.push_back(base);
    t.down.push_back((1.0 + params.s) * base);
    t.up_total += base;
    t.down_total += (1.0 + params.s) * base;
    total_g += k;
  }
  t.group_total = params.w * (params.m + params.r * total_g / n);
  t.total = t.up_total + t.down_total + t.group_total;
  return t;
}

double group_copy_rate(const ChainState& state, const ChainParams& params, int victim, int parent) {
  if (victim < 0 || victim >= params.m || parent < 0 || parent >= params.m)
    throw ValidationError("group index out of range");
  return params.w / params.m * (1.0 + params.r * state.counts[parent] / params.n);
}

bool is_absorbed(const ChainState& state, const ChainParams& params) {
  const int first = state.counts.front();
  if (first != 0 && first != params.n) return false;
  return std::all_of(state.counts.begin(), state.counts.end(), [first](int k) { return k == first; });
}

// -- engine --------------------------------------------------------------------

void MoranChain::Fenwick::add(int i, std::int64_t delta) {
  total_ += delta;
  const int size = static_cast<int>(tree_.size()) - 1;
  for (int j = i + 1; j <= size; j += j & -j) tree_[j] += delta;
}

int MoranChain::Fenwick::find(std::int64_t target) const {
  const int size = static_cast<int>(tree_.size()) - 1;
  int pos = 0;
  for (int step = std::bit_floor(static_cast<unsigned>(size)); step > 0; step >>= 1) {
    if (pos + step <= size && tree_[pos + step] <= target) {
      pos += step;
      target -= tree_[pos];
    }
  }
  return pos;
}

MoranChain::MoranChain(ChainParams params, ChainState state)
    : params_(params), counts_(std::move(state.counts)), time_(state.time) {
  params_.validate();
  ChainState{counts_, time_}.validate(params_);
  const int n = params_.n;
  occupancy_.assign(n + 1, 0);
  buckets_.assign(n + 1, {});
  slot_.assign(counts_.size(), 0);
  individual_ = Fenwick(n + 1);
  type_g_ = Fenwick(n + 1);
  for (int g = 0; g < params_.m; ++g) {
    const int k = counts_[g];
    slot_[g] = static_cast<int>(buckets_[k].size());
    buckets_[k].push_back(g);
    ++occupancy_[k];
    individual_.add(k, static_cast<std::int64_t>(k) * (n - k));
    type_g_.add(k, k);
  }
}

double MoranChain::total_rate() const {
  const double n = params_.n;
  return (2.0 + params_.s) * static_cast<double>(individual_.total()) / n +
         params_.w * (params_.m + params_.r * static_cast<double>(type_g_.total()) / n);
}

bool MoranChain::absorbed() const {
  return individual_.total() == 0 && (occupancy_[0] == params_.m || occupancy_[params_.n] == params_.m);
}

int MoranChain::pick_in_bucket(int site, Rng& rng) const {
  const auto& b = buckets_[site];
  return b[rng.index(b.size())];
}

void MoranChain::move(int group, int to) {
  const int from = counts_[group];
  if (from == to) return;
  const int n = params_.n;
  auto& src = buckets_[from];
  const int last = src.back();
  src[slot_[group]] = last;
  slot_[last] = slot_[group];
  src.pop_back();
  slot_[group] = static_cast<int>(buckets_[to].size());
  buckets_[to].push_back(group);
  --occupancy_[from];
  ++occupancy_[to];
  individual_.add(from, -static_cast<std::int64_t>(from) * (n - from));
  individual_.add(to, static_cast<std::int64_t>(to) * (n - to));
  type_g_.add(from, -from);
  type_g_.add(to, to);
  counts_[group] = to;
}

EventRecord MoranChain::draw_event(Rng& rng) {
  const double n = params_.n;
  const double ind = (2.0 + params_.s) * static_cast<double>(individual_.total()) / n;
  const double base = params_.m;
  const double extra = params_.r * static_cast<double>(type_g_.total()) / n;
  const double grp = params_.w * (base + extra);
  EventRecord e{time_, EventKind::GroupCopy, -1, -1, 0, 0};
  if (rng.uniform() * (ind + grp) < ind) {
    const int site = individual_.find(static_cast<std::int64_t>(rng.index(individual_.total())));
    e.group = pick_in_bucket(site, rng);
    const bool up = rng.uniform() * (2.0 + params_.s) < 1.0;
    e.kind = up ? EventKind::IndivUp : EventKind::IndivDown;
    e.from_site = site;
    e.to_site = up ? site + 1 : site - 1;
  } else {
    e.group = static_cast<int>(rng.index(params_.m));
    if (rng.uniform() * (base + extra) < base) {
      e.parent = static_cast<int>(rng.index(params_.m));
    } else {
      const int site = type_g_.find(static_cast<std::int64_t>(rng.index(type_g_.total())));
      e.parent = pick_in_bucket(site, rng);
    }
    e.from_site = counts_[e.group];
    e.to_site = counts_[e.parent];
  }
  return e;
}

std::optional<EventRecord> MoranChain::step(Rng& rng) {
  if (absorbed()) return std::nullopt;
  time_ += rng.exponential(total_rate() * params_.time_factor);
  EventRecord e = draw_event(rng);
  e.time = time_;
  move(e.group, e.to_site);
  return e;
}

std::optional<EventRecord> MoranChain::step_until(double horizon, Rng& rng) {
  if (absorbed()) {
    time_ = std::max(time_, horizon);
    return std::nullopt;
  }
  const double next = time_ + rng.exponential(total_rate() * params_.time_factor);
  if (next > horizon) {
    time_ = std::max(time_, horizon);
    return std::nullopt;
  }
  time_ = next;
  EventRecord e = draw_event(rng);
  e.time = time_;
  move(e.group, e.to_site);
  return e;
}

StepResult gillespie_step(const ChainState& state, const ChainParams& params, Rng& rng) {
  MoranChain chain(params, state);
  auto e = chain.step(rng);
  return {chain.state(), e, !e.has_value()};
}

// -- functionals ---------------------------------------------------------------

GridMeasure empirical_measure(const std::vector<int>& occupancy, int m) {
  if (m < 1 || occupancy.size() < 2) throw ValidationError("empirical measure needs m >= 1 and n >= 1");
  Eigen::VectorXd w(occupancy.size());
  for (std::size_t k = 0; k < occupancy.size(); ++k) w(k) = static_cast<double>(occupancy[k]) / m;
  return GridMeasure(static_cast<int>(occupancy.size()) - 1, std::move(w));
}

GridMeasure empirical_measure(const ChainState& state, const ChainParams& params) {
  state.validate(params);
  return empirical_measure(occupancy_of(state.counts, params.n), params.m);
}

double drift_functional(const ChainState& state, const ChainParams& params, const TestFunction& f) {
  params.validate();
  state.validate(params);
  const int n = params.n;
  const double nd = n;
  const auto occ = occupancy_of(state.counts, n);
  std::vector<double> fv(n + 1), mu(n + 1);
  for (int k = 0; k <= n; ++k) {
    fv[k] = f(k / nd);
    mu[k] = static_cast<double>(occ[k]) / params.m;
  }
  double individual = 0.0, xf = 0.0, ff = 0.0, xx = 0.0;
  for (int k = 0; k <= n; ++k) {
    if (mu[k] == 0.0) continue;
    const double x = k / nd;
    xf += mu[k] * x * fv[k];
    ff += mu[k] * fv[k];
    xx += mu[k] * x;
    if (k == 0 || k == n) continue;
    const double dxx = nd * nd * (fv[k + 1] - 2.0 * fv[k] + fv[k - 1]);
    const double dminus = nd * (fv[k] - fv[k - 1]);
    individual += mu[k] * x * (1.0 - x) * (dxx / nd - params.s * dminus);
  }
  return individual + params.w * params.r * (xf - ff * xx);
}

double qv_functional(const ChainState& state, const ChainParams& params, const TestFunction& f) {
  params.validate();
  state.validate(params);
  const int n = params.n;
  const double nd = n;
  const auto occ = occupancy_of(state.counts, n);
  std::vector<double> fv(n + 1), mu(n + 1);
  for (int k = 0; k <= n; ++k) {
    fv[k] = f(k / nd);
    mu[k] = static_cast<double>(occ[k]) / params.m;
  }
  double individual = 0.0;
  for (int k = 1; k < n; ++k) {
    if (mu[k] == 0.0) continue;
    const double x = k / nd;
    const double dplus = nd * (fv[k + 1] - fv[k]);
    const double dminus = nd * (fv[k] - fv[k - 1]);
    individual += mu[k] * x * (1.0 - x) * (dplus * dplus + (1.0 + params.s) * dminus * dminus);
  }
  double group = 0.0;
  for (int i = 0; i <= n; ++i) {
    if (mu[i] == 0.0) continue;
    for (int j = 0; j <= n; ++j) {
      if (mu[j] == 0.0) continue;
      const double d = fv[i] - fv[j];
      group += mu[i] * mu[j] * (1.0 + params.r * j / nd) * d * d;
    }
  }
  return (individual / nd + params.w * group) / params.m;
}

// -- tracker -------------------------------------------------------------------

ObservableTracker::ObservableTracker(const TestFunction& f, const ChainParams& params) : params_(params) {
  params_.validate();
  const int n = params_.n;
  const double nd = n;
  f_.resize(n + 1);
  a_.assign(n + 1, 0.0);
  b_.assign(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) {
    f_[k] = f(k / nd);
    if (!std::isfinite(f_[k]))
      throw EvaluationError("test function '" + f.name() + "' is not finite at x=" + std::to_string(k / nd));
  }
  for (int k = 1; k < n; ++k) {
    const double x = k / nd;
    const double up = f_[k + 1] - f_[k], down = f_[k] - f_[k - 1];
    a_[k] = x * (1.0 - x) * nd * (up - (1.0 + params_.s) * down);
    b_[k] = x * (1.0 - x) * nd * (up * up + (1.0 + params_.s) * down * down);
  }
}

void ObservableTracker::add(int site, double sign) {
  const double x = static_cast<double>(site) / params_.n;
  const double v = f_[site];
  sums_.f += sign * v;
  sums_.f2 += sign * v * v;
  sums_.x += sign * x;
  sums_.xf += sign * x * v;
  sums_.xf2 += sign * x * v * v;
  sums_.a += sign * a_[site];
  sums_.b += sign * b_[site];
}

void ObservableTracker::reset(const std::vector<int>& occupancy) {
  sums_ = {};
  Sums acc;
  for (std::size_t k = 0; k < occupancy.size(); ++k) {
    if (occupancy[k] == 0) continue;
    const double c = occupancy[k];
    const double x = static_cast<double>(k) / params_.n;
    const double v = f_[k];
    acc.f += c * v;
    acc.f2 += c * v * v;
    acc.x += c * x;
    acc.xf += c * x * v;
    acc.xf2 += c * x * v * v;
    acc.a += c * a_[k];
    acc.b += c * b_[k];
  }
  sums_ = acc;
}

void ObservableTracker::move(int from, int to) {
  if (from == to) return;
  add(from, -1.0);
  add(to, 1.0);
}

double ObservableTracker::value() const { return sums_.f / params_.m; }

double ObservableTracker::drift() const {
  const double m = params_.m;
  return sums_.a / m + params_.w * params_.r * (sums_.xf / m - (sums_.f / m) * (sums_.x / m));
}

double ObservableTracker::qv() const {
  const double m = params_.m;
  const double f = sums_.f / m, f2 = sums_.f2 / m, x = sums_.x / m, xf = sums_.xf / m, xf2 = sums_.xf2 / m;
  const double group = 2.0 * (f2 - f * f) + params_.r * (f2 * x - 2.0 * f * xf + xf2);
  return std::max(0.0, (sums_.b / m + params_.w * group) / m);
}

double ObservableTracker::variance() const {
  const double m = params_.m;
  const double f = sums_.f / m;
  return std::max(0.0, sums_.f2 / m - f * f);
}

// -- simulation ----------------------------------------------------------------

PathRecord simulate_from(const ChainState& initial, const ChainParams& params, double horizon,
                         const std::vector<TestFunction>& observables, std::vector<double> sample_times, Rng& rng,
                         const SimulateOptions& options) {
  params.validate();
  initial.validate(params);
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be finite and >= 0");
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (!(sample_times[i] >= initial.time && sample_times[i] <= horizon))
      throw ValidationError("sample times must lie in [0, horizon]");
    if (i > 0 && sample_times[i] < sample_times[i - 1]) throw ValidationError("sample times must be nondecreasing");
  }
  if (options.rebuild_interval == 0) throw ValidationError("rebuild interval must be positive");

  PathRecord rec;
  rec.params = params;
  rec.sample_times = std::move(sample_times);
  rec.initial_state = initial;
  const std::size_t nobs = observables.size();
  for (const auto& f : observables) rec.observable_ids.push_back(f.name());
  rec.values.assign(nobs, {});
  rec.drift_integral.assign(nobs, {});
  rec.qv_integral.assign(nobs, {});
  rec.variance_integral.assign(nobs, {});

  MoranChain chain(params, initial);
  std::vector<ObservableTracker> trackers;
  trackers.reserve(nobs);
  for (const auto& f : observables) {
    trackers.emplace_back(f, params);
    trackers.back().reset(chain.occupancy());
    rec.initial_values.push_back(trackers.back().value());
  }
  std::vector<double> drift_acc(nobs, 0.0), qv_acc(nobs, 0.0), var_acc(nobs, 0.0);
  std::size_t next = 0;
  const auto& times = rec.sample_times;

  // The state is frozen on [t0, t1); samples in that window see it.
  auto record = [&](double t0, double t1, bool inclusive) {
    while (next < times.size() && (times[next] < t1 || (inclusive && times[next] <= t1))) {
      const double dt = times[next] - t0;
      for (std::size_t o = 0; o < nobs; ++o) {
        rec.values[o].push_back(trackers[o].value());
        rec.drift_integral[o].push_back(drift_acc[o] + trackers[o].drift() * dt);
        rec.qv_integral[o].push_back(qv_acc[o] + trackers[o].qv() * dt);
        rec.variance_integral[o].push_back(var_acc[o] + trackers[o].variance() * dt);
      }
      ++next;
    }
    for (std::size_t o = 0; o < nobs; ++o) {
      drift_acc[o] += trackers[o].drift() * (t1 - t0);
      qv_acc[o] += trackers[o].qv() * (t1 - t0);
      var_acc[o] += trackers[o].variance() * (t1 - t0);
    }
  };

  while (true) {
    const double t0 = chain.time();
    const auto e = chain.step_until(horizon, rng);
    if (!e) {
      record(t0, chain.time(), true);
      break;
    }
    record(t0, e->time, false);
    for (auto& tr : trackers) tr.move(e->from_site, e->to_site);
    if (options.log) options.log->append(*e);
    ++rec.events;
    if (rec.events % options.rebuild_interval == 0)
      for (auto& tr : trackers) tr.reset(chain.occupancy());
  }
  rec.absorbed = chain.absorbed();
  rec.final_state = chain.state();
  return rec;
}

PathRecord simulate(const GridMeasure& initial, const ChainParams& params, double horizon,
                    const std::vector<TestFunction>& observables, std::vector<double> sample_times, Rng& rng,
                    const SimulateOptions& options) {
  params.validate();
  if (initial.n() != params.n)
    throw ValidationError("initial measure lives on n=" + std::to_string(initial.n()) + ", chain has n=" +
                          std::to_string(params.n));
  ChainState state{sample(initial, static_cast<std::size_t>(params.m), rng), 0.0};
  return simulate_from(state, params, horizon, observables, std::move(sample_times), rng, options);
}

namespace {

std::size_t observable_index(const PathRecord& path, const ChainParams& params, const TestFunction& f) {
  if (!(path.params == params)) throw ValidationError("path was recorded with different chain parameters");
  const auto it = std::find(path.observable_ids.begin(), path.observable_ids.end(), f.name());
  if (it == path.observable_ids.end()) throw ValidationError("observable '" + f.name() + "' was not recorded");
  const auto o = static_cast<std::size_t>(it - path.observable_ids.begin());
  const std::size_t k = path.sample_times.size();
  if (path.values.at(o).size() != k || path.drift_integral.at(o).size() != k || path.qv_integral.at(o).size() != k)
    throw ValidationError("observable '" + f.name() + "' does not match the sample grid");
  return o;
}

}  // namespace

std::vector<SeriesPoint> martingale_residual(const PathRecord& path, const ChainParams& params, const TestFunction& f) {
  const auto o = observable_index(path, params, f);
  std::vector<SeriesPoint> out;
  out.reserve(path.sample_times.size());
  for (std::size_t k = 0; k < path.sample_times.size(); ++k)
    out.push_back({path.sample_times[k], path.values[o][k] - path.initial_values[o] -
                                             params.time_factor * path.drift_integral[o][k]});
  return out;
}

std::vector<SeriesPoint> accumulated_qv(const PathRecord& path, const ChainParams& params, const TestFunction& f) {
  const auto o = observable_index(path, params, f);
  std::vector<SeriesPoint> out;
  out.reserve(path.sample_times.size());
  for (std::size_t k = 0; k < path.sample_times.size(); ++k)
    out.push_back({path.sample_times[k], params.time_factor * path.qv_integral[o][k]});
  return out;
}

void write_path_csv(const PathRecord& path, std::ostream& out) {
  const auto old = out.precision(17);
  out << "time,observable_id,value\n";
  for (std::size_t o = 0; o < path.observable_ids.size(); ++o)
    out << 0.0 << ',' << path.observable_ids[o] << ',' << path.initial_values[o] << '\n';
  for (std::size_t k = 0; k < path.sample_times.size(); ++k)
    for (std::size_t o = 0; o < path.observable_ids.size(); ++o)
      out << path.sample_times[k] << ',' << path.observable_ids[o] << ',' << path.values[o][k] << '\n';
  out.precision(old);
}

nlohmann::json path_manifest(const PathRecord& path, std::uint64_t seed) {
  return {{"params", to_json(path.params)},
          {"seed", seed},
          {"observables", path.observable_ids},
          {"sample_times", path.sample_times},
          {"initial_counts", path.initial_state.counts},
          {"final_counts", path.final_state.counts},
          {"final_time", path.final_state.time},
          {"events", path.events},
          {"absorbed", path.absorbed}};
}

}  // namespace twolevel
