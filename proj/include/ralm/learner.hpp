#pragma once

// RALM training and evaluation loops. The critic (RPP) scores each transition;
// its centre delta is written onto per-input action planes, which decide what
// data survives into the ALM fit (offline) or steer the rule lines (online).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ralm/actor.hpp"
#include "ralm/alm.hpp"
#include "ralm/critic.hpp"
#include "ralm/envs.hpp"
#include "ralm/error.hpp"
#include "ralm/fuzzy.hpp"
#include "ralm/grid_plane.hpp"

namespace ralm {

struct Transition {
  std::vector<double> prev_inputs;
  double prev_action = 0.0;
  StatePoint prev_point, cur_point;
};

/// One plane per input (input_i vs action) holding the running mean of the
/// window-weighted deltas written to each cell.
class ActionPlaneSet {
 public:
  ActionPlaneSet() = default;
  ActionPlaneSet(const std::vector<Interval>& input_ranges, Interval action_range, int nx = 64, int ny = 64) {
    for (const auto& r : input_ranges) {
      planes_.emplace_back(GridSpec::over(r, action_range, nx, ny));
      sums_.emplace_back(planes_.back().spec());
      counts_.emplace_back(static_cast<std::size_t>(nx) * ny, 0);
    }
  }

  int inputs() const { return static_cast<int>(planes_.size()); }
  const Plane& plane(int i) const { return planes_[i]; }
  const std::vector<Plane>& planes() const { return planes_; }
  std::uint64_t count(int i, Cell c) const { return counts_[i][slot(i, c)]; }

  double value(int i, double x, double action) const { return planes_[i].value_at(x, action); }

  void add(int i, double x, double action, const InkWindow& window, double delta) {
    const Cell center = planes_[i].cell_of(x, action);
    for_each_in_window(planes_[i].spec(), center, window, [&](Cell c, double w) {
      if (w <= 0.0) return;
      double& sum = sums_[i].at(c.ix, c.iy);
      std::uint64_t& n = counts_[i][slot(i, c)];
      sum += w * delta;
      ++n;
      planes_[i].at(c.ix, c.iy) = sum / static_cast<double>(n);
    });
  }

 private:
  std::size_t slot(int i, Cell c) const { return static_cast<std::size_t>(c.iy) * planes_[i].nx() + c.ix; }

  std::vector<Plane> planes_;
  std::vector<Plane> sums_;
  std::vector<std::vector<std::uint64_t>> counts_;
};

inline void update_action_planes(ActionPlaneSet& aps, const Transition& tr, double delta, const InkWindow& window) {
  detail::require_finite(delta, "update_action_planes delta");
  detail::require_finite(tr.prev_action, "transition action");
  if (static_cast<int>(tr.prev_inputs.size()) != aps.inputs())
    throw InputError("update_action_planes: transition arity mismatch");
  for (int i = 0; i < aps.inputs(); ++i) aps.add(i, tr.prev_inputs[i], tr.prev_action, window, delta);
}

/// Keeps the samples that sit on a non-negative cell of every action plane.
inline Dataset filter_data(const Dataset& ds, const ActionPlaneSet& aps) {
  if (ds.inputs() != aps.inputs()) throw InputError("filter_data: dataset and planes differ in inputs");
  Dataset out;
  out.input_ranges = ds.input_ranges;
  out.output_range = ds.output_range;
  for (const auto& s : ds.samples) {
    bool keep = true;
    for (int i = 0; i < aps.inputs() && keep; ++i) keep = aps.value(i, s.inputs[i], s.output) >= 0.0;
    if (keep) out.samples.push_back(s);
  }
  if (out.samples.empty())
    throw EmptyDataError("filter_data: every sample was filtered out; run more exploration episodes");
  return out;
}

enum class TrainMode { Offline, Online };

// Which delta is written onto the action planes: the critic's lambda-scaled
// centre delta, or the unscaled value change V(cur) - V(prev).
enum class PlaneDelta { Scaled, Raw };

struct TrainConfig {
  TrainMode mode = TrainMode::Offline;
  int episodes = 5000;         // offline sequences
  int episode_steps = 500;     // cap per sequence
  long max_steps = 50000;      // online budget
  RPPConfig rpp;
  SAMConfig sam;               // sam.seed seeds the whole run
  ALMConfig alm;
  int plane_nx = 64, plane_ny = 64;
  InkWindow plane_window;
  PlaneDelta plane_delta = PlaneDelta::Scaled;
  int refresh_period = 50;
  int stable_steps = 1000;
  double seed_ink = 1.0;       // prior ink along the seed system's lines
  bool learn = true;           // online: false runs the seed system unchanged
  long guard_after = 0;        // divergence guard; off while guard_fraction >= 1
  int guard_window = 5000;
  double guard_fraction = 1.0;
  std::vector<std::vector<double>> start_states;  // cycled instead of random starts
  bool log_trajectory = true;

  void validate() const {
    rpp.validate();
    sam.validate();
    alm.validate();
    if (episodes < 0 || episode_steps <= 0 || max_steps <= 0) throw ConfigError("train limits must be positive");
    if (plane_nx < 2 || plane_ny < 2) throw ConfigError("action plane grid needs at least 2 cells per axis");
    if (refresh_period <= 0 || stable_steps <= 0) throw ConfigError("refresh period and stable steps must be positive");
    if (!(seed_ink > 0.0)) throw ConfigError("seed ink must be positive");
    if (guard_window <= 0 || !(guard_fraction > 0.0)) throw ConfigError("divergence guard settings invalid");
  }
};

/// Builds the critic geometry for an environment: e spans the controlled
/// variable's range, ce spans the rate range times dt; the reward box is given
/// in input units (controlled, rate).
template <ControlEnv Env>
RPPConfig rpp_config_for(const Env& env, const std::vector<Interval>& reward_inputs, RPPConfig base = {}) {
  const auto ranges = env.input_ranges();
  if (reward_inputs.size() != 2) throw ConfigError("reward area needs (controlled, rate) intervals");
  const double dt = env.dt();
  base.e_range = ranges[0];
  base.ce_range = {ranges[1].lo * dt, ranges[1].hi * dt};
  base.reward_e = reward_inputs[0];
  base.reward_ce = {reward_inputs[1].lo * dt, reward_inputs[1].hi * dt};
  return base;
}

/// Reward area in input units, the inverse of rpp_config_for.
inline std::vector<Interval> reward_inputs_of(const RPPConfig& rpp, double dt) {
  return {rpp.reward_e, {rpp.reward_ce.lo / dt, rpp.reward_ce.hi / dt}};
}

struct LogRow {
  long step = 0;
  double t = 0.0;
  std::vector<double> inputs;
  double action = 0.0;
  StatePoint point;
  double rpp_value = 0.0;
  double delta = 0.0;
  RegionKind region = RegionKind::Play;
};

struct Metrics {
  std::optional<double> rise_time;  // empty when never reached
  double overshoot = 0.0;           // percent
  long success_count = 0;
  long steps_to_stable = -1;        // -1 when never stable
  long episodes = 0;
  long steps = 0;
  double success_rate = 0.0;
  std::vector<LogRow> trajectory;
};

namespace detail {

template <ControlEnv Env>
std::vector<double> random_play_start(const Env& env, const RPP& rpp, RngStream& rng) {
  const auto ranges = env.input_ranges();
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::vector<double> obs(ranges.size());
    for (std::size_t i = 0; i < ranges.size(); ++i) obs[i] = rng.uniform(ranges[i].lo, ranges[i].hi);
    if (rpp.region(StatePoint{obs[0], obs[1] * env.dt()}) == RegionKind::Play) return obs;
  }
  throw ConfigError("could not sample a play-area start state");
}

class StartSampler {
 public:
  explicit StartSampler(const std::vector<std::vector<double>>& fixed) : fixed_(fixed) {}

  template <ControlEnv Env>
  std::vector<double> next(const Env& env, const RPP& rpp, RngStream& rng) {
    if (!fixed_.empty()) return fixed_[cursor_++ % fixed_.size()];
    return random_play_start(env, rpp, rng);
  }

 private:
  const std::vector<std::vector<double>>& fixed_;
  std::size_t cursor_ = 0;
};

}  // namespace detail

struct OfflineResult {
  FuzzySystem system;
  RPP rpp;
  ActionPlaneSet planes;
  Dataset data;
  Dataset filtered;
  Metrics metrics;
  std::vector<std::string> log;
};

/// Offline RALM: random actions, critic and action-plane updates per step,
/// then negative-area filtering and an ALM fit of the surviving data.
template <ControlEnv Env>
OfflineResult train_offline(Env env, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.episodes == 0) throw EmptyDataError("train_offline: zero episodes yield no data");
  RngStream rng(cfg.sam.seed);
  RPP rpp(cfg.rpp);
  const Interval act = env.action_range();
  ActionPlaneSet aps(env.input_ranges(), act, cfg.plane_nx, cfg.plane_ny);
  Dataset data;
  data.input_ranges = env.input_ranges();
  data.output_range = act;
  Metrics metrics;
  detail::StartSampler starts(cfg.start_states);
  StatePointTracker tracker;
  long step = 0;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    env.reset(starts.next(env, rpp, rng));
    tracker.prime(env.controlled() - env.rate() * env.dt());
    StatePoint prev = tracker.update(env.controlled());
    bool succeeded = false;
    for (int k = 0; k < cfg.episode_steps; ++k) {
      Transition tr;
      tr.prev_inputs = env.observe();
      tr.prev_action = rng.uniform(act.lo, act.hi);
      env.step(tr.prev_action);
      tr.prev_point = prev;
      tr.cur_point = tracker.update(env.controlled());
      const double raw = rpp.value(tr.cur_point) - rpp.value(tr.prev_point);
      const double delta = rpp.td_update(tr.prev_point, tr.cur_point);
      update_action_planes(aps, tr, cfg.plane_delta == PlaneDelta::Raw ? raw : delta, cfg.plane_window);
      data.samples.push_back({tr.prev_inputs, tr.prev_action});
      ++step;

      const RegionKind region = rpp.region(tr.cur_point);
      if (cfg.log_trajectory)
        metrics.trajectory.push_back({step, (k + 1) * env.dt(), tr.prev_inputs, tr.prev_action, tr.cur_point,
                                      rpp.value(tr.cur_point), delta, region});
      if (region == RegionKind::Reward) succeeded = true;
      if (region == RegionKind::Penalty) break;
      prev = tr.cur_point;
    }
    metrics.success_count += succeeded;
  }
  metrics.episodes = cfg.episodes;
  metrics.steps = step;
  metrics.success_rate = static_cast<double>(metrics.success_count) / cfg.episodes;

  Dataset filtered = filter_data(data, aps);
  AlmModel model = alm_fit_model(filtered, cfg.alm);
  return {std::move(model.system), std::move(rpp), std::move(aps), std::move(data), std::move(filtered),
          std::move(metrics), std::move(model.log)};
}

/// A rule base fitted to the saturated linear law a = clamp(kp*in_0 + kd*in_1)
/// on a dense grid, split `depth` times (2^depth rules). Used as the online
/// seed; negative gains give a controller pushing the wrong way.
inline FuzzySystem linear_law_system(const std::vector<Interval>& input_ranges, Interval action_range, double kp,
                                     double kd, int depth = 2, int grid = 41) {
  if (input_ranges.size() != 2) throw ConfigError("linear_law_system needs two inputs");
  if (grid < 2) throw ConfigError("linear_law_system grid needs at least 2 points");
  Dataset ds;
  ds.input_ranges = input_ranges;
  ds.output_range = action_range;
  for (int a = 0; a < grid; ++a)
    for (int b = 0; b < grid; ++b) {
      const double x0 = input_ranges[0].lo + input_ranges[0].width() * a / (grid - 1);
      const double x1 = input_ranges[1].lo + input_ranges[1].width() * b / (grid - 1);
      ds.samples.push_back({{x0, x1}, action_range.clamp(kp * x0 + kd * x1)});
    }
  ALMConfig cfg;
  // A threshold far below any spread forces the full depth.
  cfg.spread_threshold = 1e-9 * action_range.width();
  cfg.max_depth = depth;
  return alm_fit(ds, cfg);
}

struct OnlineResult {
  FuzzySystem system;
  RPP rpp;
  Metrics metrics;
  std::vector<std::string> log;
};

/// Online RALM: the seed system acts (reward-scaled inside the reward area),
/// the modifier explores, deltas are inked onto the system's backing planes and
/// the lines are re-extracted every refresh period. Stops once `stable_steps`
/// consecutive penalty-free steps are seen or the budget runs out.
template <ControlEnv Env>
OnlineResult train_online(Env env, const FuzzySystem& seed_fs, const TrainConfig& cfg) {
  cfg.validate();
  seed_fs.validate();
  RngStream rng(cfg.sam.seed);
  RPP rpp(cfg.rpp);
  const Interval act = env.action_range();
  const auto reward_in = reward_inputs_of(cfg.rpp, env.dt());

  FuzzySystem fs = seed_fs;
  if (!fs.backing_planes)
    fs.backing_planes = seed_backing_planes(fs, cfg.plane_nx, cfg.plane_ny, cfg.plane_window, cfg.seed_ink);
  FuzzySystem scaled = scale_for_reward(fs, reward_in);

  Metrics metrics;
  std::vector<std::string> log;
  detail::StartSampler starts(cfg.start_states);
  StatePointTracker tracker;
  std::deque<long> penalty_steps;
  bool dirty = false;
  long run_start = 1, run_length = 0, episode_step = 0;

  auto new_episode = [&] {
    env.reset(starts.next(env, rpp, rng));
    tracker.prime(env.controlled() - env.rate() * env.dt());
    ++metrics.episodes;
    episode_step = 0;
    return tracker.update(env.controlled());
  };
  StatePoint prev = new_episode();

  for (long step = 1; step <= cfg.max_steps; ++step) {
    const std::vector<double> obs = env.observe();
    const bool in_reward = rpp.region(prev) == RegionKind::Reward;
    const double asn = infer(in_reward ? scaled : fs, obs);
    const double action = act.clamp(modulate(asn, rpp.value(prev), cfg.sam, rng));
    env.step(action);
    const StatePoint cur = tracker.update(env.controlled());
    const double raw = rpp.value(cur) - rpp.value(prev);
    const double delta = rpp.td_update(prev, cur);
    const double ink = cfg.plane_delta == PlaneDelta::Raw ? raw : delta;
    ++episode_step;

    if (cfg.learn && ink != 0.0) {
      auto& planes = *fs.backing_planes;
      for (int i = 0; i < fs.inputs(); ++i) drop_ink(planes[i], obs[i], action, cfg.plane_window, ink);
      dirty = true;
    }
    if (cfg.learn && dirty && step % cfg.refresh_period == 0) {
      fs = refresh_lines(fs, &log);
      scaled = scale_for_reward(fs, reward_in);
      dirty = false;
    }

    const RegionKind region = rpp.region(cur);
    if (region == RegionKind::Reward) ++metrics.success_count;
    if (cfg.log_trajectory)
      metrics.trajectory.push_back(
          {step, episode_step * env.dt(), obs, action, cur, rpp.value(cur), delta, region});
    metrics.steps = step;

    if (region == RegionKind::Penalty) {
      penalty_steps.push_back(step);
      run_start = step + 1;
      run_length = 0;
    } else if (++run_length >= cfg.stable_steps) {
      metrics.steps_to_stable = run_start;
      break;
    }

    while (!penalty_steps.empty() && penalty_steps.front() <= step - cfg.guard_window) penalty_steps.pop_front();
    if (cfg.guard_fraction < 1.0 && step > cfg.guard_after &&
        static_cast<double>(penalty_steps.size()) / cfg.guard_window > cfg.guard_fraction)
      throw TrainingAbort("online training diverging: " + std::to_string(penalty_steps.size()) +
                          " penalty entries in the last " + std::to_string(cfg.guard_window) + " steps at step " +
                          std::to_string(step));

    if (region == RegionKind::Penalty || episode_step >= cfg.episode_steps)
      prev = new_episode();
    else
      prev = cur;
  }
  if (metrics.steps > 0) metrics.success_rate = static_cast<double>(metrics.success_count) / metrics.steps;
  return {std::move(fs), std::move(rpp), std::move(metrics), std::move(log)};
}

struct EvalConfig {
  double horizon = 10.0;  // seconds per rollout
  bool reward_scaling = true;
};

struct Rollout {
  std::vector<double> start;
  std::optional<double> rise_time;
  double overshoot = 0.0;
  bool success = false;
  std::vector<LogRow> trajectory;
};

struct EvalResult {
  Metrics metrics;  // rise_time: mean over successes; overshoot: worst success
  std::vector<Rollout> rollouts;
};

/// Rise time: first time after which |e| stays inside the reward band.
/// Overshoot: largest excursion past the setpoint beyond the band, in percent
/// of the largest displacement seen.
inline void score_rollout(Rollout& r, const std::vector<double>& e, double dt, Interval band) {
  r.rise_time.reset();
  r.overshoot = 0.0;
  if (e.empty()) return;
  long last_out = -1;
  for (long k = 0; k < static_cast<long>(e.size()); ++k)
    if (!band.contains(e[k])) last_out = k;
  if (last_out + 1 < static_cast<long>(e.size())) r.rise_time = (last_out + 1) * dt;

  // Reference is the largest excursion; overshoot is anything on the far side
  // of the setpoint, beyond the band, after it.
  std::size_t k_peak = 0;
  for (std::size_t k = 1; k < e.size(); ++k)
    if (std::abs(e[k]) > std::abs(e[k_peak])) k_peak = k;
  const double peak = e[k_peak];
  if (peak == 0.0) return;
  double worst = 0.0;
  for (std::size_t k = k_peak; k < e.size(); ++k) worst = std::max(worst, peak > 0.0 ? band.lo - e[k] : e[k] - band.hi);
  r.overshoot = 100.0 * worst / std::abs(peak);
}

/// Closed-loop rollouts without exploration noise.
template <ControlEnv Env>
EvalResult evaluate(Env env, const FuzzySystem& fs, const std::vector<std::vector<double>>& starts,
                    const RPPConfig& rpp_cfg, const EvalConfig& ecfg = {}) {
  fs.validate();
  const RPP rpp(rpp_cfg);
  const FuzzySystem scaled = scale_for_reward(fs, reward_inputs_of(rpp_cfg, env.dt()));
  const long horizon = std::lround(ecfg.horizon / env.dt());
  EvalResult res;
  double rise_sum = 0.0;
  for (const auto& start : starts) {
    Rollout ro;
    ro.start = start;
    env.reset(start);
    StatePointTracker tracker;
    tracker.prime(env.controlled() - env.rate() * env.dt());
    StatePoint sp = tracker.update(env.controlled());
    std::vector<double> errors{sp.e};
    for (long k = 1; k <= horizon; ++k) {
      const std::vector<double> obs = env.observe();
      const bool in_reward = ecfg.reward_scaling && rpp.region(sp) == RegionKind::Reward;
      const double action = env.action_range().clamp(infer(in_reward ? scaled : fs, obs));
      env.step(action);
      sp = tracker.update(env.controlled());
      errors.push_back(sp.e);
      ro.trajectory.push_back({k, k * env.dt(), obs, action, sp, rpp.value(sp), 0.0, rpp.region(sp)});
    }
    score_rollout(ro, errors, env.dt(), rpp_cfg.reward_e);
    // Leaving the observed error range counts as lost even if the plant later
    // comes back (a pole that falls and swings through the bottom).
    const bool stayed = std::all_of(errors.begin(), errors.end(), [&](double e) { return rpp_cfg.e_range.contains(e); });
    ro.success = stayed && ro.rise_time.has_value() && rpp.region(sp) == RegionKind::Reward;
    if (ro.success) {
      ++res.metrics.success_count;
      rise_sum += *ro.rise_time;
      res.metrics.overshoot = std::max(res.metrics.overshoot, ro.overshoot);
    }
    res.rollouts.push_back(std::move(ro));
  }
  res.metrics.episodes = static_cast<long>(starts.size());
  res.metrics.steps = horizon * static_cast<long>(starts.size());
  if (!starts.empty()) res.metrics.success_rate = static_cast<double>(res.metrics.success_count) / starts.size();
  if (res.metrics.success_count > 0) res.metrics.rise_time = rise_sum / res.metrics.success_count;
  return res;
}

/// Random play-area starts for evaluation.
template <ControlEnv Env>
std::vector<std::vector<double>> play_area_starts(const Env& env, const RPPConfig& rpp_cfg, int count,
                                                  std::uint64_t seed) {
  RngStream rng(seed);
  const RPP rpp(rpp_cfg);
  std::vector<std::vector<double>> out;
  for (int k = 0; k < count; ++k) out.push_back(detail::random_play_start(env, rpp, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Logs

inline void write_trajectory_csv(std::ostream& os, const std::vector<LogRow>& rows, int inputs) {
  os << "step,t";
  for (int i = 0; i < inputs; ++i) os << ",in_" << i;
  os << ",action,e,ce,rpp_value,delta,region\n";
  for (const auto& r : rows) {
    os << r.step << ',' << detail::fmt_real(r.t);
    for (double v : r.inputs) os << ',' << detail::fmt_real(v);
    os << ',' << detail::fmt_real(r.action) << ',' << detail::fmt_real(r.point.e) << ','
       << detail::fmt_real(r.point.ce) << ',' << detail::fmt_real(r.rpp_value) << ','
       << detail::fmt_real(r.delta) << ',' << region_letter(r.region) << '\n';
  }
}

inline void write_metrics_csv(std::ostream& os, const Metrics& m) {
  os << "rise_time,overshoot,success_count,steps_to_stable,episodes,steps,success_rate\n";
  os << (m.rise_time ? detail::fmt_real(*m.rise_time) : std::string("unreached")) << ','
     << detail::fmt_real(m.overshoot) << ',' << m.success_count << ',' << m.steps_to_stable << ','
     << m.episodes << ',' << m.steps << ',' << detail::fmt_real(m.success_rate) << '\n';
}

}  // namespace ralm
