#pragma once

// Run configuration: flat `key = value` text with dotted sections, per-env
// presets, and the conversion into the library's config structs. One key
// table drives parsing, serialization and override handling, so a parsed
// file always serializes back to the same set of keys.

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ralm/actor.hpp"
#include "ralm/alm.hpp"
#include "ralm/critic.hpp"
#include "ralm/envs.hpp"
#include "ralm/error.hpp"
#include "ralm/learner.hpp"

namespace ralm {

struct WindowConfig {
  WindowShape shape = WindowShape::Pyramid;
  int rx = 3, ry = 3;

  InkWindow window() const { return InkWindow(shape, rx, ry); }
  friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

struct RunConfig {
  std::string env = "pendulum";
  std::string mode = "offline";
  std::uint64_t seed = 1;
  std::string out = "out";

  EnvParams env_params;

  // Reward area in input units: controlled variable and its rate.
  Interval reward_e{-0.23, 0.23};
  Interval reward_rate{-0.98, 0.98};

  double penalty_fraction = 0.9;
  double penalty_value = -0.5;
  double lambda_reward = 0.9;
  double lambda_penalty = 0.05;
  WindowConfig rpp_window{WindowShape::Pyramid, 24, 24};
  int rpp_nx = 64, rpp_ny = 64;

  double sam_var = 100.0;
  double sam_alpha = 2.0;

  double alm_threshold = 1.0;
  int alm_depth = 3;
  int alm_nx = 64, alm_ny = 64;
  WindowConfig alm_window;

  int episodes = 5000;
  int episode_steps = 500;
  long max_steps = 50000;
  int plane_nx = 64, plane_ny = 64;
  WindowConfig plane_window{WindowShape::Pyramid, 2, 2};
  PlaneDelta plane_delta = PlaneDelta::Scaled;
  int refresh_period = 50;
  int stable_steps = 1000;
  double seed_ink = 0.001;
  bool learn = true;
  long guard_after = 0;
  int guard_window = 5000;
  double guard_fraction = 1.0;

  // Online seed: a rule-base file, or (when empty) a 4-rule fit of the law
  // a = clamp(kp * in_0 + kd * in_1). Negative gains give the sign-flipped seed.
  std::string seed_model;
  double seed_kp = -40.0;
  double seed_kd = -10.0;

  double eval_horizon = 10.0;
  int eval_starts = 50;
  std::uint64_t eval_seed = 99;
  bool eval_reward_scaling = true;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Defaults for each plant. Everything here can be overridden by keys.
inline RunConfig preset(std::string_view env) {
  RunConfig c;
  if (env == "pendulum") {
    c.env = "pendulum";
    c.env_params.pendulum.force_max = 25.0;
    return c;
  }
  if (env == "ballbeam") {
    c.env = "ballbeam";
    c.env_params.ballbeam.speed_max = 0.75;
    c.reward_e = {-0.15, 0.15};
    c.reward_rate = {-0.2, 0.2};
    c.alm_threshold = 0.04;
    c.alm_depth = 2;
    c.episodes = 2000;
    c.episode_steps = 300;
    c.sam_var = 0.01;
    c.seed_kp = -1.0;
    c.seed_kd = -1.0;
    c.eval_starts = 20;
    return c;
  }
  throw ConfigError("unknown env '" + std::string(env) + "' (expected pendulum or ballbeam)");
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline WindowShape parse_shape(const std::string& key, const std::string& v) {
  if (v == "pyramid") return WindowShape::Pyramid;
  if (v == "gaussian") return WindowShape::Gaussian;
  throw ConfigError(key + ": expected pyramid or gaussian, got '" + v + "'");
}

inline std::string shape_name(WindowShape s) { return s == WindowShape::Pyramid ? "pyramid" : "gaussian"; }

struct KeyBinding {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

inline std::vector<KeyBinding> bindings(RunConfig& c) {
  std::vector<KeyBinding> b;
  auto real = [&b](std::string key, double& f) {
    b.push_back({key, [&f] { return fmt_real(f); }, [key, &f](const std::string& v) { f = parse_real(key, v); }});
  };
  auto integer = [&b](std::string key, auto& f) {
    using T = std::remove_reference_t<decltype(f)>;
    b.push_back({key, [&f] { return std::to_string(f); },
                 [key, &f](const std::string& v) { f = parse_int<T>(key, v); }});
  };
  auto flag = [&b](std::string key, bool& f) {
    b.push_back({key, [&f] { return std::string(f ? "true" : "false"); },
                 [key, &f](const std::string& v) { f = parse_bool(key, v); }});
  };
  auto text = [&b](std::string key, std::string& f) {
    b.push_back({key, [&f] { return f; }, [&f](const std::string& v) { f = v; }});
  };
  auto window = [&](const std::string& prefix, WindowConfig& w) {
    b.push_back({prefix, [&w] { return shape_name(w.shape); },
                 [prefix, &w](const std::string& v) { w.shape = parse_shape(prefix, v); }});
    integer(prefix + "_rx", w.rx);
    integer(prefix + "_ry", w.ry);
  };

  text("env", c.env);
  text("mode", c.mode);
  integer("seed", c.seed);
  text("out", c.out);

  real("env.dt", c.env_params.dt);
  real("env.cart_mass", c.env_params.pendulum.cart_mass);
  real("env.pole_mass", c.env_params.pendulum.pole_mass);
  real("env.pole_half_length", c.env_params.pendulum.half_length);
  real("env.gravity", c.env_params.pendulum.gravity);
  real("env.force_max", c.env_params.pendulum.force_max);
  real("env.theta_max", c.env_params.pendulum.theta_max);
  real("env.theta_dot_max", c.env_params.pendulum.theta_dot_max);
  real("env.ball_factor", c.env_params.ballbeam.ball_factor);
  real("env.ball_gravity", c.env_params.ballbeam.gravity);
  real("env.beam_half_length", c.env_params.ballbeam.half_length);
  real("env.angle_max", c.env_params.ballbeam.angle_max);
  real("env.speed_max", c.env_params.ballbeam.speed_max);

  real("reward.e_min", c.reward_e.lo);
  real("reward.e_max", c.reward_e.hi);
  real("reward.rate_min", c.reward_rate.lo);
  real("reward.rate_max", c.reward_rate.hi);

  real("rpp.penalty_fraction", c.penalty_fraction);
  real("rpp.penalty_value", c.penalty_value);
  real("rpp.lambda_reward", c.lambda_reward);
  real("rpp.lambda_penalty", c.lambda_penalty);
  window("rpp.window", c.rpp_window);
  integer("rpp.nx", c.rpp_nx);
  integer("rpp.ny", c.rpp_ny);

  real("sam.var", c.sam_var);
  real("sam.alpha", c.sam_alpha);

  real("alm.spread_threshold", c.alm_threshold);
  integer("alm.max_depth", c.alm_depth);
  integer("alm.nx", c.alm_nx);
  integer("alm.ny", c.alm_ny);
  window("alm.window", c.alm_window);

  integer("train.episodes", c.episodes);
  integer("train.episode_steps", c.episode_steps);
  integer("train.max_steps", c.max_steps);
  integer("train.plane_nx", c.plane_nx);
  integer("train.plane_ny", c.plane_ny);
  window("train.plane_window", c.plane_window);
  b.push_back({"train.plane_delta", [&c] { return std::string(c.plane_delta == PlaneDelta::Raw ? "raw" : "scaled"); },
               [&c](const std::string& v) {
                 if (v == "raw")
                   c.plane_delta = PlaneDelta::Raw;
                 else if (v == "scaled")
                   c.plane_delta = PlaneDelta::Scaled;
                 else
                   throw ConfigError("train.plane_delta: expected scaled or raw, got '" + v + "'");
               }});
  integer("train.refresh_period", c.refresh_period);
  integer("train.stable_steps", c.stable_steps);
  real("train.seed_ink", c.seed_ink);
  flag("train.learn", c.learn);
  integer("train.guard_after", c.guard_after);
  integer("train.guard_window", c.guard_window);
  real("train.guard_fraction", c.guard_fraction);

  text("online.seed_model", c.seed_model);
  real("online.seed_kp", c.seed_kp);
  real("online.seed_kd", c.seed_kd);

  real("eval.horizon", c.eval_horizon);
  integer("eval.starts", c.eval_starts);
  integer("eval.start_seed", c.eval_seed);
  flag("eval.reward_scaling", c.eval_reward_scaling);
  return b;
}

}  // namespace detail

/// Applies one `key = value` assignment. Unknown keys are rejected.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& kb : detail::bindings(c))
    if (kb.key == key) return kb.set(value);
  throw ConfigError("unknown config key '" + key + "'");
}

/// Parses a config text. The `env` key (wherever it appears) picks the preset
/// the remaining keys are applied on top of; repeated keys are an error.
inline RunConfig parse_config(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(std::string_view(t).substr(0, eq));
    std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    for (const auto& [k, v] : kv)
      if (k == key) throw ConfigError("config key '" + key + "' given twice");
    kv.emplace_back(std::move(key), std::move(value));
  }
  std::string env = "pendulum";
  for (const auto& [k, v] : kv)
    if (k == "env") env = v;
  RunConfig c = preset(env);
  for (const auto& [k, v] : kv) set_key(c, k, v);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

/// Every key, in a fixed order.
inline void write_config(std::ostream& os, const RunConfig& c) {
  RunConfig copy = c;
  for (const auto& kb : detail::bindings(copy)) os << kb.key << " = " << kb.get() << '\n';
}

inline std::string to_string(const RunConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

inline RPPConfig rpp_base(const RunConfig& c) {
  RPPConfig r;
  r.penalty_fraction = c.penalty_fraction;
  r.penalty_value = c.penalty_value;
  r.lambda_reward = c.lambda_reward;
  r.lambda_penalty = c.lambda_penalty;
  r.window = c.rpp_window.window();
  r.nx = c.rpp_nx;
  r.ny = c.rpp_ny;
  return r;
}

template <ControlEnv Env>
TrainConfig train_config(const RunConfig& c, const Env& env) {
  TrainConfig t;
  t.mode = c.mode == "online" ? TrainMode::Online : TrainMode::Offline;
  t.episodes = c.episodes;
  t.episode_steps = c.episode_steps;
  t.max_steps = c.max_steps;
  t.rpp = rpp_config_for(env, {c.reward_e, c.reward_rate}, rpp_base(c));
  t.sam = SAMConfig{c.sam_var, c.sam_alpha, c.seed};
  t.alm.spread_threshold = c.alm_threshold;
  t.alm.max_depth = c.alm_depth;
  t.alm.nx = c.alm_nx;
  t.alm.ny = c.alm_ny;
  t.alm.window = c.alm_window.window();
  t.plane_nx = c.plane_nx;
  t.plane_ny = c.plane_ny;
  t.plane_window = c.plane_window.window();
  t.plane_delta = c.plane_delta;
  t.refresh_period = c.refresh_period;
  t.stable_steps = c.stable_steps;
  t.seed_ink = c.seed_ink;
  t.learn = c.learn;
  t.guard_after = c.guard_after;
  t.guard_window = c.guard_window;
  t.guard_fraction = c.guard_fraction;
  return t;
}

inline EvalConfig eval_config(const RunConfig& c) { return EvalConfig{c.eval_horizon, c.eval_reward_scaling}; }

/// Whole-config validation, run before anything touches the file system.
inline void validate(const RunConfig& c) {
  if (c.env != "pendulum" && c.env != "ballbeam") throw ConfigError("env must be pendulum or ballbeam");
  if (c.mode != "offline" && c.mode != "online") throw ConfigError("mode must be offline or online");
  if (c.out.empty()) throw ConfigError("out must not be empty");
  c.env_params.validate();
  if (!(c.eval_horizon > 0.0) || c.eval_starts <= 0) throw ConfigError("eval horizon and start count must be positive");
  auto check = [&](const auto& env) {
    const auto ranges = env.input_ranges();
    if (!(c.reward_e.lo >= ranges[0].lo && c.reward_e.hi <= ranges[0].hi && c.reward_rate.lo >= ranges[1].lo &&
          c.reward_rate.hi <= ranges[1].hi))
      throw ConfigError("reward area must lie inside the input ranges");
    train_config(c, env).validate();
  };
  if (c.env == "pendulum")
    check(PendulumEnv(c.env_params));
  else
    check(BallBeamEnv(c.env_params));
}

}  // namespace ralm
