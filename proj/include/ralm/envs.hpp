#pragma once

// Fixed-step plants: cart-pole (force in, pole angle and rate observed) and
// ball-and-beam (beam angle in, ball position and speed observed).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ralm/critic.hpp"
#include "ralm/error.hpp"
#include "ralm/grid_plane.hpp"

namespace ralm {

struct PendulumParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double gravity = 9.8;
  double force_max = 10.0;
  double theta_max = 0.9;      // observed angle range +-theta_max
  double theta_dot_max = 2.0;  // observed rate range

  void validate() const {
    for (double v : {cart_mass, pole_mass, half_length, gravity, force_max, theta_max, theta_dot_max})
      if (!(std::isfinite(v) && v > 0.0)) throw ConfigError("pendulum parameters must be positive");
  }
  friend bool operator==(const PendulumParams&, const PendulumParams&) = default;
};

struct BallBeamParams {
  double ball_factor = 5.0 / 7.0;  // solid ball rolling without slip
  double gravity = 9.8;
  double half_length = 1.0;
  double angle_max = 0.25;
  double speed_max = 1.0;  // observed speed range

  void validate() const {
    for (double v : {ball_factor, gravity, half_length, angle_max, speed_max})
      if (!(std::isfinite(v) && v > 0.0)) throw ConfigError("ball-beam parameters must be positive");
  }
  friend bool operator==(const BallBeamParams&, const BallBeamParams&) = default;
};

struct EnvParams {
  PendulumParams pendulum;
  BallBeamParams ballbeam;
  double dt = 0.021;

  void validate() const {
    if (!(std::isfinite(dt) && dt > 0.0)) throw ConfigError("env dt must be positive");
    pendulum.validate();
    ballbeam.validate();
  }
  friend bool operator==(const EnvParams&, const EnvParams&) = default;
};

struct PendulumState {
  double theta = 0.0;      // rad, 0 = upright
  double theta_dot = 0.0;  // rad/s
  double x = 0.0;          // cart position, not observed
  double x_dot = 0.0;

  friend bool operator==(const PendulumState&, const PendulumState&) = default;
};

struct BallBeamState {
  double r = 0.0;  // m from the pivot
  double v = 0.0;  // m/s

  friend bool operator==(const BallBeamState&, const BallBeamState&) = default;
};

inline double wrap_angle(double a) {
  if (a > std::numbers::pi || a < -std::numbers::pi) a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

/// Frictionless cart-pole accelerations (theta_dd, x_dd). Positive force
/// pushes the cart toward +x and tips the pole toward -theta.
inline std::pair<double, double> pendulum_accel(const PendulumState& s, double force, const PendulumParams& p) {
  const double total = p.cart_mass + p.pole_mass;
  const double sin_t = std::sin(s.theta), cos_t = std::cos(s.theta);
  const double temp = (force + p.pole_mass * p.half_length * s.theta_dot * s.theta_dot * sin_t) / total;
  const double theta_acc = (p.gravity * sin_t - cos_t * temp) /
                           (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total));
  const double x_acc = temp - p.pole_mass * p.half_length * theta_acc * cos_t / total;
  return {theta_acc, x_acc};
}

/// One semi-implicit Euler step: velocities first, positions from the new
/// velocities, so the step's position change already reflects the force.
inline PendulumState pendulum_step(const PendulumState& s, double force, double dt, const PendulumParams& p) {
  for (double v : {s.theta, s.theta_dot, s.x, s.x_dot, force})
    if (!std::isfinite(v)) throw InputError("pendulum_step: non-finite state or force");
  if (!(dt > 0.0)) throw InputError("pendulum_step: dt must be positive");
  force = std::clamp(force, -p.force_max, p.force_max);
  const auto [theta_acc, x_acc] = pendulum_accel(s, force, p);
  PendulumState n;
  n.x_dot = s.x_dot + dt * x_acc;
  n.x = s.x + dt * n.x_dot;
  n.theta_dot = s.theta_dot + dt * theta_acc;
  n.theta = wrap_angle(s.theta + dt * n.theta_dot);
  return n;
}

/// Kinetic plus potential energy of cart and pole (pole as a uniform rod).
inline double pendulum_energy(const PendulumState& s, const PendulumParams& p) {
  const double m = p.pole_mass, l = p.half_length;
  const double kinetic = 0.5 * (p.cart_mass + m) * s.x_dot * s.x_dot +
                         m * l * s.x_dot * s.theta_dot * std::cos(s.theta) +
                         0.5 * (4.0 / 3.0) * m * l * l * s.theta_dot * s.theta_dot;
  return kinetic + m * p.gravity * l * std::cos(s.theta);
}

/// r'' = -k g sin(angle), semi-implicit Euler (so r_{k+1} - r_k = v_{k+1} dt);
/// the ball stops at the beam ends.
inline BallBeamState ballbeam_step(const BallBeamState& s, double angle, double dt, const BallBeamParams& p) {
  for (double v : {s.r, s.v, angle})
    if (!std::isfinite(v)) throw InputError("ballbeam_step: non-finite state or angle");
  if (!(dt > 0.0)) throw InputError("ballbeam_step: dt must be positive");
  angle = std::clamp(angle, -p.angle_max, p.angle_max);
  const double acc = -p.ball_factor * p.gravity * std::sin(angle);
  const double v = s.v + dt * acc;
  BallBeamState n{s.r + dt * v, v};
  if (std::abs(n.r) >= p.half_length) {
    n.r = std::copysign(p.half_length, n.r);
    n.v = 0.0;
  }
  return n;
}

/// Error and per-step change in error of the controlled variable (setpoint 0).
/// The first point after reset has ce = 0.
class StatePointTracker {
 public:
  void reset() { has_prev_ = false; }

  /// Seeds the previous error, e.g. e0 - rate * dt right after a reset.
  void prime(double previous) {
    detail::require_finite(previous, "state point history");
    prev_ = previous;
    has_prev_ = true;
  }

  StatePoint update(double controlled) {
    detail::require_finite(controlled, "state point observation");
    StatePoint sp{controlled, has_prev_ ? controlled - prev_ : 0.0};
    prev_ = controlled;
    has_prev_ = true;
    return sp;
  }

 private:
  bool has_prev_ = false;
  double prev_ = 0.0;
};

/// What the learner needs from a plant: two observed inputs (controlled
/// variable and its rate), one bounded action.
template <typename E>
concept ControlEnv = requires(E env, const E cenv, std::span<const double> obs, double a) {
  { cenv.observe() } -> std::same_as<std::vector<double>>;
  { cenv.controlled() } -> std::convertible_to<double>;
  { cenv.rate() } -> std::convertible_to<double>;
  { cenv.input_ranges() } -> std::same_as<std::vector<Interval>>;
  { cenv.action_range() } -> std::same_as<Interval>;
  { cenv.dt() } -> std::convertible_to<double>;
  { cenv.name() } -> std::convertible_to<std::string>;
  env.reset(obs);
  env.step(a);
};

class PendulumEnv {
 public:
  explicit PendulumEnv(const EnvParams& p = {}) : p_(p.pendulum), dt_(p.dt) { p_.validate(); }

  std::vector<double> observe() const { return {s_.theta, s_.theta_dot}; }
  double controlled() const { return s_.theta; }
  double rate() const { return s_.theta_dot; }
  std::vector<Interval> input_ranges() const {
    return {{-p_.theta_max, p_.theta_max}, {-p_.theta_dot_max, p_.theta_dot_max}};
  }
  Interval action_range() const { return {-p_.force_max, p_.force_max}; }
  double dt() const { return dt_; }
  std::string name() const { return "pendulum"; }

  void reset(std::span<const double> obs) {
    if (obs.size() != 2) throw InputError("pendulum reset needs (theta, theta_dot)");
    s_ = PendulumState{obs[0], obs[1], 0.0, 0.0};
  }
  void step(double force) { s_ = pendulum_step(s_, force, dt_, p_); }

  const PendulumState& state() const { return s_; }
  const PendulumParams& params() const { return p_; }

 private:
  PendulumParams p_;
  double dt_;
  PendulumState s_;
};

class BallBeamEnv {
 public:
  explicit BallBeamEnv(const EnvParams& p = {}) : p_(p.ballbeam), dt_(p.dt) { p_.validate(); }

  std::vector<double> observe() const { return {s_.r, s_.v}; }
  double controlled() const { return s_.r; }
  double rate() const { return s_.v; }
  std::vector<Interval> input_ranges() const {
    return {{-p_.half_length, p_.half_length}, {-p_.speed_max, p_.speed_max}};
  }
  Interval action_range() const { return {-p_.angle_max, p_.angle_max}; }
  double dt() const { return dt_; }
  std::string name() const { return "ballbeam"; }

  void reset(std::span<const double> obs) {
    if (obs.size() != 2) throw InputError("ball-beam reset needs (r, v)");
    s_ = BallBeamState{std::clamp(obs[0], -p_.half_length, p_.half_length), obs[1]};
  }
  void step(double angle) { s_ = ballbeam_step(s_, angle, dt_, p_); }

  const BallBeamState& state() const { return s_; }
  const BallBeamParams& params() const { return p_; }

 private:
  BallBeamParams p_;
  double dt_;
  BallBeamState s_;
};

static_assert(ControlEnv<PendulumEnv>);
static_assert(ControlEnv<BallBeamEnv>);

}  // namespace ralm
