#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "ralm/envs.hpp"

using namespace ralm;

namespace {

constexpr double kDt = 0.021;

// Cart-pole right-hand side written out from the Lagrangian of a uniform rod
// on a frictionless cart: state (theta, theta_dot, x, x_dot).
std::array<double, 4> cartpole_rhs(const std::array<double, 4>& s, double f, const PendulumParams& p) {
  const double th = s[0], w = s[1];
  const double M = p.cart_mass, m = p.pole_mass, l = p.half_length, g = p.gravity;
  //   (M + m) x'' + m l cos(th) th'' = f + m l w^2 sin(th)
  //   m l cos(th) x'' + 4/3 m l^2 th'' = m g l sin(th)
  const double c = std::cos(th), sn = std::sin(th);
  const double a11 = M + m, a12 = m * l * c, a21 = m * l * c, a22 = 4.0 / 3.0 * m * l * l;
  const double b1 = f + m * l * w * w * sn, b2 = m * g * l * sn;
  const double det = a11 * a22 - a12 * a21;
  const double xdd = (b1 * a22 - a12 * b2) / det;
  const double thdd = (a11 * b2 - a21 * b1) / det;
  return {w, thdd, s[3], xdd};
}

std::array<double, 4> rk4(std::array<double, 4> s, double f, double dt, int substeps, const PendulumParams& p) {
  const double h = dt / substeps;
  for (int k = 0; k < substeps; ++k) {
    auto add = [](std::array<double, 4> a, const std::array<double, 4>& b, double t) {
      for (int i = 0; i < 4; ++i) a[i] += t * b[i];
      return a;
    };
    const auto k1 = cartpole_rhs(s, f, p);
    const auto k2 = cartpole_rhs(add(s, k1, h / 2), f, p);
    const auto k3 = cartpole_rhs(add(s, k2, h / 2), f, p);
    const auto k4 = cartpole_rhs(add(s, k3, h), f, p);
    for (int i = 0; i < 4; ++i) s[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return s;
}

}  // namespace

TEST(Pendulum, UprightEquilibrium) {
  PendulumParams p;
  const PendulumState s{};
  const PendulumState n = pendulum_step(s, 0.0, kDt, p);
  EXPECT_EQ(n.theta, 0.0);
  EXPECT_EQ(n.theta_dot, 0.0);
  EXPECT_EQ(n.x, 0.0);
  EXPECT_EQ(n.x_dot, 0.0);
}

TEST(Pendulum, SmallTiltGrows) {
  PendulumParams p;
  PendulumState s{0.01, 0.0, 0.0, 0.0};
  double prev = std::abs(s.theta);
  for (int k = 0; k < 50; ++k) {
    s = pendulum_step(s, 0.0, kDt, p);
    EXPECT_GT(std::abs(s.theta), prev);
    prev = std::abs(s.theta);
  }
}

TEST(Pendulum, PositiveForceTipsPoleNegative) {
  PendulumParams p;
  const PendulumState n = pendulum_step({}, 5.0, kDt, p);
  EXPECT_LT(n.theta_dot, 0.0);
  EXPECT_GT(n.x_dot, 0.0);
}

TEST(Pendulum, OneStepAgainstFineIntegrator) {
  PendulumParams p;
  const PendulumState s{0.05, 0.2, 0.0, 0.1};
  const double f = 2.0;
  const PendulumState n = pendulum_step(s, f, kDt, p);
  const auto fine = rk4({s.theta, s.theta_dot, s.x, s.x_dot}, f, kDt, 100, p);
  EXPECT_NEAR(n.theta, fine[0], 1e-3);
  EXPECT_NEAR(n.theta_dot, fine[1], 2e-3);

  // Accelerations agree with the independent derivation everywhere.
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 200; ++k) {
    const PendulumState r{0.9 * u(gen), 2 * u(gen), u(gen), u(gen)};
    const double force = 10 * u(gen);
    const auto [tdd, xdd] = pendulum_accel(r, force, p);
    const auto rhs = cartpole_rhs({r.theta, r.theta_dot, r.x, r.x_dot}, force, p);
    EXPECT_NEAR(tdd, rhs[1], 1e-12);
    EXPECT_NEAR(xdd, rhs[3], 1e-12);
  }
}

TEST(Pendulum, OneStepErrorWithinEulerBound) {
  // Semi-implicit Euler moves theta by dt * (w + dt * a) where the exact flow
  // moves it by dt * w + dt^2 / 2 * a + O(dt^3): the gap is about dt^2 / 2 |a|.
  PendulumParams p;
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 200; ++k) {
    const PendulumState s{0.9 * u(gen), 2 * u(gen), 0.0, u(gen)};
    const double f = 10 * u(gen);
    const auto fine = rk4({s.theta, s.theta_dot, s.x, s.x_dot}, f, kDt, 100, p);
    const double a = pendulum_accel(s, f, p).first;
    const PendulumState n = pendulum_step(s, f, kDt, p);
    EXPECT_LE(std::abs(n.theta - fine[0]), 0.5 * kDt * kDt * std::abs(a) + 2e-4);
  }
}

TEST(Pendulum, EnergyDriftBounded) {
  // Zero force, no friction: the true flow conserves energy. One step of the
  // integrator may change it by at most dt^2 times the kinetic form of the
  // accelerations plus the gravity term along the rate.
  PendulumParams p;
  const double M = p.cart_mass, m = p.pole_mass, l = p.half_length, g = p.gravity;
  for (double theta0 : {0.05, 0.3, 0.8}) {
    PendulumState s{theta0, 0.0, 0.0, 0.0};
    const double e0 = pendulum_energy(s, p);
    for (int k = 0; k < 100; ++k) {
      const auto [ta, xa] = pendulum_accel(s, 0.0, p);
      const double q = (M + m) * xa * xa + 4.0 / 3.0 * m * l * l * ta * ta + 2 * m * l * std::abs(xa * ta) +
                       m * g * l * (s.theta_dot * s.theta_dot + std::abs(ta));
      const double before = pendulum_energy(s, p);
      s = pendulum_step(s, 0.0, kDt, p);
      EXPECT_LE(std::abs(pendulum_energy(s, p) - before), kDt * kDt * q);
    }
    EXPECT_LE(std::abs(pendulum_energy(s, p) - e0), 0.05 * m * g * l);
  }
}

TEST(Pendulum, DeterministicClampedAndWrapped) {
  PendulumParams p;
  const PendulumState s{0.2, -0.3, 0.1, 0.0};
  EXPECT_EQ(pendulum_step(s, 3.3, kDt, p).theta, pendulum_step(s, 3.3, kDt, p).theta);
  const PendulumState big = pendulum_step(s, 1e6, kDt, p), max = pendulum_step(s, p.force_max, kDt, p);
  EXPECT_EQ(big.theta_dot, max.theta_dot);
  EXPECT_EQ(big.x_dot, max.x_dot);

  PendulumState spin{3.1, 20.0, 0.0, 0.0};
  for (int k = 0; k < 100; ++k) {
    spin = pendulum_step(spin, 0.0, kDt, p);
    EXPECT_LE(std::abs(spin.theta), std::numbers::pi);
  }
  EXPECT_THROW(pendulum_step({NAN, 0, 0, 0}, 0.0, kDt, p), InputError);
  EXPECT_THROW(pendulum_step(s, 0.0, 0.0, p), InputError);
}

TEST(BallBeam, EquilibriumAndSign) {
  BallBeamParams p;
  const BallBeamState rest = ballbeam_step({0.3, 0.0}, 0.0, kDt, p);
  EXPECT_EQ(rest.r, 0.3);
  EXPECT_EQ(rest.v, 0.0);
  BallBeamState s{};
  for (int k = 0; k < 5; ++k) s = ballbeam_step(s, 0.1, kDt, p);
  EXPECT_LT(s.r, 0.0);
  EXPECT_LT(s.v, 0.0);
}

TEST(BallBeam, ConstantAngleMatchesKinematics) {
  BallBeamParams p;
  const double angle = 0.05, a = -p.ball_factor * p.gravity * std::sin(angle);
  BallBeamState s{0.2, 0.1};
  for (int k = 1; k <= 20; ++k) {
    s = ballbeam_step(s, angle, kDt, p);
    const double t = k * kDt;
    const double exact = 0.2 + 0.1 * t + 0.5 * a * t * t;
    // Semi-implicit Euler leads the closed form by a * dt^2 * k / 2.
    EXPECT_LE(std::abs(s.r - exact), std::abs(a) * kDt * kDt * k / 2 + 1e-12);
    EXPECT_NEAR(s.v, 0.1 + a * t, 1e-12);
  }
}

TEST(BallBeam, StopsAtBeamEnds) {
  BallBeamParams p;
  BallBeamState s{0.95, 2.0};
  for (int k = 0; k < 50; ++k) {
    s = ballbeam_step(s, -0.25, kDt, p);
    EXPECT_LE(std::abs(s.r), p.half_length);
  }
  EXPECT_EQ(s.r, p.half_length);
  EXPECT_EQ(s.v, 0.0);
  EXPECT_THROW(ballbeam_step({0, 0}, NAN, kDt, p), InputError);
}

TEST(StatePoints, Definitions) {
  StatePointTracker t;
  const StatePoint first = t.update(0.10);
  EXPECT_EQ(first.e, 0.10);
  EXPECT_EQ(first.ce, 0.0);
  const StatePoint second = t.update(0.08);
  EXPECT_EQ(second.e, 0.08);
  EXPECT_NEAR(second.ce, -0.02, 1e-15);
  t.reset();
  EXPECT_EQ(t.update(0.5).ce, 0.0);
  EXPECT_THROW(t.update(NAN), InputError);
}

TEST(StatePoints, BallBeamChangeIsVelocityTimesDt) {
  BallBeamEnv env;
  const std::vector<double> start{0.0, 0.5};
  env.reset(start);
  StatePointTracker t;
  t.update(env.controlled());
  env.step(0.0);
  const StatePoint sp = t.update(env.controlled());
  EXPECT_NEAR(sp.ce, 0.0105, 1e-15);
}

TEST(Envs, InterfaceAndRanges) {
  EnvParams ep;
  PendulumEnv pend(ep);
  BallBeamEnv beam(ep);
  static_assert(ControlEnv<PendulumEnv> && ControlEnv<BallBeamEnv>);
  EXPECT_EQ(pend.dt(), 0.021);
  EXPECT_EQ(pend.action_range(), (Interval{-10, 10}));
  EXPECT_EQ(beam.action_range(), (Interval{-0.25, 0.25}));
  EXPECT_EQ(pend.input_ranges().size(), 2u);
  const std::vector<double> s{0.1, -0.2};
  pend.reset(s);
  EXPECT_EQ(pend.observe(), s);
  beam.reset(s);
  EXPECT_EQ(beam.observe(), s);

  ep.dt = 0.0;
  EXPECT_THROW(ep.validate(), ConfigError);
  ep = EnvParams{};
  ep.pendulum.pole_mass = -1.0;
  EXPECT_THROW(PendulumEnv{ep}, ConfigError);
}
