#pragma once

// Fuzzy inference over ALM rules: each rule combines one narrow line per input,
// weighted by input importance, and fires by min over trapezoid antecedents.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ralm/error.hpp"
#include "ralm/grid_plane.hpp"

namespace ralm {

/// Trapezoidal membership with breakpoints a <= b <= c <= d. Equal breakpoints
/// make a vertical edge, so (a, a, c, d) is a left shoulder.
struct Trapezoid {
  double a = 0, b = 0, c = 0, d = 0;

  double operator()(double x) const {
    if (x < a || x > d) return 0.0;
    if (x < b) return (x - a) / (b - a);
    if (x <= c) return 1.0;
    return (d - x) / (d - c);
  }

  bool ordered() const { return a <= b && b <= c && c <= d; }

  friend bool operator==(const Trapezoid&, const Trapezoid&) = default;
};

struct Rule {
  std::vector<Trapezoid> antecedent;  // one per input
  std::vector<NarrowLine> lines;      // input i vs output
  std::vector<double> weights;        // importance, sums to 1

  double firing(const std::vector<double>& x) const {
    double mu = 1.0;
    for (std::size_t i = 0; i < antecedent.size(); ++i) mu = std::min(mu, antecedent[i](x[i]));
    return mu;
  }

  double consequent(const std::vector<double>& x) const {
    double o = 0.0;
    for (std::size_t i = 0; i < lines.size(); ++i) o += weights[i] * lines[i](x[i]);
    return o;
  }

  friend bool operator==(const Rule&, const Rule&) = default;
};

/// Normalized inverse-spread weights, w_i proportional to 1 / (spread_i + eps)
/// with eps = 1e-6 * output range width.
inline std::vector<double> importance_weights(const std::vector<double>& spreads, double output_width) {
  const double eps = 1e-6 * output_width;
  std::vector<double> w(spreads.size());
  double total = 0.0;
  for (std::size_t i = 0; i < spreads.size(); ++i) {
    if (!(spreads[i] >= 0.0)) throw InputError("importance_weights: negative spread");
    w[i] = 1.0 / (spreads[i] + eps);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

class FuzzySystem {
 public:
  std::vector<Rule> rules;
  std::vector<Interval> input_ranges;
  Interval output_range;
  // Read-through gains of a reward-scaled system; identity for a stored system.
  std::vector<double> input_gain;
  double output_gain = 1.0;
  // Per-input IDS planes (input i vs action) for online refresh.
  std::optional<std::vector<Plane>> backing_planes;

  int inputs() const { return static_cast<int>(input_ranges.size()); }

  void validate() const {
    if (rules.empty()) throw InputError("fuzzy system has no rules");
    if (input_ranges.empty()) throw InputError("fuzzy system has no inputs");
    for (const auto& r : rules) {
      if (static_cast<int>(r.antecedent.size()) != inputs() ||
          static_cast<int>(r.lines.size()) != inputs() || static_cast<int>(r.weights.size()) != inputs())
        throw InputError("rule arity does not match input count");
      for (const auto& t : r.antecedent)
        if (!t.ordered()) throw InputError("antecedent breakpoints out of order");
      for (const auto& l : r.lines)
        if (l.size() < 2) throw InputError("consequent line needs at least 2 nodes");
    }
    if (!input_gain.empty() && static_cast<int>(input_gain.size()) != inputs())
      throw InputError("input gain arity does not match input count");
  }

  double gain(int i) const { return input_gain.empty() ? 1.0 : input_gain[i]; }

  friend bool operator==(const FuzzySystem&, const FuzzySystem&) = default;
};

/// Recommended action for an input vector. Inputs are clamped to their ranges;
/// a scaled system reads input i as x_i / g_i and multiplies the output by its
/// output gain.
inline double infer(const FuzzySystem& fs, const std::vector<double>& inputs) {
  if (static_cast<int>(inputs.size()) != fs.inputs()) throw InputError("infer: wrong input count");
  std::vector<double> x(inputs.size());
  for (int i = 0; i < fs.inputs(); ++i) {
    detail::require_finite(inputs[i], "infer input");
    const Interval& r = fs.input_ranges[i];
    x[i] = r.clamp(r.clamp(inputs[i]) / fs.gain(i));
  }
  double num = 0.0, den = 0.0;
  for (const Rule& rule : fs.rules) {
    const double mu = rule.firing(x);
    if (mu > 0.0) {
      num += mu * rule.consequent(x);
      den += mu;
    }
  }
  if (!(den > 0.0)) throw CoverageError("no rule fires for the given input");
  return fs.output_range.clamp(fs.output_gain * (num / den));
}

/// Derived system whose domain is shrunk onto the reward area: input i gains
/// g_i = |reward_i| / |range_i| and the output is scaled by max_i g_i.
inline FuzzySystem scale_for_reward(const FuzzySystem& fs, const std::vector<Interval>& reward_ranges) {
  if (static_cast<int>(reward_ranges.size()) != fs.inputs())
    throw InputError("scale_for_reward: one reward range per input required");
  FuzzySystem out = fs;
  out.input_gain.assign(fs.inputs(), 1.0);
  double max_gain = 0.0;
  for (int i = 0; i < fs.inputs(); ++i) {
    const Interval& in = fs.input_ranges[i];
    const Interval& rw = reward_ranges[i];
    if (!(rw.lo >= in.lo && rw.hi <= in.hi && rw.lo < rw.hi))
      throw InputError("scale_for_reward: reward range not nested in input range");
    const double g = rw.width() / in.width();
    out.input_gain[i] = fs.gain(i) * g;
    max_gain = std::max(max_gain, g);
  }
  out.output_gain = fs.output_gain * max_gain;
  return out;
}

/// Stamps each rule's consequent lines onto fresh per-input planes (weighted by
/// the rule's membership on that input), giving an online system its prior.
inline std::vector<Plane> seed_backing_planes(const FuzzySystem& fs, int nx, int ny,
                                              const InkWindow& window, double ink) {
  std::vector<Plane> planes;
  for (int i = 0; i < fs.inputs(); ++i) {
    Plane p(GridSpec::over(fs.input_ranges[i], fs.output_range, nx, ny));
    for (int ix = 0; ix < nx; ++ix) {
      const double x = p.spec().x_of(ix);
      for (const Rule& r : fs.rules) {
        const double mu = r.antecedent[i](x);
        if (mu > 0.0) drop_ink(p, x, fs.output_range.clamp(r.lines[i](x)), window, ink * mu);
      }
    }
    planes.push_back(std::move(p));
  }
  return planes;
}

/// Re-extracts every rule's lines from the backing planes (negative cells are
/// ignored by extraction) and recomputes weights from the spread measured over
/// each rule's antecedent support. A plane without positive mass keeps the old
/// lines; a note is appended to `warnings`.
inline FuzzySystem refresh_lines(const FuzzySystem& fs, std::vector<std::string>* warnings = nullptr) {
  if (!fs.backing_planes) throw InputError("refresh_lines: system has no backing planes");
  const auto& planes = *fs.backing_planes;
  if (static_cast<int>(planes.size()) != fs.inputs())
    throw InputError("refresh_lines: backing plane count does not match inputs");

  FuzzySystem out = fs;
  std::vector<std::optional<NarrowLine>> fresh(fs.inputs());
  for (int i = 0; i < fs.inputs(); ++i) {
    try {
      fresh[i] = extract_narrow_line(planes[i]);
    } catch (const EmptyPlaneError&) {
      if (warnings) warnings->push_back("backing plane " + std::to_string(i) + " has no positive mass; line kept");
    }
  }

  for (Rule& rule : out.rules) {
    std::vector<double> spreads(fs.inputs(), 0.0);
    bool all_fresh = true;
    for (int i = 0; i < fs.inputs(); ++i) {
      if (!fresh[i]) {
        all_fresh = false;
        continue;
      }
      rule.lines[i] = *fresh[i];
      const Plane& p = planes[i];
      const Trapezoid& t = rule.antecedent[i];
      const int lo = p.cell_of(std::max(t.a, p.spec().x_min), p.spec().y_min).ix;
      const int hi = p.cell_of(std::min(t.d, p.spec().x_max), p.spec().y_min).ix;
      Spread s = spread_of(p, *fresh[i], lo, hi);
      if (!(s.mass > 0.0)) s = spread_of(p, *fresh[i]);
      spreads[i] = s.aggregate;
    }
    if (all_fresh) rule.weights = importance_weights(spreads, fs.output_range.width());
  }
  return out;
}

// ---------------------------------------------------------------------------
// RALM-FS v1 rule-base text format

inline constexpr int kExportLinePoints = 65;

namespace detail {

inline std::vector<double> sample_line(const NarrowLine& line, int n) {
  if (line.size() == n) return line.y_at;
  std::vector<double> ys(n);
  for (int k = 0; k < n; ++k) {
    const double x = k == n - 1 ? line.x_max : line.x_min + k * (line.x_max - line.x_min) / (n - 1);
    ys[k] = line(x);
  }
  return ys;
}

}  // namespace detail

inline void write_fuzzy_system(std::ostream& os, const FuzzySystem& fs) {
  using detail::fmt_real;
  os << "RALM-FS v1\n";
  os << "inputs " << fs.inputs() << '\n';
  for (const auto& r : fs.input_ranges) os << "input_range " << fmt_real(r.lo) << ' ' << fmt_real(r.hi) << '\n';
  os << "output_range " << fmt_real(fs.output_range.lo) << ' ' << fmt_real(fs.output_range.hi) << '\n';
  os << "rules " << fs.rules.size() << '\n';
  for (std::size_t k = 0; k < fs.rules.size(); ++k) {
    const Rule& rule = fs.rules[k];
    os << "rule " << k << '\n';
    for (const auto& t : rule.antecedent)
      os << "antecedent " << fmt_real(t.a) << ' ' << fmt_real(t.b) << ' ' << fmt_real(t.c) << ' '
         << fmt_real(t.d) << '\n';
    os << "weights";
    for (double w : rule.weights) os << ' ' << fmt_real(w);
    os << '\n';
    for (const auto& line : rule.lines) {
      os << "line " << fmt_real(line.x_min) << ' ' << fmt_real(line.x_max);
      for (double y : detail::sample_line(line, kExportLinePoints)) os << ' ' << fmt_real(y);
      os << '\n';
    }
    os << "end\n";
  }
}

inline FuzzySystem read_fuzzy_system(std::istream& is) {
  std::string text;
  if (!std::getline(is, text)) throw InputError("rule base: empty input");
  if (!text.empty() && text.back() == '\r') text.pop_back();
  if (text != "RALM-FS v1") throw InputError("rule base: unsupported header '" + text + "'");

  auto expect = [&](const std::string& key) {
    std::string tok;
    if (!(is >> tok) || tok != key) throw InputError("rule base: expected '" + key + "', got '" + tok + "'");
  };
  auto number = [&]() {
    double v;
    if (!(is >> v)) throw InputError("rule base: expected a number");
    return v;
  };

  FuzzySystem fs;
  expect("inputs");
  const int m = static_cast<int>(number());
  if (m < 1) throw InputError("rule base: needs at least one input");
  for (int i = 0; i < m; ++i) {
    expect("input_range");
    const double lo = number(), hi = number();
    fs.input_ranges.push_back({lo, hi});
  }
  expect("output_range");
  fs.output_range.lo = number();
  fs.output_range.hi = number();
  expect("rules");
  const int n = static_cast<int>(number());
  if (n < 1) throw InputError("rule base: has no rules");
  for (int k = 0; k < n; ++k) {
    expect("rule");
    number();
    Rule rule;
    for (int i = 0; i < m; ++i) {
      expect("antecedent");
      Trapezoid t;
      t.a = number();
      t.b = number();
      t.c = number();
      t.d = number();
      rule.antecedent.push_back(t);
    }
    expect("weights");
    for (int i = 0; i < m; ++i) rule.weights.push_back(number());
    for (int i = 0; i < m; ++i) {
      expect("line");
      const double lo = number(), hi = number();
      std::vector<double> ys(kExportLinePoints);
      for (double& y : ys) y = number();
      rule.lines.push_back(NarrowLine::from_samples({lo, hi}, std::move(ys)));
    }
    expect("end");
    fs.rules.push_back(std::move(rule));
  }
  fs.validate();
  return fs;
}

}  // namespace ralm
