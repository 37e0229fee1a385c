#pragma once

// Ink-drop-spread (IDS) planes: a uniform node grid over (x, y) holding signed
// intensities, window stamping, narrow-line extraction and spread measurement.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ralm/error.hpp"

namespace ralm {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
  double clamp(double v) const { return std::clamp(v, lo, hi); }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Axis ranges and node counts of a plane. Node ix sits at
/// x_min + ix * (x_max - x_min) / (nx - 1), so both range ends are nodes.
struct GridSpec {
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  int nx = 64, ny = 64;

  static GridSpec over(Interval x, Interval y, int nx = 64, int ny = 64) {
    return GridSpec{x.lo, x.hi, y.lo, y.hi, nx, ny};
  }

  void validate() const {
    if (!(std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) && std::isfinite(y_max)))
      throw ConfigError("grid range is not finite");
    if (!(x_min < x_max)) throw ConfigError("grid x range is empty or reversed");
    if (!(y_min < y_max)) throw ConfigError("grid y range is empty or reversed");
    if (nx < 2 || ny < 2) throw ConfigError("grid needs at least 2 cells per axis");
    if (!(std::isfinite(dx()) && dx() > 0.0 && std::isfinite(dy()) && dy() > 0.0))
      throw ConfigError("grid cell size is degenerate");
  }

  double dx() const { return (x_max - x_min) / (nx - 1); }
  double dy() const { return (y_max - y_min) / (ny - 1); }
  double x_of(int ix) const { return ix == nx - 1 ? x_max : x_min + ix * dx(); }
  double y_of(int iy) const { return iy == ny - 1 ? y_max : y_min + iy * dy(); }
  Interval x_range() const { return {x_min, x_max}; }
  Interval y_range() const { return {y_min, y_max}; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct Cell {
  int ix = 0;
  int iy = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

namespace detail {

// Nearest node along one axis, clamped; exact half-way ties go to the lower index.
inline int nearest_index(double v, double lo, double step, int n) {
  double t = (v - lo) / step;
  t = std::clamp(t, -1.0, static_cast<double>(n));
  int i = static_cast<int>(std::ceil(t - 0.5));
  return std::clamp(i, 0, n - 1);
}

}  // namespace detail

class Plane {
 public:
  Plane() = default;
  explicit Plane(const GridSpec& spec) : spec_(spec) {
    spec_.validate();
    values_.assign(static_cast<std::size_t>(spec_.nx) * spec_.ny, 0.0);
  }

  const GridSpec& spec() const { return spec_; }
  int nx() const { return spec_.nx; }
  int ny() const { return spec_.ny; }

  double& at(int ix, int iy) { return values_[index(ix, iy)]; }
  double at(int ix, int iy) const { return values_[index(ix, iy)]; }
  double at(Cell c) const { return at(c.ix, c.iy); }

  // Row-major by y: values()[iy * nx + ix].
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  Cell cell_of(double x, double y) const {
    if (std::isnan(x) || std::isnan(y)) throw InputError("cell_of: NaN coordinate");
    return {detail::nearest_index(x, spec_.x_min, spec_.dx(), spec_.nx),
            detail::nearest_index(y, spec_.y_min, spec_.dy(), spec_.ny)};
  }

  double value_at(double x, double y) const { return at(cell_of(x, y)); }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * spec_.nx + static_cast<std::size_t>(ix);
  }

  GridSpec spec_;
  std::vector<double> values_;
};

inline Plane make_plane(const GridSpec& spec) { return Plane(spec); }

enum class WindowShape { Pyramid, Gaussian };

/// Ink footprint. Weight depends on the Chebyshev-scaled distance
/// d = max(|dx|/rx, |dy|/ry): the pyramid falls linearly from 1 at the center
/// to 0 at d = 1, the Gaussian is exp(-d^2 / (2 sigma^2)) cut off at d = 1.
class InkWindow {
 public:
  static constexpr double kGaussianSigma = 0.5;

  InkWindow() : InkWindow(WindowShape::Pyramid, 3, 3) {}
  InkWindow(WindowShape shape, int rx, int ry) : shape_(shape), rx_(rx), ry_(ry) {
    if (rx < 0 || ry < 0) throw ConfigError("window radius must be non-negative");
    weights_.resize(static_cast<std::size_t>(2 * rx + 1) * (2 * ry + 1));
    for (int dy = -ry; dy <= ry; ++dy) {
      for (int dx = -rx; dx <= rx; ++dx) {
        double d = std::max(rx == 0 ? 0.0 : std::abs(dx) / static_cast<double>(rx),
                            ry == 0 ? 0.0 : std::abs(dy) / static_cast<double>(ry));
        double w = shape == WindowShape::Pyramid
                       ? 1.0 - d
                       : std::exp(-d * d / (2.0 * kGaussianSigma * kGaussianSigma));
        weights_[slot(dx, dy)] = std::max(0.0, w);
      }
    }
  }

  static InkWindow point() { return InkWindow(WindowShape::Pyramid, 0, 0); }

  WindowShape shape() const { return shape_; }
  int rx() const { return rx_; }
  int ry() const { return ry_; }
  double weight(int dx, int dy) const { return weights_[slot(dx, dy)]; }

  friend bool operator==(const InkWindow&, const InkWindow&) = default;

 private:
  std::size_t slot(int dx, int dy) const {
    return static_cast<std::size_t>(dy + ry_) * (2 * rx_ + 1) + static_cast<std::size_t>(dx + rx_);
  }

  WindowShape shape_;
  int rx_, ry_;
  std::vector<double> weights_;
};

/// Visits every in-grid cell of the window footprint around `center`.
template <typename Fn>
void for_each_in_window(const GridSpec& spec, Cell center, const InkWindow& window, Fn&& fn) {
  const int x0 = std::max(0, center.ix - window.rx());
  const int x1 = std::min(spec.nx - 1, center.ix + window.rx());
  const int y0 = std::max(0, center.iy - window.ry());
  const int y1 = std::min(spec.ny - 1, center.iy + window.ry());
  for (int iy = y0; iy <= y1; ++iy)
    for (int ix = x0; ix <= x1; ++ix)
      fn(Cell{ix, iy}, window.weight(ix - center.ix, iy - center.iy));
}

/// Adds weight * window around the nearest cell of (x, y). Off-grid cells are dropped.
inline void drop_ink(Plane& plane, double x, double y, const InkWindow& window, double weight) {
  if (!std::isfinite(weight)) throw InputError("drop_ink: weight is not finite");
  if (!std::isfinite(x) || !std::isfinite(y)) throw InputError("drop_ink: coordinate is not finite");
  const Cell c = plane.cell_of(x, y);
  for_each_in_window(plane.spec(), c, window,
                     [&](Cell k, double w) { plane.at(k.ix, k.iy) += weight * w; });
}

/// Behavior curve of a plane: one y per x node, with per-node deviation.
struct NarrowLine {
  double x_min = 0.0, x_max = 1.0;
  std::vector<double> y_at;
  std::vector<double> deviation;
  std::vector<bool> covered;

  int size() const { return static_cast<int>(y_at.size()); }
  double x_of(int i) const {
    return i == size() - 1 ? x_max : x_min + i * (x_max - x_min) / (size() - 1);
  }

  /// Piecewise-linear between nodes, constant beyond the ends.
  double operator()(double x) const {
    const int n = size();
    if (n == 1) return y_at[0];
    const double t = (x - x_min) / (x_max - x_min) * (n - 1);
    if (!(t > 0.0)) return y_at.front();
    if (t >= n - 1) return y_at.back();
    const int i = static_cast<int>(t);
    const double f = t - i;
    return f == 0.0 ? y_at[i] : y_at[i] + f * (y_at[i + 1] - y_at[i]);
  }

  /// A fully covered line through the given node values.
  static NarrowLine from_samples(Interval x, std::vector<double> ys) {
    NarrowLine line;
    line.x_min = x.lo;
    line.x_max = x.hi;
    line.deviation.assign(ys.size(), 0.0);
    line.covered.assign(ys.size(), true);
    line.y_at = std::move(ys);
    return line;
  }

  friend bool operator==(const NarrowLine&, const NarrowLine&) = default;
};

namespace detail {

struct ColumnMoments {
  double mass = 0.0;
  double cog = 0.0;
};

inline ColumnMoments column_moments(const Plane& plane, int ix) {
  ColumnMoments m;
  double first = 0.0;
  for (int iy = 0; iy < plane.ny(); ++iy) {
    const double v = plane.at(ix, iy);
    if (v > 0.0) {
      m.mass += v;
      first += v * plane.spec().y_of(iy);
    }
  }
  if (m.mass > 0.0) m.cog = first / m.mass;
  return m;
}

inline double column_deviation(const Plane& plane, int ix, double center, double mass) {
  if (!(mass > 0.0)) return 0.0;
  double second = 0.0;
  for (int iy = 0; iy < plane.ny(); ++iy) {
    const double v = plane.at(ix, iy);
    if (v > 0.0) {
      const double d = plane.spec().y_of(iy) - center;
      second += v * d * d;
    }
  }
  return std::sqrt(second / mass);
}

}  // namespace detail

/// Per-column center of gravity of the positive intensities. Columns without
/// positive mass are interpolated from covered neighbours (held constant past
/// the outermost covered columns).
inline NarrowLine extract_narrow_line(const Plane& plane) {
  const GridSpec& s = plane.spec();
  NarrowLine line;
  line.x_min = s.x_min;
  line.x_max = s.x_max;
  line.y_at.assign(s.nx, 0.0);
  line.deviation.assign(s.nx, 0.0);
  line.covered.assign(s.nx, false);

  std::vector<int> covered_cols;
  for (int ix = 0; ix < s.nx; ++ix) {
    const auto m = detail::column_moments(plane, ix);
    if (m.mass > 0.0) {
      line.y_at[ix] = std::clamp(m.cog, s.y_min, s.y_max);
      line.deviation[ix] = detail::column_deviation(plane, ix, line.y_at[ix], m.mass);
      line.covered[ix] = true;
      covered_cols.push_back(ix);
    }
  }
  if (covered_cols.empty()) throw EmptyPlaneError("plane has no positive mass");

  for (int ix = 0; ix < covered_cols.front(); ++ix) line.y_at[ix] = line.y_at[covered_cols.front()];
  for (int ix = covered_cols.back() + 1; ix < s.nx; ++ix) line.y_at[ix] = line.y_at[covered_cols.back()];
  for (std::size_t k = 0; k + 1 < covered_cols.size(); ++k) {
    const int a = covered_cols[k], b = covered_cols[k + 1];
    for (int ix = a + 1; ix < b; ++ix) {
      const double f = static_cast<double>(ix - a) / (b - a);
      line.y_at[ix] = line.y_at[a] + f * (line.y_at[b] - line.y_at[a]);
    }
  }
  return line;
}

struct Spread {
  std::vector<double> per_column;
  double aggregate = 0.0;
  double mass = 0.0;  // total positive mass over the measured columns
};

/// Intensity-weighted standard deviation of positive mass about the line,
/// per column, and its mass-weighted mean over the columns [col_lo, col_hi].
inline Spread spread_of(const Plane& plane, const NarrowLine& line, int col_lo, int col_hi) {
  if (line.size() != plane.nx()) throw InputError("spread_of: line and plane sizes differ");
  col_lo = std::max(col_lo, 0);
  col_hi = std::min(col_hi, plane.nx() - 1);
  Spread out;
  out.per_column.assign(plane.nx(), 0.0);
  double weighted = 0.0;
  for (int ix = col_lo; ix <= col_hi; ++ix) {
    const double mass = detail::column_moments(plane, ix).mass;
    if (!(mass > 0.0)) continue;
    const double s = detail::column_deviation(plane, ix, line.y_at[ix], mass);
    out.per_column[ix] = s;
    weighted += mass * s;
    out.mass += mass;
  }
  if (out.mass > 0.0) out.aggregate = weighted / out.mass;
  return out;
}

inline Spread spread_of(const Plane& plane, const NarrowLine& line) {
  return spread_of(plane, line, 0, plane.nx() - 1);
}

// ---------------------------------------------------------------------------
// Dumps

namespace detail {

// Shortest text that reads back to the same double.
inline std::string fmt_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// `# plane x:[x_min,x_max] y:[y_min,y_max] nx ny`, then one row per y node.
inline void write_plane_csv(std::ostream& os, const Plane& plane) {
  const GridSpec& s = plane.spec();
  os << "# plane x:[" << detail::fmt_real(s.x_min) << ',' << detail::fmt_real(s.x_max) << "] y:["
     << detail::fmt_real(s.y_min) << ',' << detail::fmt_real(s.y_max) << "] " << s.nx << ' ' << s.ny
     << '\n';
  for (int iy = 0; iy < s.ny; ++iy) {
    for (int ix = 0; ix < s.nx; ++ix) {
      if (ix) os << ',';
      os << detail::fmt_real(plane.at(ix, iy));
    }
    os << '\n';
  }
}

inline Plane read_plane_csv(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw InputError("plane csv: missing header");
  GridSpec s;
  if (std::sscanf(header.c_str(), "# plane x:[%lf,%lf] y:[%lf,%lf] %d %d", &s.x_min, &s.x_max,
                  &s.y_min, &s.y_max, &s.nx, &s.ny) != 6)
    throw InputError("plane csv: malformed header '" + header + "'");
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw InputError(std::string("plane csv: ") + e.what());
  }
  Plane plane(s);
  std::string row;
  for (int iy = 0; iy < s.ny; ++iy) {
    if (!std::getline(is, row)) throw InputError("plane csv: too few rows");
    std::istringstream rs(row);
    std::string tok;
    int ix = 0;
    while (std::getline(rs, tok, ',')) {
      if (ix >= s.nx) throw InputError("plane csv: too many columns");
      try {
        plane.at(ix++, iy) = std::stod(tok);
      } catch (const std::exception&) {
        throw InputError("plane csv: bad number '" + tok + "'");
      }
    }
    if (ix != s.nx) throw InputError("plane csv: too few columns");
  }
  if (!plane.all_finite()) throw InputError("plane csv: non-finite value");
  return plane;
}

/// Plain PGM (P2); min maps to 0 and max to 255, highest y row first.
inline void write_plane_pgm(std::ostream& os, const Plane& plane) {
  const auto& v = plane.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  os << "P2\n" << plane.nx() << ' ' << plane.ny() << "\n255\n";
  for (int iy = plane.ny() - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < plane.nx(); ++ix) {
      const long level = hi > lo ? std::lround((plane.at(ix, iy) - lo) / (hi - lo) * 255.0) : 0;
      if (ix) os << ' ';
      os << level;
    }
    os << '\n';
  }
}

}  // namespace ralm
