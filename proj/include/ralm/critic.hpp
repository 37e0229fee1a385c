#pragma once

// Reward-Penalty-Plane critic over (error, change in error). Reward and
// penalty cells are pinned; play cells learn by TD(0)-style pulls toward the
// value of the state that followed.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "ralm/error.hpp"
#include "ralm/grid_plane.hpp"

namespace ralm {

struct StatePoint {
  double e = 0.0;   // error of the controlled variable
  double ce = 0.0;  // per-step change of the error

  friend bool operator==(const StatePoint&, const StatePoint&) = default;
};

enum class RegionKind : unsigned char { Play, Reward, Penalty };

inline char region_letter(RegionKind r) {
  switch (r) {
    case RegionKind::Reward: return 'R';
    case RegionKind::Penalty: return 'P';
    default: return 'Y';
  }
}

struct RPPConfig {
  Interval e_range{-1.0, 1.0};
  Interval ce_range{-1.0, 1.0};
  Interval reward_e{-0.1, 0.1};
  Interval reward_ce{-0.1, 0.1};
  double penalty_fraction = 0.9;  // beyond this fraction of the half-range: penalty
  double penalty_value = -0.5;
  double lambda_reward = 0.9;
  double lambda_penalty = 0.05;
  InkWindow window;
  int nx = 64, ny = 64;

  GridSpec grid() const { return GridSpec::over(e_range, ce_range, nx, ny); }

  // Central part of an axis that is not penalty.
  static Interval safe_part(const Interval& r, double fraction) {
    const double half = 0.5 * r.width() * fraction;
    return {r.mid() - half, r.mid() + half};
  }

  void validate() const {
    grid().validate();
    if (!(penalty_fraction > 0.0 && penalty_fraction <= 1.0))
      throw ConfigError("rpp penalty fraction must be in (0, 1]");
    if (!(penalty_value >= -1.0 && penalty_value < 0.0)) throw ConfigError("rpp penalty value must be in [-1, 0)");
    if (!(lambda_reward > 0.0 && lambda_reward <= 1.0)) throw ConfigError("rpp lambda_reward must be in (0, 1]");
    if (!(lambda_penalty > 0.0 && lambda_penalty <= 1.0)) throw ConfigError("rpp lambda_penalty must be in (0, 1]");
    if (lambda_penalty > lambda_reward) throw ConfigError("rpp lambda_penalty exceeds lambda_reward");
    if (!(reward_e.lo < reward_e.hi && reward_ce.lo < reward_ce.hi))
      throw ConfigError("rpp reward box is empty or reversed");
    const Interval se = safe_part(e_range, penalty_fraction), sc = safe_part(ce_range, penalty_fraction);
    if (!(reward_e.lo >= se.lo && reward_e.hi <= se.hi && reward_ce.lo >= sc.lo && reward_ce.hi <= sc.hi))
      throw ConfigError("rpp reward box overlaps the penalty margin");
  }
};

class RPP {
 public:
  RPP() = default;
  explicit RPP(const RPPConfig& cfg) : cfg_(cfg), plane_(cfg.grid()) {
    cfg_.validate();
    const GridSpec& g = plane_.spec();
    const Interval se = RPPConfig::safe_part(cfg.e_range, cfg.penalty_fraction);
    const Interval sc = RPPConfig::safe_part(cfg.ce_range, cfg.penalty_fraction);
    mask_.assign(static_cast<std::size_t>(g.nx) * g.ny, RegionKind::Play);
    std::size_t rewards = 0;
    for (int iy = 0; iy < g.ny; ++iy) {
      for (int ix = 0; ix < g.nx; ++ix) {
        const double e = g.x_of(ix), ce = g.y_of(iy);
        RegionKind r = RegionKind::Play;
        if (e < se.lo || e > se.hi || ce < sc.lo || ce > sc.hi)
          r = RegionKind::Penalty;
        else if (cfg.reward_e.contains(e) && cfg.reward_ce.contains(ce))
          r = RegionKind::Reward;
        mask_[index(ix, iy)] = r;
        plane_.at(ix, iy) = r == RegionKind::Reward ? 1.0 : r == RegionKind::Penalty ? cfg.penalty_value : 0.0;
        rewards += r == RegionKind::Reward;
      }
    }
    if (rewards == 0) throw ConfigError("rpp reward box contains no grid node");
  }

  const RPPConfig& config() const { return cfg_; }
  const Plane& plane() const { return plane_; }

  RegionKind region(Cell c) const { return mask_[index(c.ix, c.iy)]; }
  RegionKind region(StatePoint s) const { return region(cell(s)); }

  Cell cell(StatePoint s) const {
    if (std::isnan(s.e) || std::isnan(s.ce)) throw InputError("rpp: NaN state");
    return plane_.cell_of(s.e, s.ce);
  }

  /// Nearest-cell value; states off the grid read the edge cell.
  double value(StatePoint s) const { return plane_.at(cell(s)); }

  /// One update from the transition prev -> cur. The play cells in the window
  /// around prev move by lambda * win * (V(cur) - V(prev)) and are clamped to
  /// [-1, 1]. Returns the centre delta lambda * (V(cur) - V(prev)).
  double td_update(StatePoint prev, StatePoint cur) {
    detail::require_finite(prev.e, "td_update prev.e");
    detail::require_finite(prev.ce, "td_update prev.ce");
    detail::require_finite(cur.e, "td_update cur.e");
    detail::require_finite(cur.ce, "td_update cur.ce");
    const double raw = value(cur) - value(prev);
    if (raw == 0.0) return 0.0;
    const double lambda = raw > 0.0 ? cfg_.lambda_reward : cfg_.lambda_penalty;
    for_each_in_window(plane_.spec(), cell(prev), cfg_.window, [&](Cell c, double w) {
      if (region(c) != RegionKind::Play || w == 0.0) return;
      double& v = plane_.at(c.ix, c.iy);
      v = std::clamp(v + lambda * w * raw, -1.0, 1.0);
    });
    return lambda * raw;
  }

  std::size_t count(RegionKind r) const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), r)); }

  /// Restores a dumped plane; pinned cells are checked against the mask.
  void load_values(const Plane& p) {
    if (!(p.spec() == plane_.spec())) throw InputError("rpp: plane grid does not match configuration");
    for (int iy = 0; iy < p.ny(); ++iy)
      for (int ix = 0; ix < p.nx(); ++ix) {
        const RegionKind r = region(Cell{ix, iy});
        const double v = p.at(ix, iy);
        if ((r == RegionKind::Reward && v != 1.0) || (r == RegionKind::Penalty && v != cfg_.penalty_value) ||
            v < -1.0 || v > 1.0)
          throw InputError("rpp: dumped plane violates region values");
      }
    plane_ = p;
  }

 private:
  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * plane_.nx() + ix; }

  RPPConfig cfg_;
  Plane plane_;
  std::vector<RegionKind> mask_;
};

inline RPP init_rpp(const RPPConfig& cfg) { return RPP(cfg); }

inline double td_update(RPP& rpp, StatePoint prev, StatePoint cur) { return rpp.td_update(prev, cur); }

/// Same header as the plane CSV, letters R/P/Y per cell.
inline void write_mask_csv(std::ostream& os, const RPP& rpp) {
  const GridSpec& s = rpp.plane().spec();
  os << "# mask x:[" << detail::fmt_real(s.x_min) << ',' << detail::fmt_real(s.x_max) << "] y:["
     << detail::fmt_real(s.y_min) << ',' << detail::fmt_real(s.y_max) << "] " << s.nx << ' ' << s.ny << '\n';
  for (int iy = 0; iy < s.ny; ++iy) {
    for (int ix = 0; ix < s.nx; ++ix) {
      if (ix) os << ',';
      os << region_letter(rpp.region(Cell{ix, iy}));
    }
    os << '\n';
  }
}

}  // namespace ralm
