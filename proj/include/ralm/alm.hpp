#pragma once

// Active Learning Method: project a MISO dataset onto one IDS plane per input,
// read narrow lines and spreads, split the domain while the spread is too
// large, and turn the leaves into fuzzy rules.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ralm/error.hpp"
#include "ralm/fuzzy.hpp"
#include "ralm/grid_plane.hpp"

namespace ralm {

struct Sample {
  std::vector<double> inputs;
  double output = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<Interval> input_ranges;
  Interval output_range;

  int inputs() const { return static_cast<int>(input_ranges.size()); }
  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }

  void validate() const {
    if (input_ranges.empty()) throw ConfigError("dataset has no inputs");
    for (const auto& r : input_ranges)
      if (!(r.lo < r.hi)) throw ConfigError("dataset input range is degenerate");
    if (!(output_range.lo < output_range.hi)) throw ConfigError("dataset output range is degenerate");
    for (const auto& s : samples) {
      if (static_cast<int>(s.inputs.size()) != inputs()) throw InputError("sample arity mismatch");
      for (double v : s.inputs) detail::require_finite(v, "sample input");
      detail::require_finite(s.output, "sample output");
    }
  }
};

using Region = std::vector<Interval>;

struct ALMConfig {
  double spread_threshold = 0.5;
  int max_depth = 3;
  int nx = 64, ny = 64;
  InkWindow window;

  void validate() const {
    if (!(std::isfinite(spread_threshold) && spread_threshold > 0.0))
      throw ConfigError("alm spread threshold must be finite and positive");
    if (max_depth < 0) throw ConfigError("alm max depth must be non-negative");
    if (nx < 2 || ny < 2) throw ConfigError("alm grid needs at least 2 cells per axis");
  }
};

/// Binary partition of the input domain. Leaves carry the fitted lines.
struct PartitionNode {
  Region region;
  int depth = 0;
  int split_input = -1;  // -1 for a leaf
  double split_point = 0.0;
  std::unique_ptr<PartitionNode> low, high;
  std::vector<NarrowLine> lines;
  std::vector<double> spreads;
  std::vector<double> weights;
  std::size_t sample_count = 0;

  bool leaf() const { return split_input < 0; }
};

namespace detail {

inline bool in_region(const Sample& s, const Region& region) {
  for (std::size_t i = 0; i < region.size(); ++i)
    if (!region[i].contains(s.inputs[i])) return false;
  return true;
}

inline Plane project_indices(const Dataset& ds, const std::vector<std::size_t>& idx, int input,
                             const Interval& x_range, const ALMConfig& cfg) {
  Plane plane(GridSpec::over(x_range, ds.output_range, cfg.nx, cfg.ny));
  for (std::size_t k : idx) {
    const Sample& s = ds.samples[k];
    drop_ink(plane, s.inputs[input], ds.output_range.clamp(s.output), cfg.window, 1.0);
  }
  return plane;
}

}  // namespace detail

/// Plane of input `input` (restricted to the region) against the output, with
/// one unit ink drop per sample inside the region.
inline Plane project(const Dataset& ds, int input, const Region& region, const ALMConfig& cfg) {
  if (input < 0 || input >= ds.inputs()) throw InputError("project: input index out of range");
  if (static_cast<int>(region.size()) != ds.inputs()) throw InputError("project: region arity mismatch");
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < ds.samples.size(); ++k)
    if (detail::in_region(ds.samples[k], region)) idx.push_back(k);
  if (idx.empty()) throw EmptyDataError("project: no samples inside the region");
  return detail::project_indices(ds, idx, input, region[input], cfg);
}

struct AlmModel {
  FuzzySystem system;
  std::unique_ptr<PartitionNode> root;
  std::vector<std::string> log;
};

namespace detail {

class AlmFitter {
 public:
  AlmFitter(const Dataset& ds, const ALMConfig& cfg, std::vector<std::string>& log)
      : ds_(ds), cfg_(cfg), log_(log) {}

  std::unique_ptr<PartitionNode> fit(std::vector<std::size_t> idx, Region region, int depth,
                                     const PartitionNode* parent) {
    auto node = std::make_unique<PartitionNode>();
    node->region = region;
    node->depth = depth;
    node->sample_count = idx.size();

    if (idx.empty()) {
      log_.push_back("empty region at depth " + std::to_string(depth) + "; reusing parent lines");
      node->lines = parent->lines;
      node->spreads = parent->spreads;
      node->weights = parent->weights;
      return node;
    }

    const int m = ds_.inputs();
    for (int i = 0; i < m; ++i) {
      Plane plane = project_indices(ds_, idx, i, region[i], cfg_);
      NarrowLine line = extract_narrow_line(plane);
      node->spreads.push_back(spread_of(plane, line).aggregate);
      node->lines.push_back(std::move(line));
    }
    node->weights = importance_weights(node->spreads, ds_.output_range.width());

    const auto min_it = std::min_element(node->spreads.begin(), node->spreads.end());
    if (*min_it <= cfg_.spread_threshold || depth >= cfg_.max_depth) return node;

    const int worst = static_cast<int>(std::max_element(node->spreads.begin(), node->spreads.end()) -
                                       node->spreads.begin());
    const double mid = region[worst].mid();
    std::vector<std::size_t> lo_idx, hi_idx;
    for (std::size_t k : idx) (ds_.samples[k].inputs[worst] < mid ? lo_idx : hi_idx).push_back(k);

    Region lo_region = region, hi_region = region;
    lo_region[worst].hi = mid;
    hi_region[worst].lo = mid;
    node->split_input = worst;
    node->split_point = mid;
    node->low = fit(std::move(lo_idx), std::move(lo_region), depth + 1, node.get());
    node->high = fit(std::move(hi_idx), std::move(hi_region), depth + 1, node.get());
    return node;
  }

 private:
  const Dataset& ds_;
  const ALMConfig& cfg_;
  std::vector<std::string>& log_;
};

inline void collect_leaves(const PartitionNode& n, std::vector<const PartitionNode*>& out) {
  if (n.leaf()) {
    out.push_back(&n);
    return;
  }
  collect_leaves(*n.low, out);
  collect_leaves(*n.high, out);
}

inline bool overlaps_elsewhere(const Region& a, const Region& b, int skip) {
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (static_cast<int>(j) == skip) continue;
    if (!(a[j].lo < b[j].hi && b[j].lo < a[j].hi)) return false;
  }
  return true;
}

// Trapezoids with shoulders at the domain edges and ramps centred on interior
// edges. Each ramp reaches a quarter of the narrower of the two adjoining
// leaves into each side, so adjacent memberships along one input sum to 1.
inline std::vector<Trapezoid> leaf_antecedent(const PartitionNode& leaf,
                                              const std::vector<const PartitionNode*>& leaves,
                                              const std::vector<Interval>& domain) {
  std::vector<Trapezoid> out;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const Interval& iv = leaf.region[i];
    double lo_half = 0.0, hi_half = 0.0;
    if (iv.lo > domain[i].lo) {
      double w = iv.width();
      for (const auto* n : leaves)
        if (n != &leaf && n->region[i].hi == iv.lo && overlaps_elsewhere(n->region, leaf.region, static_cast<int>(i)))
          w = std::min(w, n->region[i].width());
      lo_half = 0.25 * w;
    }
    if (iv.hi < domain[i].hi) {
      double w = iv.width();
      for (const auto* n : leaves)
        if (n != &leaf && n->region[i].lo == iv.hi && overlaps_elsewhere(n->region, leaf.region, static_cast<int>(i)))
          w = std::min(w, n->region[i].width());
      hi_half = 0.25 * w;
    }
    out.push_back({iv.lo - lo_half, iv.lo + lo_half, iv.hi - hi_half, iv.hi + hi_half});
  }
  return out;
}

}  // namespace detail

/// Fits a rule base; also returns the partition tree.
inline AlmModel alm_fit_model(const Dataset& ds, const ALMConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (ds.empty()) throw EmptyDataError("alm_fit: dataset is empty");

  AlmModel model;
  std::vector<std::size_t> all(ds.samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  detail::AlmFitter fitter(ds, cfg, model.log);
  model.root = fitter.fit(std::move(all), ds.input_ranges, 0, nullptr);

  std::vector<const PartitionNode*> leaves;
  detail::collect_leaves(*model.root, leaves);
  FuzzySystem& fs = model.system;
  fs.input_ranges = ds.input_ranges;
  fs.output_range = ds.output_range;
  for (const auto* leaf : leaves) {
    Rule rule;
    rule.antecedent = detail::leaf_antecedent(*leaf, leaves, ds.input_ranges);
    rule.lines = leaf->lines;
    rule.weights = leaf->weights;
    fs.rules.push_back(std::move(rule));
  }
  return model;
}

inline FuzzySystem alm_fit(const Dataset& ds, const ALMConfig& cfg) { return alm_fit_model(ds, cfg).system; }

inline int tree_depth(const PartitionNode& n) {
  return n.leaf() ? n.depth : std::max(tree_depth(*n.low), tree_depth(*n.high));
}

// ---------------------------------------------------------------------------
// Dataset CSV: header in_0,...,in_{m-1},out

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  for (int i = 0; i < ds.inputs(); ++i) os << "in_" << i << ',';
  os << "out\n";
  for (const auto& s : ds.samples) {
    for (double v : s.inputs) os << detail::fmt_real(v) << ',';
    os << detail::fmt_real(s.output) << '\n';
  }
}

/// Reads samples; ranges are taken from `ranges` when given, else from the data.
inline Dataset read_dataset_csv(std::istream& is, const std::vector<Interval>& input_ranges = {},
                                std::optional<Interval> output_range = std::nullopt) {
  std::string header;
  if (!std::getline(is, header)) throw InputError("dataset csv: missing header");
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  if (cols.size() < 2 || cols.back() != "out") throw InputError("dataset csv: header must end with 'out'");
  const int m = static_cast<int>(cols.size()) - 1;
  for (int i = 0; i < m; ++i)
    if (cols[i] != "in_" + std::to_string(i)) throw InputError("dataset csv: unexpected column '" + cols[i] + "'");

  Dataset ds;
  std::string row;
  while (std::getline(is, row)) {
    if (row.empty()) continue;
    std::istringstream rs(row);
    std::string tok;
    Sample s;
    std::vector<double> vals;
    while (std::getline(rs, tok, ',')) {
      try {
        vals.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw InputError("dataset csv: bad number '" + tok + "'");
      }
    }
    if (static_cast<int>(vals.size()) != m + 1) throw InputError("dataset csv: wrong column count");
    s.output = vals.back();
    vals.pop_back();
    s.inputs = std::move(vals);
    ds.samples.push_back(std::move(s));
  }

  auto bounds = [&](auto get) {
    Interval r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& s : ds.samples) {
      r.lo = std::min(r.lo, get(s));
      r.hi = std::max(r.hi, get(s));
    }
    if (!(r.lo < r.hi)) r = {r.lo - 0.5, r.lo + 0.5};
    return r;
  };
  if (!input_ranges.empty()) {
    ds.input_ranges = input_ranges;
  } else {
    if (ds.samples.empty()) throw InputError("dataset csv: no rows to infer ranges from");
    for (int i = 0; i < m; ++i) ds.input_ranges.push_back(bounds([i](const Sample& s) { return s.inputs[i]; }));
  }
  if (output_range) {
    ds.output_range = *output_range;
  } else {
    if (ds.samples.empty()) throw InputError("dataset csv: no rows to infer ranges from");
    ds.output_range = bounds([](const Sample& s) { return s.output; });
  }
  ds.validate();
  return ds;
}

}  // namespace ralm
