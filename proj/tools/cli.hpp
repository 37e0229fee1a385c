#pragma once

// `ralm` command line: train / eval / export. Kept in a header so the test
// suite can drive the same entry point in-process.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ralm/config.hpp"
#include "ralm/learner.hpp"

namespace ralm::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kAbort = 3 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string env;
  std::string mode;
  std::string initial_states;
  std::string model;
  std::string rpp;
  std::string format = "csv";
  std::string what;
  std::vector<std::string> sets;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  return out;
}

/// Config file (or the env preset), then flags, then `--set key=value`.
inline RunConfig resolve_config(const Options& o) {
  RunConfig c;
  if (!o.config.empty()) {
    std::istringstream is(read_file(o.config));
    c = parse_config(is);
  } else {
    c = preset(o.env.empty() ? "pendulum" : o.env);
  }
  // The preset is chosen by the plant, so --env cannot switch a loaded config.
  if (!o.env.empty() && o.env != c.env)
    throw ConfigError("--env " + o.env + " conflicts with env = " + c.env + " in the config");
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  if (!o.mode.empty()) set_key(c, "mode", o.mode);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_key(c, detail::trim(std::string_view(s).substr(0, eq)), detail::trim(std::string_view(s).substr(eq + 1)));
  }
  validate(c);
  return c;
}

/// Two numbers per row; a non-numeric first line is taken as a header.
inline std::vector<std::vector<double>> read_states_csv(const std::string& path) {
  std::istringstream is(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ls(t);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      const std::string c = detail::trim(cell);
      double v = 0.0;
      const auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || p != c.data() + c.size() || !std::isfinite(v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected numbers");
    }
    if (row.size() != 2) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 2 values per row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path + ": no initial states");
  return rows;
}

inline FuzzySystem read_model(const std::string& path) {
  std::istringstream is(read_file(path));
  try {
    return read_fuzzy_system(is);
  } catch (const InputError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_plane(const fs::path& dir, const std::string& stem, const Plane& p, const std::string& format) {
  if (format == "csv" || format == "both") {
    auto out = open_out(dir / (stem + ".csv"));
    write_plane_csv(out, p);
  }
  if (format == "pgm" || format == "both") {
    auto out = open_out(dir / (stem + ".pgm"));
    write_plane_pgm(out, p);
  }
}

inline void write_rpp(const fs::path& dir, const RPP& rpp, const std::string& format) {
  write_plane(dir, "rpp", rpp.plane(), format);
  auto out = open_out(dir / "rpp_mask.csv");
  write_mask_csv(out, rpp);
}

inline void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  auto out = open_out(p);
  for (const auto& l : lines) out << l << '\n';
}

template <ControlEnv Env>
int train_with(Env env, const RunConfig& c, const Options& o) {
  TrainConfig t = train_config(c, env);
  if (!o.initial_states.empty()) t.start_states = read_states_csv(o.initial_states);
  const fs::path dir = c.out;
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "config.txt");
    write_config(out, c);
  }
  const int inputs = static_cast<int>(env.input_ranges().size());
  Metrics metrics;
  if (t.mode == TrainMode::Offline) {
    OfflineResult r = train_offline(env, t);
    {
      auto out = open_out(dir / "rules.txt");
      write_fuzzy_system(out, r.system);
    }
    write_rpp(dir, r.rpp, "both");
    for (int i = 0; i < r.planes.inputs(); ++i) write_plane(dir, "plane_" + std::to_string(i), r.planes.plane(i), "both");
    {
      auto out = open_out(dir / "filtered.csv");
      write_dataset_csv(out, r.filtered);
    }
    write_lines(dir / "alm_log.txt", r.log);
    metrics = std::move(r.metrics);
    std::cout << "offline: " << metrics.episodes << " episodes, " << metrics.steps << " steps, "
              << metrics.success_count << " successes, " << r.filtered.samples.size() << "/" << r.data.samples.size()
              << " samples kept, " << r.system.rules.size() << " rules\n";
  } else {
    const FuzzySystem seed = c.seed_model.empty()
                                 ? linear_law_system(env.input_ranges(), env.action_range(), c.seed_kp, c.seed_kd)
                                 : read_model(c.seed_model);
    OnlineResult r = train_online(env, seed, t);
    {
      auto out = open_out(dir / "rules.txt");
      write_fuzzy_system(out, r.system);
    }
    write_rpp(dir, r.rpp, "both");
    for (int i = 0; i < r.system.inputs(); ++i)
      write_plane(dir, "plane_" + std::to_string(i), (*r.system.backing_planes)[i], "both");
    write_lines(dir / "refresh_log.txt", r.log);
    metrics = std::move(r.metrics);
    std::cout << "online: " << metrics.steps << " steps, " << metrics.episodes << " episodes, steps_to_stable "
              << metrics.steps_to_stable << "\n";
  }
  {
    auto out = open_out(dir / "trajectory.csv");
    write_trajectory_csv(out, metrics.trajectory, inputs);
  }
  auto out = open_out(dir / "metrics.csv");
  write_metrics_csv(out, metrics);
  return kOk;
}

template <ControlEnv Env>
int eval_with(Env env, const RunConfig& c, const Options& o) {
  if (o.model.empty()) throw ConfigError("eval needs --model");
  const FuzzySystem model = read_model(o.model);
  if (model.inputs() != static_cast<int>(env.input_ranges().size()))
    throw ConfigError("model input count does not match env " + c.env);
  const TrainConfig t = train_config(c, env);
  const auto starts = o.initial_states.empty() ? play_area_starts(env, t.rpp, c.eval_starts, c.eval_seed)
                                               : read_states_csv(o.initial_states);
  EvalResult r = evaluate(env, model, starts, t.rpp, eval_config(c));
  const fs::path dir = c.out;
  fs::create_directories(dir);
  for (std::size_t k = 0; k < r.rollouts.size(); ++k) {
    std::ostringstream name;
    name << "rollout_" << std::setw(3) << std::setfill('0') << k << ".csv";
    auto out = open_out(dir / name.str());
    write_trajectory_csv(out, r.rollouts[k].trajectory, model.inputs());
  }
  {
    auto out = open_out(dir / "eval_metrics.csv");
    write_metrics_csv(out, r.metrics);
  }
  std::cout << "eval: " << r.metrics.success_count << "/" << r.metrics.episodes << " stabilized, rise time "
            << (r.metrics.rise_time ? detail::fmt_real(*r.metrics.rise_time) + " s" : std::string("unreached"))
            << ", overshoot " << detail::fmt_real(r.metrics.overshoot) << " %\n";
  return kOk;
}

template <ControlEnv Env>
int export_with(Env env, const RunConfig& c, const Options& o) {
  if (o.format != "csv" && o.format != "pgm") throw ConfigError("--format must be csv or pgm");
  const fs::path dir = c.out;
  if (o.what == "rules") {
    if (o.model.empty()) throw ConfigError("export rules needs --model");
    const FuzzySystem model = read_model(o.model);
    fs::create_directories(dir);
    auto out = open_out(dir / "rules.txt");
    write_fuzzy_system(out, model);
    return kOk;
  }
  if (o.what == "planes") {
    if (o.model.empty()) throw ConfigError("export planes needs --model");
    const FuzzySystem model = read_model(o.model);
    fs::create_directories(dir);
    const auto planes = seed_backing_planes(model, c.plane_nx, c.plane_ny, c.plane_window.window(), 1.0);
    for (std::size_t i = 0; i < planes.size(); ++i) write_plane(dir, "plane_" + std::to_string(i), planes[i], o.format);
    return kOk;
  }
  if (o.what == "rpp") {
    RPP rpp(train_config(c, env).rpp);
    if (!o.rpp.empty()) {
      std::istringstream is(read_file(o.rpp));
      try {
        rpp.load_values(read_plane_csv(is));
      } catch (const InputError& e) {
        throw ConfigError(o.rpp + ": " + e.what());
      }
    }
    fs::create_directories(dir);
    write_rpp(dir, rpp, o.format);
    return kOk;
  }
  throw ConfigError("unknown export artifact '" + o.what + "' (expected rules, planes or rpp)");
}

template <typename Fn>
int with_env(const RunConfig& c, Fn&& fn) {
  if (c.env == "ballbeam") return fn(BallBeamEnv(c.env_params));
  return fn(PendulumEnv(c.env_params));
}

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"RALM: reinforcement learning with the active learning method"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "config file (key = value)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--env", o.env, "pendulum or ballbeam")->check(CLI::IsMember({"pendulum", "ballbeam"}));
    sub->add_option("--set", o.sets, "override one config key (key=value)");
  };
  CLI::App* train = app.add_subcommand("train", "train a controller, write rules, planes, logs, metrics");
  common(train);
  train->add_option("--mode", o.mode, "offline or online")->check(CLI::IsMember({"offline", "online"}));
  train->add_option("--initial-states", o.initial_states, "CSV of start states, cycled per episode");

  CLI::App* eval = app.add_subcommand("eval", "closed-loop rollouts of a rule base");
  common(eval);
  eval->add_option("--model", o.model, "rule base (RALM-FS v1)")->required();
  eval->add_option("--initial-states", o.initial_states, "CSV of start states, one rollout each");

  CLI::App* exp = app.add_subcommand("export", "write rules, planes or the critic plane");
  common(exp);
  exp->add_option("what", o.what, "rules, planes or rpp")->required();
  exp->add_option("--model", o.model, "rule base (RALM-FS v1)");
  exp->add_option("--rpp", o.rpp, "critic plane dump (CSV) to export instead of a fresh one");
  exp->add_option("--format", o.format, "csv or pgm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "ralm: " << e.what() << '\n' << app.help();
    return kUsage;
  }

  try {
    const RunConfig c = resolve_config(o);
    if (train->parsed()) return with_env(c, [&](auto env) { return train_with(env, c, o); });
    if (eval->parsed()) return with_env(c, [&](auto env) { return eval_with(env, c, o); });
    return with_env(c, [&](auto env) { return export_with(env, c, o); });
  } catch (const TrainingAbort& e) {
    err << "ralm: training aborted: " << e.what() << '\n';
    return kAbort;
  } catch (const EmptyDataError& e) {
    err << "ralm: training produced no usable data: " << e.what() << '\n';
    return kAbort;
  } catch (const ConfigError& e) {
    err << "ralm: " << e.what() << '\n';
    return kUsage;
  } catch (const InputError& e) {
    err << "ralm: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "ralm: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace ralm::cli
