#pragma once

// Pipelines behind the command-line tool: fit, warp, extrema, simulate.

#include "error.hpp"
#include "extrema.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "lofreg.hpp"
#include "parallel.hpp"
#include "simlab.hpp"
#include "warping.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mfreg::cli {

  using json = nlohmann::json;

  enum class GeometryKind { wasserstein, correlation };

  inline GeometryKind parse_geometry(std::string_view s) {
    if (s == "wasserstein") { return GeometryKind::wasserstein; }
    if (s == "correlation") { return GeometryKind::correlation; }
    throw InvalidInput("unknown geometry '" + std::string(s) + "' (expected wasserstein or correlation)");
  }

  /// Settings for one command. Unset optionals take the command's default.
  struct RunConfig {
    std::string input;
    std::filesystem::path out = ".";
    GeometryKind geometry = GeometryKind::wasserstein;
    KernelFamily kernel = KernelFamily::epanechnikov;
    std::optional<double> bandwidth;  ///< empty: leave-one-out CV
    std::size_t grid = default_eval_grid_size;
    std::optional<double> tau;        ///< empty: largest observed time
    std::optional<std::vector<std::size_t>> p;
    std::optional<std::vector<double>> lambda;
    double xi = 0.0;
    std::size_t quad_nodes = 101;
    std::optional<std::uint64_t> seed;
    std::string functional = "fiedler";
    // simulate
    int case_id = 1;
    std::size_t runs = 100;
    std::size_t subjects = 30;
    std::size_t observations = 30;
    std::size_t quantile_grid = ProbabilityGrid::default_size;
    double xi_fraction = 0.1;
  };

  namespace detail {
    template<typename T>
    T get_as(const json& v, const std::string& key) {
      try {
        return v.get<T>();
      } catch (const json::exception&) {
        throw InvalidInput("config key '" + key + "' has the wrong type");
      }
    }

    inline std::size_t get_count(const json& v, const std::string& key) {
      if (!v.is_number_integer() || v.get<long long>() < 0) { throw InvalidInput("config key '" + key + "' must be a non-negative integer"); }
      return v.get<std::size_t>();
    }

    inline double get_real(const json& v, const std::string& key) {
      if (!v.is_number()) { throw InvalidInput("config key '" + key + "' must be a number"); }
      return v.get<double>();
    }

    template<typename F>
    auto scalar_or_list(const json& v, const std::string& key, F one) {
      using T = decltype(one(v, key));
      std::vector<T> out;
      if (v.is_array()) {
        for (const auto& e : v) { out.push_back(one(e, key)); }
      } else {
        out.push_back(one(v, key));
      }
      if (out.empty()) { throw InvalidInput("config key '" + key + "' must not be empty"); }
      return out;
    }
  }

  /// Applies every key of `j` to `cfg`; unknown keys are rejected.
  inline void apply_settings(RunConfig& cfg, const json& j) {
    if (!j.is_object()) { throw InvalidInput("config must be a JSON object"); }
    for (const auto& [key, v] : j.items()) {
      if (key == "input") { cfg.input = detail::get_as<std::string>(v, key); }
      else if (key == "out") { cfg.out = detail::get_as<std::string>(v, key); }
      else if (key == "geometry") { cfg.geometry = parse_geometry(detail::get_as<std::string>(v, key)); }
      else if (key == "kernel") { cfg.kernel = parse_kernel_family(detail::get_as<std::string>(v, key)); }
      else if (key == "bandwidth") {
        if (v.is_string()) {
          const auto s = v.get<std::string>();
          if (s == "cv") { cfg.bandwidth.reset(); }
          else if (const auto d = io::parse_double(s)) { cfg.bandwidth = *d; }
          else { throw InvalidInput("bandwidth must be 'cv' or a number"); }
        } else {
          cfg.bandwidth = detail::get_real(v, key);
        }
        if (cfg.bandwidth && !(*cfg.bandwidth > 0.0)) { throw InvalidInput("bandwidth must be positive"); }
      }
      else if (key == "grid") { cfg.grid = detail::get_count(v, key); }
      else if (key == "tau") { cfg.tau = detail::get_real(v, key); }
      else if (key == "p") { cfg.p = detail::scalar_or_list(v, key, detail::get_count); }
      else if (key == "lambda") { cfg.lambda = detail::scalar_or_list(v, key, detail::get_real); }
      else if (key == "xi") { cfg.xi = detail::get_real(v, key); }
      else if (key == "quad_nodes") { cfg.quad_nodes = detail::get_count(v, key); }
      else if (key == "seed") { cfg.seed = detail::get_count(v, key); }
      else if (key == "functional") { cfg.functional = detail::get_as<std::string>(v, key); }
      else if (key == "case") { cfg.case_id = static_cast<int>(detail::get_count(v, key)); }
      else if (key == "runs") { cfg.runs = detail::get_count(v, key); }
      else if (key == "subjects") { cfg.subjects = detail::get_count(v, key); }
      else if (key == "observations") { cfg.observations = detail::get_count(v, key); }
      else if (key == "quantile_grid") { cfg.quantile_grid = detail::get_count(v, key); }
      else if (key == "xi_fraction") { cfg.xi_fraction = detail::get_real(v, key); }
      else { throw InvalidInput("unknown config key '" + key + "'"); }
    }
  }

  inline json load_config_file(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw InvalidInput(path.string() + ": " + e.what());
    }
  }

  /// Config file settings first, then `overrides` (the command-line flags) on top.
  inline RunConfig make_config(const std::optional<std::filesystem::path>& config_file, const json& overrides) {
    RunConfig cfg;
    if (config_file) { apply_settings(cfg, load_config_file(*config_file)); }
    apply_settings(cfg, overrides);
    return cfg;
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Shared steps
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  template<Geometry G>
  std::vector<io::SubjectSeries<G>> load_series(const RunConfig& cfg) {
    if (cfg.input.empty()) { throw InvalidInput("no input file given"); }
    const std::string text = io::read_file(cfg.input);
    std::vector<io::SubjectSeries<G>> out;
    if constexpr (std::is_same_v<G, Wasserstein>) {
      out = io::parse_distribution_csv(text, cfg.input);
    } else {
      out = io::parse_correlation_jsonl(text, cfg.input);
    }
    if (out.empty()) { throw InvalidInput(cfg.input + ": no observations"); }
    return out;
  }

  template<Geometry G>
  double domain_length(const RunConfig& cfg, std::span<const io::SubjectSeries<G>> all) {
    if (cfg.tau) { return *cfg.tau; }
    double tau = 0.0;
    for (const auto& s : all) {
      for (double t : s.times) { tau = std::max(tau, t); }
    }
    if (!(tau > 0.0)) { throw InvalidInput("cannot infer the time domain: every observation time is 0"); }
    return tau;
  }

  inline std::vector<double> eval_grid(const RunConfig& cfg, double tau) {
    if (cfg.grid == 0) { throw InvalidInput("evaluation grid is empty"); }
    if (cfg.grid < 2) { throw InvalidInput("evaluation grid needs at least 2 nodes"); }
    return uniform_grid(tau, cfg.grid);
  }

  template<Geometry G>
  struct SubjectFit {
    FittedTrajectory<G> trajectory;
    std::optional<BandwidthSelection> selection;
  };

  /// Fixed bandwidth, or leave-one-out CV over the default candidates.
  template<Geometry G>
  SubjectFit<G> fit_subject(const ObservationSet<G>& obs, std::span<const double> grid, const RunConfig& cfg) {
    SubjectFit<G> out;
    double b = 0.0;
    if (cfg.bandwidth) {
      b = *cfg.bandwidth;
    } else {
      const auto candidates = default_bandwidth_candidates(obs.times(), obs.tau());
      out.selection = loo_cv_bandwidth(obs, candidates, cfg.kernel, thread_count());
      b = out.selection->bandwidth;
    }
    out.trajectory = fit_grid(obs, grid, KernelSpec(cfg.kernel, b), thread_count());
    return out;
  }

  inline json selection_json(const std::optional<BandwidthSelection>& sel) {
    if (!sel) { return nullptr; }
    json scores = json::array();
    for (double s : sel->scores) { scores.push_back(std::isfinite(s) ? json(s) : json(nullptr)); }
    return json{{"candidates", sel->candidates}, {"scores", scores}};
  }

  inline std::string file_stem(const std::string& subject) {
    std::string s = subject;
    for (char& c : s) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
      if (!ok) { c = '_'; }
    }
    return s;
  }

  template<Geometry G>
  std::string series_file_content(std::span<const io::SubjectSeries<G>> all) {
    if constexpr (std::is_same_v<G, Wasserstein>) {
      return io::distribution_csv(all);
    } else {
      return io::correlation_jsonl(all);
    }
  }

  template<Geometry G>
  std::string series_file_name(std::string_view stem) {
    return std::string(stem) + (std::is_same_v<G, Wasserstein> ? ".csv" : ".jsonl");
  }

  template<Geometry G>
  struct FitAll {
    double tau = 0.0;
    std::vector<double> grid;
    std::vector<std::string> subjects;
    std::vector<SubjectFit<G>> fits;
  };

  template<Geometry G>
  FitAll<G> fit_all(const RunConfig& cfg) {
    const auto series = load_series<G>(cfg);
    FitAll<G> out;
    out.tau = domain_length<G>(cfg, series);
    out.grid = eval_grid(cfg, out.tau);
    for (const auto& s : series) {
      try {
        const ObservationSet<G> obs(out.tau, s.times, s.points);
        out.subjects.push_back(s.subject);
        out.fits.push_back(fit_subject(obs, out.grid, cfg));
      } catch (const Error& e) {
        throw InvalidInput("subject " + s.subject + ": " + e.what());
      }
    }
    return out;
  }

  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---
  // Commands
  // --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- --- ---

  /// Writes fitted.{csv|jsonl} (one series per subject on the eval grid) and fit_meta.json.
  template<Geometry G>
  void cmd_fit_as(const RunConfig& cfg) {
    const auto all = fit_all<G>(cfg);
    std::vector<io::SubjectSeries<G>> fitted;
    json subjects = json::array();
    for (std::size_t i = 0; i < all.fits.size(); ++i) {
      fitted.push_back(io::as_series(all.subjects[i], all.fits[i].trajectory));
      subjects.push_back({{"subject", all.subjects[i]}, {"bandwidth", all.fits[i].trajectory.bandwidth}, {"cv", selection_json(all.fits[i].selection)}});
    }
    const json meta{{"geometry", std::string(G::name)},
                    {"kernel", std::string(to_string(cfg.kernel))},
                    {"tau", all.tau},
                    {"grid", all.grid.size()},
                    {"subjects", subjects}};
    io::write_file_atomic(cfg.out / series_file_name<G>("fitted"), series_file_content<G>(fitted));
    io::write_file_atomic(cfg.out / "fit_meta.json", meta.dump(2) + "\n");
  }

  inline void cmd_fit(const RunConfig& cfg) {
    if (cfg.geometry == GeometryKind::wasserstein) { cmd_fit_as<Wasserstein>(cfg); }
    else { cmd_fit_as<Correlation>(cfg); }
  }

  inline WarpConfig warp_config(const RunConfig& cfg) {
    if ((cfg.p && cfg.p->size() != 1) || (cfg.lambda && cfg.lambda->size() != 1)) {
      throw InvalidInput("warp takes a single p and a single lambda");
    }
    WarpConfig wc;
    wc.p = cfg.p ? cfg.p->front() : 3;
    wc.lambda = cfg.lambda ? cfg.lambda->front() : 0.0;
    wc.xi = cfg.xi;
    wc.quad_nodes = cfg.quad_nodes;
    wc.seed = cfg.seed.value_or(0);
    return wc;
  }

  /// Writes warp_<subject>.csv (estimated h_i on the eval grid), aligned.{csv|jsonl} and pairwise.json.
  template<Geometry G>
  void cmd_warp_as(const RunConfig& cfg) {
    const WarpConfig wc = warp_config(cfg);
    const auto all = fit_all<G>(cfg);
    const std::size_t n = all.fits.size();
    if (n < 2) { throw InvalidInput("warp needs at least 2 subjects"); }
    wc.validate(all.tau);

    std::vector<FittedTrajectory<G>> trajs;
    for (const auto& f : all.fits) { trajs.push_back(f.trajectory); }
    const PairwiseWarps warps = estimate_all_pairwise<G>(trajs, wc, thread_count());

    std::vector<io::SubjectSeries<G>> aligned;
    std::vector<std::pair<std::filesystem::path, std::string>> files;
    for (std::size_t i = 0; i < n; ++i) {
      const GlobalWarp g = estimate_global(warps, i, all.grid);
      files.emplace_back(cfg.out / ("warp_" + file_stem(all.subjects[i]) + ".csv"), io::warp_csv(all.grid, g.forward.tabulate(all.grid)));
      aligned.push_back(io::as_series(all.subjects[i], align_trajectory(trajs[i], g.forward)));
    }

    json coefficients = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      json row = json::array();
      for (std::size_t ip = 0; ip < n; ++ip) {
        row.push_back(i == ip ? json(nullptr) : json(warps.get(i, ip)->theta));
      }
      coefficients.push_back(row);
    }
    std::vector<double> knots;
    for (std::size_t k = 0; k < warps.basis().size(); ++k) { knots.push_back(warps.basis().knot(k + 1)); }
    const json pairwise{{"p", wc.p},
                        {"lambda", wc.lambda},
                        {"xi", wc.effective_xi(all.tau)},
                        {"tau", all.tau},
                        {"knots", knots},
                        {"subjects", all.subjects},
                        {"coefficients", coefficients}};

    for (const auto& [path, content] : files) { io::write_file_atomic(path, content); }
    io::write_file_atomic(cfg.out / series_file_name<G>("aligned"), series_file_content<G>(aligned));
    io::write_file_atomic(cfg.out / "pairwise.json", pairwise.dump(2) + "\n");
  }

  inline void cmd_warp(const RunConfig& cfg) {
    if (cfg.geometry == GeometryKind::wasserstein) { cmd_warp_as<Wasserstein>(cfg); }
    else { cmd_warp_as<Correlation>(cfg); }
  }

  struct ExtremaResult {
    SummaryCurve curve;
    double t_min = 0.0;
    double bandwidth = 0.0;
  };

  /// Pools every observation into one mean-trajectory fit, then locates the minimum of its Fiedler curve.
  /// Writes summary_curve.csv and extrema.json.
  inline ExtremaResult cmd_extrema(const RunConfig& cfg) {
    if (cfg.functional != "fiedler") { throw InvalidInput("unknown summary functional '" + cfg.functional + "'"); }
    if (cfg.geometry != GeometryKind::correlation) { throw InvalidInput("the fiedler functional needs --geometry correlation"); }
    if (cfg.grid == 0) { throw InvalidInput("evaluation grid is empty"); }
    const auto series = load_series<Correlation>(cfg);
    const double tau = domain_length<Correlation>(cfg, series);
    const auto grid = eval_grid(cfg, tau);

    std::vector<double> times;
    std::vector<CorrelationMatrix> points;
    for (const auto& s : series) {
      times.insert(times.end(), s.times.begin(), s.times.end());
      points.insert(points.end(), s.points.begin(), s.points.end());
    }
    const ObservationSet<Correlation> obs(tau, std::move(times), std::move(points));
    const auto fit = fit_subject(obs, grid, cfg);

    ExtremaResult res;
    res.curve = summary_curve(fit.trajectory, SummaryFunctional<Correlation>::fiedler());
    res.t_min = argmin_location(res.curve);
    res.bandwidth = fit.trajectory.bandwidth;
    const json meta{{"functional", cfg.functional},
                    {"t_min", res.t_min},
                    {"min_value", *std::min_element(res.curve.values.begin(), res.curve.values.end())},
                    {"bandwidth", res.bandwidth},
                    {"cv", selection_json(fit.selection)},
                    {"tau", tau}};
    io::write_file_atomic(cfg.out / "summary_curve.csv", io::summary_curve_csv(res.curve));
    io::write_file_atomic(cfg.out / "extrema.json", meta.dump(2) + "\n");
    return res;
  }

  inline MCConfig mc_config(const RunConfig& cfg) {
    MCConfig mc;
    mc.case_id = cfg.case_id;
    mc.subjects = cfg.subjects;
    mc.observations = cfg.observations;
    if (cfg.p) { mc.p = *cfg.p; }
    if (cfg.lambda) { mc.lambda = *cfg.lambda; }
    mc.runs = cfg.runs;
    mc.seed = cfg.seed.value_or(1);
    mc.quantile_grid = cfg.quantile_grid;
    mc.eval_grid = cfg.grid;
    mc.quad_nodes = cfg.quad_nodes;
    mc.xi_fraction = cfg.xi_fraction;
    mc.kernel = cfg.kernel;
    mc.validate();
    return mc;
  }

  /// Writes mise_runs.csv and mise_summary.csv. Failed runs are reported and make the command fail
  /// after the surviving runs have been written.
  inline MISEReport cmd_simulate(const RunConfig& cfg, std::ostream* progress = nullptr) {
    if (cfg.geometry != GeometryKind::wasserstein) { throw InvalidInput("simulate generates distribution-valued data only"); }
    const MCConfig mc = mc_config(cfg);
    std::mutex progress_mutex;
    std::size_t done = 0;
    const MISEReport report = run_monte_carlo(mc, thread_count(), [&](std::size_t) {
      if (!progress) { return; }
      const std::lock_guard lock(progress_mutex);
      *progress << "run " << ++done << "/" << mc.runs << " done\n" << std::flush;
    });
    io::write_file_atomic(cfg.out / "mise_runs.csv", io::mise_runs_csv(report));
    if (!report.entries.empty()) { io::write_file_atomic(cfg.out / "mise_summary.csv", io::mise_summary_csv(report)); }
    if (!report.failures.empty()) {
      std::string msg = std::to_string(report.failures.size()) + " of " + std::to_string(mc.runs) + " runs failed:";
      for (const auto& f : report.failures) { msg += "\n  run " + std::to_string(f.run) + ": " + f.message; }
      throw Error(msg);
    }
    return report;
  }

} // namespace mfreg::cli
