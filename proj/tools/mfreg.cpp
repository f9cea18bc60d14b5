// mfreg: local Frechet regression, warping, extrema and simulation from the command line.

#include <mfreg/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

  struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> input;
    std::optional<std::string> out;
    std::optional<std::string> geometry;
    std::optional<std::string> kernel;
    std::optional<std::string> bandwidth;
    std::optional<std::size_t> grid;
    std::optional<double> tau;
    std::optional<std::size_t> p;
    std::optional<double> lambda;
    std::optional<double> xi;
    std::optional<std::size_t> quad_nodes;
    std::optional<std::uint64_t> seed;
    std::optional<int> case_id;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> subjects;
    std::optional<std::size_t> observations;
  };

  void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file; flags override its keys");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--seed", f.seed, "random seed");
    app->add_option("--geometry", f.geometry, "wasserstein | correlation");
    app->add_option("--kernel", f.kernel, "epanechnikov | gaussian");
    app->add_option("--grid", f.grid, "evaluation grid size");
  }

  void add_input(CLI::App* app, Flags& f) {
    app->add_option("--input,input", f.input, "observation file (CSV for distributions, JSON lines for correlation matrices)");
    app->add_option("--bandwidth", f.bandwidth, "cv | <float>");
    app->add_option("--tau", f.tau, "domain length (default: largest observed time)");
  }

  void add_warp(CLI::App* app, Flags& f) {
    app->add_option("--p", f.p, "number of interior spline knots");
    app->add_option("--lambda", f.lambda, "penalty weight");
    app->add_option("--xi", f.xi, "minimum knot increment (default 0.1 tau / (p + 1))");
    app->add_option("--quad-nodes", f.quad_nodes, "quadrature nodes of the warping objective");
  }

  nlohmann::json overrides(const Flags& f) {
    nlohmann::json j = nlohmann::json::object();
    auto put = [&j](const char* key, const auto& v) {
      if (v) { j[key] = *v; }
    };
    put("input", f.input);
    put("out", f.out);
    put("geometry", f.geometry);
    put("kernel", f.kernel);
    put("bandwidth", f.bandwidth);
    put("grid", f.grid);
    put("tau", f.tau);
    put("p", f.p);
    put("lambda", f.lambda);
    put("xi", f.xi);
    put("quad_nodes", f.quad_nodes);
    put("seed", f.seed);
    put("case", f.case_id);
    put("runs", f.runs);
    put("subjects", f.subjects);
    put("observations", f.observations);
    return j;
  }

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frechet regression and time warping for metric-space-valued trajectories"};
  app.require_subcommand(1);
  Flags f;

  auto* fit = app.add_subcommand("fit", "fit each subject's trajectory on the evaluation grid");
  add_common(fit, f);
  add_input(fit, f);

  auto* warp = app.add_subcommand("warp", "estimate pairwise and global time warps and align the trajectories");
  add_common(warp, f);
  add_input(warp, f);
  add_warp(warp, f);

  auto* extrema = app.add_subcommand("extrema", "Fiedler-value curve of the mean trajectory and its minimizer");
  add_common(extrema, f);
  add_input(extrema, f);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of warping accuracy");
  add_common(simulate, f);
  add_warp(simulate, f);
  simulate->add_option("--case", f.case_id, "trajectory case (1 or 2)");
  simulate->add_option("--runs", f.runs, "Monte Carlo runs");
  simulate->add_option("--subjects", f.subjects, "subjects per run");
  simulate->add_option("--observations", f.observations, "observations per subject");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::optional<std::filesystem::path> config_file = f.config ? std::optional<std::filesystem::path>(*f.config) : std::nullopt;
    const mfreg::cli::RunConfig cfg = mfreg::cli::make_config(config_file, overrides(f));
    if (*fit) {
      mfreg::cli::cmd_fit(cfg);
    } else if (*warp) {
      mfreg::cli::cmd_warp(cfg);
    } else if (*extrema) {
      const auto res = mfreg::cli::cmd_extrema(cfg);
      std::cout << "t_min " << mfreg::io::format_double(res.t_min) << "\n";
    } else if (*simulate) {
      mfreg::cli::cmd_simulate(cfg, &std::cerr);
    }
  } catch (const mfreg::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
