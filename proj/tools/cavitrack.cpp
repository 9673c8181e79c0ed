#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "cavitrack/study.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cavitrack;

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::string out;
  int workers = 0;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool config_required = true) {
  sub->add_option("-c,--config", c.config, "JSON study configuration")->check(CLI::ExistingFile)->required(config_required);
  sub->add_option("-o,--out", c.out, "output directory (overrides the config)");
  sub->add_option("-w,--workers", c.workers, "worker threads (overrides the config)")->check(CLI::Range(1, 1024));
  sub->add_option("--seed", c.seed, "random seed (overrides the config)");
}

study::StudyConfig resolve(const Common& c) {
  study::StudyConfig cfg = c.config.empty() ? study::StudyConfig{} : study::load_config(c.config);
  if (!c.out.empty()) cfg.output = c.out;
  if (c.workers > 0) cfg.workers = c.workers;
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

int cmd_track(const study::StudyConfig& cfg) {
  const auto setup = study::make_setup(cfg);
  const auto res = study::run_sweep(cfg, setup);
  study::write_sweep(cfg, res, cfg.output);
  std::cout << "tracked " << cfg.modes << " modes over " << res.radii.size() << " radii -> " << cfg.output.string()
            << '\n';
  if (res.crossing) std::cout << "first crossing of modes 1 and 2 near r = " << *res.crossing << " m\n";
  if (!res.success) {
    std::cerr << "tracking failed: " << res.message << '\n';
    return kNumerical;
  }
  return kOk;
}

int cmd_uq(const study::StudyConfig& cfg) {
  const auto setup = study::make_setup(cfg);
  const auto res = study::run_uq(cfg, setup);
  study::write_uq(cfg, res, cfg.output);
  std::cout << res.grid.grid.size() << " collocation points, " << res.truncation << " parameters, Newton mean "
            << res.newton.mean << " max " << res.newton.max << '\n';
  if (!res.table.complete) {
    std::cerr << "some tracks failed; moments were not written\n";
    return kNumerical;
  }
  for (std::size_t j = 0; j < res.moments.mean.size(); ++j)
    std::cout << "mode " << j + 1 << ": mean " << res.moments.mean[j] << " Hz, sd "
              << std::sqrt(std::max(res.moments.variance[j], 0.0)) << " Hz\n";
  return kOk;
}

int cmd_bench(const study::StudyConfig& cfg) {
  const auto setup = study::make_setup(cfg);
  const auto b = study::run_bench(cfg, setup);
  study::write_bench(b, cfg.output);
  std::cout << "linear solves per (mode, point): tracking " << b.tracked_per_pair_with_base() << ", direct 2n "
            << b.direct_per_pair() << '\n';
  return kOk;
}

int cmd_kl_fit(const study::StudyConfig& cfg) {
  const auto kl = study::run_kl_fit(cfg, cfg.output);
  std::cout << "retained " << kl.truncation() << " of " << kl.dimension() << " modes ("
            << 100.0 * kl.captured_fraction() << "% of the variance)\n";
  return kOk;
}

int cmd_grid(const study::StudyConfig& cfg) {
  const auto g = study::run_grid(cfg, cfg.output);
  std::cout << g.size() << " nodes in " << g.dimension() << " dimensions\n";
  return kOk;
}

int cmd_reference(const study::StudyConfig& cfg) {
  for (const auto& lf : study::run_pillbox_reference(cfg, cfg.output))
    std::cout << lf.label.name() << (lf.label.degeneracy > 1 ? " (x2)" : "") << "  " << lf.frequency << " Hz\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric eigenmode tracking and uncertainty quantification for cavity resonators"};
  app.require_subcommand(1);

  Common track, uq, bench, kl, grid, ref;
  auto* s_track = app.add_subcommand("track", "follow eigenpairs along a radius sweep");
  add_common(s_track, track);
  auto* s_uq = app.add_subcommand("uq", "collocation moments of the resonant frequencies");
  add_common(s_uq, uq);
  auto* s_bench = app.add_subcommand("bench", "linear-solve counts: tracking versus direct eigensolves");
  add_common(s_bench, bench);
  auto* s_kl = app.add_subcommand("kl-fit", "Karhunen-Loeve model from an observation CSV");
  add_common(s_kl, kl);
  auto* s_grid = app.add_subcommand("grid", "export a tensor or Smolyak collocation grid");
  add_common(s_grid, grid);
  auto* s_ref = app.add_subcommand("pillbox-reference", "analytic pillbox frequency table");
  add_common(s_ref, ref);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*s_track) return cmd_track(resolve(track));
    if (*s_uq) return cmd_uq(resolve(uq));
    if (*s_bench) return cmd_bench(resolve(bench));
    if (*s_kl) return cmd_kl_fit(resolve(kl));
    if (*s_grid) return cmd_grid(resolve(grid));
    if (*s_ref) return cmd_reference(resolve(ref));
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
