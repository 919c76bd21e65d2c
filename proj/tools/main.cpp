// Command-line front end: panels, convergence ladders, zeta sweeps, TV
// curves between stored fields, and heatmap rendering.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "difflens/experiments.hpp"

using namespace difflens;

namespace {

ExperimentConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) {
    ExperimentConfig cfg;
    cfg.normalize();
    return cfg;
  }
  return load_config(config_path);
}

void apply_overrides(ExperimentConfig& cfg, const std::string& out_dir,
                     std::uint64_t seed, bool seed_set,
                     const std::vector<std::string>& methods) {
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed_set) cfg.seed = seed;
  if (!methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : methods) cfg.methods.push_back(method_from_string(m));
  }
}

std::vector<TargetConfig> resolve_targets(const ExperimentConfig& cfg,
                                          const std::vector<std::string>& names,
                                          bool all_bundled) {
  std::vector<TargetConfig> out;
  if (all_bundled) {
    for (const auto& spec : bundled_targets()) out.push_back(target_from_spec(spec));
    return out;
  }
  if (names.empty()) {
    if (cfg.targets.empty())
      throw std::runtime_error(
          "no targets: pass --target, --all-bundled, or list targets in the config");
    return cfg.targets;
  }
  for (const auto& name : names) {
    bool found = false;
    for (const auto& t : cfg.targets) {
      if (t.name == name) {
        out.push_back(t);
        found = true;
        break;
      }
    }
    if (!found) out.push_back(target_from_spec(find_target(name)));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exact and finite-sample diffusion posteriors with sampler diagnostics"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> method_names, target_names;
  bool all_bundled = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "output directory (overrides config)");
    cmd->add_option("--seed", seed, "base seed (overrides config)")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--methods", method_names,
                    "sampler subset: sigma_dps zeta_dps pgdm tmpd");
  };

  auto* panel = app.add_subcommand("panel", "analytic/FSR/sampler fields for targets");
  add_common(panel);
  panel->add_option("--target", target_names, "target name, e.g. tri_equal__identity__y=+2.2000");
  panel->add_flag("--all-bundled", all_bundled, "run every bundled target");

  auto* convergence =
      app.add_subcommand("convergence", "median FSR-vs-analytic TV ladder in dataset size");
  add_common(convergence);
  convergence->add_option("--target", target_names, "override the default three problems");

  auto* zeta = app.add_subcommand("zeta-sweep", "zeta-DPS grid sweep for one target");
  add_common(zeta);
  zeta->add_option("--target", target_names, "target name")->required();

  std::string field_path, reference_path, output_path;
  double gamma = 0.55;
  auto* tv = app.add_subcommand("tv-curve", "per-timestep TV between two stored fields");
  tv->add_option("--field", field_path, "field csv")->required();
  tv->add_option("--reference", reference_path, "reference field csv")->required();
  tv->add_option("--out", output_path, "output csv")->required();

  auto* render = app.add_subcommand("render", "render a stored field to PNG");
  render->add_option("--field", field_path, "field csv")->required();
  render->add_option("--reference", reference_path, "reference field csv for the color ceiling");
  render->add_option("--out", output_path, "output png")->required();
  render->add_option("--gamma", gamma, "power-law exponent (default 0.55)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (panel->parsed()) {
      ExperimentConfig cfg = load_or_default(config_path);
      apply_overrides(cfg, out_dir, seed, seed_set, method_names);
      for (const auto& target : resolve_targets(cfg, target_names, all_bundled)) {
        PanelResult r = run_panel(cfg, target);
        std::cout << target.name << ": wrote " << r.tv_columns.size() << " fields to "
                  << r.dir;
        if (!r.analytic_tractable) std::cout << " (analytic intractable)";
        std::cout << "\n";
      }
    } else if (convergence->parsed()) {
      ExperimentConfig cfg = load_or_default(config_path);
      apply_overrides(cfg, out_dir, seed, seed_set, method_names);
      std::vector<TargetConfig> targets = target_names.empty() && cfg.targets.empty()
                                              ? default_convergence_targets()
                                              : resolve_targets(cfg, target_names, false);
      auto results = run_convergence(cfg, targets);
      for (const auto& r : results) {
        std::cout << r.target_name << ":";
        for (std::size_t ti = 0; ti < r.times.size(); ++ti) {
          std::vector<std::pair<double, double>> pts;
          for (std::size_t si = 0; si < r.sizes.size(); ++si)
            pts.push_back({static_cast<double>(r.sizes[si]), r.medians[si][ti]});
          std::printf(" slope(t=%.2f)=%.3f", r.times[ti], mc_rate_fit(pts).slope);
        }
        std::cout << "\n";
      }
    } else if (zeta->parsed()) {
      ExperimentConfig cfg = load_or_default(config_path);
      apply_overrides(cfg, out_dir, seed, seed_set, method_names);
      auto targets = resolve_targets(cfg, target_names, false);
      for (const auto& target : targets) {
        ZetaSweepResult r = run_zeta_sweep(cfg, target);
        std::printf("%s: zeta* = %.2f (terminal TV %.4f)\n", target.name.c_str(),
                    r.zeta_star, r.terminal_tv[0]);
      }
    } else if (tv->parsed()) {
      DensityField a = load_field(reference_path);
      DensityField b = load_field(field_path);
      auto curve = tv_curve(a, b);
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < curve.size(); ++i)
        rows.push_back({static_cast<double>(i), a.t_grid[i], curve[i]});
      write_csv_rows(output_path, rows);
      std::cout << "wrote " << output_path << "\n";
    } else if (render->parsed()) {
      DensityField field = load_field(field_path);
      if (reference_path.empty()) {
        render_heatmap(field, nullptr, output_path, gamma);
      } else {
        DensityField ref = load_field(reference_path);
        render_heatmap(field, &ref, output_path, gamma);
      }
      std::cout << "wrote " << output_path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
