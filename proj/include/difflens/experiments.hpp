#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "difflens/analytic.hpp"
#include "difflens/config.hpp"
#include "difflens/density_field.hpp"
#include "difflens/fsr.hpp"
#include "difflens/heatmap.hpp"
#include "difflens/metrics.hpp"
#include "difflens/samplers.hpp"
#include "difflens/targets.hpp"

namespace difflens {

inline constexpr const char* kVersion = "0.1.0";

namespace streams {
// Fixed stream ids so sub-seeds do not depend on evaluation order or on
// which method subset was requested.
inline constexpr std::uint64_t kFsrDataset = 1;
inline constexpr std::uint64_t kMethodBase = 16;   // + method enum value
inline constexpr std::uint64_t kZetaBase = 64;     // + zeta grid index
inline constexpr std::uint64_t kConvergenceBase = 4096;
}  // namespace streams

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_csv_rows(const std::string& path,
                           const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  out.precision(12);
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  }
  write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Panel: analytic + FSR + sampler fields for one target
// ---------------------------------------------------------------------------

struct PanelResult {
  std::string dir;
  bool analytic_tractable = false;
  std::optional<DensityField> analytic;
  DensityField fsr;
  std::vector<std::pair<Method, DensityField>> sampler_fields;
  std::vector<Method> intractable_methods;
  std::vector<std::string> tv_columns;
  std::vector<std::vector<double>> tv_rows;  // index, t, one tv per column
};

inline ConditionalProblem make_problem(const TargetConfig& target,
                                       const ExperimentConfig& cfg) {
  return ConditionalProblem{target.prior, target.measurement(),
                            Vec::Constant(1, target.y), cfg.schedule};
}

inline PanelResult run_panel(const ExperimentConfig& cfg, const TargetConfig& target) {
  namespace fs = std::filesystem;
  PanelResult result;
  result.dir = (fs::path(cfg.output_dir) / target.name).string();
  fs::create_directories(result.dir);

  const auto t_grid = time_grid(cfg.n_time, cfg.t_min, cfg.t_max);
  const auto x_grid = spatial_grid(target.prior, cfg.n_space, cfg.span_sigmas);
  const ConditionalProblem cp = make_problem(target, cfg);

  result.analytic_tractable = is_tractable(cp);
  if (result.analytic_tractable) {
    result.analytic = analytic_posterior_field(cp, t_grid, x_grid);
    save_field(*result.analytic, result.dir + "/analytic.csv");
  } else {
    write_text(result.dir + "/analytic.intractable",
               "no closed-form posterior: continuous prior with nonlinear operator\n");
  }

  try {
    FsrModel fsr = make_fsr(target.prior, cfg.fsr_dataset_size,
                            stream_seed(cfg.seed, streams::kFsrDataset), cfg.schedule,
                            cp.measurement, cp.y);
    result.fsr = fsr.posterior_field(t_grid, x_grid);
  } catch (const degenerate_evidence_error& e) {
    throw degenerate_evidence_error(target.name + ": " + e.what(), e.max_log_weight);
  }
  save_field(result.fsr, result.dir + "/fsr.csv");

  const DensityField& reference = result.analytic_tractable ? *result.analytic : result.fsr;

  for (Method method : cfg.methods) {
    if (requires_affine(method) && !cp.measurement.affine()) {
      result.intractable_methods.push_back(method);
      write_text(result.dir + "/" + to_string(method) + ".intractable",
                 to_string(method) + " requires an affine measurement operator\n");
      continue;
    }
    SamplerSpec spec;
    spec.method = method;
    spec.zeta = cfg.zeta;
    spec.n_steps = cfg.n_time - 1;
    spec.t_start = cfg.t_max;
    spec.t_end = cfg.t_min;
    spec.trajectories = cfg.trajectories;
    spec.seed = stream_seed(cfg.seed, streams::kMethodBase + static_cast<std::uint64_t>(method));
    try {
      SampleEnsemble ensemble = run_sampler(spec, target.prior, cp.measurement, cp.y,
                                            cfg.schedule);
      DensityField field = ensemble_density(ensemble, x_grid, cfg.smooth_histograms);
      save_field(field, result.dir + "/" + to_string(method) + ".csv");
      result.sampler_fields.emplace_back(method, std::move(field));
    } catch (const divergence_error& e) {
      throw divergence_error(target.name + ": " + e.what(), e.diverged, e.total);
    }
  }

  // Per-timestep TV of every produced field against the reference.
  std::vector<std::pair<std::string, const DensityField*>> columns;
  columns.emplace_back("fsr", &result.fsr);
  for (const auto& [method, field] : result.sampler_fields)
    columns.emplace_back(to_string(method), &field);
  for (const auto& [name, field] : columns) {
    result.tv_columns.push_back(name);
    (void)field;
  }
  std::vector<std::vector<double>> tv_per_column;
  for (const auto& [name, field] : columns) tv_per_column.push_back(tv_curve(reference, *field));
  for (int i = 0; i < static_cast<int>(t_grid.size()); ++i) {
    std::vector<double> row = {static_cast<double>(i), t_grid[static_cast<std::size_t>(i)]};
    for (const auto& col : tv_per_column) row.push_back(col[static_cast<std::size_t>(i)]);
    result.tv_rows.push_back(std::move(row));
  }
  write_csv_rows(result.dir + "/tv.csv", result.tv_rows);

  if (result.analytic)
    render_heatmap(*result.analytic, &reference, result.dir + "/analytic.png");
  render_heatmap(result.fsr, &reference, result.dir + "/fsr.png");
  for (const auto& [method, field] : result.sampler_fields)
    render_heatmap(field, &reference, result.dir + "/" + to_string(method) + ".png");

  json manifest;
  manifest["version"] = kVersion;
  manifest["kind"] = "panel";
  manifest["target"] = {{"name", target.name}, {"y", target.y},
                        {"noise_std", target.noise_std}};
  manifest["config"] = config_to_json(cfg);
  manifest["tv_columns"] = result.tv_columns;
  manifest["analytic_tractable"] = result.analytic_tractable;
  std::vector<std::string> skipped;
  for (Method method : result.intractable_methods) skipped.push_back(to_string(method));
  manifest["intractable_methods"] = skipped;
  write_text(result.dir + "/manifest.json", manifest.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// Convergence in dataset size
// ---------------------------------------------------------------------------

struct ConvergenceResult {
  std::string target_name;
  std::vector<int> sizes;
  std::vector<double> times;
  // medians[s][t]: median TV at sizes[s] and times[t]
  std::vector<std::vector<double>> medians;
};

inline std::vector<TargetConfig> default_convergence_targets() {
  return {target_from_spec({"pent_asym", "quadratic", 0.3, 1.09}),
          target_from_spec({"gmm_tri_equal", "gain", 1.5, 1.0}),
          target_from_spec({"wide", "gain_shift", 0.3, -2.0})};
}

/// Median-over-datasets TV between the finite-sample posterior and the
/// analytic posterior at fixed times, for a ladder of dataset sizes.
inline ConvergenceResult run_convergence_target(const ExperimentConfig& cfg,
                                                const TargetConfig& target,
                                                std::uint64_t target_stream) {
  const ConditionalProblem cp = make_problem(target, cfg);
  if (!is_tractable(cp))
    throw intractable_error("convergence experiment needs an analytic reference: " +
                            target.name);
  const auto x_grid = spatial_grid(target.prior, cfg.n_space, cfg.span_sigmas);

  ConvergenceResult result;
  result.target_name = target.name;
  result.sizes = cfg.convergence_sizes;
  result.times = cfg.convergence_times;

  std::vector<std::vector<double>> reference_rows;
  for (double t : cfg.convergence_times) {
    const ScalarMixture slice = scalar_posterior_slice(cp, t);
    std::vector<double> row(x_grid.size());
    for (std::size_t j = 0; j < x_grid.size(); ++j) row[j] = slice.density(x_grid[j]);
    reference_rows.push_back(std::move(row));
  }

  for (std::size_t si = 0; si < result.sizes.size(); ++si) {
    std::vector<std::vector<double>> tvs(cfg.convergence_times.size());
    for (int rep = 0; rep < cfg.dataset_repeats; ++rep) {
      const std::uint64_t stream = streams::kConvergenceBase +
                                   target_stream * 1024 + si * 64 +
                                   static_cast<std::uint64_t>(rep);
      FsrModel fsr = make_fsr(target.prior, result.sizes[si],
                              stream_seed(cfg.seed, stream), cfg.schedule, cp.measurement,
                              cp.y);
      DensityField field = fsr.posterior_field(cfg.convergence_times, x_grid);
      for (std::size_t ti = 0; ti < cfg.convergence_times.size(); ++ti)
        tvs[ti].push_back(tv_distance(reference_rows[ti],
                                      field_row(field, static_cast<int>(ti)), x_grid));
    }
    std::vector<double> row;
    for (auto& series : tvs) {
      std::sort(series.begin(), series.end());
      const std::size_t n = series.size();
      row.push_back(n % 2 == 1 ? series[n / 2]
                               : 0.5 * (series[n / 2 - 1] + series[n / 2]));
    }
    result.medians.push_back(std::move(row));
  }
  return result;
}

inline std::vector<ConvergenceResult> run_convergence(
    const ExperimentConfig& cfg, const std::vector<TargetConfig>& targets) {
  namespace fs = std::filesystem;
  const std::string dir = (fs::path(cfg.output_dir) / "convergence").string();
  fs::create_directories(dir);
  std::vector<ConvergenceResult> results;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    ConvergenceResult r = run_convergence_target(cfg, targets[k], k);
    std::vector<std::vector<double>> rows;
    for (std::size_t si = 0; si < r.sizes.size(); ++si) {
      std::vector<double> row = {static_cast<double>(r.sizes[si])};
      row.insert(row.end(), r.medians[si].begin(), r.medians[si].end());
      rows.push_back(std::move(row));
    }
    write_csv_rows(dir + "/" + r.target_name + "__tv.csv", rows);
    results.push_back(std::move(r));
  }
  json manifest;
  manifest["version"] = kVersion;
  manifest["kind"] = "convergence";
  manifest["config"] = config_to_json(cfg);
  std::vector<std::string> names;
  for (const auto& r : results) names.push_back(r.target_name);
  manifest["targets"] = names;
  manifest["columns"] = cfg.convergence_times;
  write_text(dir + "/manifest.json", manifest.dump(2) + "\n");
  return results;
}

// ---------------------------------------------------------------------------
// Zeta sweep
// ---------------------------------------------------------------------------

struct ZetaSweepResult {
  std::string dir;
  std::vector<double> zetas;
  std::vector<double> terminal_tv;  // mean TV over the terminal window
  double zeta_star = 0.0;
};

/// One zeta-DPS run per grid value; report the terminal-window TV against
/// the reference (analytic when tractable, FSR otherwise) and pick the
/// minimizer, ties resolved toward the smaller zeta.
inline ZetaSweepResult run_zeta_sweep(const ExperimentConfig& cfg,
                                      const TargetConfig& target) {
  namespace fs = std::filesystem;
  if (cfg.zeta_grid.empty()) throw std::invalid_argument("zeta sweep: empty zeta grid");
  ZetaSweepResult result;
  result.dir = (fs::path(cfg.output_dir) / target.name / "zeta_sweep").string();
  fs::create_directories(result.dir);

  const auto t_grid = time_grid(cfg.n_time, cfg.t_min, cfg.t_max);
  const auto x_grid = spatial_grid(target.prior, cfg.n_space, cfg.span_sigmas);
  const ConditionalProblem cp = make_problem(target, cfg);

  DensityField reference;
  if (is_tractable(cp)) {
    reference = analytic_posterior_field(cp, t_grid, x_grid);
  } else {
    FsrModel fsr = make_fsr(target.prior, cfg.fsr_dataset_size,
                            stream_seed(cfg.seed, streams::kFsrDataset), cfg.schedule,
                            cp.measurement, cp.y);
    reference = fsr.posterior_field(t_grid, x_grid);
  }

  for (std::size_t zi = 0; zi < cfg.zeta_grid.size(); ++zi) {
    SamplerSpec spec;
    spec.method = Method::zeta_dps;
    spec.zeta = cfg.zeta_grid[zi];
    spec.n_steps = cfg.n_time - 1;
    spec.t_start = cfg.t_max;
    spec.t_end = cfg.t_min;
    spec.trajectories = cfg.zeta_sweep_trajectories;
    spec.seed = stream_seed(cfg.seed, streams::kZetaBase + zi);
    SampleEnsemble ensemble =
        run_sampler(spec, target.prior, cp.measurement, cp.y, cfg.schedule);
    DensityField field = ensemble_density(ensemble, x_grid, cfg.smooth_histograms);
    const std::vector<double> tv = tv_curve(reference, field);
    double acc = 0.0;
    int used = 0;
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      if (t_grid[i] <= cfg.zeta_terminal_window) {
        acc += tv[i];
        ++used;
      }
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "zeta=%.2f", cfg.zeta_grid[zi]);
    save_field(field, result.dir + "/" + std::string(buf) + ".csv");
    result.zetas.push_back(cfg.zeta_grid[zi]);
    result.terminal_tv.push_back(acc / std::max(used, 1));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.terminal_tv.size(); ++i)
    if (result.terminal_tv[i] < result.terminal_tv[best]) best = i;
  result.zeta_star = result.zetas[best];

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < result.zetas.size(); ++i)
    rows.push_back({result.zetas[i], result.terminal_tv[i]});
  write_csv_rows(result.dir + "/sweep.csv", rows);

  json manifest;
  manifest["version"] = kVersion;
  manifest["kind"] = "zeta_sweep";
  manifest["target"] = {{"name", target.name}, {"y", target.y},
                        {"noise_std", target.noise_std}};
  manifest["config"] = config_to_json(cfg);
  manifest["zeta_star"] = result.zeta_star;
  manifest["terminal_window"] = cfg.zeta_terminal_window;
  write_text(result.dir + "/manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace difflens
