#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "difflens/measurement.hpp"
#include "difflens/prior.hpp"
#include "difflens/samplers.hpp"
#include "difflens/schedule.hpp"
#include "difflens/targets.hpp"

namespace difflens {

using json = nlohmann::json;

/// One experiment target: a prior, an operator, the measurement noise and
/// the observed value. Priors and operators are either registry names or
/// inline definitions.
struct TargetConfig {
  std::string name;  // output directory name
  Prior prior;
  Operator op;
  double noise_std = 0.3;
  double y = 0.0;

  MeasurementModel measurement() const { return MeasurementModel(op, noise_std); }
};

struct ExperimentConfig {
  NoiseSchedule schedule;
  int n_time = 400;
  double t_min = 1e-3;
  double t_max = 1.0;
  int n_space = 600;
  double span_sigmas = 4.0;

  int fsr_dataset_size = 4096;
  int dataset_repeats = 20;
  std::vector<int> convergence_sizes = {16, 64, 256, 1024, 4096};
  std::vector<double> convergence_times = {0.05, 0.3, 0.8};

  int trajectories = 20000;
  bool smooth_histograms = true;
  std::vector<Method> methods = {Method::sigma_dps, Method::zeta_dps, Method::pgdm,
                                 Method::tmpd};
  double zeta = 0.29;
  std::vector<double> zeta_grid;           // default filled in normalize()
  double zeta_terminal_window = 0.05;      // mean TV over t in [t_end, window]
  int zeta_sweep_trajectories = 4000;

  std::uint64_t seed = 20240817;
  std::string output_dir = "out";

  std::vector<TargetConfig> targets;

  void normalize() {
    if (zeta_grid.empty())
      for (int i = 0; i < 25; ++i) zeta_grid.push_back(0.01 + 0.02 * i);
  }
};

namespace detail {

inline Prior parse_prior(const json& j) {
  if (j.is_string()) return make_prior(j.get<std::string>());
  const std::string type = j.at("type").get<std::string>();
  if (type == "discrete")
    return DiscretePrior::scalar(j.at("atoms").get<std::vector<double>>(),
                                 j.at("weights").get<std::vector<double>>());
  if (type == "gaussian")
    return GaussianPrior::scalar(j.at("mean").get<double>(), j.at("var").get<double>());
  if (type == "gmm")
    return GmmPrior::scalar(j.at("weights").get<std::vector<double>>(),
                            j.at("means").get<std::vector<double>>(),
                            j.at("vars").get<std::vector<double>>());
  if (type == "empirical") {
    std::ifstream in(j.at("dataset_file").get<std::string>());
    if (!in)
      throw std::runtime_error("cannot read dataset file: " +
                               j.at("dataset_file").get<std::string>());
    std::vector<Vec> data;
    double x;
    while (in >> x) data.push_back(Vec::Constant(1, x));
    if (data.empty()) throw std::runtime_error("empty dataset file");
    auto p = DiscretePrior::empirical(std::move(data));
    return p;
  }
  throw std::invalid_argument("unknown prior type: " + type);
}

inline Operator parse_operator(const json& j) {
  if (j.is_string()) return make_operator(j.get<std::string>());
  const std::string type = j.at("type").get<std::string>();
  if (type == "affine")
    return AffineOp::scalar(j.value("gain", 1.0), j.value("offset", 0.0));
  if (type == "quadratic") return QuadraticOp{};
  if (type == "cubic") return CubicOp{};
  if (type == "sine") return SineOp{j.value("amplitude", 1.0), j.value("frequency", 1.0)};
  if (type == "tabulated") {
    TabulatedOp op;
    op.x = j.at("x").get<std::vector<double>>();
    op.f = j.at("f").get<std::vector<double>>();
    return op;
  }
  throw std::invalid_argument("unknown operator type: " + type);
}

inline std::string operator_label(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  return j.at("type").get<std::string>();
}

inline std::string prior_label(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  return j.at("type").get<std::string>();
}

}  // namespace detail

inline TargetConfig target_from_spec(const TargetSpec& spec) {
  TargetConfig t;
  t.name = target_dir_name(spec);
  t.prior = make_prior(spec.prior);
  t.op = make_operator(spec.op);
  t.noise_std = spec.noise_std;
  t.y = spec.y;
  return t;
}

inline TargetConfig parse_target(const json& j) {
  TargetConfig t;
  t.prior = detail::parse_prior(j.at("prior"));
  t.op = detail::parse_operator(j.at("operator"));
  t.noise_std = j.at("noise_std").get<double>();
  t.y = j.at("y").get<double>();
  if (!std::isfinite(t.y)) throw std::invalid_argument("target y must be finite");
  if (j.contains("name")) {
    t.name = j.at("name").get<std::string>();
  } else {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.4f", t.y);
    t.name = detail::prior_label(j.at("prior")) + "__" +
             detail::operator_label(j.at("operator")) + "__y=" + buf;
  }
  validate(t.prior);
  return t;
}

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("schedule"))
    cfg.schedule = NoiseSchedule(j["schedule"].value("beta0", 0.1),
                                 j["schedule"].value("beta1", 20.0));
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    cfg.n_time = g.value("n_time", cfg.n_time);
    cfg.t_min = g.value("t_min", cfg.t_min);
    cfg.t_max = g.value("t_max", cfg.t_max);
    cfg.n_space = g.value("n_space", cfg.n_space);
    cfg.span_sigmas = g.value("span_sigmas", cfg.span_sigmas);
  }
  if (j.contains("fsr")) {
    const auto& f = j["fsr"];
    cfg.fsr_dataset_size = f.value("dataset_size", cfg.fsr_dataset_size);
    cfg.dataset_repeats = f.value("dataset_repeats", cfg.dataset_repeats);
    if (f.contains("convergence_sizes"))
      cfg.convergence_sizes = f["convergence_sizes"].get<std::vector<int>>();
    if (f.contains("convergence_times"))
      cfg.convergence_times = f["convergence_times"].get<std::vector<double>>();
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    cfg.trajectories = s.value("trajectories", cfg.trajectories);
    cfg.smooth_histograms = s.value("smooth_histograms", cfg.smooth_histograms);
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j["methods"]) cfg.methods.push_back(method_from_string(m));
  }
  if (j.contains("zeta")) {
    const auto& z = j["zeta"];
    cfg.zeta = z.value("value", cfg.zeta);
    if (z.contains("grid")) cfg.zeta_grid = z["grid"].get<std::vector<double>>();
    cfg.zeta_terminal_window = z.value("terminal_window", cfg.zeta_terminal_window);
    cfg.zeta_sweep_trajectories = z.value("trajectories", cfg.zeta_sweep_trajectories);
  }
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  if (j.contains("targets"))
    for (const auto& t : j["targets"]) cfg.targets.push_back(parse_target(t));
  cfg.normalize();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j = json::parse(in);
  return parse_config(j);
}

/// Echo of the effective configuration, written into every run manifest.
inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schedule"] = {{"beta0", cfg.schedule.beta0}, {"beta1", cfg.schedule.beta1}};
  j["grid"] = {{"n_time", cfg.n_time},
               {"t_min", cfg.t_min},
               {"t_max", cfg.t_max},
               {"n_space", cfg.n_space},
               {"span_sigmas", cfg.span_sigmas}};
  j["fsr"] = {{"dataset_size", cfg.fsr_dataset_size},
              {"dataset_repeats", cfg.dataset_repeats},
              {"convergence_sizes", cfg.convergence_sizes},
              {"convergence_times", cfg.convergence_times}};
  j["sampler"] = {{"trajectories", cfg.trajectories},
                  {"smooth_histograms", cfg.smooth_histograms}};
  std::vector<std::string> names;
  for (auto m : cfg.methods) names.push_back(to_string(m));
  j["methods"] = names;
  j["zeta"] = {{"value", cfg.zeta},
               {"grid", cfg.zeta_grid},
               {"terminal_window", cfg.zeta_terminal_window},
               {"trajectories", cfg.zeta_sweep_trajectories}};
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  return j;
}

}  // namespace difflens
