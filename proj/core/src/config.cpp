#include "vrfm/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace vrfm {

namespace {

Json solver_to_json(const SolverConfig& s) {
  return Json{{"kind", s.kind == SolverConfig::Kind::kEuler ? "euler" : "adaptive"},
              {"steps", s.steps},
              {"rtol", s.rtol},
              {"atol", s.atol},
              {"h_init", s.h_init},
              {"h_max", s.h_max},
              {"safety", s.safety},
              {"fac_min", s.fac_min},
              {"fac_max", s.fac_max},
              {"max_nfe", s.max_nfe}};
}

SolverConfig solver_from_json(const Json& j, const std::string& path, SolverConfig s) {
  check_keys(j, {"kind", "steps", "rtol", "atol", "h_init", "h_max", "safety", "fac_min",
                 "fac_max", "max_nfe"},
             path);
  if (j.contains("kind")) {
    std::string kind;
    read_field(j, "kind", kind, path);
    if (kind == "euler")
      s.kind = SolverConfig::Kind::kEuler;
    else if (kind == "adaptive")
      s.kind = SolverConfig::Kind::kDopri5;
    else
      throw ConfigError("solver kind must be 'euler' or 'adaptive'", path + ".kind");
  }
  read_field(j, "steps", s.steps, path);
  read_field(j, "rtol", s.rtol, path);
  read_field(j, "atol", s.atol, path);
  read_field(j, "h_init", s.h_init, path);
  read_field(j, "h_max", s.h_max, path);
  read_field(j, "safety", s.safety, path);
  read_field(j, "fac_min", s.fac_min, path);
  read_field(j, "fac_max", s.fac_max, path);
  read_field(j, "max_nfe", s.max_nfe, path);
  return s;
}

Json metrics_to_json(const MetricsConfig& m) {
  return Json{{"n_generated", m.n_generated},
              {"n_test", m.n_test},
              {"eval_steps", m.eval_steps},
              {"include_adaptive", m.include_adaptive},
              {"n_projections", m.n_projections},
              {"parzen_grid_points", m.parzen_grid_points},
              {"parzen_h_min", m.parzen_h_min},
              {"parzen_h_max", m.parzen_h_max}};
}

MetricsConfig metrics_from_json(const Json& j, const std::string& path, MetricsConfig m) {
  check_keys(j, {"n_generated", "n_test", "eval_steps", "include_adaptive", "n_projections",
                 "parzen_grid_points", "parzen_h_min", "parzen_h_max"},
             path);
  read_field(j, "n_generated", m.n_generated, path);
  read_field(j, "n_test", m.n_test, path);
  read_field(j, "eval_steps", m.eval_steps, path);
  read_field(j, "include_adaptive", m.include_adaptive, path);
  read_field(j, "n_projections", m.n_projections, path);
  read_field(j, "parzen_grid_points", m.parzen_grid_points, path);
  read_field(j, "parzen_h_min", m.parzen_h_min, path);
  read_field(j, "parzen_h_max", m.parzen_h_max, path);
  return m;
}

Json ambiguity_to_json(const AmbiguityConfig& a) {
  Json probes = Json::array();
  for (const ProbePoint& p : a.probes) {
    std::vector<double> x(p.x.data(), p.x.data() + p.x.size());
    probes.push_back(Json{{"x", x}, {"t", p.t}});
  }
  return Json{{"x_min", a.x_min},
              {"x_max", a.x_max},
              {"x_step", a.x_step},
              {"t_min", a.t_min},
              {"t_step", a.t_step},
              {"n_t", a.n_t},
              {"gt_pool_draws", a.gt_pool_draws},
              {"probe_max_draws", a.probe_max_draws},
              {"min_occupancy", a.min_occupancy},
              {"n_per_bin", a.n_per_bin},
              {"probes", probes}};
}

AmbiguityConfig ambiguity_from_json(const Json& j, const std::string& path,
                                    AmbiguityConfig a) {
  check_keys(j, {"x_min", "x_max", "x_step", "t_min", "t_step", "n_t", "gt_pool_draws",
                 "probe_max_draws", "min_occupancy", "n_per_bin", "probes"},
             path);
  read_field(j, "x_min", a.x_min, path);
  read_field(j, "x_max", a.x_max, path);
  read_field(j, "x_step", a.x_step, path);
  read_field(j, "t_min", a.t_min, path);
  read_field(j, "t_step", a.t_step, path);
  read_field(j, "n_t", a.n_t, path);
  read_field(j, "gt_pool_draws", a.gt_pool_draws, path);
  read_field(j, "probe_max_draws", a.probe_max_draws, path);
  read_field(j, "min_occupancy", a.min_occupancy, path);
  read_field(j, "n_per_bin", a.n_per_bin, path);
  if (j.contains("probes")) {
    a.probes.clear();
    int idx = 0;
    for (const Json& pj : j.at("probes")) {
      const std::string ppath = path + ".probes[" + std::to_string(idx++) + "]";
      check_keys(pj, {"x", "t"}, ppath);
      ProbePoint p;
      std::vector<double> x;
      read_field(pj, "x", x, ppath);
      p.x = Eigen::Map<const Vector>(x.data(), static_cast<Index>(x.size()));
      read_field(pj, "t", p.t, ppath);
      a.probes.push_back(std::move(p));
    }
  }
  return a;
}

std::vector<ProbePoint> default_probes_1d() {
  auto pt = [](double x, double t) {
    ProbePoint p;
    p.x = Vector::Constant(1, x);
    p.t = t;
    return p;
  };
  return {pt(0.0, 0.0), pt(0.0, 0.5), pt(0.0, 0.75), pt(-1.0, 0.95)};
}

TrainConfig train_block_from_json(const Json& j, const std::string& path, TrainConfig cfg) {
  check_keys(j, {"iterations", "batch_size", "lr", "kl_weight", "log_every", "weight_decay"},
             path);
  read_field(j, "iterations", cfg.iterations, path);
  read_field(j, "batch_size", cfg.batch_size, path);
  read_field(j, "lr", cfg.lr, path);
  read_field(j, "kl_weight", cfg.kl_weight, path);
  read_field(j, "log_every", cfg.log_every, path);
  read_field(j, "weight_decay", cfg.weight_decay, path);
  return cfg;
}

Json train_block_to_json(const TrainConfig& cfg) {
  return Json{{"iterations", cfg.iterations}, {"batch_size", cfg.batch_size},
              {"lr", cfg.lr},                 {"kl_weight", cfg.kl_weight},
              {"log_every", cfg.log_every},   {"weight_decay", cfg.weight_decay}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (task != "synthetic_1d" && task != "synthetic_2d")
    throw ConfigError("task must be synthetic_1d or synthetic_2d", "task");
  if (seeds.empty()) throw ConfigError("at least one seed is required", "seeds");
  if (!(mode_std > 0.0)) throw ConfigError("mode_std must be > 0", "data.mode_std");
  source.validate();
  target.validate();
  if (source.dim != data_dim() || target.dim != data_dim())
    throw ConfigError("source/target dims must match the task", "data");
  if (model.data_dim != data_dim())
    throw ConfigError("model.data_dim must match the task", "model.data_dim");
  if (objective == Objective::kRfm && model.latent_dim != 0)
    throw ConfigError("rfm objective requires model.latent_dim = 0", "model.latent_dim");
  if (objective == Objective::kVrfm) {
    if (model.latent_dim <= 0)
      throw ConfigError("vrfm objective requires model.latent_dim > 0", "model.latent_dim");
    if (posterior.latent_dim != model.latent_dim)
      throw ConfigError("posterior.latent_dim must equal model.latent_dim",
                        "posterior.latent_dim");
    if (posterior.data_dim != data_dim())
      throw ConfigError("posterior.data_dim must match the task", "posterior.data_dim");
    posterior.validate();
  }
  if (train.iterations < 1) throw ConfigError("iterations must be >= 1", "train.iterations");
  if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1", "train.batch_size");
  if (train.kl_weight < 0.0) throw ConfigError("kl_weight must be >= 0", "train.kl_weight");
  if (metrics.n_generated < 2 || metrics.n_test < 2)
    throw ConfigError("metrics needs at least 2 samples", "metrics");
}

ExperimentConfig default_config(const std::string& task, Objective objective) {
  ExperimentConfig cfg;
  cfg.task = task;
  cfg.objective = objective;
  const bool is_2d = task == "synthetic_2d";
  if (!is_2d && task != "synthetic_1d")
    throw ConfigError("task must be synthetic_1d or synthetic_2d", "task");

  cfg.mode_std = is_2d ? kDefaultModeStd2d : kDefaultModeStd1d;
  cfg.source = builtin_spec(is_2d ? "source_2d_circle" : "source_1d", cfg.mode_std);
  cfg.target = builtin_spec(is_2d ? "target_2d_circle" : "target_1d_bimodal", cfg.mode_std);

  cfg.model.data_dim = is_2d ? 2 : 1;
  cfg.model.latent_dim = objective == Objective::kVrfm ? (is_2d ? 8 : 4) : 0;

  cfg.posterior.data_dim = cfg.model.data_dim;
  cfg.posterior.latent_dim = std::max(cfg.model.latent_dim, 1);

  cfg.train.objective = objective;
  cfg.train.kl_weight = is_2d ? 0.1 : 1.0;

  if (is_2d) {
    cfg.ambiguity.x_min = -1.6;
    cfg.ambiguity.x_max = 1.6;
  } else {
    cfg.ambiguity.probes = default_probes_1d();
  }
  return cfg;
}

ExperimentConfig config_from_json_string(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"task", "objective", "seeds", "output_dir", "data", "model", "posterior",
                 "train", "solver", "metrics", "ambiguity"},
             "");

  std::string task = "synthetic_1d";
  read_field(j, "task", task, "");
  Objective objective = Objective::kVrfm;
  if (j.contains("objective")) {
    std::string name;
    read_field(j, "objective", name, "");
    objective = objective_from_name(name);
  }

  ExperimentConfig cfg = default_config(task, objective);
  read_field(j, "seeds", cfg.seeds, "");
  read_field(j, "output_dir", cfg.output_dir, "");

  if (j.contains("data")) {
    const Json& dj = j.at("data");
    check_keys(dj, {"mode_std", "source", "target"}, "data");
    if (dj.contains("mode_std")) {
      read_field(dj, "mode_std", cfg.mode_std, "data");
      const bool is_2d = task == "synthetic_2d";
      cfg.source = builtin_spec(is_2d ? "source_2d_circle" : "source_1d", cfg.mode_std);
      cfg.target = builtin_spec(is_2d ? "target_2d_circle" : "target_1d_bimodal",
                                cfg.mode_std);
    }
    if (dj.contains("source"))
      cfg.source = distribution_from_json(dj.at("source"), "data.source");
    if (dj.contains("target"))
      cfg.target = distribution_from_json(dj.at("target"), "data.target");
  }

  if (j.contains("model")) {
    // Re-apply task/objective-dependent defaults on top of the parsed block.
    VelocityModelConfig parsed = velocity_config_from_json(j.at("model"), "model");
    VelocityModelConfig defaults = cfg.model;
    if (!j.at("model").contains("data_dim")) parsed.data_dim = defaults.data_dim;
    if (!j.at("model").contains("latent_dim")) parsed.latent_dim = defaults.latent_dim;
    cfg.model = parsed;
  }
  // The posterior latent defaults to whatever the velocity model resolved to.
  cfg.posterior.latent_dim = std::max(cfg.model.latent_dim, 1);
  if (j.contains("posterior")) {
    PosteriorConfig parsed = posterior_config_from_json(j.at("posterior"), "posterior");
    if (!j.at("posterior").contains("data_dim")) parsed.data_dim = cfg.posterior.data_dim;
    if (!j.at("posterior").contains("latent_dim"))
      parsed.latent_dim = cfg.posterior.latent_dim;
    cfg.posterior = parsed;
  }
  if (j.contains("train")) cfg.train = train_block_from_json(j.at("train"), "train", cfg.train);
  cfg.train.objective = objective;
  if (j.contains("solver")) cfg.solver = solver_from_json(j.at("solver"), "solver", cfg.solver);
  if (j.contains("metrics"))
    cfg.metrics = metrics_from_json(j.at("metrics"), "metrics", cfg.metrics);
  if (j.contains("ambiguity"))
    cfg.ambiguity = ambiguity_from_json(j.at("ambiguity"), "ambiguity", cfg.ambiguity);

  cfg.validate();
  return cfg;
}

ExperimentConfig config_from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return config_from_json_string(buf.str());
}

std::string config_to_json_string(const ExperimentConfig& cfg) {
  Json j;
  j["task"] = cfg.task;
  j["objective"] = objective_name(cfg.objective);
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  j["data"] = Json{{"mode_std", cfg.mode_std},
                   {"source", distribution_to_json(cfg.source)},
                   {"target", distribution_to_json(cfg.target)}};
  j["model"] = velocity_config_to_json(cfg.model);
  if (cfg.objective == Objective::kVrfm)
    j["posterior"] = posterior_config_to_json(cfg.posterior);
  j["train"] = train_block_to_json(cfg.train);
  j["solver"] = solver_to_json(cfg.solver);
  j["metrics"] = metrics_to_json(cfg.metrics);
  j["ambiguity"] = ambiguity_to_json(cfg.ambiguity);
  return j.dump(2) + "\n";
}

}  // namespace vrfm
