#include "json_util.hpp"

#include <algorithm>

namespace vrfm {

void check_keys(const Json& obj, const std::vector<std::string>& allowed,
                const std::string& path) {
  if (!obj.is_object()) throw ConfigError("expected a JSON object", path);
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key: " + key, path.empty() ? key : path + "." + key);
  }
}

Json velocity_config_to_json(const VelocityModelConfig& cfg) {
  return Json{{"data_dim", cfg.data_dim},
              {"hidden_dim", cfg.hidden_dim},
              {"embed_dim", cfg.embed_dim},
              {"latent_dim", cfg.latent_dim},
              {"latent_hidden", cfg.latent_hidden},
              {"decoder_layers", cfg.decoder_layers},
              {"max_period", cfg.max_period}};
}

VelocityModelConfig velocity_config_from_json(const Json& j, const std::string& path) {
  check_keys(j, {"data_dim", "hidden_dim", "embed_dim", "latent_dim", "latent_hidden",
                 "decoder_layers", "max_period"},
             path);
  VelocityModelConfig cfg;
  read_field(j, "data_dim", cfg.data_dim, path);
  read_field(j, "hidden_dim", cfg.hidden_dim, path);
  read_field(j, "embed_dim", cfg.embed_dim, path);
  read_field(j, "latent_dim", cfg.latent_dim, path);
  read_field(j, "latent_hidden", cfg.latent_hidden, path);
  read_field(j, "decoder_layers", cfg.decoder_layers, path);
  read_field(j, "max_period", cfg.max_period, path);
  return cfg;
}

Json posterior_config_to_json(const PosteriorConfig& cfg) {
  std::vector<std::string> cond;
  for (Conditioning c : cfg.conditioning) cond.push_back(conditioning_name(c));
  return Json{{"data_dim", cfg.data_dim},   {"hidden_dim", cfg.hidden_dim},
              {"embed_dim", cfg.embed_dim}, {"latent_dim", cfg.latent_dim},
              {"max_period", cfg.max_period}, {"conditioning", cond}};
}

PosteriorConfig posterior_config_from_json(const Json& j, const std::string& path) {
  check_keys(j, {"data_dim", "hidden_dim", "embed_dim", "latent_dim", "max_period",
                 "conditioning"},
             path);
  PosteriorConfig cfg;
  read_field(j, "data_dim", cfg.data_dim, path);
  read_field(j, "hidden_dim", cfg.hidden_dim, path);
  read_field(j, "embed_dim", cfg.embed_dim, path);
  read_field(j, "latent_dim", cfg.latent_dim, path);
  read_field(j, "max_period", cfg.max_period, path);
  if (j.contains("conditioning")) {
    std::vector<std::string> names;
    read_field(j, "conditioning", names, path);
    cfg.conditioning.clear();
    for (const std::string& n : names) cfg.conditioning.push_back(conditioning_from_name(n));
    std::sort(cfg.conditioning.begin(), cfg.conditioning.end());
    cfg.conditioning.erase(std::unique(cfg.conditioning.begin(), cfg.conditioning.end()),
                           cfg.conditioning.end());
  }
  cfg.validate();
  return cfg;
}

Json train_config_to_json(const TrainConfig& cfg) {
  return Json{{"iterations", cfg.iterations},
              {"batch_size", cfg.batch_size},
              {"lr", cfg.lr},
              {"kl_weight", cfg.kl_weight},
              {"seed", cfg.seed},
              {"log_every", cfg.log_every},
              {"objective", objective_name(cfg.objective)},
              {"weight_decay", cfg.weight_decay}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  check_keys(j, {"iterations", "batch_size", "lr", "kl_weight", "seed", "log_every",
                 "objective", "weight_decay"},
             path);
  TrainConfig cfg;
  read_field(j, "iterations", cfg.iterations, path);
  read_field(j, "batch_size", cfg.batch_size, path);
  read_field(j, "lr", cfg.lr, path);
  read_field(j, "kl_weight", cfg.kl_weight, path);
  read_field(j, "seed", cfg.seed, path);
  read_field(j, "log_every", cfg.log_every, path);
  read_field(j, "weight_decay", cfg.weight_decay, path);
  if (j.contains("objective")) {
    std::string name;
    read_field(j, "objective", name, path);
    cfg.objective = objective_from_name(name);
  }
  return cfg;
}

Json distribution_to_json(const DistributionSpec& spec) {
  Json comps = Json::array();
  for (const MixtureComponent& c : spec.components) {
    std::vector<double> mean(c.mean.data(), c.mean.data() + c.mean.size());
    comps.push_back(Json{{"weight", c.weight}, {"mean", mean}, {"std", c.stddev}});
  }
  return Json{{"kind", spec.kind == DistributionSpec::Kind::kGaussian ? "gaussian" : "mixture"},
              {"dim", spec.dim},
              {"components", comps}};
}

DistributionSpec distribution_from_json(const Json& j, const std::string& path) {
  check_keys(j, {"kind", "dim", "components"}, path);
  DistributionSpec spec;
  std::string kind = "gaussian";
  read_field(j, "kind", kind, path);
  if (kind == "gaussian")
    spec.kind = DistributionSpec::Kind::kGaussian;
  else if (kind == "mixture")
    spec.kind = DistributionSpec::Kind::kMixture;
  else
    throw ConfigError("distribution kind must be 'gaussian' or 'mixture'", path);
  read_field(j, "dim", spec.dim, path);
  if (!j.contains("components"))
    throw ConfigError("distribution needs components", path);
  spec.components.clear();
  int idx = 0;
  for (const Json& cj : j.at("components")) {
    const std::string cpath = path + ".components[" + std::to_string(idx++) + "]";
    check_keys(cj, {"weight", "mean", "std"}, cpath);
    MixtureComponent c;
    read_field(cj, "weight", c.weight, cpath);
    std::vector<double> mean;
    read_field(cj, "mean", mean, cpath);
    c.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
    read_field(cj, "std", c.stddev, cpath);
    spec.components.push_back(std::move(c));
  }
  spec.validate();
  return spec;
}

Json losses_to_json(const LossBreakdown& l) {
  return Json{{"recon", l.recon}, {"kl", l.kl}, {"total", l.total}};
}

LossBreakdown losses_from_json(const Json& j) {
  LossBreakdown l;
  read_field(j, "recon", l.recon, "final_losses");
  read_field(j, "kl", l.kl, "final_losses");
  read_field(j, "total", l.total, "final_losses");
  return l;
}

}  // namespace vrfm
