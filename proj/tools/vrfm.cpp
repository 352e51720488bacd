#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "vrfm/experiment.hpp"

namespace {

vrfm::SolverConfig solver_from_flags(int steps, bool adaptive, double rtol, double atol) {
  vrfm::SolverConfig s;
  s.kind = adaptive ? vrfm::SolverConfig::Kind::kDopri5 : vrfm::SolverConfig::Kind::kEuler;
  s.steps = steps;
  s.rtol = rtol;
  s.atol = atol;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational rectified flow matching on synthetic data"};
  app.require_subcommand(1);

  // train
  std::string train_config;
  int train_jobs = 1;
  CLI::App* train = app.add_subcommand("train", "train per the JSON experiment config");
  train->add_option("--config", train_config, "experiment config JSON path")->required();
  train->add_option("--jobs", train_jobs, "concurrent training cells");

  // sample
  std::string sample_ckpt, sample_out = "out/sample";
  long long sample_n = 10000, sample_trajectories = 0;
  int sample_steps = 100;
  bool sample_adaptive = false;
  double sample_rtol = 1e-5, sample_atol = 1e-5;
  unsigned long long sample_seed = 7;
  CLI::App* smp = app.add_subcommand("sample", "draw samples from a checkpoint");
  smp->add_option("--checkpoint", sample_ckpt, "checkpoint path")->required();
  smp->add_option("--n", sample_n, "number of samples");
  smp->add_option("--steps", sample_steps, "Euler steps");
  smp->add_flag("--adaptive", sample_adaptive, "use the adaptive solver");
  smp->add_option("--rtol", sample_rtol, "adaptive relative tolerance");
  smp->add_option("--atol", sample_atol, "adaptive absolute tolerance");
  smp->add_option("--seed", sample_seed, "sampling seed");
  smp->add_option("--trajectories", sample_trajectories, "export this many trajectories");
  smp->add_option("--output", sample_out, "output directory");

  // evaluate
  std::vector<std::string> eval_ckpts;
  std::string eval_out = "out/metrics.csv";
  std::vector<int> eval_steps = {2, 5, 10, 50, 100};
  bool eval_no_adaptive = false;
  long long eval_n = 10000;
  CLI::App* ev = app.add_subcommand("evaluate", "metric sweep over solver settings");
  ev->add_option("--checkpoints", eval_ckpts, "checkpoint paths")->required()->expected(-1);
  ev->add_option("--steps", eval_steps, "Euler step grid");
  ev->add_flag("--no-adaptive", eval_no_adaptive, "skip the adaptive setting");
  ev->add_option("--n", eval_n, "samples per metric row");
  ev->add_option("--output", eval_out, "metrics CSV path");

  // ambiguity
  std::string amb_source, amb_task = "synthetic_1d", amb_out = "out/ambiguity";
  unsigned long long amb_seed = 99;
  long long amb_pool = 0;
  CLI::App* amb = app.add_subcommand("ambiguity", "velocity-ambiguity report");
  amb->add_option("--source", amb_source, "'ground-truth' or a checkpoint path")->required();
  amb->add_option("--task", amb_task, "task for ground-truth maps");
  amb->add_option("--seed", amb_seed, "rng seed");
  amb->add_option("--pool-draws", amb_pool, "override ground-truth coupling pool size");
  amb->add_option("--output", amb_out, "output directory");

  // reproduce
  std::string rep_task = "synthetic_1d", rep_out = "out";
  int rep_jobs = 2;
  CLI::App* rep = app.add_subcommand("reproduce", "full train/evaluate/ambiguity suite");
  rep->add_option("--task", rep_task, "synthetic_1d or synthetic_2d");
  rep->add_option("--jobs", rep_jobs, "concurrent training cells");
  rep->add_option("--output", rep_out, "output root (env VRFM_OUTPUT_ROOT overrides)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*train) {
      const vrfm::ExperimentConfig cfg = vrfm::config_from_file(train_config);
      const vrfm::TrainOutputs out = vrfm::cmd_train(cfg, train_jobs);
      std::cout << "resolved config: " << out.resolved_config_path << "\n";
      for (const auto& cell : out.cells)
        std::cout << "seed " << cell.seed << ": " << cell.checkpoint_path << "\n";
    } else if (*smp) {
      const auto solver = solver_from_flags(sample_steps, sample_adaptive, sample_rtol,
                                            sample_atol);
      const vrfm::SampleOutputs out = vrfm::cmd_sample(
          sample_ckpt, sample_n, solver, sample_seed, sample_out, sample_trajectories);
      std::cout << "samples: " << out.samples_csv_path << "\n";
      if (!out.trajectories_csv_path.empty())
        std::cout << "trajectories: " << out.trajectories_csv_path << "\n";
      std::cout << "mean nfe: " << out.mean_nfe << "\n";
    } else if (*ev) {
      vrfm::MetricsConfig mcfg;
      mcfg.eval_steps = eval_steps;
      mcfg.include_adaptive = !eval_no_adaptive;
      mcfg.n_generated = eval_n;
      mcfg.n_test = eval_n;
      vrfm::SolverConfig adaptive;
      adaptive.kind = vrfm::SolverConfig::Kind::kDopri5;
      vrfm::cmd_evaluate(eval_ckpts, mcfg, adaptive, eval_out);
      std::cout << "metrics: " << eval_out << "\n";
    } else if (*amb) {
      vrfm::ExperimentConfig cfg = vrfm::default_config(amb_task, vrfm::Objective::kVrfm);
      if (amb_pool > 0) cfg.ambiguity.gt_pool_draws = amb_pool;
      const vrfm::AmbiguityOutputs out = vrfm::cmd_ambiguity(amb_source, cfg, amb_out, amb_seed);
      std::cout << "grid: " << out.grid_csv_path << "\n";
      for (const auto& p : out.probe_csv_paths) std::cout << "probe: " << p << "\n";
    } else if (*rep) {
      const vrfm::ReproduceOutputs out = vrfm::cmd_reproduce(rep_task, rep_out, rep_jobs);
      std::cout << "artifacts under " << out.root << "\n";
      std::cout << "metrics: " << out.metrics_csv_path << "\n";
    }
  } catch (const vrfm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
