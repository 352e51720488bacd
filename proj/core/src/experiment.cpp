#include "vrfm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "vrfm/svg.hpp"

namespace vrfm {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTestSetSeed = 0x7e57da7a;

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << text;
}

double eval_wasserstein(const Matrix& gen, const Matrix& test, int n_projections, Rng& rng) {
  if (gen.cols() == 1) {
    std::vector<double> a(gen.data(), gen.data() + gen.rows());
    std::vector<double> b(test.data(), test.data() + test.rows());
    return wasserstein_1d(std::move(a), std::move(b));
  }
  return sliced_wasserstein(gen, test, n_projections, rng);
}

struct EvalSetting {
  bool adaptive = false;
  int steps = 0;
  std::string label() const { return adaptive ? "adaptive" : std::to_string(steps); }
};

MetricRow evaluate_one(const Checkpoint& ckpt, const VelocityModel& model,
                       const EvalSetting& setting, const MetricsConfig& mcfg,
                       const SolverConfig& adaptive_solver, const Matrix& test) {
  SolverConfig solver = adaptive_solver;
  if (setting.adaptive) {
    solver.kind = SolverConfig::Kind::kDopri5;
  } else {
    solver.kind = SolverConfig::Kind::kEuler;
    solver.steps = setting.steps;
  }

  Rng rng(0x5eed0000 ^ (ckpt.seed * 1000003ull + static_cast<std::uint64_t>(
                            setting.adaptive ? 999 : setting.steps)));
  const SampleResult gen = sample(model, ckpt.source, mcfg.n_generated, solver, rng);

  MetricRow row;
  row.method = ckpt.objective;
  row.steps = setting.label();
  row.seed = std::to_string(ckpt.seed);
  row.nfe = gen.mean_nfe;
  row.true_ll = true_log_likelihood(gen.samples, ckpt.target);
  const double h = select_parzen_bandwidth(gen.samples, rng, mcfg.parzen_grid_points,
                                           mcfg.parzen_h_min, mcfg.parzen_h_max);
  row.parzen_ll = parzen_log_likelihood(gen.samples, test, h);
  row.wasserstein = eval_wasserstein(gen.samples, test, mcfg.n_projections, rng);
  return row;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::string out = "method,steps,seed,true_ll,parzen_ll,wasserstein,nfe\n";
  for (const MetricRow& r : rows) {
    out += r.method + "," + r.steps + "," + r.seed + "," + format_double(r.true_ll) + "," +
           format_double(r.parzen_ll) + "," + format_double(r.wasserstein) + "," +
           format_double(r.nfe) + "\n";
  }
  write_text(path, out);
}

void write_loss_csv(const std::string& path, const std::vector<LogRow>& history) {
  std::string out = "iteration,recon,kl,total\n";
  for (const LogRow& r : history)
    out += std::to_string(r.iteration) + "," + format_double(r.recon) + "," +
           format_double(r.kl) + "," + format_double(r.total) + "\n";
  write_text(path, out);
}

void write_ambiguity_csv(const std::string& path, const AmbiguityReport& report) {
  std::string out;
  const std::size_t nx = report.xs.size();
  if (report.data_dim == 1)
    out = "x,t,std,count,mask\n";
  else
    out = "x1,x2,t,std,count,mask\n";
  for (Index r = 0; r < report.stddev.rows(); ++r) {
    std::string xpart;
    if (report.data_dim == 1) {
      xpart = format_double(report.xs[static_cast<std::size_t>(r)]);
    } else {
      const std::size_t i1 = static_cast<std::size_t>(r) % nx;
      const std::size_t i2 = static_cast<std::size_t>(r) / nx;
      xpart = format_double(report.xs[i1]) + "," + format_double(report.xs[i2]);
    }
    for (Index c = 0; c < report.stddev.cols(); ++c) {
      const bool ok = report.mask(r, c) > 0.5;
      out += xpart + "," + format_double(report.ts[static_cast<std::size_t>(c)]) + "," +
             (ok ? format_double(report.stddev(r, c)) : std::string("nan")) + "," +
             format_double(report.count(r, c)) + "," + (ok ? "1" : "0") + "\n";
    }
  }
  write_text(path, out);
}

void write_samples_csv(const std::string& path, const Matrix& samples) {
  std::string out;
  for (Index j = 0; j < samples.cols(); ++j)
    out += (j ? "," : "") + ("x_" + std::to_string(j));
  out += "\n";
  for (Index i = 0; i < samples.rows(); ++i) {
    for (Index j = 0; j < samples.cols(); ++j)
      out += (j ? "," : "") + format_double(samples(i, j));
    out += "\n";
  }
  write_text(path, out);
}

void write_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::string out = "trajectory,t";
  const Index dim = trajs.empty() ? 1 : trajs.front().states.front().cols();
  for (Index j = 0; j < dim; ++j) out += ",x_" + std::to_string(j);
  out += "\n";
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const Trajectory& traj = trajs[k];
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      out += std::to_string(k) + "," + format_double(traj.times[i]);
      for (Index j = 0; j < dim; ++j) out += "," + format_double(traj.states[i](0, j));
      out += "\n";
    }
  }
  write_text(path, out);
}

std::string effective_output_dir(const std::string& configured) {
  if (const char* env = std::getenv("VRFM_OUTPUT_ROOT"); env && *env) return env;
  return configured;
}

TrainOutputs cmd_train(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  const fs::path base =
      fs::path(effective_output_dir(cfg.output_dir)) / cfg.task / objective_name(cfg.objective);
  ensure_dir(base);

  TrainOutputs outputs;
  outputs.resolved_config_path = (base / "config.resolved.json").string();
  write_text(outputs.resolved_config_path, config_to_json_string(cfg));

  std::mutex mu;
  std::exception_ptr first_error;
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::atomic<std::size_t> next{0};
  outputs.cells.resize(seeds.size());

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        TrainConfig tc = cfg.train;
        tc.objective = cfg.objective;
        tc.seed = seeds[i];
        const std::optional<PosteriorConfig> pcfg =
            cfg.objective == Objective::kVrfm ? std::optional(cfg.posterior) : std::nullopt;
        TrainResult result = train(cfg.source, cfg.target, cfg.model, pcfg, tc);
        result.checkpoint.task = cfg.task;

        const fs::path cell = base / std::to_string(seeds[i]);
        ensure_dir(cell);
        TrainCellOutputs out;
        out.seed = seeds[i];
        out.checkpoint_path = (cell / "model.ckpt").string();
        out.loss_csv_path = (cell / "loss.csv").string();
        save_checkpoint(result.checkpoint, out.checkpoint_path);
        write_loss_csv(out.loss_csv_path, result.history);
        std::lock_guard<std::mutex> lock(mu);
        outputs.cells[i] = out;
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
  std::vector<std::thread> pool;
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return outputs;
}

SampleOutputs cmd_sample(const std::string& ckpt_path, Index n, const SolverConfig& solver,
                         std::uint64_t seed, const std::string& out_dir,
                         Index n_trajectories) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const VelocityModel model = velocity_from_checkpoint(ckpt);
  const fs::path base = effective_output_dir(out_dir);
  ensure_dir(base);

  Rng rng(seed);
  const bool keep = n_trajectories > 0;
  const SampleResult result = sample(model, ckpt.source, n, solver, rng, keep);

  SampleOutputs out;
  out.mean_nfe = result.mean_nfe;
  out.samples_csv_path = (base / "samples.csv").string();
  write_samples_csv(out.samples_csv_path, result.samples);
  if (keep) {
    const Index k = std::min<Index>(n_trajectories, static_cast<Index>(result.trajectories.size()));
    std::vector<Trajectory> head(result.trajectories.begin(), result.trajectories.begin() + k);
    out.trajectories_csv_path = (base / "trajectories.csv").string();
    write_trajectories_csv(out.trajectories_csv_path, head);
  }
  return out;
}

std::vector<MetricRow> cmd_evaluate(const std::vector<std::string>& ckpt_paths,
                                    const MetricsConfig& mcfg, const SolverConfig& adaptive,
                                    const std::string& out_csv) {
  if (ckpt_paths.empty()) throw ConfigError("cmd_evaluate: no checkpoints given");

  std::vector<EvalSetting> settings;
  for (int s : mcfg.eval_steps) settings.push_back({false, s});
  if (mcfg.include_adaptive) settings.push_back({true, 0});

  std::vector<MetricRow> rows;
  std::optional<Matrix> test;
  std::optional<int> dim_seen;
  for (const std::string& path : ckpt_paths) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (dim_seen && *dim_seen != ckpt.model_cfg.data_dim)
      throw Error("cmd_evaluate: checkpoints mix tasks of different dims");
    dim_seen = ckpt.model_cfg.data_dim;
    if (!test) {
      Rng trng(kTestSetSeed);
      test = sample(ckpt.target, mcfg.n_test, trng);
    }
    const VelocityModel model = velocity_from_checkpoint(ckpt);
    for (const EvalSetting& setting : settings)
      rows.push_back(evaluate_one(ckpt, model, setting, mcfg, adaptive, *test));
  }

  // Aggregate mean/std per (method, setting), appended after the per-seed rows.
  std::vector<MetricRow> aggregates;
  for (const std::string method : {"rfm", "vrfm"}) {
    for (const EvalSetting& setting : settings) {
      std::vector<const MetricRow*> cell;
      for (const MetricRow& r : rows)
        if (r.method == method && r.steps == setting.label()) cell.push_back(&r);
      if (cell.empty()) continue;
      MetricRow mean, sd;
      mean.method = sd.method = method;
      mean.steps = sd.steps = setting.label();
      mean.seed = "mean";
      sd.seed = "std";
      const double n = static_cast<double>(cell.size());
      auto acc = [&](auto field) {
        double m = 0.0, s = 0.0;
        for (const MetricRow* r : cell) m += (r->*field) / n;
        for (const MetricRow* r : cell) s += ((r->*field) - m) * ((r->*field) - m);
        return std::pair(m, cell.size() > 1 ? std::sqrt(s / (n - 1.0)) : 0.0);
      };
      std::tie(mean.true_ll, sd.true_ll) = acc(&MetricRow::true_ll);
      std::tie(mean.parzen_ll, sd.parzen_ll) = acc(&MetricRow::parzen_ll);
      std::tie(mean.wasserstein, sd.wasserstein) = acc(&MetricRow::wasserstein);
      std::tie(mean.nfe, sd.nfe) = acc(&MetricRow::nfe);
      aggregates.push_back(mean);
      aggregates.push_back(sd);
    }
  }
  rows.insert(rows.end(), aggregates.begin(), aggregates.end());

  if (!out_csv.empty()) {
    ensure_dir(fs::path(out_csv).parent_path());
    write_metric_csv(out_csv, rows);
  }
  return rows;
}

AmbiguityOutputs cmd_ambiguity(const std::string& source_arg, const ExperimentConfig& cfg,
                               const std::string& out_dir, std::uint64_t seed) {
  const fs::path base = effective_output_dir(out_dir);
  ensure_dir(base);
  Rng rng(seed);

  AmbiguityReport report;
  VelocityModel model;  // keeps the checkpointed model alive during mapping
  if (source_arg == "ground-truth" || source_arg == "ground_truth") {
    report = ambiguity_map(GroundTruthSource{&cfg.source, &cfg.target}, cfg.ambiguity, rng);
  } else {
    const Checkpoint ckpt = load_checkpoint(source_arg);
    model = velocity_from_checkpoint(ckpt);
    report = ambiguity_map(ModelSource{&model}, cfg.ambiguity, rng);
  }

  AmbiguityOutputs out;
  out.grid_csv_path = (base / ("ambiguity_" + report.source_tag + ".csv")).string();
  write_ambiguity_csv(out.grid_csv_path, report);
  for (std::size_t i = 0; i < report.probes.size(); ++i) {
    const ProbeHistogram& probe = report.probes[i];
    std::string text;
    for (Index j = 0; j < static_cast<Index>(report.data_dim); ++j)
      text += (j ? "," : "") + ("v_" + std::to_string(j));
    text += "\n";
    if (probe.valid) {
      for (Index r = 0; r < probe.velocities.rows(); ++r) {
        for (Index j = 0; j < probe.velocities.cols(); ++j)
          text += (j ? "," : "") + format_double(probe.velocities(r, j));
        text += "\n";
      }
    }
    const std::string path =
        (base / ("probe_" + std::to_string(i) + "_" + report.source_tag + ".csv")).string();
    write_text(path, text);
    out.probe_csv_paths.push_back(path);
  }
  if (report.data_dim == 1) {
    out.heatmap_svg_path = (base / ("ambiguity_" + report.source_tag + ".svg")).string();
    write_heatmap(out.heatmap_svg_path, "velocity std (" + report.source_tag + ")",
                  report.xs, report.ts, report.stddev, report.mask);
  }
  return out;
}

ReproduceOutputs cmd_reproduce(const std::string& task, const std::string& out_root,
                               int jobs) {
  ReproduceOutputs out;
  const fs::path root = fs::path(effective_output_dir(out_root)) / task;
  out.root = root.string();

  std::map<std::string, std::vector<std::string>> ckpts_by_method;
  std::string stage = "train";
  try {
    for (const Objective objective : {Objective::kRfm, Objective::kVrfm}) {
      ExperimentConfig cfg = default_config(task, objective);
      cfg.output_dir = effective_output_dir(out_root);
      const TrainOutputs touts = cmd_train(cfg, jobs);
      for (const TrainCellOutputs& cell : touts.cells) {
        ckpts_by_method[objective_name(objective)].push_back(cell.checkpoint_path);
        out.checkpoints.push_back(cell.checkpoint_path);
      }
    }

    stage = "evaluate";
    ExperimentConfig eval_cfg = default_config(task, Objective::kVrfm);
    out.metrics_csv_path = (root / "metrics.csv").string();
    const std::vector<MetricRow> rows =
        cmd_evaluate(out.checkpoints, eval_cfg.metrics, eval_cfg.solver, out.metrics_csv_path);

    // Summary = the aggregate rows only.
    std::vector<MetricRow> summary;
    for (const MetricRow& r : rows)
      if (r.seed == "mean" || r.seed == "std") summary.push_back(r);
    out.summary_csv_path = (root / "summary.csv").string();
    write_metric_csv(out.summary_csv_path, summary);

    stage = "plots";
    std::vector<std::string> ticks;
    for (int s : eval_cfg.metrics.eval_steps) ticks.push_back(std::to_string(s));
    if (eval_cfg.metrics.include_adaptive) ticks.push_back("adaptive");
    auto series_for = [&](const std::string& method, double MetricRow::*field,
                          const std::string& color) {
      Series s;
      s.label = method;
      s.color = color;
      for (const std::string& tick : ticks) {
        for (const MetricRow& r : summary)
          if (r.method == method && r.steps == tick && r.seed == "mean")
            s.y.push_back(r.*field);
        for (const MetricRow& r : summary)
          if (r.method == method && r.steps == tick && r.seed == "std")
            s.yerr.push_back(r.*field);
      }
      return s;
    };
    ensure_dir(root / "plots");
    for (const auto& [name, field] :
         std::vector<std::pair<std::string, double MetricRow::*>>{
             {"true_ll", &MetricRow::true_ll},
             {"parzen_ll", &MetricRow::parzen_ll},
             {"wasserstein", &MetricRow::wasserstein}}) {
      write_line_chart((root / "plots" / (name + ".svg")).string(), name + " (" + task + ")",
                       "evaluation steps", name, ticks,
                       {series_for("rfm", field, "#d62728"),
                        series_for("vrfm", field, "#1f77b4")});
    }

    stage = "ambiguity";
    ExperimentConfig amb_cfg = default_config(task, Objective::kVrfm);
    const AmbiguityOutputs gt = cmd_ambiguity("ground-truth", amb_cfg, root.string());
    out.ambiguity_csv_paths.push_back(gt.grid_csv_path);
    for (const std::string method : {"rfm", "vrfm"}) {
      const AmbiguityOutputs mo =
          cmd_ambiguity(ckpts_by_method[method].front(), amb_cfg, root.string());
      out.ambiguity_csv_paths.push_back(mo.grid_csv_path);
    }

    stage = "trajectories";
    for (const std::string method : {"rfm", "vrfm"}) {
      const Checkpoint ckpt = load_checkpoint(ckpts_by_method[method].front());
      const VelocityModel model = velocity_from_checkpoint(ckpt);
      SolverConfig solver;
      solver.kind = SolverConfig::Kind::kEuler;
      solver.steps = 100;
      Rng rng(0x77a1);
      const SampleResult sr = sample(model, ckpt.source, 200, solver, rng, true);
      write_trajectories_csv((root / ("trajectories_" + method + ".csv")).string(),
                             sr.trajectories);
      if (ckpt.model_cfg.data_dim == 2) {
        std::vector<Matrix> paths;
        for (const Trajectory& tr : sr.trajectories) {
          Matrix p(tr.states.size(), 2);
          for (std::size_t i = 0; i < tr.states.size(); ++i) p.row(i) = tr.states[i].row(0);
          paths.push_back(std::move(p));
        }
        Rng orng(123);
        PointSet src{"source", sample(ckpt.source, 300, orng), "#d62728"};
        PointSet tgt{"target", sample(ckpt.target, 300, orng), "#9467bd"};
        write_trajectories_2d((root / ("trajectories_" + method + ".svg")).string(),
                              "flows (" + method + ")", paths, {src, tgt});
      } else {
        std::vector<std::vector<double>> paths;
        for (const Trajectory& tr : sr.trajectories) {
          std::vector<double> p;
          for (const Matrix& s : tr.states) p.push_back(s(0, 0));
          paths.push_back(std::move(p));
        }
        write_trajectories_1d((root / ("trajectories_" + method + ".svg")).string(),
                              "flows (" + method + ")", sr.trajectories.front().times, paths);
      }
    }
  } catch (const Error& e) {
    throw Error("reproduce failed at stage '" + stage + "': " + e.what());
  }
  return out;
}

}  // namespace vrfm
