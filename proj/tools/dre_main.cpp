// dre: density-ratio-estimation workbench.
//
// Subcommands: generate, train, eval, sweep-kl, sweep-dim, verify-bounds,
// plot. Exit codes: 0 success, 2 configuration or usage error, 3 runtime
// failure, 4 a bound check failed in verify-bounds.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dre/analysis.hpp"
#include "dre/configfile.hpp"
#include "dre/errors.hpp"
#include "dre/experiments.hpp"
#include "dre/mixture.hpp"
#include "dre/mlp.hpp"
#include "dre/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ProblemFlags {
  int d = 5;
  int modes = 1;
  double kl = 1.0;
  long n = 10000;
};

void add_problem_flags(CLI::App* cmd, ProblemFlags& pf) {
  cmd->add_option("--d", pf.d, "problem dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--modes", pf.modes, "number of mixture modes")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--kl", pf.kl, "KL divergence of the generated pair")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--n", pf.n, "training sample size per distribution")
      ->check(CLI::PositiveNumber);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw dre::io_error("cannot open for writing: " + path);
  out << content;
  if (!out.good()) throw dre::io_error("write failed: " + path);
}

json train_report_json(const dre::TrainReport& r) {
  json j;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["best_val_loss"] = r.best_val_loss;
  j["stop_reason"] = dre::to_string(r.stop_reason);
  j["val_gap"] = r.val_gap;
  json hist = json::array();
  for (const dre::EpochStats& e : r.history)
    hist.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  j["history"] = std::move(hist);
  return j;
}

dre::SweepSettings load_sweep_settings(const std::string& config_path, bool paper_scale) {
  dre::SweepSettings s =
      paper_scale ? dre::SweepSettings::paper() : dre::SweepSettings::desk();
  if (!config_path.empty()) {
    dre::ConfigFile cf = dre::ConfigFile::parse_file(config_path);
    dre::apply_config(cf, s);
    cf.require_all_consumed();
  }
  return s;
}

dre::TrainConfig load_train_config(const std::string& config_path) {
  dre::TrainConfig cfg = dre::SweepSettings::desk().train;
  if (config_path.empty()) return cfg;
  dre::ConfigFile cf = dre::ConfigFile::parse_file(config_path);
  cfg.lr = cf.get_double("train.lr", cfg.lr);
  cfg.batch = static_cast<int>(cf.get_long("train.batch", cfg.batch));
  cfg.patience = static_cast<int>(cf.get_long("train.patience", cfg.patience));
  cfg.max_epochs = static_cast<int>(cf.get_long("train.max_epochs", cfg.max_epochs));
  cfg.hidden_width = static_cast<int>(cf.get_long("train.hidden_width", cfg.hidden_width));
  cfg.hidden_layers =
      static_cast<int>(cf.get_long("train.hidden_layers", cfg.hidden_layers));
  cf.require_all_consumed();
  return cfg;
}

struct Dataset {
  dre::MixtureSpec spec;
  dre::Tensor p_train, q_train, p_val, q_val, p_test;
};

Dataset read_dataset_dir(const std::string& dir) {
  const fs::path base(dir);
  Dataset ds{dre::read_mixture_json((base / "mixture.json").string()),
             dre::read_dataset_csv((base / "p_train.csv").string()),
             dre::read_dataset_csv((base / "q_train.csv").string()),
             dre::read_dataset_csv((base / "p_val.csv").string()),
             dre::read_dataset_csv((base / "q_val.csv").string()),
             dre::read_dataset_csv((base / "p_test.csv").string())};
  for (const dre::Tensor* t : {&ds.p_train, &ds.q_train, &ds.p_val, &ds.q_val, &ds.p_test})
    if (t->cols != ds.spec.d)
      throw dre::io_error("dataset dimension does not match mixture.json in " + dir);
  return ds;
}

int cmd_generate(const ProblemFlags& pf, std::uint64_t seed, const std::string& out_dir) {
  const dre::MixtureSpec spec = dre::MixtureSpec::create(pf.d, pf.modes, pf.kl, seed);
  const long n_val = std::max<long>(pf.n / 2, 2);
  dre::rng_stream rp(dre::derive_stream(seed, 0, dre::split_id::train, dre::source_id::p));
  dre::rng_stream rq(dre::derive_stream(seed, 0, dre::split_id::train, dre::source_id::q));
  dre::rng_stream vp(dre::derive_stream(seed, 0, dre::split_id::val, dre::source_id::p));
  dre::rng_stream vq(dre::derive_stream(seed, 0, dre::split_id::val, dre::source_id::q));
  dre::rng_stream tp(dre::derive_stream(seed, 0, dre::split_id::test, dre::source_id::p));
  fs::create_directories(out_dir);
  const fs::path base(out_dir);
  dre::write_mixture_json(spec, (base / "mixture.json").string());
  dre::write_dataset_csv(dre::sample_p(spec, static_cast<int>(pf.n), rp),
                         (base / "p_train.csv").string());
  dre::write_dataset_csv(dre::sample_q(spec, static_cast<int>(pf.n), rq),
                         (base / "q_train.csv").string());
  dre::write_dataset_csv(dre::sample_p(spec, static_cast<int>(n_val), vp),
                         (base / "p_val.csv").string());
  dre::write_dataset_csv(dre::sample_q(spec, static_cast<int>(n_val), vq),
                         (base / "q_val.csv").string());
  dre::write_dataset_csv(dre::sample_p(spec, static_cast<int>(pf.n), tp),
                         (base / "p_test.csv").string());
  std::printf("wrote dataset (d=%d M=%d kl=%g n=%ld) to %s\n", pf.d, pf.modes, pf.kl,
              pf.n, out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& loss_name,
              const std::string& config_path, std::uint64_t seed,
              const std::string& out_dir) {
  const Dataset ds = read_dataset_dir(data_dir);
  dre::TrainConfig cfg = load_train_config(config_path);
  cfg.loss = dre::LossSpec::parse(loss_name);
  cfg.seed = seed;
  const std::vector<double> truth_val = dre::true_ratio_batch(ds.spec, ds.p_val);
  dre::TrainReport report;
  const dre::TrainedModel tm =
      dre::train(ds.p_train, ds.q_train, ds.p_val, ds.q_val, cfg, report, truth_val);
  fs::create_directories(out_dir);
  const fs::path base(out_dir);
  json extra;
  extra["loss"] = tm.loss.name();
  dre::save_checkpoint(tm.model, (base / "checkpoint.json").string(), extra);
  const json rj = train_report_json(report);
  write_text_file((base / "train_report.json").string(), rj.dump(2) + "\n");
  std::cout << rj.dump(2) << "\n";
  return 0;
}

// Shared by both eval paths; settings carry p orders and proxy sample sizes.
dre::SweepSettings eval_settings(const std::string& config_path) {
  return load_sweep_settings(config_path, false);
}

int cmd_eval_checkpoint(const std::string& checkpoint, const std::string& data_dir,
                        const std::string& config_path, std::uint64_t seed) {
  const Dataset ds = read_dataset_dir(data_dir);
  json full;
  dre::TrainedModel tm{dre::load_checkpoint(checkpoint, &full), dre::LossSpec{}};
  if (!full.contains("loss") || !full["loss"].is_string())
    throw dre::io_error("checkpoint is missing its loss name: " + checkpoint);
  tm.loss = dre::LossSpec::parse(full["loss"].get<std::string>());
  if (tm.model.input_dim != ds.spec.d)
    throw dre::io_error("checkpoint input width does not match the dataset");
  dre::TrainReport no_report;  // errors only; training history is not re-derived
  const dre::SweepSettings s = eval_settings(config_path);
  const dre::EvalReport r =
      dre::evaluate_trained(s, "eval", ds.spec, tm, no_report, ds.p_train, ds.q_train,
                            ds.p_test, seed, 0, ds.p_val.rows);
  std::cout << dre::to_json(r).dump(2) << "\n";
  return 0;
}

int cmd_eval_single(const ProblemFlags& pf, const std::string& loss_name,
                    const std::string& config_path, std::uint64_t seed, int trial) {
  dre::SweepSettings s = eval_settings(config_path);
  s.seed = seed;
  const dre::RunProblem pr{pf.kl, pf.d, pf.modes, pf.n};
  const dre::EvalReport r =
      dre::single_run(s, "single_run", pr, dre::LossSpec::parse(loss_name), trial);
  std::cout << dre::to_json(r).dump(2) << "\n";
  return 0;
}

int run_sweep(bool kl_sweep, const std::string& config_path, bool paper_scale,
              std::uint64_t seed, bool seed_set, int trials, const std::string& loss_name,
              int workers, const std::string& out_dir) {
  dre::SweepSettings s = load_sweep_settings(config_path, paper_scale);
  if (seed_set) s.seed = seed;
  if (trials > 0) s.trials = trials;
  if (workers > 0) s.workers = workers;
  if (!loss_name.empty()) s.losses = {dre::LossSpec::parse(loss_name)};
  fs::create_directories(out_dir);
  const fs::path base(out_dir);
  const dre::RunRecord rec = kl_sweep ? dre::run_kl_sweep(s) : dre::run_dim_sweep(s);
  dre::write_reports_csv((base / "results.csv").string(), rec);
  const dre::AggregateTable tab = dre::aggregate_table(rec);
  dre::write_aggregate_csv((base / "aggregate.csv").string(), tab);
  write_text_file((base / (rec.experiment + ".svg")).string(), dre::sweep_svg(tab));
  std::printf("%s: %zu reports, %zu cells -> %s\n", rec.experiment.c_str(),
              rec.reports.size(), rec.aggregates.size(), out_dir.c_str());
  for (const dre::CellAggregate& c : rec.aggregates) {
    std::printf("  kl=%-4g d=%-3d n=%-6ld %-10s completed=%d divergent=%d failed=%d",
                c.kl_target, c.d, c.n_train, c.loss.c_str(), c.completed, c.divergent,
                c.failed);
    for (std::size_t pi = 0; pi < tab.p_orders.size(); ++pi)
      std::printf("  L%g=%.4g", tab.p_orders[pi], c.lp[pi].med);
    std::printf("  [%.1fs]\n", c.wall_sec);
  }
  return 0;
}

int cmd_verify_bounds(const std::string& config_path, std::uint64_t seed, bool seed_set,
                      const std::string& out_dir) {
  dre::NnBoundsSettings s;
  if (!config_path.empty()) {
    dre::ConfigFile cf = dre::ConfigFile::parse_file(config_path);
    dre::apply_config(cf, s);
    cf.require_all_consumed();
  }
  if (seed_set) s.seed = seed;
  const dre::NnBoundsRecord rec = dre::run_nn_bounds(s);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path base(out_dir);
    dre::write_nn_csv((base / "nn_bounds.csv").string(), rec);
    write_text_file((base / "nn_bounds.svg").string(), dre::nn_bounds_svg(rec));
  }
  std::printf("upper-bound cells (uniform cube):\n");
  std::printf("  %-3s %-6s %-5s %-12s %-12s %-12s %s\n", "d", "N", "k", "estimate",
              "stderr", "bound", "status");
  for (const dre::NnMomentEstimate& e : rec.upper)
    std::printf("  %-3d %-6ld %-5g %-12.5g %-12.3g %-12.5g %s\n", e.d, e.N, e.order,
                e.estimate, e.se, e.bound, e.satisfied ? "pass" : "FAIL");
  std::printf("lower-bound trend (scaled weighted NN moment, target %.5g):\n",
              rec.lower.empty() ? 0.0 : rec.lower.front().bound);
  for (const dre::NnMomentEstimate& e : rec.lower)
    std::printf("  d=%d N=%-6ld p=%g estimate=%.5g stderr=%.3g %s\n", e.d, e.N, e.order,
                e.estimate, e.se,
                e.inconclusive ? "inconclusive" : (e.satisfied ? "pass" : "FAIL"));
  const bool ok = rec.all_upper_ok && rec.lower_ok_at_largest;
  std::printf("verify-bounds: %s\n", ok ? "all checks passed" : "CHECKS FAILED");
  return ok ? 0 : 4;
}

int cmd_plot(const std::string& csv_path, const std::string& out_svg) {
  const dre::AggregateTable tab = dre::read_aggregate_csv(csv_path);
  write_text_file(out_svg, dre::sweep_svg(tab));
  std::printf("wrote %s (%s, %zu cells)\n", out_svg.c_str(), tab.experiment.c_str(),
              tab.cells.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"density ratio estimation workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 20260822;
  bool paper_scale = false;
  std::string out_dir = "out";
  int trials = 0;
  std::string loss_name;
  int workers = 0;

  // generate
  ProblemFlags gen_pf;
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
  add_problem_flags(generate, gen_pf);
  generate->add_option("--seed", seed, "master RNG seed");
  generate->add_option("--out", out_dir, "output directory");

  // train
  std::string data_dir;
  CLI::App* train = app.add_subcommand("train", "train a ratio estimator on a dataset");
  train->add_option("--data", data_dir, "dataset directory from generate")->required();
  train->add_option("--loss", loss_name, "loss name (kl|pearson_chi2|squared_hellinger|gan|alpha[:v])")
      ->default_val("kl");
  train->add_option("--config", config_path, "config file with a [train] section");
  train->add_option("--seed", seed, "master RNG seed");
  train->add_option("--out", out_dir, "output directory for checkpoint and report");

  // eval
  ProblemFlags eval_pf;
  std::string checkpoint;
  int trial = 0;
  CLI::App* eval = app.add_subcommand(
      "eval", "evaluate a checkpoint, or run dataset+train+eval in one shot");
  eval->add_option("--checkpoint", checkpoint, "checkpoint.json from train");
  eval->add_option("--data", data_dir, "dataset directory (required with --checkpoint)");
  add_problem_flags(eval, eval_pf);
  eval->add_option("--loss", loss_name, "loss for the one-shot path")->default_val("kl");
  eval->add_option("--config", config_path, "config file");
  eval->add_option("--seed", seed, "master RNG seed");
  eval->add_option("--trial", trial, "trial index for the one-shot path");

  // sweeps
  CLI::App* sweep_kl = app.add_subcommand("sweep-kl", "error-vs-KL experiment");
  CLI::App* sweep_dim = app.add_subcommand("sweep-dim", "error-vs-dimension experiment");
  for (CLI::App* c : {sweep_kl, sweep_dim}) {
    c->add_option("--config", config_path, "config file with [experiment]/[train]");
    c->add_option("--seed", seed, "master RNG seed");
    c->add_option("--out", out_dir, "output directory");
    c->add_option("--trials", trials, "trials per grid cell")->check(CLI::PositiveNumber);
    c->add_option("--loss", loss_name, "restrict to a single loss");
    c->add_option("--workers", workers, "worker threads per cell")
        ->check(CLI::PositiveNumber);
    auto* desk = c->add_flag("--desk-scale", "desk-scale grids and nets (default)");
    c->add_flag("--paper-scale", paper_scale, "full-protocol grids and nets")
        ->excludes(desk);
  }

  // verify-bounds
  CLI::App* verify = app.add_subcommand("verify-bounds",
                                        "nearest-neighbor moment bound checks");
  verify->add_option("--config", config_path, "config file with an [nn] section");
  verify->add_option("--seed", seed, "master RNG seed");
  verify->add_option("--out", out_dir, "output directory (optional)")->default_val("");

  // plot
  std::string csv_path, out_svg;
  CLI::App* plot = app.add_subcommand("plot", "rebuild a figure from an aggregate CSV");
  plot->add_option("--csv", csv_path, "aggregate.csv from a sweep")->required();
  plot->add_option("--out", out_svg, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen_pf, seed, out_dir);
    if (train->parsed()) return cmd_train(data_dir, loss_name, config_path, seed, out_dir);
    if (eval->parsed()) {
      if (!checkpoint.empty()) {
        if (data_dir.empty())
          throw dre::config_error("eval --checkpoint requires --data");
        return cmd_eval_checkpoint(checkpoint, data_dir, config_path, seed);
      }
      return cmd_eval_single(eval_pf, loss_name, config_path, seed, trial);
    }
    if (sweep_kl->parsed() || sweep_dim->parsed())
      return run_sweep(sweep_kl->parsed(), config_path, paper_scale, seed,
                       sweep_kl->count("--seed") + sweep_dim->count("--seed") > 0, trials,
                       loss_name, workers, out_dir);
    if (verify->parsed())
      return cmd_verify_bounds(config_path, seed, verify->count("--seed") > 0, out_dir);
    if (plot->parsed()) return cmd_plot(csv_path, out_svg);
  } catch (const dre::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const dre::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
