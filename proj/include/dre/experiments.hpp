#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dre/analysis.hpp"
#include "dre/configfile.hpp"
#include "dre/errors.hpp"
#include "dre/losses.hpp"
#include "dre/mixture.hpp"
#include "dre/stats.hpp"
#include "dre/svg.hpp"
#include "dre/trainer.hpp"

namespace dre {

inline constexpr const char* kSweepSchema = "dre-sweep-v1";
inline constexpr const char* kAggregateSchema = "dre-aggregate-v1";
inline constexpr const char* kNnSchema = "dre-nn-v1";

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Everything a sweep needs besides the output directory. Desk scale keeps the
// protocol shape of the full runs while fitting on a workstation; the full
// scale swaps in the wide nets and grids and 100 trials.
struct SweepSettings {
  std::vector<double> kl_grid{1.0, 2.0, 4.0};
  std::vector<int> dim_grid{10, 25, 50};
  std::vector<long> size_grid{2000, 4000, 8000};
  std::vector<LossSpec> losses{LossSpec::parse("kl"), LossSpec::parse("alpha:0.5")};
  std::vector<double> p_orders{1.0, 2.0, 3.0};
  int trials = 10;
  int kl_sweep_dim = 5;
  long kl_sweep_n = 10000;
  double dim_sweep_kl = 3.0;
  int modes = 1;
  TrainConfig train;
  long moment_mc_n = 50000;
  int lipschitz_pairs = 4096;
  std::uint64_t seed = 20260822;
  int workers = 1;

  static SweepSettings desk() {
    SweepSettings s;
    s.train.hidden_width = 256;
    s.train.hidden_layers = 3;
    s.train.max_epochs = 200;
    return s;
  }

  // Full-protocol grids; expect hours of wall clock without an accelerator.
  static SweepSettings paper() {
    SweepSettings s;
    s.kl_grid = {1, 2, 4, 6, 8, 10, 12, 14};
    s.dim_grid = {50, 100, 200};
    s.size_grid = {1000, 2000, 4000, 8000, 16000};
    s.trials = 100;
    s.train.hidden_width = 1024;
    s.train.hidden_layers = 5;
    s.train.max_epochs = 5000;
    return s;
  }
};

inline std::string settings_fingerprint(const SweepSettings& s, const std::string& experiment) {
  std::ostringstream o;
  o.precision(17);
  o << experiment << "|kl:";
  for (double v : s.kl_grid) o << v << ",";
  o << "|dims:";
  for (int v : s.dim_grid) o << v << ",";
  o << "|sizes:";
  for (long v : s.size_grid) o << v << ",";
  o << "|losses:";
  for (const LossSpec& l : s.losses) o << l.name() << ",";
  o << "|p:";
  for (double v : s.p_orders) o << v << ",";
  o << "|trials:" << s.trials << "|kd:" << s.kl_sweep_dim << "|kn:" << s.kl_sweep_n
    << "|dk:" << s.dim_sweep_kl << "|M:" << s.modes << "|lr:" << s.train.lr
    << "|batch:" << s.train.batch << "|patience:" << s.train.patience
    << "|maxep:" << s.train.max_epochs << "|width:" << s.train.hidden_width
    << "|layers:" << s.train.hidden_layers << "|mc:" << s.moment_mc_n
    << "|pairs:" << s.lipschitz_pairs << "|seed:" << s.seed;
  return o.str();
}

// Overlays config-file keys onto a settings struct. CLI flags are applied
// after this, so the precedence is defaults < config file < flags.
inline void apply_config(const ConfigFile& cf, SweepSettings& s) {
  s.kl_grid = cf.get_doubles("experiment.kl_grid", s.kl_grid);
  {
    std::vector<double> dims, sizes;
    for (int v : s.dim_grid) dims.push_back(v);
    for (long v : s.size_grid) sizes.push_back(static_cast<double>(v));
    dims = cf.get_doubles("experiment.dim_grid", dims);
    sizes = cf.get_doubles("experiment.size_grid", sizes);
    s.dim_grid.clear();
    for (double v : dims) s.dim_grid.push_back(static_cast<int>(v));
    s.size_grid.clear();
    for (double v : sizes) s.size_grid.push_back(static_cast<long>(v));
  }
  {
    std::vector<std::string> names;
    for (const LossSpec& l : s.losses) names.push_back(l.name());
    names = cf.get_strings("experiment.losses", names);
    s.losses.clear();
    for (const std::string& n : names) s.losses.push_back(LossSpec::parse(n));
  }
  s.p_orders = cf.get_doubles("experiment.p_orders", s.p_orders);
  s.trials = static_cast<int>(cf.get_long("experiment.trials", s.trials));
  s.kl_sweep_dim = static_cast<int>(cf.get_long("experiment.kl_sweep_dim", s.kl_sweep_dim));
  s.kl_sweep_n = cf.get_long("experiment.kl_sweep_n", s.kl_sweep_n);
  s.dim_sweep_kl = cf.get_double("experiment.dim_sweep_kl", s.dim_sweep_kl);
  s.modes = static_cast<int>(cf.get_long("experiment.modes", s.modes));
  s.moment_mc_n = cf.get_long("experiment.moment_mc_n", s.moment_mc_n);
  s.lipschitz_pairs =
      static_cast<int>(cf.get_long("experiment.lipschitz_pairs", s.lipschitz_pairs));
  s.seed = static_cast<std::uint64_t>(cf.get_long("experiment.seed",
                                                  static_cast<long>(s.seed)));
  s.workers = static_cast<int>(cf.get_long("experiment.workers", s.workers));
  s.train.lr = cf.get_double("train.lr", s.train.lr);
  s.train.batch = static_cast<int>(cf.get_long("train.batch", s.train.batch));
  s.train.patience = static_cast<int>(cf.get_long("train.patience", s.train.patience));
  s.train.max_epochs = static_cast<int>(cf.get_long("train.max_epochs", s.train.max_epochs));
  s.train.hidden_width =
      static_cast<int>(cf.get_long("train.hidden_width", s.train.hidden_width));
  s.train.hidden_layers =
      static_cast<int>(cf.get_long("train.hidden_layers", s.train.hidden_layers));
}

struct RunProblem {
  double kl_target = 1.0;
  int d = 5;
  int M = 1;
  long n_train = 10000;
};

// Lp errors, Lipschitz and diameter proxies, and bound right-hand sides for
// an already trained model, against the closed-form ratio on a P test set.
inline EvalReport evaluate_trained(const SweepSettings& s, const std::string& experiment,
                                   const MixtureSpec& mspec, const TrainedModel& tm,
                                   const TrainReport& treport, const Tensor& p_train,
                                   const Tensor& q_train, const Tensor& p_test,
                                   std::uint64_t run_seed, std::uint64_t trial,
                                   long n_val) {
  const std::vector<double> truth_test = true_ratio_batch(mspec, p_test);
  const std::vector<double> est_test = predict_ratio(tm, p_test);

  EvalReport r;
  r.experiment = experiment;
  r.loss_name = tm.loss.name();
  r.seed = run_seed;
  r.trial = trial;
  r.d = mspec.d;
  r.M = mspec.M;
  r.kl_target = mspec.kl_target;
  r.n_train = p_train.rows;
  r.n_val = n_val;
  r.n_test = p_test.rows;
  r.epochs_run = treport.epochs_run;
  r.best_val_loss = treport.best_val_loss;
  r.val_gap = treport.val_gap;
  r.stop_reason = to_string(treport.stop_reason);

  std::vector<double> energy_test(truth_test.size());
  for (std::size_t i = 0; i < truth_test.size(); ++i)
    energy_test[i] = -std::log(truth_test[i]);
  rng_stream pair_rng(derive_stream(run_seed, trial, split_id::test, source_id::pairs));
  r.lipschitz_energy = estimate_lipschitz(energy_test, p_test, s.lipschitz_pairs, pair_rng);
  r.lipschitz_estimator = estimate_lipschitz(est_test, p_test, s.lipschitz_pairs, pair_rng);
  r.diag = empirical_diag({&p_train, &q_train});

  rng_stream mc_rng(derive_stream(run_seed, trial, split_id::test, source_id::mc));
  for (double p : s.p_orders) {
    r.lp.push_back(lp_error(truth_test, est_test, p));
    // A constant energy (kl_target 0) has Lipschitz proxy 0 and the bound
    // formulas degenerate; reports then carry errors without bounds.
    if (r.lipschitz_energy <= 0.0) continue;
    const MomentEstimate mp = moment_estimate(mspec, p, s.moment_mc_n, mc_rng);
    const MomentEstimate m2p = moment_estimate(mspec, 2.0 * p, s.moment_mc_n, mc_rng);
    r.bounds.push_back(bound_rhs(r.lipschitz_energy, r.lipschitz_estimator, r.diag,
                                 mp.value, m2p.value, analytic_kl(mspec), p));
  }
  return r;
}

// Dataset draw, training, and evaluation for one grid cell and trial. All
// randomness comes from streams derived from (settings.seed, cell, trial), so
// the result is independent of scheduling order.
inline EvalReport single_run(const SweepSettings& s, const std::string& experiment,
                             const RunProblem& pr, const LossSpec& loss, int trial) {
  const auto t0 = std::chrono::steady_clock::now();
  char cell[160];
  std::snprintf(cell, sizeof(cell), "%s|kl=%.17g|d=%d|n=%ld|loss=%s", experiment.c_str(),
                pr.kl_target, pr.d, pr.n_train, loss.name().c_str());
  const std::uint64_t run_seed = mix64(s.seed ^ fnv1a64(cell));
  const std::uint64_t ut = static_cast<std::uint64_t>(trial);

  const MixtureSpec mspec =
      MixtureSpec::create(pr.d, pr.M, pr.kl_target, mix64(run_seed + ut + 1));
  const long n = pr.n_train;
  const long n_val = std::max<long>(n / 2, 2);
  const long n_test = n;

  rng_stream rp(derive_stream(run_seed, ut, split_id::train, source_id::p));
  rng_stream rq(derive_stream(run_seed, ut, split_id::train, source_id::q));
  rng_stream vp(derive_stream(run_seed, ut, split_id::val, source_id::p));
  rng_stream vq(derive_stream(run_seed, ut, split_id::val, source_id::q));
  rng_stream tp(derive_stream(run_seed, ut, split_id::test, source_id::p));
  const Tensor p_train = sample_p(mspec, n, rp);
  const Tensor q_train = sample_q(mspec, n, rq);
  const Tensor p_val = sample_p(mspec, n_val, vp);
  const Tensor q_val = sample_q(mspec, n_val, vq);
  const Tensor p_test = sample_p(mspec, n_test, tp);

  const std::vector<double> truth_val = true_ratio_batch(mspec, p_val);

  TrainConfig cfg = s.train;
  cfg.loss = loss;
  cfg.seed = run_seed;
  cfg.trial = ut;
  TrainReport treport;
  const TrainedModel tm = train(p_train, q_train, p_val, q_val, cfg, treport, truth_val);

  EvalReport r = evaluate_trained(s, experiment, mspec, tm, treport, p_train, q_train,
                                  p_test, run_seed, ut, n_val);
  r.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

struct CellAggregate {
  double kl_target = 0.0;
  int d = 0;
  long n_train = 0;
  std::string loss;
  int completed = 0;
  int divergent = 0;
  int failed = 0;
  std::vector<summary_stats> lp;  // per p order, over completed trials
  double wall_sec = 0.0;          // in-memory only, never serialized
};

struct RunRecord {
  std::string experiment;
  std::uint64_t config_hash = 0;
  std::vector<double> p_orders;
  std::vector<EvalReport> reports;  // grid order x trial, failures omitted
  std::vector<CellAggregate> aggregates;
};

namespace detail {

struct cell_outcome {
  std::vector<EvalReport> reports;
  std::vector<std::string> failures;
};

// Runs all trials of one cell. Trials are striped across workers by index;
// results land in per-trial slots, so worker count never changes the output.
inline cell_outcome run_cell(const SweepSettings& s, const std::string& experiment,
                             const RunProblem& pr, const LossSpec& loss) {
  const int workers = std::max(1, std::min(s.workers, s.trials));
  std::vector<std::optional<EvalReport>> slots(static_cast<std::size_t>(s.trials));
  std::vector<std::string> errors(static_cast<std::size_t>(s.trials));
  auto body = [&](int w) {
    for (int t = w; t < s.trials; t += workers) {
      try {
        slots[static_cast<std::size_t>(t)] = single_run(s, experiment, pr, loss, t);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(t)] = e.what();
      }
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (std::thread& th : pool) th.join();
  }
  cell_outcome out;
  for (int t = 0; t < s.trials; ++t) {
    if (slots[static_cast<std::size_t>(t)].has_value())
      out.reports.push_back(std::move(*slots[static_cast<std::size_t>(t)]));
    else
      out.failures.push_back("trial " + std::to_string(t) + ": " +
                             errors[static_cast<std::size_t>(t)]);
  }
  return out;
}

inline CellAggregate aggregate_cell(const RunProblem& pr, const std::string& loss_name,
                                    const std::vector<double>& p_orders,
                                    const cell_outcome& oc) {
  CellAggregate agg;
  agg.kl_target = pr.kl_target;
  agg.d = pr.d;
  agg.n_train = pr.n_train;
  agg.loss = loss_name;
  agg.failed = static_cast<int>(oc.failures.size());
  std::vector<const EvalReport*> ok;
  for (const EvalReport& r : oc.reports) {
    if (r.stop_reason == "divergence")
      ++agg.divergent;
    else
      ok.push_back(&r);
  }
  agg.completed = static_cast<int>(ok.size());
  if (ok.empty()) {
    std::string msg = "aggregate: no completed trials for cell kl=" +
                      std::to_string(pr.kl_target) + " d=" + std::to_string(pr.d) +
                      " n=" + std::to_string(pr.n_train) + " loss=" + loss_name;
    for (const std::string& f : oc.failures) msg += "\n  " + f;
    throw error(msg);
  }
  for (std::size_t pi = 0; pi < p_orders.size(); ++pi) {
    std::vector<double> vals;
    vals.reserve(ok.size());
    for (const EvalReport* r : ok) vals.push_back(r->lp[pi].value);
    agg.lp.push_back(summarize(vals));
  }
  return agg;
}

}  // namespace detail

// Sweep over the KL grid at fixed dimension and sample size, for every loss.
inline RunRecord run_kl_sweep(const SweepSettings& s) {
  RunRecord rec;
  rec.experiment = "kl_sweep";
  rec.config_hash = fnv1a64(settings_fingerprint(s, rec.experiment));
  rec.p_orders = s.p_orders;
  if (s.kl_grid.empty() || s.losses.empty() || s.trials < 1)
    throw config_error("run_kl_sweep: empty grid");
  for (double kl : s.kl_grid)
    for (const LossSpec& loss : s.losses) {
      RunProblem pr{kl, s.kl_sweep_dim, s.modes, s.kl_sweep_n};
      const auto c0 = std::chrono::steady_clock::now();
      detail::cell_outcome oc = detail::run_cell(s, rec.experiment, pr, loss);
      CellAggregate agg = detail::aggregate_cell(pr, loss.name(), s.p_orders, oc);
      agg.wall_sec =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
      for (EvalReport& r : oc.reports) rec.reports.push_back(std::move(r));
      rec.aggregates.push_back(std::move(agg));
    }
  return rec;
}

// Sweep over (dimension, training-set size) at fixed KL, for every loss.
inline RunRecord run_dim_sweep(const SweepSettings& s) {
  RunRecord rec;
  rec.experiment = "dim_sweep";
  rec.config_hash = fnv1a64(settings_fingerprint(s, rec.experiment));
  rec.p_orders = s.p_orders;
  if (s.dim_grid.empty() || s.size_grid.empty() || s.losses.empty() || s.trials < 1)
    throw config_error("run_dim_sweep: empty grid");
  for (int d : s.dim_grid)
    for (long n : s.size_grid)
      for (const LossSpec& loss : s.losses) {
        RunProblem pr{s.dim_sweep_kl, d, s.modes, n};
        const auto c0 = std::chrono::steady_clock::now();
        detail::cell_outcome oc = detail::run_cell(s, rec.experiment, pr, loss);
        CellAggregate agg = detail::aggregate_cell(pr, loss.name(), s.p_orders, oc);
        agg.wall_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
        for (EvalReport& r : oc.reports) rec.reports.push_back(std::move(r));
        rec.aggregates.push_back(std::move(agg));
      }
  return rec;
}

// ---- CSV emission. All floats are %.17g so files round-trip exactly; no
// timing columns, so a fixed seed reproduces the bytes.

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string porder_tag(double p) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", p);
  return buf;
}

}  // namespace detail

inline void write_reports_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  char meta[160];
  std::snprintf(meta, sizeof(meta), "# schema=%s experiment=%s config_hash=%016llx\n",
                kSweepSchema, rec.experiment.c_str(),
                static_cast<unsigned long long>(rec.config_hash));
  out << meta;
  out << "experiment,kl_target,d,M,n_train,loss,trial,seed,stop_reason,epochs_run,"
         "best_val_loss,val_gap,L,K,diag";
  for (double p : rec.p_orders) {
    const std::string t = detail::porder_tag(p);
    out << ",lp" << t << ",lp" << t << "_se,upper" << t << ",lower_moment" << t
        << ",lower_kl" << t;
  }
  out << "\n";
  for (const EvalReport& r : rec.reports) {
    out << r.experiment << "," << detail::g17(r.kl_target) << "," << r.d << "," << r.M
        << "," << r.n_train << "," << r.loss_name << "," << r.trial << "," << r.seed
        << "," << r.stop_reason << "," << r.epochs_run << ","
        << detail::g17(r.best_val_loss) << "," << detail::g17(r.val_gap) << ","
        << detail::g17(r.lipschitz_energy) << "," << detail::g17(r.lipschitz_estimator)
        << "," << detail::g17(r.diag);
    for (std::size_t i = 0; i < r.lp.size(); ++i) {
      out << "," << detail::g17(r.lp[i].value) << "," << detail::g17(r.lp[i].se);
      if (i < r.bounds.size())
        out << "," << detail::g17(r.bounds[i].upper) << ","
            << detail::g17(r.bounds[i].lower_moment) << ","
            << detail::g17(r.bounds[i].lower_kl);
      else
        out << ",nan,nan,nan";
    }
    out << "\n";
  }
  if (!out.good()) throw io_error("write failed: " + path);
}

struct AggregateTable {
  std::string experiment;
  std::uint64_t config_hash = 0;
  std::vector<double> p_orders;
  std::vector<CellAggregate> cells;
};

inline AggregateTable aggregate_table(const RunRecord& rec) {
  return AggregateTable{rec.experiment, rec.config_hash, rec.p_orders, rec.aggregates};
}

inline void write_aggregate_csv(const std::string& path, const AggregateTable& tab) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  char meta[160];
  std::snprintf(meta, sizeof(meta), "# schema=%s experiment=%s config_hash=%016llx\n",
                kAggregateSchema, tab.experiment.c_str(),
                static_cast<unsigned long long>(tab.config_hash));
  out << meta;
  out << "experiment,kl_target,d,n_train,loss,completed,divergent,failed";
  for (double p : tab.p_orders) {
    const std::string t = detail::porder_tag(p);
    out << ",median_lp" << t << ",q25_lp" << t << ",q75_lp" << t;
  }
  out << "\n";
  for (const CellAggregate& c : tab.cells) {
    out << tab.experiment << "," << detail::g17(c.kl_target) << "," << c.d << ","
        << c.n_train << "," << c.loss << "," << c.completed << "," << c.divergent << ","
        << c.failed;
    for (const summary_stats& s : c.lp)
      out << "," << detail::g17(s.med) << "," << detail::g17(s.q25) << ","
          << detail::g17(s.q75);
    out << "\n";
  }
  if (!out.good()) throw io_error("write failed: " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double_field(const std::string& s, const std::string& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw io_error("bad numeric field '" + s + "' in " + path);
  }
}

}  // namespace detail

// Parses a file written by write_aggregate_csv. Round-trips exactly thanks to
// the %.17g serialization, so plots rebuilt from the CSV match the originals.
inline AggregateTable read_aggregate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  AggregateTable tab;
  std::string line;
  if (!std::getline(in, line)) throw io_error("empty file: " + path);
  {
    std::istringstream meta(line);
    std::string tok;
    bool schema_ok = false;
    while (meta >> tok) {
      if (tok.rfind("schema=", 0) == 0)
        schema_ok = tok.substr(7) == kAggregateSchema;
      else if (tok.rfind("experiment=", 0) == 0)
        tab.experiment = tok.substr(11);
      else if (tok.rfind("config_hash=", 0) == 0)
        tab.config_hash = std::stoull(tok.substr(12), nullptr, 16);
    }
    if (!schema_ok) throw io_error("not a " + std::string(kAggregateSchema) + " file: " + path);
  }
  if (!std::getline(in, line)) throw io_error("missing header: " + path);
  const std::vector<std::string> header = detail::split_csv_line(line);
  for (const std::string& h : header)
    if (h.rfind("median_lp", 0) == 0)
      tab.p_orders.push_back(detail::parse_double_field(h.substr(9), path));
  if (header.size() != 8 + 3 * tab.p_orders.size())
    throw io_error("unexpected column count in " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != header.size()) throw io_error("ragged row in " + path);
    CellAggregate c;
    c.kl_target = detail::parse_double_field(f[1], path);
    c.d = static_cast<int>(detail::parse_double_field(f[2], path));
    c.n_train = static_cast<long>(detail::parse_double_field(f[3], path));
    c.loss = f[4];
    c.completed = static_cast<int>(detail::parse_double_field(f[5], path));
    c.divergent = static_cast<int>(detail::parse_double_field(f[6], path));
    c.failed = static_cast<int>(detail::parse_double_field(f[7], path));
    for (std::size_t pi = 0; pi < tab.p_orders.size(); ++pi) {
      summary_stats s;
      s.med = detail::parse_double_field(f[8 + 3 * pi], path);
      s.q25 = detail::parse_double_field(f[9 + 3 * pi], path);
      s.q75 = detail::parse_double_field(f[10 + 3 * pi], path);
      c.lp.push_back(s);
    }
    tab.cells.push_back(std::move(c));
  }
  return tab;
}

// One panel per order p: x = KL, median line per loss with IQR whiskers.
inline std::string kl_sweep_svg(const AggregateTable& tab) {
  std::vector<PlotPanel> panels;
  std::vector<std::string> losses;
  for (const CellAggregate& c : tab.cells)
    if (std::find(losses.begin(), losses.end(), c.loss) == losses.end())
      losses.push_back(c.loss);
  for (std::size_t pi = 0; pi < tab.p_orders.size(); ++pi) {
    PlotPanel panel;
    panel.title = "L" + detail::porder_tag(tab.p_orders[pi]) + " error vs KL";
    panel.xlabel = "KL divergence";
    panel.ylabel = "L" + detail::porder_tag(tab.p_orders[pi]) + " error";
    panel.log_y = true;
    for (const std::string& loss : losses) {
      PlotSeries sr;
      sr.label = loss;
      for (const CellAggregate& c : tab.cells) {
        if (c.loss != loss) continue;
        sr.x.push_back(c.kl_target);
        sr.y.push_back(c.lp[pi].med);
        sr.ylo.push_back(c.lp[pi].q25);
        sr.yhi.push_back(c.lp[pi].q75);
      }
      panel.series.push_back(std::move(sr));
    }
    panels.push_back(std::move(panel));
  }
  return panel_chart_svg(panels);
}

// One panel per order p: x = training-set size (log axis), one line per
// (dimension, loss) pair.
inline std::string dim_sweep_svg(const AggregateTable& tab) {
  std::vector<PlotPanel> panels;
  std::vector<std::pair<int, std::string>> keys;
  for (const CellAggregate& c : tab.cells) {
    const std::pair<int, std::string> k{c.d, c.loss};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (std::size_t pi = 0; pi < tab.p_orders.size(); ++pi) {
    PlotPanel panel;
    panel.title = "L" + detail::porder_tag(tab.p_orders[pi]) + " error vs sample size";
    panel.xlabel = "training samples";
    panel.ylabel = "L" + detail::porder_tag(tab.p_orders[pi]) + " error";
    panel.log_x = true;
    panel.log_y = true;
    for (const auto& k : keys) {
      PlotSeries sr;
      sr.label = "d=" + std::to_string(k.first) + " " + k.second;
      for (const CellAggregate& c : tab.cells) {
        if (c.d != k.first || c.loss != k.second) continue;
        sr.x.push_back(static_cast<double>(c.n_train));
        sr.y.push_back(c.lp[pi].med);
        sr.ylo.push_back(c.lp[pi].q25);
        sr.yhi.push_back(c.lp[pi].q75);
      }
      panel.series.push_back(std::move(sr));
    }
    panels.push_back(std::move(panel));
  }
  return panel_chart_svg(panels);
}

inline std::string sweep_svg(const AggregateTable& tab) {
  if (tab.experiment == "kl_sweep") return kl_sweep_svg(tab);
  if (tab.experiment == "dim_sweep") return dim_sweep_svg(tab);
  throw io_error("no plot layout for experiment '" + tab.experiment + "'");
}

// ---- Nearest-neighbor bound verification harness.

struct NnBoundsSettings {
  std::vector<int> dims{1, 2, 3, 5};
  std::vector<long> upper_Ns{1, 4, 16, 64, 256};
  std::vector<double> kappas{1.0, 2.0};
  int upper_trials = 10000;
  int lower_d = 3;
  double lower_p = 1.0;
  double lower_kl = 0.0;
  int lower_modes = 1;
  std::vector<long> lower_Ns{128, 256, 512, 1024, 2048, 4096, 8192};
  int lower_trials = 2000;
  std::uint64_t seed = 20260822;
};

inline void apply_config(const ConfigFile& cf, NnBoundsSettings& s) {
  {
    std::vector<double> dims, uppers, lowers;
    for (int v : s.dims) dims.push_back(v);
    for (long v : s.upper_Ns) uppers.push_back(static_cast<double>(v));
    for (long v : s.lower_Ns) lowers.push_back(static_cast<double>(v));
    dims = cf.get_doubles("nn.dims", dims);
    uppers = cf.get_doubles("nn.upper_n", uppers);
    lowers = cf.get_doubles("nn.lower_n", lowers);
    s.dims.clear();
    for (double v : dims) s.dims.push_back(static_cast<int>(v));
    s.upper_Ns.clear();
    for (double v : uppers) s.upper_Ns.push_back(static_cast<long>(v));
    s.lower_Ns.clear();
    for (double v : lowers) s.lower_Ns.push_back(static_cast<long>(v));
  }
  s.kappas = cf.get_doubles("nn.kappas", s.kappas);
  s.upper_trials = static_cast<int>(cf.get_long("nn.upper_trials", s.upper_trials));
  s.lower_d = static_cast<int>(cf.get_long("nn.lower_d", s.lower_d));
  s.lower_p = cf.get_double("nn.lower_p", s.lower_p);
  s.lower_kl = cf.get_double("nn.lower_kl", s.lower_kl);
  s.lower_modes = static_cast<int>(cf.get_long("nn.lower_modes", s.lower_modes));
  s.lower_trials = static_cast<int>(cf.get_long("nn.lower_trials", s.lower_trials));
  s.seed = static_cast<std::uint64_t>(cf.get_long("nn.seed", static_cast<long>(s.seed)));
}

struct NnBoundsRecord {
  std::uint64_t config_hash = 0;
  std::vector<NnMomentEstimate> upper;  // cube cells, kappa <= d only
  std::vector<NnMomentEstimate> lower;  // one row per N, increasing
  bool all_upper_ok = false;
  bool lower_ok_at_largest = false;
  bool any_inconclusive = false;
};

inline std::string nn_settings_fingerprint(const NnBoundsSettings& s) {
  std::ostringstream o;
  o.precision(17);
  o << "nn|d:";
  for (int v : s.dims) o << v << ",";
  o << "|N:";
  for (long v : s.upper_Ns) o << v << ",";
  o << "|k:";
  for (double v : s.kappas) o << v << ",";
  o << "|ut:" << s.upper_trials << "|ld:" << s.lower_d << "|lp:" << s.lower_p
    << "|lkl:" << s.lower_kl << "|lM:" << s.lower_modes << "|lN:";
  for (long v : s.lower_Ns) o << v << ",";
  o << "|lt:" << s.lower_trials << "|seed:" << s.seed;
  return o.str();
}

inline NnBoundsRecord run_nn_bounds(const NnBoundsSettings& s) {
  if (s.dims.empty() || s.upper_Ns.empty() || s.kappas.empty() || s.lower_Ns.empty())
    throw config_error("run_nn_bounds: empty grid");
  NnBoundsRecord rec;
  rec.config_hash = fnv1a64(nn_settings_fingerprint(s));
  rec.all_upper_ok = true;
  for (int d : s.dims)
    for (long N : s.upper_Ns)
      for (double kappa : s.kappas) {
        if (kappa > static_cast<double>(d)) continue;  // outside the hypothesis
        char tag[64];
        std::snprintf(tag, sizeof(tag), "up|%d|%ld|%.17g", d, N, kappa);
        rng_stream rng(mix64(s.seed ^ fnv1a64(tag)));
        rec.upper.push_back(nn_moment_upper_check_cube(d, N, kappa, s.upper_trials, rng));
        rec.all_upper_ok = rec.all_upper_ok && rec.upper.back().satisfied;
      }
  const MixtureSpec mspec =
      MixtureSpec::create(s.lower_d, s.lower_modes, s.lower_kl, mix64(s.seed ^ 0x6c6f776572ULL));
  for (long N : s.lower_Ns) {
    char tag[64];
    std::snprintf(tag, sizeof(tag), "lo|%ld", N);
    rng_stream rng(mix64(s.seed ^ fnv1a64(tag)));
    rec.lower.push_back(nn_moment_lower_check(mspec, N, s.lower_p, s.lower_trials, rng));
    rec.any_inconclusive = rec.any_inconclusive || rec.lower.back().inconclusive;
  }
  const NnMomentEstimate& last = rec.lower.back();
  rec.lower_ok_at_largest = last.satisfied && !last.inconclusive;
  return rec;
}

inline void write_nn_csv(const std::string& path, const NnBoundsRecord& rec) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  char meta[128];
  std::snprintf(meta, sizeof(meta), "# schema=%s config_hash=%016llx\n", kNnSchema,
                static_cast<unsigned long long>(rec.config_hash));
  out << meta;
  out << "check,d,N,order,estimate,stderr,bound,status\n";
  auto status = [](const NnMomentEstimate& e) {
    return e.inconclusive ? "inconclusive" : (e.satisfied ? "pass" : "fail");
  };
  for (const NnMomentEstimate& e : rec.upper)
    out << "upper," << e.d << "," << e.N << "," << detail::g17(e.order) << ","
        << detail::g17(e.estimate) << "," << detail::g17(e.se) << ","
        << detail::g17(e.bound) << "," << status(e) << "\n";
  for (const NnMomentEstimate& e : rec.lower)
    out << "lower," << e.d << "," << e.N << "," << detail::g17(e.order) << ","
        << detail::g17(e.estimate) << "," << detail::g17(e.se) << ","
        << detail::g17(e.bound) << "," << status(e) << "\n";
  if (!out.good()) throw io_error("write failed: " + path);
}

// Left panel: upper-bound estimate/bound ratio per cube cell. Right panel:
// the scaled lower-bound moment against its asymptotic constant.
inline std::string nn_bounds_svg(const NnBoundsRecord& rec) {
  std::vector<PlotPanel> panels;
  {
    PlotPanel panel;
    panel.title = "NN moment vs bound (cube)";
    panel.xlabel = "reference points N";
    panel.ylabel = "estimate / bound";
    panel.log_x = true;
    std::vector<std::pair<int, double>> keys;
    for (const NnMomentEstimate& e : rec.upper) {
      const std::pair<int, double> k{e.d, e.order};
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    for (const auto& k : keys) {
      PlotSeries sr;
      sr.label = "d=" + std::to_string(k.first) + " k=" + detail::porder_tag(k.second);
      for (const NnMomentEstimate& e : rec.upper) {
        if (e.d != k.first || e.order != k.second) continue;
        sr.x.push_back(static_cast<double>(e.N));
        sr.y.push_back(e.estimate / e.bound);
      }
      panel.series.push_back(std::move(sr));
    }
    panels.push_back(std::move(panel));
  }
  {
    PlotPanel panel;
    panel.title = "scaled weighted NN moment";
    panel.xlabel = "reference points N";
    panel.ylabel = "N^{1/d}-scaled estimate";
    panel.log_x = true;
    PlotSeries est;
    est.label = "estimate";
    PlotSeries target;
    target.label = "1/e reference";
    for (const NnMomentEstimate& e : rec.lower) {
      est.x.push_back(static_cast<double>(e.N));
      est.y.push_back(e.estimate);
      est.ylo.push_back(e.estimate - e.se);
      est.yhi.push_back(e.estimate + e.se);
      target.x.push_back(static_cast<double>(e.N));
      target.y.push_back(e.bound);
    }
    panel.series.push_back(std::move(est));
    panel.series.push_back(std::move(target));
    panels.push_back(std::move(panel));
  }
  return panel_chart_svg(panels);
}

}  // namespace dre
