// fortune: anomaly detection over hardware-counter traces.
//
// One subcommand per experiment: synth, train, detect, sweep, window-sweep,
// measure-sweep, select, compare. Every command is deterministic under
// --seed and follows the uniform exit contract: 0 ok, 1 usage, 2 data
// error, 3 numeric failure.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fortune/baselines.hpp"
#include "fortune/config.hpp"
#include "fortune/counter_select.hpp"
#include "fortune/detector.hpp"
#include "fortune/errors.hpp"
#include "fortune/eval.hpp"
#include "fortune/kernels.hpp"
#include "fortune/rng.hpp"
#include "fortune/rnn.hpp"
#include "fortune/synth.hpp"
#include "fortune/trace.hpp"
#include "fsio.hpp"

namespace fs = std::filesystem;
using namespace fortune;

namespace {

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CellKind parse_cell(const std::string& s) {
  if (s == "lstm") return CellKind::kLstm;
  if (s == "gru") return CellKind::kGru;
  throw UsageError("unknown cell '" + s + "' (expected lstm or gru)");
}

const char* cell_name(CellKind k) {
  return k == CellKind::kLstm ? "lstm" : "gru";
}

std::vector<fs::path> list_traces(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no .csv traces in " + dir.string());
  return out;
}

std::vector<TraceMatrix> load_corpus(const fs::path& dir, bool trim,
                                     double trim_fraction) {
  std::vector<TraceMatrix> out;
  for (const auto& p : list_traces(dir)) {
    TraceMatrix t = load_trace(p);
    if (trim) t = trim_idle(t, trim_fraction);
    out.push_back(std::move(t));
  }
  return out;
}

void split_by_label(const std::vector<TraceMatrix>& corpus,
                    std::vector<TraceMatrix>& benign,
                    std::vector<TraceMatrix>& attack) {
  for (const auto& t : corpus) {
    if (t.label == Label::kBenign)
      benign.push_back(t);
    else if (t.label == Label::kAttack)
      attack.push_back(t);
    else
      throw DataError("trace " + t.source_id +
                      " has no benign/attack label; cannot evaluate");
  }
}

TrainResult run_training(CellKind cell, const std::vector<TraceMatrix>& corpus,
                         std::size_t window, std::size_t hidden,
                         std::size_t epochs, std::uint64_t seed) {
  const Scaler scaler = fit_scaler(corpus);
  std::vector<TraceMatrix> scaled;
  scaled.reserve(corpus.size());
  for (const auto& t : corpus) scaled.push_back(apply_scaler(t, scaler));
  TrainConfig tc;
  tc.epochs = epochs;
  tc.seed = seed;
  return train_predictor(cell, scaled, scaler, window, hidden, tc);
}

// Flag values win over config-file values, which win over defaults.
struct KvOverride {
  const KvFile* kv = nullptr;

  void size(const CLI::Option* o, const char* key, std::size_t& v) const {
    if (!kv || o->count() > 0 || !kv->has(key)) return;
    const long long x = kv->get_int(key, 0);
    if (x < 0) throw UsageError(std::string(key) + " must be non-negative");
    v = static_cast<std::size_t>(x);
  }
  void u64(const CLI::Option* o, const char* key, std::uint64_t& v) const {
    if (!kv || o->count() > 0 || !kv->has(key)) return;
    v = kv->get_u64(key, v);
  }
  void dbl(const CLI::Option* o, const char* key, double& v) const {
    if (!kv || o->count() > 0 || !kv->has(key)) return;
    v = kv->get_double(key, v);
  }
  void str(const CLI::Option* o, const char* key, std::string& v) const {
    if (!kv || o->count() > 0 || !kv->has(key)) return;
    v = kv->get_string(key, v);
  }
  void flag(const CLI::Option* o, const char* key, bool& v) const {
    if (!kv || o->count() > 0 || !kv->has(key)) return;
    const std::string s = kv->get_string(key, "");
    if (s == "1" || s == "true" || s == "yes" || s == "on")
      v = true;
    else if (s == "0" || s == "false" || s == "no" || s == "off")
      v = false;
    else
      throw UsageError(std::string(key) + " must be a boolean, got '" + s +
                       "'");
  }
};

KvFile load_kv(const std::string& path) {
  if (path.empty()) return KvFile();
  return KvFile::parse_file(path);
}

// ---------------------------------------------------------------- synth --

struct SynthArgs {
  std::vector<std::string> specs;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void run_synth(const SynthArgs& a) {
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec)
    throw DataError("cannot create output directory " + a.out + ": " +
                    ec.message());
  for (const auto& spec : a.specs) {
    if (!fs::exists(spec)) throw DataError("spec file not found: " + spec);
    SynthJob job = parse_synth_spec(spec);
    if (a.seed_set) {
      job.workload.seed = a.seed;
      for (std::size_t i = 0; i < job.workload.components.size(); ++i)
        job.workload.components[i].seed = Rng::derive(a.seed, 100 + i);
      job.attack_background.seed = Rng::derive(a.seed, 1);
      if (job.attack) job.attack->seed = Rng::derive(a.seed, 2);
    }
    const TraceMatrix t = materialize(job);
    const fs::path dst =
        fs::path(a.out) / (fs::path(spec).stem().string() + ".csv");
    save_trace(t, dst);
    std::cout << "wrote " << dst.string() << " (" << t.channels() << "x"
              << t.samples() << ", "
              << (t.label == Label::kAttack ? "attack" : "benign") << ")\n";
  }
}

// ---------------------------------------------------------------- train --

struct TrainArgs {
  std::string trace_dir, model, log_out, cell = "lstm", config;
  std::size_t window = 100, hidden = 128, epochs = 10;
  std::uint64_t seed = 42;
  bool trim = false;
  double trim_fraction = 0.01;
  const CLI::Option *o_window = nullptr, *o_hidden = nullptr,
                    *o_epochs = nullptr, *o_seed = nullptr, *o_cell = nullptr,
                    *o_trim = nullptr;
};

void run_train(TrainArgs& a) {
  const KvFile kv = load_kv(a.config);
  const KvOverride ov{a.config.empty() ? nullptr : &kv};
  ov.size(a.o_window, "window", a.window);
  ov.size(a.o_hidden, "hidden", a.hidden);
  ov.size(a.o_epochs, "epochs", a.epochs);
  ov.u64(a.o_seed, "seed", a.seed);
  ov.str(a.o_cell, "cell", a.cell);
  ov.flag(a.o_trim, "trim-idle", a.trim);

  const CellKind cell = parse_cell(a.cell);
  const auto corpus = load_corpus(a.trace_dir, a.trim, a.trim_fraction);
  const TrainResult r =
      run_training(cell, corpus, a.window, a.hidden, a.epochs, a.seed);
  save_model(r.model, a.model);

  std::ostringstream os;
  os << "# fortune-train cell=" << a.cell << " W=" << a.window
     << " h=" << a.hidden << " epochs=" << a.epochs << " seed=" << a.seed
     << "\n";
  os << "epoch,val_error\n";
  for (std::size_t e = 0; e < r.epoch_val_error.size(); ++e)
    os << (e + 1) << ',' << fmt_g(r.epoch_val_error[e]) << '\n';
  const std::string log_path =
      a.log_out.empty() ? a.model + ".log.csv" : a.log_out;
  atomic_write_file(log_path, os.str());

  std::cout << "trained " << a.cell << " model: W=" << a.window
            << " h=" << a.hidden << " epochs_run=" << r.model.epochs_run
            << " final_val_error=" << fmt_g(r.model.final_val_error) << "\n";
  std::cout << "model: " << a.model << "\nepoch log: " << log_path << "\n";
}

// --------------------------------------------------------------- detect --

struct DetectArgs {
  std::string model, trace, out, config;
  double tau = 0.0;
  std::size_t decision = 50;
  bool trim = false;
  double trim_fraction = 0.01;
  const CLI::Option *o_tau = nullptr, *o_decision = nullptr,
                    *o_trim = nullptr;
};

void run_detect(DetectArgs& a) {
  const KvFile kv = load_kv(a.config);
  const KvOverride ov{a.config.empty() ? nullptr : &kv};
  ov.dbl(a.o_tau, "tau", a.tau);
  ov.size(a.o_decision, "decision", a.decision);
  ov.flag(a.o_trim, "trim-idle", a.trim);
  if (a.o_tau->count() == 0 && !(a.config.size() && kv.has("tau")))
    throw UsageError("detect needs --tau (or tau in the config file)");

  const PredictorModel model = load_model(a.model);
  TraceMatrix trace = load_trace(a.trace);
  if (a.trim) trace = trim_idle(trace, a.trim_fraction);
  DetectorConfig dc;
  dc.tau = a.tau;
  dc.decision = a.decision;
  dc.validate();

  std::ostringstream os;
  os << "# fortune-detect tau=" << fmt_g(a.tau) << " D=" << a.decision
     << " W=" << model.window << "\n";

  if (trace.samples() < model.window + 1) {
    os << "# warning: trace has " << trace.samples()
       << " samples, need at least W+1=" << (model.window + 1)
       << "; no predictions\n";
    os << "t,error,flag\n";
    std::cout << "warning: trace shorter than W+1; nothing to score\n";
    if (!a.out.empty())
      atomic_write_file(a.out, os.str());
    else
      std::cout << os.str();
    return;
  }

  const ErrorStream es = error_stream(model, trace);
  const FlagResult fr = flag_stream(es, dc);
  if (fr.window_exceeds_stream)
    os << "# warning: decision window D=" << a.decision << " exceeds the "
       << es.errors.size() << "-step prediction stream; no flags possible\n";
  os << "t,error,flag\n";
  for (std::size_t i = 0; i < es.errors.size(); ++i) {
    const int flag = fr.flags.empty() ? 0 : static_cast<int>(fr.flags[i]);
    os << (model.window + i) << ',' << fmt_g(es.errors[i]) << ',' << flag
       << '\n';
  }
  if (!a.out.empty())
    atomic_write_file(a.out, os.str());
  else
    std::cout << os.str();

  if (fr.window_exceeds_stream)
    std::cout << "warning: decision window exceeds prediction stream\n";
  const auto fa = first_alarm(fr);
  if (fa) {
    std::cout << "first_alarm_t=" << (model.window + *fa)
              << " first_alarm_latency_ms="
              << fmt_g(alarm_latency_ms(*fa, es.sample_period_ms))
              << " alarms=" << fr.alarms.size() << "\n";
  } else {
    std::cout << "first_alarm=none alarms=0\n";
  }
}

// ---------------------------------------------------------------- sweep --

struct SweepArgs {
  std::string model, trace_dir, out, tau_grid, d_grid = "10:100:10", config;
  bool trim = false;
  double trim_fraction = 0.01;
  const CLI::Option *o_tau_grid = nullptr, *o_d_grid = nullptr,
                    *o_trim = nullptr;
};

void run_sweep(SweepArgs& a) {
  const KvFile kv = load_kv(a.config);
  const KvOverride ov{a.config.empty() ? nullptr : &kv};
  ov.str(a.o_tau_grid, "tau-grid", a.tau_grid);
  ov.str(a.o_d_grid, "d-grid", a.d_grid);
  ov.flag(a.o_trim, "trim-idle", a.trim);

  const PredictorModel model = load_model(a.model);
  const auto corpus = load_corpus(a.trace_dir, a.trim, a.trim_fraction);
  std::vector<TraceMatrix> benign, attack;
  split_by_label(corpus, benign, attack);
  if (benign.empty() || attack.empty())
    throw DataError("sweep corpus needs both benign and attack traces");

  std::vector<ErrorStream> bstreams, astreams;
  for (const auto& t : benign) bstreams.push_back(error_stream(model, t));
  for (const auto& t : attack) astreams.push_back(error_stream(model, t));

  const std::vector<std::size_t> d_grid = parse_step_grid(a.d_grid);
  for (std::size_t d : d_grid)
    if (d == 0) throw UsageError("decision grid values must be positive");

  std::vector<double> tau_grid;
  if (!a.tau_grid.empty()) {
    tau_grid = parse_log_grid(a.tau_grid);
  } else {
    // No grid given: span the observed per-trace scores so the sweep
    // always brackets the equal-error point.
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto* streams : {&bstreams, &astreams}) {
      for (const auto& s : *streams) {
        for (std::size_t d : d_grid) {
          const double v = flag_score(s.errors, d);
          if (std::isfinite(v) && v > 0.0) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
        }
      }
    }
    if (!std::isfinite(lo) || hi <= 0.0)
      throw DataError("no positive detection scores; give --tau-grid");
    std::ostringstream g;
    g << fmt_g(lo * 0.5) << ':' << fmt_g(hi * 2.0) << ":25";
    a.tau_grid = g.str();
    tau_grid = parse_log_grid(a.tau_grid);
  }

  const SweepResult sr = sweep(bstreams, astreams, tau_grid, d_grid);

  std::vector<double> bscore, ascore;
  for (const auto& s : bstreams)
    bscore.push_back(flag_score(s.errors, sr.chosen.decision));
  for (const auto& s : astreams)
    ascore.push_back(flag_score(s.errors, sr.chosen.decision));
  const RocCurve rc = roc(bscore, ascore);

  ReportBundle bundle;
  bundle.sweep = sr;
  bundle.rocs.emplace_back(cell_name(model.kind), rc);
  bundle.seed = model.seed;
  bundle.config_echo = {
      {"command", "sweep"},
      {"model", a.model},
      {"trace-dir", a.trace_dir},
      {"cell", cell_name(model.kind)},
      {"window", std::to_string(model.window)},
      {"hidden", std::to_string(model.hidden)},
      {"tau-grid", a.tau_grid},
      {"d-grid", a.d_grid},
      {"benign-traces", std::to_string(benign.size())},
      {"attack-traces", std::to_string(attack.size())},
  };
  render_report(bundle, a.out);

  std::cout << "chosen tau=" << fmt_g(sr.chosen.tau)
            << " D=" << sr.chosen.decision << " fscore="
            << fmt_g(sr.chosen.fscore) << " fpr=" << fmt_g(sr.chosen.fpr)
            << " fnr=" << fmt_g(sr.chosen.fnr) << " auc=" << fmt_g(rc.auc)
            << "\n";
  std::cout << "report: " << a.out << "\n";
}

// --------------------------------------------------------- window-sweep --

struct WindowSweepArgs {
  std::string trace_dir, out, w_grid = "25:300:25", cell = "lstm", config;
  std::size_t hidden = 128, epochs = 10;
  std::uint64_t seed = 42;
  bool trim = false;
  double trim_fraction = 0.01;
  const CLI::Option *o_w_grid = nullptr, *o_hidden = nullptr,
                    *o_epochs = nullptr, *o_seed = nullptr, *o_cell = nullptr,
                    *o_trim = nullptr;
};

void run_window_sweep(WindowSweepArgs& a) {
  const KvFile kv = load_kv(a.config);
  const KvOverride ov{a.config.empty() ? nullptr : &kv};
  ov.str(a.o_w_grid, "w-grid", a.w_grid);
  ov.size(a.o_hidden, "hidden", a.hidden);
  ov.size(a.o_epochs, "epochs", a.epochs);
  ov.u64(a.o_seed, "seed", a.seed);
  ov.str(a.o_cell, "cell", a.cell);
  ov.flag(a.o_trim, "trim-idle", a.trim);

  const CellKind cell = parse_cell(a.cell);
  const auto corpus = load_corpus(a.trace_dir, a.trim, a.trim_fraction);
  const std::vector<std::size_t> w_grid = parse_step_grid(a.w_grid);
  for (std::size_t w : w_grid)
    if (w == 0) throw UsageError("window grid values must be positive");

  std::ostringstream os;
  os << "# fortune-window-sweep cell=" << a.cell << " h=" << a.hidden
     << " epochs=" << a.epochs << " seed=" << a.seed << "\n";
  os << "W,final_val_error\n";
  std::size_t best_w = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t w : w_grid) {
    const TrainResult r = run_training(cell, corpus, w, a.hidden, a.epochs,
                                       Rng::derive(a.seed, w));
    os << w << ',' << fmt_g(r.model.final_val_error) << '\n';
    if (r.model.final_val_error < best_err) {
      best_err = r.model.final_val_error;
      best_w = w;
    }
  }
  atomic_write_file(a.out, os.str());
  std::cout << "best W=" << best_w << " final_val_error=" << fmt_g(best_err)
            << "\n";
  std::cout << "wrote " << a.out << "\n";
}

// -------------------------------------------------------- measure-sweep --

struct MeasureSweepArgs {
  std::string trace_dir, out, count_grid, cell = "lstm", config;
  std::size_t window = 100, hidden = 128, epochs = 10;
  std::uint64_t seed = 42;
  bool trim = false;
  double trim_fraction = 0.01;
  const CLI::Option *o_count_grid = nullptr, *o_window = nullptr,
                    *o_hidden = nullptr, *o_epochs = nullptr,
                    *o_seed = nullptr, *o_cell = nullptr, *o_trim = nullptr;
};

void run_measure_sweep(MeasureSweepArgs& a) {
  const KvFile kv = load_kv(a.config);
  const KvOverride ov{a.config.empty() ? nullptr : &kv};
  ov.str(a.o_count_grid, "count-grid", a.count_grid);
  ov.size(a.o_window, "window", a.window);
  ov.size(a.o_hidden, "hidden", a.hidden);
  ov.size(a.o_epochs, "epochs", a.epochs);
  ov.u64(a.o_seed, "seed", a.seed);
  ov.str(a.o_cell, "cell", a.cell);
  ov.flag(a.o_trim, "trim-idle", a.trim);

  const CellKind cell = parse_cell(a.cell);
  const auto corpus = load_corpus(a.trace_dir, a.trim, a.trim_fraction);
  const std::size_t m = corpus.front().channels();

  std::vector<std::size_t> counts;
  if (a.count_grid.empty()) {
    for (std::size_t k = 1; k <= m; ++k) counts.push_back(k);
  } else {
    counts = parse_step_grid(a.count_grid);
  }
  for (std::size_t k : counts)
    if (k == 0 || k > m)
      throw UsageError("measurement count " + std::to_string(k) +
                       " outside [1, " + std::to_string(m) + "]");

  std::ostringstream os;
  os << "# fortune-measure-sweep cell=" << a.cell << " W=" << a.window
     << " h=" << a.hidden << " epochs=" << a.epochs << " seed=" << a.seed
     << "\n";
  os << "count,final_val_error\n";
  for (std::size_t k : counts) {
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c < k; ++c) idx.push_back(c);
    std::vector<TraceMatrix> proj;
    proj.reserve(corpus.size());
    for (const auto& t : corpus) proj.push_back(select_channels(t, idx));
    const TrainResult r = run_training(cell, proj, a.window, a.hidden,
                                       a.epochs, Rng::derive(a.seed, 3000 + k));
    os << k << ',' << fmt_g(r.model.final_val_error) << '\n';
  }
  atomic_write_file(a.out, os.str());
  std::cout << "wrote " << a.out << "\n";
}

// --------------------------------------------------------------- select --

struct SelectArgs {
  std::string trace_dir, attack_dir, out, config;
  std::size_t top = 3, subset_size = 3, window = 100, hidden = 32, epochs = 4,
              decision = 10;
  std::uint64_t seed = 1;
  bool trim = false;
  double trim_fraction = 0.01;
  const CLI::Option *o_top = nullptr, *o_subset = nullptr,
                    *o_window = nullptr, *o_hidden = nullptr,
                    *o_epochs = nullptr, *o_decision = nullptr,
                    *o_seed = nullptr, *o_trim = nullptr;
};

void run_select(SelectArgs& a) {
  const KvFile kv = load_kv(a.config);
  const KvOverride ov{a.config.empty() ? nullptr : &kv};
  ov.size(a.o_top, "top", a.top);
  ov.size(a.o_subset, "subset-size", a.subset_size);
  ov.size(a.o_window, "window", a.window);
  ov.size(a.o_hidden, "hidden", a.hidden);
  ov.size(a.o_epochs, "epochs", a.epochs);
  ov.size(a.o_decision, "decision", a.decision);
  ov.u64(a.o_seed, "seed", a.seed);
  ov.flag(a.o_trim, "trim-idle", a.trim);

  const auto benign = load_corpus(a.trace_dir, a.trim, a.trim_fraction);
  const auto attack = load_corpus(a.attack_dir, a.trim, a.trim_fraction);

  SelectConfig cfg;
  cfg.subset_size = a.subset_size;
  cfg.window = a.window;
  cfg.hidden = a.hidden;
  cfg.epochs = a.epochs;
  cfg.decision = a.decision;
  cfg.seed = a.seed;
  const auto scores = evaluate_channels(benign, attack, cfg);

  std::ostringstream os;
  os << "# fortune-select subset_size=" << a.subset_size << " W=" << a.window
     << " h=" << a.hidden << " epochs=" << a.epochs << " D=" << a.decision
     << " seed=" << a.seed << "\n";
  os << "channel,fscore\n";
  for (const auto& s : scores) os << s.channel << ',' << fmt_g(s.fscore) << '\n';
  atomic_write_file(a.out, os.str());

  const auto top = select_top(scores, a.top);
  std::cout << "top-" << a.top << ":";
  for (const auto& name : top) std::cout << ' ' << name;
  std::cout << "\nwrote " << a.out << "\n";
}

// -------------------------------------------------------------- compare --

struct CompareArgs {
  std::string model, trace_dir, out, config;
  double tau = 0.0;
  std::size_t decision = 50;
  bool trim = false;
  double trim_fraction = 0.01;
  const CLI::Option *o_tau = nullptr, *o_decision = nullptr,
                    *o_trim = nullptr;
};

TechniqueResult make_row(const std::string& name, std::uint64_t tp,
                         std::uint64_t fp, std::uint64_t fn,
                         std::uint64_t benign_n, std::uint64_t attack_n) {
  TechniqueResult r;
  r.name = name;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.fscore = (tp + fp + fn == 0) ? 0.0 : f_score(tp, fp, fn);
  r.fpr = benign_n ? static_cast<double>(fp) / static_cast<double>(benign_n)
                   : 0.0;
  r.fnr = attack_n ? static_cast<double>(fn) / static_cast<double>(attack_n)
                   : 0.0;
  return r;
}

// Per-trace decisions from a boolean predicate over each corpus side.
template <typename Pred>
TechniqueResult score_technique(const std::string& name,
                                const std::vector<TraceMatrix>& benign,
                                const std::vector<TraceMatrix>& attack,
                                Pred flagged) {
  std::uint64_t tp = 0, fp = 0;
  for (const auto& t : benign)
    if (flagged(t)) ++fp;
  for (const auto& t : attack)
    if (flagged(t)) ++tp;
  return make_row(name, tp, fp, attack.size() - tp, benign.size(),
                  attack.size());
}

std::size_t channel_by_name_or_index(const TraceMatrix& sample,
                                     const std::string& value,
                                     const char* key) {
  for (std::size_t c = 0; c < sample.channel_names.size(); ++c)
    if (sample.channel_names[c] == value) return c;
  try {
    const long long idx = parse_int_value(key, value);
    if (idx >= 0 && static_cast<std::size_t>(idx) < sample.channels())
      return static_cast<std::size_t>(idx);
  } catch (const UsageError&) {
  }
  throw UsageError(std::string(key) + "='" + value +
                   "' names no channel and is not a valid index");
}

void run_compare(CompareArgs& a) {
  const KvFile kv = load_kv(a.config);
  const KvOverride ov{a.config.empty() ? nullptr : &kv};
  ov.dbl(a.o_tau, "tau", a.tau);
  ov.size(a.o_decision, "decision", a.decision);
  ov.flag(a.o_trim, "trim-idle", a.trim);
  if (a.decision == 0) throw UsageError("decision window must be at least 1");

  const PredictorModel model = load_model(a.model);
  const auto corpus = load_corpus(a.trace_dir, a.trim, a.trim_fraction);
  std::vector<TraceMatrix> benign, attack;
  split_by_label(corpus, benign, attack);
  if (benign.empty() || attack.empty())
    throw DataError("compare corpus needs both benign and attack traces");

  ComparisonTable table;

  // RNN detector: per-trace flag score at D against tau (best-F tau when
  // not given).
  std::vector<double> bscore, ascore;
  for (const auto& t : benign)
    bscore.push_back(flag_score(error_stream(model, t).errors, a.decision));
  for (const auto& t : attack)
    ascore.push_back(flag_score(error_stream(model, t).errors, a.decision));
  double tau = a.tau;
  const bool tau_given =
      a.o_tau->count() > 0 || (!a.config.empty() && kv.has("tau"));
  if (!tau_given) tau = best_threshold_fscore(bscore, ascore).threshold;
  {
    std::uint64_t tp = 0, fp = 0;
    for (double s : ascore)
      if (s >= tau) ++tp;
    for (double s : bscore)
      if (s >= tau) ++fp;
    table.rows.push_back(make_row("rnn", tp, fp, ascore.size() - tp,
                                  benign.size(), attack.size()));
  }

  // CUSUM change-point baseline.
  CpdConfig cpd;
  if (kv.has("cpd.channel"))
    cpd.channel = channel_by_name_or_index(
        corpus.front(), kv.get_string("cpd.channel", "0"), "cpd.channel");
  cpd.mu_a = kv.get_double("cpd.mu-a", cpd.mu_a);
  cpd.beta = kv.get_double("cpd.beta", cpd.beta);
  cpd.validate();
  table.rows.push_back(score_technique("cpd", benign, attack,
                                       [&](const TraceMatrix& t) {
                                         const CpdResult r = cpd_detect(t, cpd);
                                         return !r.change_points.empty();
                                       }));

  // DTW signature matcher, only when a reference signature is configured.
  if (kv.has("dtw.reference")) {
    DtwConfig dtw;
    for (const auto& tok : split_list(kv.get_string("dtw.reference", "")))
      dtw.reference.push_back(parse_double_value("dtw.reference", tok));
    if (kv.has("dtw.signature-channel"))
      dtw.signature_channel = channel_by_name_or_index(
          corpus.front(), kv.get_string("dtw.signature-channel", "0"),
          "dtw.signature-channel");
    dtw.arm_threshold = kv.get_double("dtw.arm-threshold", dtw.arm_threshold);
    dtw.jump_factor = kv.get_double("dtw.jump-factor", dtw.jump_factor);
    {
      const long long w = kv.get_int("dtw.watch-window",
                                     static_cast<long long>(dtw.watch_window));
      if (w <= 0) throw UsageError("dtw.watch-window must be positive");
      dtw.watch_window = static_cast<std::size_t>(w);
    }
    if (kv.has("dtw.watch-channels")) {
      for (const auto& tok : split_list(kv.get_string("dtw.watch-channels", "")))
        dtw.watch_channels.push_back(
            channel_by_name_or_index(corpus.front(), tok, "dtw.watch-channels"));
    } else {
      for (std::size_t c = 0; c < corpus.front().channels(); ++c)
        if (c != dtw.signature_channel) dtw.watch_channels.push_back(c);
    }
    dtw.validate();
    table.rows.push_back(score_technique("dtw", benign, attack,
                                         [&](const TraceMatrix& t) {
                                           const DtwDetectResult r =
                                               dtw_detect(t, dtw);
                                           return std::any_of(
                                               r.flags.begin(), r.flags.end(),
                                               [](std::uint8_t f) {
                                                 return f != 0;
                                               });
                                         }));
  }

  // Gaussian-pdf baseline: density fitted on the attack traces; a trace is
  // attack-like when some sample's density reaches epsilon.
  {
    const PdfModel pdf = fit_pdf(attack);
    auto max_density = [&](const TraceMatrix& t) {
      double best = 0.0;
      for (std::size_t s = 0; s < t.samples(); ++s)
        best = std::max(best, pdf_density(pdf, t.sample(s)));
      return best;
    };
    double eps;
    if (kv.has("pdf.epsilon")) {
      eps = kv.get_double("pdf.epsilon", 0.0);
    } else {
      std::vector<double> bd, ad;
      for (const auto& t : benign) bd.push_back(max_density(t));
      for (const auto& t : attack) ad.push_back(max_density(t));
      eps = best_threshold_fscore(bd, ad).threshold;
    }
    table.rows.push_back(score_technique("pdf", benign, attack,
                                         [&](const TraceMatrix& t) {
                                           return max_density(t) >= eps;
                                         }));
  }

  ReportBundle bundle;
  bundle.comparison = table;
  bundle.seed = model.seed;
  bundle.config_echo = {
      {"command", "compare"},
      {"model", a.model},
      {"trace-dir", a.trace_dir},
      {"cell", cell_name(model.kind)},
      {"tau", fmt_g(tau)},
      {"decision", std::to_string(a.decision)},
      {"benign-traces", std::to_string(benign.size())},
      {"attack-traces", std::to_string(attack.size())},
  };
  for (const auto& [k, v] : kv.entries())
    if (k.rfind("cpd.", 0) == 0 || k.rfind("dtw.", 0) == 0 ||
        k.rfind("pdf.", 0) == 0)
      bundle.config_echo.emplace_back(k, v);
  render_report(bundle, a.out);

  for (const auto& r : table.rows)
    std::cout << r.name << " fscore=" << fmt_g(r.fscore)
              << " fpr=" << fmt_g(r.fpr) << " fnr=" << fmt_g(r.fnr) << "\n";
  std::cout << "report: " << a.out << "\n";
}

void add_trim_flags(CLI::App* cmd, bool& trim, double& fraction,
                    const CLI::Option** o_trim) {
  *o_trim = cmd->add_flag("--trim-idle", trim,
                          "drop leading/trailing idle samples from traces");
  cmd->add_option("--trim-fraction", fraction,
                  "idle cutoff as a fraction of each channel's max")
      ->check(CLI::Range(0.0, 1.0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fortune: next-step prediction anomaly detection over "
      "hardware-counter traces"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* c_synth = app.add_subcommand(
      "synth", "materialize synthetic traces from spec files");
  c_synth->add_option("--spec", synth_args.specs, "synthesis spec file(s)")
      ->required();
  c_synth->add_option("--out", synth_args.out, "output directory")->required();
  auto* synth_seed =
      c_synth->add_option("--seed", synth_args.seed, "override spec seeds");
  c_synth->callback([&] {
    synth_args.seed_set = synth_seed->count() > 0;
    run_synth(synth_args);
  });

  TrainArgs train_args;
  auto* c_train = app.add_subcommand(
      "train", "train a next-step predictor on benign traces");
  c_train->add_option("--trace-dir", train_args.trace_dir,
                      "directory of training traces")
      ->required();
  c_train->add_option("--model", train_args.model, "output model file")
      ->required();
  c_train->add_option("--out", train_args.log_out,
                      "epoch log CSV (default: <model>.log.csv)");
  train_args.o_window =
      c_train->add_option("--window", train_args.window, "window size W");
  train_args.o_hidden =
      c_train->add_option("--hidden", train_args.hidden, "hidden units");
  train_args.o_epochs =
      c_train->add_option("--epochs", train_args.epochs, "training epochs");
  train_args.o_seed =
      c_train->add_option("--seed", train_args.seed, "training seed");
  train_args.o_cell =
      c_train->add_option("--cell", train_args.cell, "cell kind: lstm|gru");
  c_train->add_option("--config", train_args.config, "key=value config file");
  add_trim_flags(c_train, train_args.trim, train_args.trim_fraction,
                 &train_args.o_trim);
  c_train->callback([&] { run_train(train_args); });

  DetectArgs detect_args;
  auto* c_detect = app.add_subcommand(
      "detect", "run the detector over one trace with a trained model");
  c_detect->add_option("--model", detect_args.model, "model file")->required();
  c_detect->add_option("--trace", detect_args.trace, "trace CSV")->required();
  c_detect->add_option("--out", detect_args.out,
                       "flags CSV (default: stdout)");
  detect_args.o_tau =
      c_detect->add_option("--tau", detect_args.tau, "error threshold tau");
  detect_args.o_decision = c_detect->add_option(
      "--decision", detect_args.decision, "decision window D");
  c_detect->add_option("--config", detect_args.config,
                       "key=value config file");
  add_trim_flags(c_detect, detect_args.trim, detect_args.trim_fraction,
                 &detect_args.o_trim);
  c_detect->callback([&] { run_detect(detect_args); });

  SweepArgs sweep_args;
  auto* c_sweep = app.add_subcommand(
      "sweep", "sweep tau/D over a labeled corpus and report");
  c_sweep->add_option("--model", sweep_args.model, "model file")->required();
  c_sweep->add_option("--trace-dir", sweep_args.trace_dir,
                      "labeled benign+attack corpus")
      ->required();
  c_sweep->add_option("--out", sweep_args.out, "report directory")->required();
  sweep_args.o_tau_grid = c_sweep->add_option(
      "--tau-grid", sweep_args.tau_grid,
      "lo:hi:n logarithmic tau grid (default: spans observed scores)");
  sweep_args.o_d_grid = c_sweep->add_option("--d-grid", sweep_args.d_grid,
                                            "lo:hi:step decision grid");
  c_sweep->add_option("--config", sweep_args.config, "key=value config file");
  add_trim_flags(c_sweep, sweep_args.trim, sweep_args.trim_fraction,
                 &sweep_args.o_trim);
  c_sweep->callback([&] { run_sweep(sweep_args); });

  WindowSweepArgs wsweep_args;
  auto* c_wsweep = app.add_subcommand(
      "window-sweep", "train across window sizes, report validation error");
  c_wsweep->add_option("--trace-dir", wsweep_args.trace_dir,
                       "directory of training traces")
      ->required();
  c_wsweep->add_option("--out", wsweep_args.out, "output CSV")->required();
  wsweep_args.o_w_grid = c_wsweep->add_option(
      "--w-grid", wsweep_args.w_grid, "lo:hi:step window grid");
  wsweep_args.o_hidden =
      c_wsweep->add_option("--hidden", wsweep_args.hidden, "hidden units");
  wsweep_args.o_epochs =
      c_wsweep->add_option("--epochs", wsweep_args.epochs, "training epochs");
  wsweep_args.o_seed =
      c_wsweep->add_option("--seed", wsweep_args.seed, "training seed");
  wsweep_args.o_cell =
      c_wsweep->add_option("--cell", wsweep_args.cell, "cell kind: lstm|gru");
  c_wsweep->add_option("--config", wsweep_args.config,
                       "key=value config file");
  add_trim_flags(c_wsweep, wsweep_args.trim, wsweep_args.trim_fraction,
                 &wsweep_args.o_trim);
  c_wsweep->callback([&] { run_window_sweep(wsweep_args); });

  MeasureSweepArgs msweep_args;
  auto* c_msweep = app.add_subcommand(
      "measure-sweep",
      "train across measurement counts, report validation error");
  c_msweep->add_option("--trace-dir", msweep_args.trace_dir,
                       "directory of training traces")
      ->required();
  c_msweep->add_option("--out", msweep_args.out, "output CSV")->required();
  msweep_args.o_count_grid = c_msweep->add_option(
      "--count-grid", msweep_args.count_grid,
      "lo:hi:step measurement counts (default: 1..channels)");
  msweep_args.o_window =
      c_msweep->add_option("--window", msweep_args.window, "window size W");
  msweep_args.o_hidden =
      c_msweep->add_option("--hidden", msweep_args.hidden, "hidden units");
  msweep_args.o_epochs =
      c_msweep->add_option("--epochs", msweep_args.epochs, "training epochs");
  msweep_args.o_seed =
      c_msweep->add_option("--seed", msweep_args.seed, "training seed");
  msweep_args.o_cell =
      c_msweep->add_option("--cell", msweep_args.cell, "cell kind: lstm|gru");
  c_msweep->add_option("--config", msweep_args.config,
                       "key=value config file");
  add_trim_flags(c_msweep, msweep_args.trim, msweep_args.trim_fraction,
                 &msweep_args.o_trim);
  c_msweep->callback([&] { run_measure_sweep(msweep_args); });

  SelectArgs select_args;
  auto* c_select = app.add_subcommand(
      "select", "rank counter channels by detection F-score");
  c_select->add_option("--trace-dir", select_args.trace_dir,
                       "benign trace directory")
      ->required();
  c_select->add_option("--attack-dir", select_args.attack_dir,
                       "attack trace directory")
      ->required();
  c_select->add_option("--out", select_args.out, "ranking CSV")->required();
  select_args.o_top =
      c_select->add_option("--top", select_args.top, "channels to select");
  select_args.o_subset = c_select->add_option(
      "--subset-size", select_args.subset_size, "channels trained together");
  select_args.o_window =
      c_select->add_option("--window", select_args.window, "window size W");
  select_args.o_hidden =
      c_select->add_option("--hidden", select_args.hidden, "hidden units");
  select_args.o_epochs =
      c_select->add_option("--epochs", select_args.epochs, "training epochs");
  select_args.o_decision = c_select->add_option(
      "--decision", select_args.decision, "decision window D for scoring");
  select_args.o_seed =
      c_select->add_option("--seed", select_args.seed, "training seed");
  c_select->add_option("--config", select_args.config,
                       "key=value config file");
  add_trim_flags(c_select, select_args.trim, select_args.trim_fraction,
                 &select_args.o_trim);
  c_select->callback([&] { run_select(select_args); });

  CompareArgs compare_args;
  auto* c_compare = app.add_subcommand(
      "compare", "compare the detector against baseline techniques");
  c_compare->add_option("--model", compare_args.model, "model file")
      ->required();
  c_compare->add_option("--trace-dir", compare_args.trace_dir,
                        "labeled benign+attack corpus")
      ->required();
  c_compare->add_option("--out", compare_args.out, "report directory")
      ->required();
  compare_args.o_tau = c_compare->add_option(
      "--tau", compare_args.tau, "RNN threshold (default: best-F)");
  compare_args.o_decision = c_compare->add_option(
      "--decision", compare_args.decision, "RNN decision window D");
  c_compare->add_option("--config", compare_args.config,
                        "key=value config file with baseline settings");
  add_trim_flags(c_compare, compare_args.trim, compare_args.trim_fraction,
                 &compare_args.o_trim);
  c_compare->callback([&] { run_compare(compare_args); });

  try {
    // Resolve the kernel backend up front so a bad FORTUNE_KERNELS value is
    // a usage error for every subcommand, not only the ones that compute.
    kernels::active_backend();
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
