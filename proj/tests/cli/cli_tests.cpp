// End-to-end tests for the fortune CLI. Run with the binary path as argv[1];
// exercises each subcommand against a small synthesized corpus and checks
// the exit-code contract (0 ok, 1 usage, 2 data, 3 numeric), output files
// and determinism. Prints one ok/FAIL line per check group.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

fs::path g_bin;
fs::path g_work;
int g_fail = 0;
int g_pass = 0;

void check(bool ok, const std::string& name, const std::string& detail = "") {
  if (ok) {
    ++g_pass;
    std::cout << "ok   " << name << "\n";
  } else {
    ++g_fail;
    std::cout << "FAIL " << name
              << (detail.empty() ? "" : " (" + detail + ")") << "\n";
  }
}

struct RunResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& body) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << body;
}

RunResult run_env(const std::string& env_assign, const std::string& args) {
  const fs::path o = g_work / "run-stdout.txt";
  const fs::path e = g_work / "run-stderr.txt";
  const std::string cmd = (env_assign.empty() ? "" : env_assign + " ") + "\"" +
                          g_bin.string() + "\" " + args + " > " + o.string() +
                          " 2> " + e.string();
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(o);
  r.err = slurp(e);
  return r;
}

RunResult run(const std::string& args) { return run_env("", args); }

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

// Data rows of a CSV: lines that are neither '#' comments nor the header.
std::size_t data_rows(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t rows = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    ++rows;
  }
  return rows;
}

std::string benign_spec(std::uint64_t seed) {
  std::ostringstream os;
  os << "type = benign\n"
     << "seed = " << seed << "\n"
     << "workload.kind = periodic-burst\n"
     << "workload.channels = ICACHE_MISS, LLC_MISS\n"
     << "workload.duration = 260\n"
     << "workload.base = 100, 80\n"
     << "workload.amplitude = 300, 240\n"
     << "workload.period = 20\n"
     << "workload.noise = 2\n";
  return os.str();
}

std::string injected_spec(std::uint64_t seed) {
  std::ostringstream os;
  os << "type = injected\n"
     << "seed = " << seed << "\n"
     << "workload.kind = periodic-burst\n"
     << "workload.channels = ICACHE_MISS, LLC_MISS\n"
     << "workload.duration = 260\n"
     << "workload.base = 100, 80\n"
     << "workload.amplitude = 300, 240\n"
     << "workload.period = 20\n"
     << "workload.noise = 2\n"
     << "attack.kind = flush-storm\n"
     << "attack.intensity = 8\n"
     << "attack.duration = 80\n"
     << "attack.base = 0, 500\n"
     << "attack.noise = 0, 10\n"
     << "inject.offset = 90\n";
  return os.str();
}

void test_help_and_usage() {
  check(run("--help").code == 0, "help: root --help exits 0");
  const char* subs[] = {"synth",         "train",  "detect", "sweep",
                        "window-sweep",  "measure-sweep", "select",
                        "compare"};
  bool all_ok = true;
  std::string broken;
  for (const char* s : subs) {
    const auto r = run(std::string(s) + " --help");
    if (r.code != 0 || !contains(r.out, s)) {
      all_ok = false;
      broken = s;
      break;
    }
  }
  check(all_ok, "help: every subcommand has --help", broken);

  check(run("").code == 1, "usage: missing subcommand exits 1");
  check(run("frobnicate").code == 1, "usage: unknown subcommand exits 1");
  check(run("train --no-such-flag").code == 1, "usage: unknown flag exits 1");
  check(run("train --model m").code == 1,
        "usage: missing required option exits 1");

  const auto rk = run_env("FORTUNE_KERNELS=bogus", "--help");
  check(rk.code == 1 && contains(rk.err, "FORTUNE_KERNELS"),
        "usage: unknown kernel backend exits 1");
  check(run_env("FORTUNE_KERNELS=scalar", "--help").code == 0,
        "usage: forced scalar backend accepted");
}

void test_synth() {
  const fs::path specs = g_work / "specs";
  for (int i = 0; i < 4; ++i)
    write_file(specs / ("train_" + std::to_string(i) + ".spec"),
               benign_spec(100 + i));
  for (int i = 0; i < 3; ++i)
    write_file(specs / ("test_benign_" + std::to_string(i) + ".spec"),
               benign_spec(200 + i));
  // Attack backgrounds reuse training-corpus seeds, so the untouched
  // channel of an injected trace is byte-identical to a training trace.
  // Its per-channel scores then collide with benign scores and the ranking
  // in test_select cannot hand it a perfect F by generalization gap alone.
  for (int i = 0; i < 2; ++i)
    write_file(specs / ("test_attack_" + std::to_string(i) + ".spec"),
               injected_spec(100 + i));

  {
    const auto r = run("synth --spec " + (specs / "missing.spec").string() +
                       " --out " + (g_work / "never").string());
    check(r.code == 2 && contains(r.err, "not found"),
          "synth: missing spec file exits 2 with a message",
          "code=" + std::to_string(r.code));
  }

  std::string train_specs, test_specs, attack_specs;
  for (int i = 0; i < 4; ++i)
    train_specs +=
        " --spec " + (specs / ("train_" + std::to_string(i) + ".spec")).string();
  for (int i = 0; i < 3; ++i)
    test_specs += " --spec " +
                  (specs / ("test_benign_" + std::to_string(i) + ".spec")).string();
  for (int i = 0; i < 2; ++i) {
    const std::string s =
        (specs / ("test_attack_" + std::to_string(i) + ".spec")).string();
    test_specs += " --spec " + s;
    attack_specs += " --spec " + s;
  }

  const auto r1 =
      run("synth" + train_specs + " --out " + (g_work / "train").string());
  check(r1.code == 0 && count_lines(r1.out) == 4,
        "synth: benign training corpus materializes",
        "code=" + std::to_string(r1.code));
  const auto r2 =
      run("synth" + test_specs + " --out " + (g_work / "test").string());
  check(r2.code == 0 && contains(r2.out, "attack") &&
            contains(r2.out, "benign"),
        "synth: labeled test corpus materializes");
  const auto r3 =
      run("synth" + attack_specs + " --out " + (g_work / "attacks").string());
  check(r3.code == 0, "synth: attack-only corpus materializes");

  // Same specs, fresh directory: byte-identical traces.
  const auto r4 =
      run("synth" + train_specs + " --out " + (g_work / "train2").string());
  bool identical = r4.code == 0;
  for (int i = 0; i < 4 && identical; ++i) {
    const std::string name = "train_" + std::to_string(i) + ".csv";
    identical = slurp(g_work / "train" / name) ==
                slurp(g_work / "train2" / name);
  }
  check(identical, "synth: rerun is byte-identical");
}

void test_train() {
  const std::string base = "train --trace-dir " + (g_work / "train").string() +
                           " --window 16 --hidden 8 --epochs 3 --seed 7";
  const auto r =
      run(base + " --model " + (g_work / "m.model").string());
  check(r.code == 0 && fs::exists(g_work / "m.model") &&
            fs::exists(g_work / "m.model.log.csv"),
        "train: writes model and epoch log", "code=" + std::to_string(r.code));
  const std::string log = slurp(g_work / "m.model.log.csv");
  check(contains(log, "# fortune-train cell=lstm W=16 h=8 epochs=3 seed=7") &&
            contains(log, "epoch,val_error") && data_rows(log) >= 1 &&
            data_rows(log) <= 3,
        "train: epoch log carries settings and per-epoch rows");

  const auto r2 = run(base + " --model " + (g_work / "m2.model").string());
  check(r2.code == 0 && slurp(g_work / "m.model") == slurp(g_work / "m2.model"),
        "train: same seed reruns byte-identical");

  const auto r3 = run(base + " --model " + (g_work / "m3.model").string() +
                      " --cell bogus");
  check(r3.code == 1, "train: unknown cell kind exits 1",
        "code=" + std::to_string(r3.code));

  // Config file fills unset options; explicit flags still win.
  write_file(g_work / "train.cfg", "window = 12\nhidden = 6\nepochs = 1\n");
  const auto r4 = run("train --trace-dir " + (g_work / "train").string() +
                      " --model " + (g_work / "mc.model").string() +
                      " --config " + (g_work / "train.cfg").string() +
                      " --window 10 --seed 7");
  const std::string clog = slurp(g_work / "mc.model.log.csv");
  check(r4.code == 0 && contains(clog, "W=10 h=6 epochs=1"),
        "train: flag beats config beats default",
        "log header: " + clog.substr(0, clog.find('\n')));
}

void test_detect() {
  const std::string model = (g_work / "m.model").string();
  fs::path benign_trace, attack_trace;
  for (const auto& e : fs::directory_iterator(g_work / "test")) {
    const std::string name = e.path().filename().string();
    if (name.rfind("test_benign_0", 0) == 0) benign_trace = e.path();
    if (name.rfind("test_attack_0", 0) == 0) attack_trace = e.path();
  }

  check(run("detect --model " + model + " --trace " + benign_trace.string())
                .code == 1,
        "detect: missing tau exits 1");

  const auto ra = run("detect --model " + model + " --trace " +
                      attack_trace.string() + " --tau 1000000 --decision 5" +
                      " --out " + (g_work / "flags.csv").string());
  check(ra.code == 0 && contains(ra.out, "first_alarm_t=") &&
            contains(ra.out, "alarms="),
        "detect: attack trace raises an alarm",
        "out: " + ra.out.substr(0, 80));
  const std::string flags = slurp(g_work / "flags.csv");
  check(contains(flags, "# fortune-detect tau=1000000 D=5 W=16") &&
            contains(flags, "t,error,flag") && data_rows(flags) == 260 - 16,
        "detect: flags CSV has one row per scored sample");

  const auto rb = run("detect --model " + model + " --trace " +
                      benign_trace.string() + " --tau 1e18");
  check(rb.code == 0 && contains(rb.out, "first_alarm=none alarms=0"),
        "detect: absurd tau flags nothing");

  // tau can come from the config file instead of the flag.
  write_file(g_work / "detect.cfg", "tau = 1000000\ndecision = 5\n");
  const auto rc = run("detect --model " + model + " --trace " +
                      attack_trace.string() + " --config " +
                      (g_work / "detect.cfg").string());
  check(rc.code == 0 && contains(rc.out, "first_alarm_t="),
        "detect: tau and decision read from config file");

  // Short trace: warning, exit 0, header-only CSV.
  write_file(g_work / "specs" / "short.spec",
             "type = benign\nseed = 9\nworkload.kind = stationary\n"
             "workload.channels = ICACHE_MISS, LLC_MISS\n"
             "workload.duration = 12\nworkload.base = 100, 80\n"
             "workload.noise = 2\n");
  run("synth --spec " + (g_work / "specs" / "short.spec").string() +
      " --out " + (g_work / "short").string());
  const auto rs = run("detect --model " + model + " --trace " +
                      (g_work / "short" / "short.csv").string() +
                      " --tau 100 --out " + (g_work / "short_flags.csv").string());
  const std::string sflags = slurp(g_work / "short_flags.csv");
  check(rs.code == 0 && contains(rs.out, "warning") &&
            contains(sflags, "# warning") && data_rows(sflags) == 0,
        "detect: trace shorter than W warns and exits 0",
        "code=" + std::to_string(rs.code));

  const auto rt = run("detect --model " + model + " --trace " +
                      benign_trace.string() + " --tau 1e18 --trim-idle");
  check(rt.code == 0, "detect: --trim-idle accepted");
}

void test_sweep() {
  const std::string model = (g_work / "m.model").string();
  const std::string corpus = (g_work / "test").string();
  const auto r = run("sweep --model " + model + " --trace-dir " + corpus +
                     " --out " + (g_work / "rep1").string() +
                     " --tau-grid 1:10000000:8 --d-grid 2:8:3");
  check(r.code == 0 && contains(r.out, "chosen tau="),
        "sweep: runs and reports the operating point",
        "code=" + std::to_string(r.code) + " err: " + r.err.substr(0, 120));

  const std::string sweep_csv = slurp(g_work / "rep1" / "sweep.csv");
  check(data_rows(sweep_csv) == 8 * 3,
        "sweep: grid CSV has |tau| x |D| rows",
        "rows=" + std::to_string(data_rows(sweep_csv)));
  check(fs::exists(g_work / "rep1" / "roc_lstm.csv") &&
            fs::exists(g_work / "rep1" / "summary.json-text") &&
            fs::exists(g_work / "rep1" / "README-run.txt"),
        "sweep: report bundle is complete");

  const auto r2 = run("sweep --model " + model + " --trace-dir " + corpus +
                      " --out " + (g_work / "rep2").string() +
                      " --tau-grid 1:10000000:8 --d-grid 2:8:3");
  bool identical = r2.code == 0;
  for (const char* f : {"sweep.csv", "roc_lstm.csv", "summary.json-text",
                        "README-run.txt"})
    identical = identical &&
                slurp(g_work / "rep1" / f) == slurp(g_work / "rep2" / f);
  check(identical, "sweep: rerun is byte-identical");

  // Default tau grid derived from the observed scores also works.
  const auto r3 = run("sweep --model " + model + " --trace-dir " + corpus +
                      " --out " + (g_work / "rep3").string() +
                      " --d-grid 2:8:3");
  check(r3.code == 0 && data_rows(slurp(g_work / "rep3" / "sweep.csv")) ==
                            25 * 3,
        "sweep: derived default tau grid spans 25 points");

  // At the chosen operating point, benign traces stay alarm-free.
  const auto summary =
      nlohmann::json::parse(slurp(g_work / "rep1" / "summary.json-text"));
  const double tau = summary["operating_point"]["tau"];
  const int decision = summary["operating_point"]["decision"];
  check(summary["operating_point"]["fpr"] == 0.0 &&
            summary["operating_point"]["fnr"] == 0.0,
        "sweep: corpus separates at the chosen point");
  bool clean = true;
  for (int i = 0; i < 3 && clean; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", tau);
    const auto rb = run("detect --model " + model + " --trace " +
                        (g_work / "test" /
                         ("test_benign_" + std::to_string(i) + ".csv"))
                            .string() +
                        " --tau " + buf + " --decision " +
                        std::to_string(decision));
    clean = rb.code == 0 && contains(rb.out, "first_alarm=none");
  }
  check(clean, "detect: benign traces silent at the swept operating point");
}

void test_window_and_measure_sweeps() {
  const std::string corpus = (g_work / "train").string();
  const auto rw = run("window-sweep --trace-dir " + corpus + " --out " +
                      (g_work / "ws.csv").string() +
                      " --w-grid 8:16:8 --hidden 4 --epochs 1 --seed 5");
  const std::string ws = slurp(g_work / "ws.csv");
  check(rw.code == 0 && contains(ws, "W,final_val_error") &&
            data_rows(ws) == 2,
        "window-sweep: one row per window size",
        "code=" + std::to_string(rw.code));

  const auto rm = run("measure-sweep --trace-dir " + corpus + " --out " +
                      (g_work / "ms.csv").string() +
                      " --window 8 --hidden 4 --epochs 1 --seed 5");
  const std::string ms = slurp(g_work / "ms.csv");
  check(rm.code == 0 && contains(ms, "count,final_val_error") &&
            data_rows(ms) == 2,
        "measure-sweep: defaults to counts 1..channels");

  const auto rbad = run("measure-sweep --trace-dir " + corpus + " --out " +
                        (g_work / "ms2.csv").string() +
                        " --count-grid 3:3:1 --window 8 --hidden 4" +
                        " --epochs 1");
  check(rbad.code == 1, "measure-sweep: count above channel count exits 1",
        "code=" + std::to_string(rbad.code));
}

void test_select() {
  // Subset size 1 keeps each channel's predictor blind to the other, so
  // the LLC_MISS elevation cannot leak into ICACHE_MISS errors through a
  // shared hidden state.
  const auto r = run("select --trace-dir " + (g_work / "train").string() +
                     " --attack-dir " + (g_work / "attacks").string() +
                     " --out " + (g_work / "rank.csv").string() +
                     " --subset-size 1 --window 16 --hidden 8 --epochs 2" +
                     " --decision 5 --top 1 --seed 3");
  const std::string rank = slurp(g_work / "rank.csv");
  check(r.code == 0 && contains(rank, "channel,fscore") &&
            data_rows(rank) == 2,
        "select: one ranking row per channel",
        "code=" + std::to_string(r.code) + " err: " + r.err.substr(0, 120));
  // LLC_MISS carries an 8x footprint elevation, so it must rank first.
  std::istringstream in(rank);
  std::string line, first_data;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line == "channel,fscore") continue;
    first_data = line;
    break;
  }
  check(first_data.rfind("LLC_MISS,", 0) == 0 &&
            contains(r.out, "top-1: LLC_MISS"),
        "select: elevated channel ranks first", first_data);
}

void test_compare() {
  write_file(g_work / "compare.cfg",
             "cpd.channel = LLC_MISS\n"
             "cpd.mu-a = 500\n"
             "cpd.beta = 0.65\n"
             "dtw.reference = 4100, 4100, 4100\n"
             "dtw.signature-channel = LLC_MISS\n"
             "dtw.arm-threshold = 1000000\n"
             "dtw.jump-factor = 2\n"
             "dtw.watch-window = 5\n");
  const std::string model = (g_work / "m.model").string();
  const std::string corpus = (g_work / "test").string();

  const auto r = run("compare --model " + model + " --trace-dir " + corpus +
                     " --out " + (g_work / "cmp").string() + " --decision 5" +
                     " --config " + (g_work / "compare.cfg").string());
  check(r.code == 0, "compare: runs with all four techniques",
        "code=" + std::to_string(r.code) + " err: " + r.err.substr(0, 120));
  const std::string csv = slurp(g_work / "cmp" / "comparison.csv");
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> names;
  bool values_ok = true;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    names.push_back(line.substr(0, c1));
    // fscore is the 5th field; must parse and sit in [0,1].
    std::istringstream ls(line.substr(c1 + 1));
    std::string cell;
    for (int i = 0; i < 4 && std::getline(ls, cell, ','); ++i) {
    }
    const double f = std::atof(cell.c_str());
    values_ok = values_ok && f >= 0.0 && f <= 1.0;
  }
  check(names == std::vector<std::string>{"rnn", "cpd", "dtw", "pdf"} &&
            values_ok,
        "compare: rows are rnn,cpd,dtw,pdf with F in [0,1]");
  check(contains(slurp(g_work / "cmp" / "comparison.txt"), "technique"),
        "compare: aligned text table present");

  // Without a DTW reference the dtw row is omitted.
  const auto r2 = run("compare --model " + model + " --trace-dir " + corpus +
                      " --out " + (g_work / "cmp2").string() + " --decision 5");
  const std::string csv2 = slurp(g_work / "cmp2" / "comparison.csv");
  check(r2.code == 0 && data_rows(csv2) == 3 && !contains(csv2, "dtw"),
        "compare: dtw row only with a configured reference");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_tests <fortune-binary>\n";
    return 2;
  }
  g_bin = argv[1];
  if (!fs::exists(g_bin)) {
    std::cerr << "fortune binary not found: " << g_bin << "\n";
    return 2;
  }
  g_work = fs::temp_directory_path() /
           ("fortune-cli-" + std::to_string(::getpid()));
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  test_help_and_usage();
  test_synth();
  test_train();
  test_detect();
  test_sweep();
  test_window_and_measure_sweeps();
  test_select();
  test_compare();

  std::cout << g_pass << " passed, " << g_fail << " failed\n";
  if (g_fail == 0) fs::remove_all(g_work);
  return g_fail == 0 ? 0 : 1;
}
