// End-to-end checks of the installed command line tool. Takes the tool path
// as argv[1], runs it through a shell, and inspects exit codes and artifacts
// in a scratch directory.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what) {
  std::printf("%s  %s\n", ok ? "ok  " : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -2;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kTrainConfig = R"({
  "schema_version": 1,
  "problem": {"kind": "synth-logistic", "n": 8, "count": 60, "seed": 3,
              "mu": 1e-3},
  "method": "s4qn",
  "base": "hessian",
  "gradient_batch": {"kind": "geometric", "s0": 8, "rho": 1.5},
  "hessian_batch": {"kind": "constant", "s0": 8},
  "seed": 7,
  "max_iterations": 6,
  "max_epochs": 1e9,
  "relerr": false
})";

const char* kSgdConfig = R"({
  "schema_version": 1,
  "problem": {"kind": "synth-logistic", "n": 8, "count": 60, "seed": 3,
              "mu": 1e-3},
  "method": "sgd-baseline",
  "alpha": {"kind": "constant", "alpha0": 0.05},
  "gradient_batch": {"kind": "constant", "s0": 8},
  "seed": 7,
  "max_iterations": 12,
  "max_epochs": 1e9,
  "relerr": false
})";

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-tool>\n", argv[0]);
    return 2;
  }
  const std::string tool = argv[1];
  const fs::path dir =
      fs::temp_directory_path() /
      ("s2qn-cli-" + std::to_string(static_cast<long>(::getpid())));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto in_dir = [&](const std::string& name) { return (dir / name).string(); };

  write_file(dir / "train.json", kTrainConfig);
  write_file(dir / "sgd.json", kSgdConfig);

  // --- train: artifacts and exit code ---
  int rc = run(tool + " train --config " + in_dir("train.json") + " --out " +
               in_dir("run1") + " > " + in_dir("train1.log") + " 2>&1");
  check(rc == 0, "train exits 0");
  check(fs::exists(dir / "run1" / "metrics.csv"), "train writes metrics.csv");
  check(fs::exists(dir / "run1" / "resolved-config.json"),
        "train writes resolved-config.json");
  check(fs::exists(dir / "run1" / "summary.json"), "train writes summary.json");
  const std::string log1 = slurp(dir / "train1.log");
  check(log1.rfind("train:", 0) == 0, "train prints a summary line");

  // --- replay the resolved config: byte-identical metrics ---
  rc = run(tool + " train --config " + in_dir("run1") + "/resolved-config.json" +
           " --out " + in_dir("run2") + " > /dev/null 2>&1");
  check(rc == 0, "replay exits 0");
  const std::string m1 = slurp(dir / "run1" / "metrics.csv");
  const std::string m2 = slurp(dir / "run2" / "metrics.csv");
  check(!m1.empty() && m1 == m2, "replayed metrics.csv is byte-identical");
  check(slurp(dir / "run1" / "resolved-config.json") ==
            slurp(dir / "run2" / "resolved-config.json"),
        "resolved config is a fixed point");

  // --- seed override changes the trajectory ---
  rc = run(tool + " train --config " + in_dir("train.json") +
           " --seed 99 --out " + in_dir("run3") + " > /dev/null 2>&1");
  check(rc == 0, "seed override exits 0");
  check(slurp(dir / "run3" / "metrics.csv") != m1,
        "seed override changes metrics");

  // --- config errors: exit 2, one-line error on stderr ---
  write_file(dir / "bad.json", R"({"schema_version": 1, "bogus": true,
    "problem": {"kind": "synth-logistic"}})");
  rc = run(tool + " train --config " + in_dir("bad.json") + " --out " +
           in_dir("bad-out") + " > /dev/null 2> " + in_dir("bad.err"));
  check(rc == 2, "unknown config key exits 2");
  const std::string bad_err = slurp(dir / "bad.err");
  check(bad_err.rfind("error:", 0) == 0, "config error starts with 'error:'");
  check(bad_err.find("bogus") != std::string::npos,
        "config error names the offending key");
  check(std::count(bad_err.begin(), bad_err.end(), '\n') <= 1,
        "config error is a single line");

  rc = run(tool + " train --config " + in_dir("missing.json") + " --out " +
           in_dir("x") + " > /dev/null 2>&1");
  check(rc == 2, "missing config file is a config error (exit 2)");

  // --- validate: green by default, red under fault injection ---
  rc = run(tool + " validate > " + in_dir("validate.log") + " 2>&1");
  check(rc == 0, "validate exits 0");
  const std::string vlog = slurp(dir / "validate.log");
  check(vlog.find("validate:") != std::string::npos,
        "validate prints a tally line");

  rc = run("S2QN_FAULT=smw " + tool + " validate > " + in_dir("fault.log") +
           " 2>&1");
  check(rc == 1, "validate under smw fault exits 1");
  const std::string flog = slurp(dir / "fault.log");
  check(flog.find("FAIL") != std::string::npos,
        "faulted validate reports a failing check");

  rc = run(tool + " validate --filter no-such-suite > /dev/null 2>&1");
  check(rc == 2, "validate with unmatched filter exits 2");

  // --- compare ---
  rc = run(tool + " compare " + in_dir("train.json") + " " + in_dir("sgd.json") +
           " --out " + in_dir("cmp") + " --plot " + in_dir("cmp.svg") +
           " > /dev/null 2>&1");
  check(rc == 0, "compare exits 0");
  check(fs::exists(dir / "cmp" / "compare.csv"), "compare writes compare.csv");
  check(fs::exists(dir / "cmp.svg"), "compare --plot writes the svg");
  const std::string header = slurp(dir / "cmp" / "compare.csv");
  check(header.rfind("epoch,", 0) == 0, "compare.csv starts with epoch column");

  rc = run(tool + " compare " + in_dir("train.json") + " > /dev/null 2>&1");
  check(rc == 2, "compare with one config exits 2");

  // --- thread env var sanity ---
  rc = run("S2QN_THREADS=2 " + tool + " train --config " + in_dir("train.json") +
           " --out " + in_dir("run4") + " > /dev/null 2>&1");
  check(rc == 0, "S2QN_THREADS=2 train exits 0");
  check(slurp(dir / "run4" / "metrics.csv") == m1,
        "thread count does not change metrics");
  rc = run("S2QN_THREADS=abc " + tool + " train --config " +
           in_dir("train.json") + " --out " + in_dir("run5") +
           " > /dev/null 2>&1");
  check(rc == 2, "bad S2QN_THREADS exits 2");

  if (g_failures == 0) {
    std::printf("cli: all checks passed\n");
    fs::remove_all(dir);
    return 0;
  }
  std::printf("cli: %d check(s) failed (artifacts kept in %s)\n", g_failures,
              dir.string().c_str());
  return 1;
}
