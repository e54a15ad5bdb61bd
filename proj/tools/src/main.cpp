#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "config.hpp"
#include "plot.hpp"
#include "s2qn/engine.hpp"
#include "s2qn/errors.hpp"
#include "s2qn/validation.hpp"

namespace {

namespace fs = std::filesystem;
using s2qn::tools::Json;
using s2qn::tools::LoadedRun;

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n') c = ' ';
  return s;
}

// Errors go to stderr as exactly one line: "error: <category>: <message>".
int complain(const char* category, const std::string& msg, int code) {
  std::cerr << "error: " << category << ": " << one_line(msg) << "\n";
  return code;
}

bool write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out << text;
  return static_cast<bool>(out);
}

std::string fmt_g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

void apply_thread_env() {
  const char* t = std::getenv("S2QN_THREADS");
  if (!t || !*t) return;
  long n = 0;
  auto [ptr, ec] = std::from_chars(t, t + std::string_view(t).size(), n);
  if (ec != std::errc{} || *ptr != '\0' || n <= 0) {
    std::cerr << "error: config: S2QN_THREADS must be a positive integer\n";
    std::exit(2);
  }
  Eigen::setNbThreads(static_cast<int>(n));
}

int cmd_train(const std::string& cfg_path,
              std::optional<std::uint64_t> seed_override,
              const std::string& out_dir) {
  LoadedRun lr;
  try {
    lr = s2qn::tools::load_run(cfg_path, seed_override);
  } catch (const std::exception& e) {
    return complain("config", e.what(), 2);
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) return complain("io", "cannot create output directory " + out_dir, 3);

  s2qn::engine::RunRecord rec;
  try {
    rec = s2qn::engine::run(lr.config, *lr.problem);
  } catch (const std::exception& e) {
    return complain("run", e.what(), 3);
  }

  const double final_loss = lr.problem->full_loss(rec.theta_final);
  const double final_gnorm = lr.problem->full_gradient(rec.theta_final).norm();

  Json summary;
  summary["stop_reason"] = rec.stop_reason;
  summary["iterations"] = static_cast<std::int64_t>(rec.iterations);
  summary["epochs"] = rec.epochs;
  summary["final_loss"] = final_loss;
  summary["final_fullgnorm"] = final_gnorm;
  if (lr.config.relerr_enabled) {
    summary["psi_star"] = rec.psi_star;
    summary["final_relerr"] =
        (final_loss - rec.psi_star) / std::max(1.0, rec.psi_star);
  } else {
    summary["psi_star"] = nullptr;
    summary["final_relerr"] = nullptr;
  }

  const fs::path out(out_dir);
  if (!write_text(out / "metrics.csv", rec.to_csv()))
    return complain("io", "cannot write metrics.csv", 3);
  if (!write_text(out / "resolved-config.json", lr.resolved.dump(2) + "\n"))
    return complain("io", "cannot write resolved-config.json", 3);
  if (!write_text(out / "summary.json", summary.dump(2) + "\n"))
    return complain("io", "cannot write summary.json", 3);

  std::cout << "train: stop=" << rec.stop_reason
            << " iterations=" << rec.iterations
            << " epochs=" << fmt_g(rec.epochs)
            << " loss=" << fmt_g(final_loss)
            << " fullgnorm=" << fmt_g(final_gnorm) << "\n";
  return 0;
}

int cmd_validate(const std::string& filter) {
  std::vector<s2qn::validation::CheckResult> results;
  try {
    results = s2qn::validation::run_suites(filter);
  } catch (const std::exception& e) {
    return complain("run", e.what(), 3);
  }
  if (results.empty())
    return complain("usage", "no self-check suite matches '" + filter + "'", 2);

  std::size_t passed = 0;
  for (const auto& r : results) {
    if (r.passed) ++passed;
    std::printf("%-14s %-28s %s  err=%-12.3e tol=%.1e\n", r.suite.c_str(),
                r.name.c_str(), r.passed ? "PASS" : "FAIL", r.error,
                r.tolerance);
  }
  std::printf("validate: %zu/%zu checks passed\n", passed, results.size());
  return passed == results.size() ? 0 : 1;
}

// Last metric row at or before the given epoch; nan before the first row.
double value_at(const std::vector<s2qn::engine::IterationRow>& rows,
                double epoch, double s2qn::engine::IterationRow::* field) {
  double v = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows) {
    if (r.epoch > epoch + 1e-12) break;
    v = r.*field;
  }
  return v;
}

void append_shortest(std::string& out, double x) {
  if (std::isnan(x)) {
    out += "nan";
    return;
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  out.append(buf, ptr);
}

int cmd_compare(const std::vector<std::string>& paths,
                const std::string& plot_path, const std::string& out_dir) {
  if (paths.size() < 2)
    return complain("usage", "compare needs at least two config files", 2);

  std::vector<LoadedRun> runs;
  for (const auto& p : paths) {
    try {
      runs.push_back(s2qn::tools::load_run(p, std::nullopt));
    } catch (const std::exception& e) {
      return complain("config", p + ": " + e.what(), 2);
    }
  }
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].problem_key != runs[0].problem_key)
      return complain("config",
                      "configs disagree on the problem (" + paths[0] + " vs " +
                          paths[i] + ")",
                      2);

  // Labels from the method names, deduplicated with a numeric suffix.
  std::vector<std::string> labels;
  for (const auto& r : runs) {
    std::string base = s2qn::engine::to_string(r.config.method);
    std::string label = base;
    int n = 1;
    while (std::find(labels.begin(), labels.end(), label) != labels.end())
      label = base + "-" + std::to_string(++n);
    labels.push_back(label);
  }

  std::vector<s2qn::engine::RunRecord> recs;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    try {
      recs.push_back(s2qn::engine::run(runs[i].config, *runs[i].problem));
    } catch (const std::exception& e) {
      return complain("run", paths[i] + ": " + std::string(e.what()), 3);
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) return complain("io", "cannot create output directory " + out_dir, 3);

  bool all_relerr = true;
  for (const auto& r : runs) all_relerr &= r.config.relerr_enabled;

  // Aligned table on the union of the runs' epoch stamps; each cell holds the
  // most recent value at or before that stamp.
  std::vector<double> grid;
  for (const auto& rec : recs)
    for (const auto& row : rec.rows) grid.push_back(row.epoch);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::string csv = "epoch";
  for (const auto& label : labels) {
    csv += "," + label + "_loss";
    if (all_relerr) csv += "," + label + "_relerr";
  }
  csv += "\n";
  for (double e : grid) {
    append_shortest(csv, e);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      csv += ",";
      append_shortest(csv, value_at(recs[i].rows, e,
                                    &s2qn::engine::IterationRow::loss));
      if (all_relerr) {
        csv += ",";
        append_shortest(csv, value_at(recs[i].rows, e,
                                      &s2qn::engine::IterationRow::relerr));
      }
    }
    csv += "\n";
  }
  const fs::path csv_path = fs::path(out_dir) / "compare.csv";
  if (!write_text(csv_path, csv))
    return complain("io", "cannot write " + csv_path.string(), 3);

  std::string plot_note;
  if (!plot_path.empty()) {
    std::vector<s2qn::tools::Series> series;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      s2qn::tools::Series s;
      s.label = labels[i];
      for (const auto& row : recs[i].rows)
        s.points.emplace_back(row.epoch, all_relerr ? row.relerr : row.loss);
      series.push_back(std::move(s));
    }
    const std::string svg = s2qn::tools::render_line_plot(
        series, "epochs", all_relerr ? "relative error" : "loss",
        /*log_y=*/true);
    if (!write_text(plot_path, svg))
      return complain("io", "cannot write " + plot_path, 3);
    plot_note = " plot=" + plot_path;
  }

  for (std::size_t i = 0; i < recs.size(); ++i)
    std::cout << "compare: " << labels[i] << " stop=" << recs[i].stop_reason
              << " iterations=" << recs[i].iterations
              << " epochs=" << fmt_g(recs[i].epochs) << "\n";
  std::cout << "compare: wrote " << csv_path.string() << plot_note << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();

  CLI::App app{"structured stochastic quasi-Newton trainer"};
  app.require_subcommand(1);

  std::string train_cfg, train_out = ".";
  std::optional<std::uint64_t> train_seed;
  CLI::App* train = app.add_subcommand("train", "run one configuration");
  train->add_option("--config", train_cfg, "run config (json)")->required();
  train->add_option("--seed", train_seed, "override the config's seed");
  train->add_option("--out", train_out, "output directory");

  std::string filter;
  CLI::App* validate =
      app.add_subcommand("validate", "run the numerical self-checks");
  validate->add_option("--filter", filter, "suite name substring");

  std::vector<std::string> cmp_paths;
  std::string cmp_plot, cmp_out = ".";
  CLI::App* compare =
      app.add_subcommand("compare", "run several configs on one problem");
  compare->add_option("configs", cmp_paths, "two or more run configs");
  compare->add_option("--plot", cmp_plot, "write an svg curve plot here");
  compare->add_option("--out", cmp_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return complain("usage", e.what(), 2);
  }

  if (train->parsed()) return cmd_train(train_cfg, train_seed, train_out);
  if (validate->parsed()) return cmd_validate(filter);
  return cmd_compare(cmp_paths, cmp_plot, cmp_out);
}
