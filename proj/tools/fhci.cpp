// fhci: fit, interval and simulation front end for the Fay-Herriot toolkit.
//
// Exit codes: 0 success, 1 usage or input error, 2 estimator failure or
// simulation failure-rate breach, 3 existence condition violated.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fhci/fhci.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitEstimator = 2;
constexpr int kExitExistence = 3;

struct SearchFlags {
  std::optional<double> a_max;
  double abs_tol = 1e-8;
  int max_iter = 200;
  int grid_points = 200;
  double truncation_floor = 0.01;

  void attach(CLI::App* app) {
    app->add_option("--a-max", a_max, "Upper end of the A search (default 100*(max D + var y))");
    app->add_option("--abs-tol", abs_tol, "Absolute tolerance on A")->capture_default_str();
    app->add_option("--max-iter", max_iter, "Iteration cap for the 1-D maximizer")
        ->capture_default_str();
    app->add_option("--grid-points", grid_points, "Log-spaced bracketing grid size")
        ->capture_default_str();
    app->add_option("--truncation-floor", truncation_floor, "REML truncation floor")
        ->capture_default_str();
  }

  fhci::SearchConfig config() const {
    fhci::SearchConfig c;
    c.a_max = a_max;
    c.abs_tol = abs_tol;
    c.max_iter = max_iter;
    c.grid_points = grid_points;
    c.truncation_floor = truncation_floor;
    return c;
  }
};

/// Writes to --out when given, else stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw fhci::Error("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

fhci::EstimatorKind parse_estimator(const std::string& s) {
  if (s == "reml") return fhci::EstimatorKind::None;
  if (s == "nas") return fhci::EstimatorKind::Nas;
  if (s == "remark1") return fhci::EstimatorKind::Remark1;
  if (s == "c_variant") return fhci::EstimatorKind::CVariant;
  throw fhci::Error("unknown estimator '" + s + "' (expected reml, nas, remark1, c_variant)");
}

int cmd_fit(const std::string& input, const std::string& method, double alpha,
            const fhci::SearchConfig& cfg, const std::string& out_path) {
  using namespace fhci;
  const SmallAreaDataset data = io::read_dataset_csv(input);
  const NominalLevel level = NominalLevel::from_alpha(alpha);
  const EstimatorKind kind = parse_estimator(method);

  std::vector<std::pair<std::string, AdjustmentFactor>> runs;
  switch (kind) {
    case EstimatorKind::None: runs.emplace_back("", AdjustmentFactor::none()); break;
    case EstimatorKind::Nas: runs.emplace_back("", AdjustmentFactor::nas(level.z)); break;
    case EstimatorKind::Remark1: runs.emplace_back("", AdjustmentFactor::remark1()); break;
    case EstimatorKind::CVariant:
      for (std::size_t i = 0; i < data.m(); ++i)
        runs.emplace_back(data.area_ids()[i], AdjustmentFactor::c_variant(data, i, level.z));
      break;
  }

  Output out(out_path);
  auto& os = out.stream();
  os << "method,area_id,A_hat,converged,truncated,existence_condition_met,at_upper_bound,"
        "iterations,objective";
  for (const auto& n : data.covariate_names()) os << ",beta_" << io::quote_csv(n);
  os << '\n';
  bool existence_ok = true;
  for (const auto& [area, factor] : runs) {
    const VarianceEstimate est = estimate_variance(data, factor, cfg);
    existence_ok = existence_ok && est.existence_condition_met;
    const Vector beta = gls_beta(data, est.a_hat);
    os << to_string(est.method) << ',' << io::quote_csv(area) << ',' << io::format17(est.a_hat)
       << ',' << est.converged << ',' << est.truncated << ',' << est.existence_condition_met << ','
       << est.at_upper_bound << ',' << est.iterations << ',' << io::format17(est.objective_at_opt);
    for (Eigen::Index j = 0; j < beta.size(); ++j) os << ',' << io::format17(beta(j));
    os << '\n';
  }
  if (!existence_ok) {
    std::cerr << "fhci: existence condition for the " << method
              << " estimator does not hold for m = " << data.m() << ", p = " << data.p() << "\n";
    return kExitExistence;
  }
  return kExitOk;
}

int cmd_intervals(const std::string& input, const std::string& methods_arg, double alpha,
                  const fhci::SearchConfig& cfg, const std::string& out_path,
                  const std::string& format) {
  using namespace fhci;
  const SmallAreaDataset data = io::read_dataset_csv(input);
  const NominalLevel level = NominalLevel::from_alpha(alpha);
  const auto methods = io::parse_methods(methods_arg);

  for (IntervalMethod m : methods) {
    const bool nas_like = m == IntervalMethod::Nas || m == IntervalMethod::Nas0;
    if (nas_like && !nas_existence_holds(data.m(), data.p(), level.z)) {
      std::cerr << "fhci: NAS estimator requires m > p + (1+z^2)/2; got m = " << data.m()
                << ", p = " << data.p() << ", z = " << level.z << "\n";
      return kExitExistence;
    }
    if (m == IntervalMethod::CVariant && !c_variant_existence_holds(data.m(), data.p())) {
      std::cerr << "fhci: c_variant estimator requires m > p + 4; got m = " << data.m()
                << ", p = " << data.p() << "\n";
      return kExitExistence;
    }
  }

  std::vector<std::size_t> areas(data.m());
  for (std::size_t i = 0; i < data.m(); ++i) areas[i] = i;
  std::vector<IntervalResult> rows;
  int code = kExitOk;
  // One block per method; a failing method is reported and skipped.
  for (IntervalMethod m : methods) {
    try {
      auto block = build_intervals(data, {m}, areas, level, cfg);
      for (auto& r : block.front()) rows.push_back(std::move(r));
    } catch (const Error& e) {
      std::cerr << "fhci: method " << method_key(m) << " failed: " << e.what() << "\n";
      code = kExitEstimator;
    }
  }
  Output out(out_path);
  if (format == "markdown") io::write_intervals_markdown(out.stream(), rows);
  else io::write_intervals_csv(out.stream(), rows);
  return code;
}

int finish_simulation(const std::vector<fhci::SimulationSummary>& runs, bool pattern_column,
                      const std::string& out_path, const std::string& format) {
  Output out(out_path);
  if (format == "markdown") fhci::io::write_summary_markdown(out.stream(), runs, pattern_column);
  else fhci::io::write_summary_csv(out.stream(), runs);
  for (const auto& s : runs) {
    if (s.failure_rate_exceeded) {
      std::cerr << "fhci: scenario " << s.name << " exceeded the 1% replicate failure rate ("
                << s.failed_replicates << " of " << s.n_reps << ")\n";
      return kExitEstimator;
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical Bayes confidence intervals under the Fay-Herriot model"};
  app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");
  app.require_subcommand(1);

  std::string input, out_path, format = "csv";
  double alpha = 0.05;
  int threads = 0;

  auto* fit = app.add_subcommand("fit", "Estimate the model variance A");
  std::string fit_method = "nas";
  SearchFlags fit_search;
  fit->add_option("--input", input, "Dataset CSV (area_id,y,D,x1,...,xp)")->required();
  fit->add_option("--method", fit_method, "reml | nas | remark1 | c_variant")->capture_default_str();
  fit->add_option("--alpha", alpha, "1 - nominal coverage")->capture_default_str();
  fit->add_option("--out", out_path, "Output CSV (default stdout)");
  fit_search.attach(fit);

  auto* intervals = app.add_subcommand("intervals", "Per-area confidence intervals");
  std::string methods = "direct,cox,t,ct,nas";
  SearchFlags iv_search;
  intervals->add_option("--input", input, "Dataset CSV")->required();
  intervals->add_option("--methods", methods,
                        "Comma list of direct,cox,t,ct,nas0,c_variant,nas,remark1")
      ->capture_default_str();
  intervals->add_option("--alpha", alpha, "1 - nominal coverage")->capture_default_str();
  intervals->add_option("--out", out_path, "Output file (default stdout)");
  intervals->add_option("--format", format, "csv | markdown")
      ->check(CLI::IsMember({"csv", "markdown"}))
      ->capture_default_str();
  iv_search.attach(intervals);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo coverage for one scenario file");
  std::string scenario_path;
  std::optional<std::uint64_t> sim_seed;
  std::optional<std::size_t> sim_reps;
  simulate->add_option("--scenario", scenario_path, "Scenario file (key = value)")->required();
  simulate->add_option("--seed", sim_seed, "Override the scenario seed");
  simulate->add_option("--reps", sim_reps, "Override the number of replicates");
  simulate->add_option("--threads", threads, "Worker threads (default FHCI_THREADS or all cores)");
  simulate->add_option("--out", out_path, "Output file (default stdout)");
  simulate->add_option("--format", format, "csv | markdown")
      ->check(CLI::IsMember({"csv", "markdown"}))
      ->capture_default_str();

  auto* reproduce = app.add_subcommand("reproduce", "Regenerate the coverage/length tables");
  std::string table;
  std::uint64_t rep_seed = 42;
  std::size_t rep_reps = 10000;
  std::string cells = "single";
  reproduce->add_option("table", table, "table1 | table2")
      ->required()
      ->check(CLI::IsMember({"table1", "table2"}));
  reproduce->add_option("--seed", rep_seed, "Scenario seed")->capture_default_str();
  reproduce->add_option("--reps", rep_reps, "Replicates per scenario")->capture_default_str();
  reproduce->add_option("--threads", threads, "Worker threads (default FHCI_THREADS or all cores)");
  reproduce->add_option("--cells", cells, "single | group (table2 only)")
      ->check(CLI::IsMember({"single", "group"}))
      ->capture_default_str();
  reproduce->add_option("--out", out_path, "Output file (default stdout)");
  reproduce->add_option("--format", format, "csv | markdown")
      ->check(CLI::IsMember({"csv", "markdown"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return cmd_fit(input, fit_method, alpha, fit_search.config(), out_path);
    if (*intervals)
      return cmd_intervals(input, methods, alpha, iv_search.config(), out_path, format);
    if (*simulate) {
      fhci::ScenarioSpec spec =
          fhci::io::scenario_from_key_values(fhci::io::read_key_values(scenario_path));
      if (sim_seed) spec.seed = *sim_seed;
      if (sim_reps) spec.n_reps = *sim_reps;
      if (threads > 0) spec.threads = threads;
      const auto summary = fhci::run_scenario(spec);
      return finish_simulation({summary}, false, out_path, format);
    }
    if (*reproduce) {
      auto scenarios = table == "table1"
                           ? fhci::table1_scenarios(rep_seed, rep_reps)
                           : fhci::table2_scenarios(rep_seed, rep_reps,
                                                    cells == "group" ? fhci::CellMode::GroupAverage
                                                                     : fhci::CellMode::SingleArea);
      std::vector<fhci::SimulationSummary> runs;
      for (auto& sc : scenarios) {
        sc.spec.threads = threads;
        runs.push_back(fhci::run_scenario(sc));
      }
      return finish_simulation(runs, table == "table2", out_path, format);
    }
  } catch (const fhci::ParseError& e) {
    std::cerr << "fhci: " << e.what() << "\n";
    return kExitInput;
  } catch (const fhci::EstimationError& e) {
    std::cerr << "fhci: " << e.what() << "\n";
    return kExitEstimator;
  } catch (const fhci::Error& e) {
    std::cerr << "fhci: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
