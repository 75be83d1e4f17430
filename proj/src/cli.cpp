#include "fstm/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fstm/calibration.hpp"
#include "fstm/csv.hpp"
#include "fstm/engine.hpp"
#include "fstm/explicit_engine.hpp"
#include "fstm/patterns.hpp"
#include "fstm/structure.hpp"

namespace fstm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_json(const std::string& path, const json& doc) {
  csv::write_file_atomic(path, doc.dump(2) + "\n");
}

// --- simulate ---------------------------------------------------------------

std::string cycles_csv(const SimulationTrace& trace) {
  std::ostringstream os;
  os << "cycle,production,leaf_area,organ_demand,ring_demand,total_demand,ring_allocation,"
        "d_pool,d_pressler\n";
  for (const auto& c : trace.cycles) {
    os << c.cycle << ',' << csv::format_number(c.production) << ','
       << csv::format_number(c.leaf_area) << ',' << csv::format_number(c.organ_demand) << ','
       << csv::format_number(c.ring_demand) << ',' << csv::format_number(c.total_demand) << ','
       << csv::format_number(c.ring_allocation) << ',' << csv::format_number(c.d_pool) << ','
       << csv::format_number(c.d_pressler) << "\n";
  }
  return os.str();
}

std::string metamers_csv(const SimulationTrace& trace) {
  std::ostringstream os;
  os << "pa,birth_cycle,multiplicity,rank,born_cycle,internode_g,ring_g,wood_g,length_cm,"
        "radius_cm,needle_g,needle_active\n";
  for (const auto& cls : trace.classes) {
    for (int rank = 1; rank <= cls.metamer_count(); ++rank) {
      const int r = rank - 1;
      const double wood = cls.internode_mass[r] + cls.ring_mass[r];
      os << cls.key.pa << ',' << cls.key.birth_cycle << ',' << cls.multiplicity << ',' << rank
         << ',' << cls.born_at(rank) << ',' << csv::format_number(cls.internode_mass[r]) << ','
         << csv::format_number(cls.ring_mass[r]) << ',' << csv::format_number(wood) << ','
         << csv::format_number(cls.length[r]) << ','
         << csv::format_number(
                radius_from_biomass(wood, cls.length[r], trace.params.wood_density))
         << ',' << csv::format_number(cls.needle_mass[r]) << ','
         << (trace.needle_active(cls, rank) ? 1 : 0) << "\n";
    }
  }
  return os.str();
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 bool explicit_oracle, std::int64_t node_cap) {
  auto [params, rules] = load_config(config_path);
  const SimulationTrace trace = simulate(params, rules);

  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  csv::write_file_atomic((out / "cycles.csv").string(), cycles_csv(trace));
  csv::write_file_atomic((out / "metamers.csv").string(), metamers_csv(trace));
  write_json((out / "trace.json").string(), trace.to_json());

  double internode = 0.0, rings = 0.0, needles = 0.0;
  std::int64_t positions = 0;
  for (const auto& cls : trace.classes) {
    const double mult = static_cast<double>(cls.multiplicity);
    positions += cls.metamer_count();
    for (int r = 0; r < cls.metamer_count(); ++r) {
      internode += mult * cls.internode_mass[r];
      rings += mult * cls.ring_mass[r];
      needles += mult * cls.needle_mass[r];
    }
  }
  json summary{{"horizon", rules.horizon},
               {"classes", trace.classes.size()},
               {"metamer_positions", positions},
               {"total_internode_mass", internode},
               {"total_ring_mass", rings},
               {"total_needle_mass", needles},
               {"final_production", trace.cycles.empty() ? 0.0 : trace.cycles.back().production}};

  int exit_code = exit_ok;
  if (explicit_oracle) {
    const ExplicitSimResult reference = simulate_explicit(params, rules, node_cap);
    const double deviation = max_relative_deviation(trace.classes, reference);
    summary["explicit_oracle"] = {{"nodes", reference.tree.nodes.size()},
                                  {"max_relative_deviation", deviation}};
    std::cout << "explicit oracle: " << reference.tree.nodes.size()
              << " nodes, max relative deviation " << deviation << "\n";
    if (deviation > 1e-9) {
      std::cerr << "factorized state deviates from the explicit reference by " << deviation
                << "\n";
      exit_code = exit_runtime;
    }
  }
  write_json((out / "summary.json").string(), summary);
  std::cout << "simulated " << rules.horizon << " cycles, " << trace.classes.size()
            << " axis classes, " << positions << " metamer positions -> " << out_dir << "\n";
  return exit_code;
}

// --- extract ----------------------------------------------------------------

SimulationTrace load_trace(const std::string& trace_dir) {
  const fs::path path = fs::path(trace_dir) / "trace.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace: " + path.string());
  json doc;
  in >> doc;
  return SimulationTrace::from_json(doc);
}

int cmd_extract(const std::string& trace_dir, int pattern, bool per_whorl,
                const std::string& out_path) {
  const SimulationTrace trace = load_trace(trace_dir);
  const PatternVector vec =
      pattern == 1 ? extract_pattern1(trace) : extract_pattern2(trace, per_whorl);
  write_target_file(dataset_from_pattern(vec), out_path);
  std::cout << "wrote " << vec.rows.size() << " pattern-" << pattern << " rows to " << out_path
            << "\n";
  return exit_ok;
}

// --- gen-synthetic ----------------------------------------------------------

int cmd_gen_synthetic(const std::string& config_path, int pattern, bool per_whorl, double noise,
                      std::uint32_t seed, const std::string& out_path) {
  auto [params, rules] = load_config(config_path);
  const SimulationTrace trace = simulate(params, rules);
  const PatternVector vec =
      pattern == 1 ? extract_pattern1(trace) : extract_pattern2(trace, per_whorl);
  TargetDataset dataset = dataset_from_pattern(vec);
  if (noise > 0.0) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& row : dataset.rows) row.value *= std::exp(noise * gauss(rng));
  }
  write_target_file(dataset, out_path);
  std::cout << "wrote " << dataset.rows.size() << " pattern-" << pattern << " rows to "
            << out_path << (noise > 0.0 ? " (lognormal noise sigma " : "")
            << (noise > 0.0 ? std::to_string(noise) + ")" : "") << "\n";
  return exit_ok;
}

// --- fit / compare ----------------------------------------------------------

WeightingMode parse_weighting(const std::string& mode) {
  if (mode == "file") return WeightingMode::from_file;
  if (mode == "unit") return WeightingMode::unit;
  if (mode == "relative") return WeightingMode::relative;
  throw std::invalid_argument("weighting must be file, unit or relative");
}

std::vector<ParameterSpec> build_specs(const ModelParameters& params,
                                       const std::vector<std::string>& free_names,
                                       const std::string& init_path) {
  json init = json::object();
  if (!init_path.empty()) {
    std::ifstream in(init_path);
    if (!in) throw std::runtime_error("cannot open init file: " + init_path);
    in >> init;
  }
  std::vector<ParameterSpec> specs;
  for (const auto& name : free_names) {
    ParameterSpec spec;
    spec.name = name;
    std::tie(spec.lower, spec.upper) = default_bounds(name);
    spec.init = get_parameter(params, name);
    if (init.contains(name)) {
      const json& e = init.at(name);
      if (e.is_number()) {
        spec.init = e.get<double>();
      } else if (e.is_object()) {
        if (e.contains("init")) spec.init = e.at("init").get<double>();
        if (e.contains("lower")) spec.lower = e.at("lower").get<double>();
        if (e.contains("upper")) spec.upper = e.at("upper").get<double>();
      } else {
        throw std::invalid_argument("init entry for '" + name +
                                    "' must be a number or {init, lower, upper}");
      }
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

json result_to_json(const FitResult& r) {
  json estimates = json::object();
  json cv = json::object();
  for (std::size_t j = 0; j < r.names.size(); ++j) {
    estimates[r.names[j]] = r.estimates[j];
    cv[r.names[j]] = std::isfinite(r.cv_percent[j]) ? json(r.cv_percent[j]) : json("inf");
  }
  json out{{"estimates", estimates},
           {"cv_percent", cv},
           {"error", r.error},
           {"iterations", r.iterations},
           {"residual_evaluations", r.residual_evaluations},
           {"residual_count", r.residual_count},
           {"wall_seconds", r.wall_seconds},
           {"converged", r.converged},
           {"stop_reason", r.stop_reason}};
  if (r.identifiability_warning) out["identifiability_warning"] = *r.identifiability_warning;
  return out;
}

std::string iteration_csv(const FitResult& r) {
  std::ostringstream os;
  os << "iteration,error,mu,step_norm,accepted";
  for (const auto& name : r.names) os << ',' << name;
  os << "\n";
  for (const auto& row : r.iteration_log) {
    os << row.iteration << ',' << csv::format_number(row.error) << ','
       << csv::format_number(row.mu) << ',' << csv::format_number(row.step_norm) << ','
       << (row.accepted ? 1 : 0);
    for (const double v : row.estimates) os << ',' << csv::format_number(v);
    os << "\n";
  }
  return os.str();
}

std::string iterations_path(const std::string& out_path) {
  fs::path p(out_path);
  return (p.parent_path() / p.stem()).string() + "_iterations.csv";
}

void print_fit_summary(const char* label, const FitResult& r) {
  std::cout << label << ": error " << r.error << ", " << r.iterations << " iterations, "
            << r.wall_seconds << " s, " << (r.converged ? "converged" : "NOT converged") << " ("
            << r.stop_reason << ")\n";
  for (std::size_t j = 0; j < r.names.size(); ++j) {
    std::cout << "  " << r.names[j] << " = " << r.estimates[j] << " (CV% " << r.cv_percent[j]
              << ")\n";
  }
  if (r.identifiability_warning) std::cout << "  warning: " << *r.identifiability_warning << "\n";
}

int cmd_fit(const std::string& config_path, const std::string& targets_path, int pattern,
            const std::vector<std::string>& free_names, const std::string& init_path,
            const std::string& weighting, bool per_whorl, int max_iter, double tol,
            const std::string& out_path) {
  auto [params, rules] = load_config(config_path);

  FitProblem problem;
  problem.params = std::move(params);
  problem.rules = rules;
  problem.targets = parse_target_file(targets_path);
  for (const auto& w : problem.targets.warnings) std::cerr << "warning: " << w << "\n";
  if (problem.targets.pattern != pattern) {
    std::cerr << "target file is pattern " << problem.targets.pattern << " but --pattern is "
              << pattern << "\n";
    return exit_validation;
  }
  problem.free_params = build_specs(problem.params, free_names, init_path);
  problem.weighting = parse_weighting(weighting);
  problem.per_whorl = per_whorl;

  FitOptions options;
  options.max_iterations = max_iter;
  options.tolerance = tol;

  const FitResult result = fit(problem, options);
  if (!out_path.empty()) {
    write_json(out_path, result_to_json(result));
    csv::write_file_atomic(iterations_path(out_path), iteration_csv(result));
  }
  print_fit_summary("fit", result);
  return result.converged ? exit_ok : exit_no_convergence;
}

int cmd_compare(const std::string& config_path, const std::string& targets1_path,
                const std::string& targets2_path, const std::vector<std::string>& free_names,
                const std::string& init_path, const std::string& weighting, bool per_whorl,
                int max_iter, double tol, const std::string& out_path) {
  auto [params, rules] = load_config(config_path);

  auto make_problem = [&](const std::string& targets_path, int pattern) {
    FitProblem problem;
    problem.params = params;
    problem.rules = rules;
    problem.targets = parse_target_file(targets_path);
    if (problem.targets.pattern != pattern)
      throw std::invalid_argument("targets file " + targets_path + " is pattern " +
                                  std::to_string(problem.targets.pattern) + ", expected " +
                                  std::to_string(pattern));
    problem.free_params = build_specs(params, free_names, init_path);
    problem.weighting = parse_weighting(weighting);
    problem.per_whorl = per_whorl;
    return problem;
  };

  FitOptions options;
  options.max_iterations = max_iter;
  options.tolerance = tol;

  const PatternComparison cmp =
      compare_patterns(make_problem(targets1_path, 1), make_problem(targets2_path, 2), options);

  json doc;
  if (cmp.pattern1) {
    doc["pattern1"] = result_to_json(*cmp.pattern1);
    print_fit_summary("pattern 1", *cmp.pattern1);
  } else {
    doc["pattern1"] = {{"failed", cmp.error1}};
    std::cerr << "pattern 1 fit failed: " << cmp.error1 << "\n";
  }
  if (cmp.pattern2) {
    doc["pattern2"] = result_to_json(*cmp.pattern2);
    print_fit_summary("pattern 2", *cmp.pattern2);
  } else {
    doc["pattern2"] = {{"failed", cmp.error2}};
    std::cerr << "pattern 2 fit failed: " << cmp.error2 << "\n";
  }
  if (cmp.pattern1 && cmp.pattern2) {
    doc["time_ratio"] = cmp.time_ratio;
    std::cout << "pattern-1 / pattern-2 wall time ratio: " << cmp.time_ratio << "\n";
  }
  if (!out_path.empty()) write_json(out_path, doc);

  if (!cmp.pattern1 || !cmp.pattern2) return exit_runtime;
  if (!cmp.pattern1->converged || !cmp.pattern2->converged) return exit_no_convergence;
  return exit_ok;
}

// --- allometry --------------------------------------------------------------

int cmd_allometry(const std::string& in_path, const std::string& out_path) {
  const auto lines = csv::read_lines(in_path);
  if (lines.empty() || lines[0] != "q,length")
    throw std::invalid_argument("allometry input needs the header 'q,length'");
  std::vector<std::pair<double, double>> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = csv::split_line(lines[i]);
    if (fields.size() != 2)
      throw std::invalid_argument("line " + std::to_string(i + 1) + ": expected 2 fields");
    records.emplace_back(std::stod(fields[0]), std::stod(fields[1]));
  }
  const AllometryFit result = fit_allometry(records);
  std::cout << "b = " << result.b << ", beta = " << result.beta
            << ", r_squared = " << result.r_squared << " (" << records.size() << " records)\n";
  if (!out_path.empty())
    write_json(out_path,
               {{"b", result.b}, {"beta", result.beta}, {"r_squared", result.r_squared}});
  return exit_ok;
}

// --- benchmark --------------------------------------------------------------

// Seconds per run: repeats until the batch is long enough to trust, three
// batches, best batch wins.
template <class Fn>
double time_per_run(Fn&& fn) {
  using clock = std::chrono::steady_clock;
  int reps = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const double elapsed = std::chrono::duration<double>(clock::now() - t0).count();
    if (elapsed >= 0.02 || reps >= 1 << 20) break;
    reps = elapsed <= 0.0005 ? reps * 16 : reps * 2;
  }
  double best = std::numeric_limits<double>::infinity();
  for (int batch = 0; batch < 3; ++batch) {
    const auto t0 = clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const double elapsed = std::chrono::duration<double>(clock::now() - t0).count();
    best = std::min(best, elapsed / reps);
  }
  return best;
}

int cmd_benchmark(const std::string& config_path, const std::string& horizons_arg, int pa_max,
                  int nb, std::int64_t node_cap, const std::string& out_path) {
  auto [params, base_rules] = load_config(config_path);
  (void)base_rules;

  std::vector<int> horizons;
  for (const auto& field : csv::split_line(horizons_arg)) horizons.push_back(std::stoi(field));
  if (horizons.empty()) throw std::invalid_argument("no horizons to sweep");

  std::ostringstream os;
  os << "horizon,factorized_positions,explicit_nodes,node_ratio,factorized_seconds,"
        "explicit_seconds,speedup,explicit_feasible\n";
  std::cout << "horizon  positions      nodes    fact_s     expl_s   speedup\n";

  for (const int horizon : horizons) {
    OrganogenesisRules rules;
    rules.pa_max = pa_max;
    rules.branches_per_cycle.assign(std::max(pa_max - 1, 0), nb);
    rules.horizon = horizon;
    if (auto errors = validate(params, rules); !errors.empty()) throw ConfigError(errors);

    const StructureCounts counts = build_counts(rules);
    const std::int64_t nodes = counts.total_internodes();
    std::int64_t positions = 0;
    const ClassTopology topo = ClassTopology::from_counts(counts);
    for (int idx = 0; idx < topo.count(); ++idx)
      positions += rules.horizon - topo.key(idx).birth_cycle + 1;

    const double fact_s = time_per_run([&] { simulate(params, rules); });

    const bool feasible = nodes <= node_cap;
    double expl_s = 0.0;
    double speedup = 0.0;
    if (feasible) {
      expl_s = time_per_run([&] { simulate_explicit(params, rules, node_cap); });
      speedup = expl_s / fact_s;
    }

    os << horizon << ',' << positions << ',' << nodes << ','
       << csv::format_number(static_cast<double>(nodes) / static_cast<double>(positions)) << ','
       << csv::format_number(fact_s) << ',' << (feasible ? csv::format_number(expl_s) : "")
       << ',' << (feasible ? csv::format_number(speedup) : "") << ','
       << (feasible ? 1 : 0) << "\n";

    std::printf("%7d %10lld %10lld %9.3g %10s %9s\n", horizon,
                static_cast<long long>(positions), static_cast<long long>(nodes), fact_s,
                feasible ? csv::format_number(expl_s).c_str() : "over-cap",
                feasible ? csv::format_number(speedup).c_str() : "-");
  }

  if (!out_path.empty()) csv::write_file_atomic(out_path, os.str());
  return exit_ok;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Functional-structural tree growth simulator and calibrator"};
  app.require_subcommand(1);
  app.footer(
      "Config JSON: top-level objects \"parameters\" and \"rules\".\n"
      "  parameters: r, k_beer, s_p, env, sink_needle, sink_internode,\n"
      "    ring_sink_const, ring_sink_slope, lambda_pressler, ring_density,\n"
      "    allometry_b, allometry_beta, slw, needle_lifespan, wood_density,\n"
      "    seed_biomass, pressler_counts_own_needles, pressler_mass_weighted.\n"
      "    Per-PA fields are arrays indexed from PA 1. env is a constant, an\n"
      "    array (one entry per growth cycle), or {values, fill}; default 1.0.\n"
      "  rules: pa_max, branches_per_cycle (array over PA 1..pa_max-1), horizon.\n"
      "Target CSV header: pattern,kind,pa,birth_cycle,rank,value,unit,weight\n"
      "  pattern-1 kinds: stem_len, stem_wood, stem_needle, branch_len,\n"
      "    branch_wood, branch_needle (per axis class: pa, birth_cycle, rank).\n"
      "  pattern-2 kinds: stem_len, stem_radius, stem_wood, stem_needle,\n"
      "    crown_branch_wood, crown_branch_needle (crown rows use pa=0, rank=0;\n"
      "    birth_cycle=0 for whole-crown, or the whorl cycle with --per-whorl).\n"
      "  units: cm for lengths and radii, g for masses.\n"
      "Allometry CSV header: q,length\n"
      "Exit codes: 0 success, 1 validation, 2 runtime, 3 non-convergence.\n"
      "FSTM_NODE_CAP overrides the explicit-expansion node cap (default 1e7).");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the growth model and export the trace");
  std::string config_path, out_dir;
  bool explicit_oracle = false;
  std::int64_t node_cap = default_node_cap();
  sim->add_option("--config", config_path, "Model configuration JSON")->required();
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_flag("--explicit-oracle", explicit_oracle,
                "Also run the per-node reference simulation and compare");
  sim->add_option("--node-cap", node_cap, "Explicit-expansion node cap");

  // extract
  auto* ext = app.add_subcommand("extract", "Extract a pattern vector from a saved trace");
  std::string trace_dir, target_out;
  int pattern = 1;
  bool per_whorl = false;
  ext->add_option("--trace", trace_dir, "Directory written by simulate")->required();
  ext->add_option("--pattern", pattern, "1 = organ level, 2 = compartment level")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  ext->add_flag("--per-whorl", per_whorl, "Split pattern-2 crown totals by whorl");
  ext->add_option("--out", target_out, "Target CSV to write")->required();

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Simulate and write a synthetic target file");
  double noise = 0.0;
  std::uint32_t seed = 0;
  gen->add_option("--config", config_path, "Model configuration JSON")->required();
  gen->add_option("--pattern", pattern, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  gen->add_option("--noise", noise, "Multiplicative lognormal noise sigma");
  gen->add_option("--seed", seed, "Noise RNG seed");
  gen->add_flag("--per-whorl", per_whorl, "Split pattern-2 crown totals by whorl");
  gen->add_option("--out", target_out, "Target CSV to write")->required();

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Calibrate free parameters against a target file");
  std::string targets_path, init_path, report_path, weighting = "file";
  std::vector<std::string> free_names;
  int max_iter = 200;
  double tol = 1e-8;
  int threads = 0;
  fit_cmd->add_option("--config", config_path, "Model configuration JSON")->required();
  fit_cmd->add_option("--targets", targets_path, "Target CSV")->required();
  fit_cmd->add_option("--pattern", pattern, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  fit_cmd->add_option("--free", free_names, "Free parameter names (comma separated)")
      ->required()
      ->delimiter(',');
  fit_cmd->add_option("--init", init_path, "JSON with initial values and bounds per parameter");
  fit_cmd->add_option("--weighting", weighting, "file, unit or relative");
  fit_cmd->add_flag("--per-whorl", per_whorl, "Pattern-2 crown totals split by whorl");
  fit_cmd->add_option("--max-iter", max_iter, "Iteration cap");
  fit_cmd->add_option("--tol", tol, "Relative error-decrease tolerance");
  fit_cmd->add_option("--threads", threads, "Jacobian evaluation threads (0 = default)");
  fit_cmd->add_option("--out", report_path, "Report JSON (iteration log written alongside)");

  // compare
  auto* cmp = app.add_subcommand("compare", "Fit patterns 1 and 2 and compare error and time");
  std::string targets1_path, targets2_path;
  cmp->add_option("--config", config_path, "Model configuration JSON")->required();
  cmp->add_option("--targets1", targets1_path, "Pattern-1 target CSV")->required();
  cmp->add_option("--targets2", targets2_path, "Pattern-2 target CSV")->required();
  cmp->add_option("--free", free_names, "Free parameter names")->required()->delimiter(',');
  cmp->add_option("--init", init_path, "JSON with initial values and bounds per parameter");
  cmp->add_option("--weighting", weighting, "file, unit or relative");
  cmp->add_flag("--per-whorl", per_whorl, "Pattern-2 crown totals split by whorl");
  cmp->add_option("--max-iter", max_iter, "Iteration cap");
  cmp->add_option("--tol", tol, "Relative error-decrease tolerance");
  cmp->add_option("--threads", threads, "Jacobian evaluation threads (0 = default)");
  cmp->add_option("--out", report_path, "Comparison JSON");

  // allometry
  auto* allo = app.add_subcommand("allometry", "Log-log power-law fit of (q, length) records");
  std::string allo_in, allo_out;
  allo->add_option("--in", allo_in, "CSV with header q,length")->required();
  allo->add_option("--out", allo_out, "Result JSON");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Factorized vs explicit simulation sweep");
  std::string horizons = "5,10,15,20";
  int bench_pa_max = 4, bench_nb = 2;
  std::string bench_out;
  bench->add_option("--config", config_path, "Model configuration JSON")->required();
  bench->add_option("--horizons", horizons, "Comma-separated horizons to sweep");
  bench->add_option("--pa-max", bench_pa_max, "Maximum physiological age");
  bench->add_option("--nb", bench_nb, "Laterals per new metamer");
  bench->add_option("--node-cap", node_cap, "Explicit-expansion node cap");
  bench->add_option("--out", bench_out, "Sweep CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_validation;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir, explicit_oracle, node_cap);
    if (ext->parsed()) return cmd_extract(trace_dir, pattern, per_whorl, target_out);
    if (gen->parsed())
      return cmd_gen_synthetic(config_path, pattern, per_whorl, noise, seed, target_out);
    if (fit_cmd->parsed())
      return cmd_fit(config_path, targets_path, pattern, free_names, init_path, weighting,
                     per_whorl, max_iter, tol, report_path);
    if (cmp->parsed())
      return cmd_compare(config_path, targets1_path, targets2_path, free_names, init_path,
                         weighting, per_whorl, max_iter, tol, report_path);
    if (allo->parsed()) return cmd_allometry(allo_in, allo_out);
    if (bench->parsed())
      return cmd_benchmark(config_path, horizons, bench_pa_max, bench_nb, node_cap, bench_out);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return exit_validation;
  } catch (const TargetFileError& e) {
    std::cerr << e.what() << "\n";
    return exit_validation;
  } catch (const AlignmentError& e) {
    std::cerr << e.what() << "\n";
    return exit_validation;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return exit_validation;
  } catch (const FitError& e) {
    std::cerr << e.what() << "\n";
    return exit_runtime;
  } catch (const NodeCapError& e) {
    std::cerr << e.what() << "\n";
    return exit_runtime;
  } catch (const EngineError& e) {
    std::cerr << e.what() << "\n";
    return exit_runtime;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return exit_runtime;
  }
  return exit_validation;
}

}  // namespace fstm::cli
