#include "fstm/calibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fstm/engine.hpp"
#include "fstm/linalg.hpp"

namespace fstm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ScalarEntry {
  const char* name;
  double ModelParameters::* member;
};

constexpr ScalarEntry kScalars[] = {
    {"r", &ModelParameters::r},
    {"k_beer", &ModelParameters::k_beer},
    {"s_p", &ModelParameters::s_p},
    {"ring_sink_const", &ModelParameters::ring_sink_const},
    {"ring_sink_slope", &ModelParameters::ring_sink_slope},
    {"lambda", &ModelParameters::lambda_pressler},
    {"slw", &ModelParameters::slw},
    {"wood_density", &ModelParameters::wood_density},
    {"seed_biomass", &ModelParameters::seed_biomass},
};

struct ArrayEntry {
  const char* name;
  std::vector<double> ModelParameters::* member;
};

constexpr ArrayEntry kArrays[] = {
    {"sink_needle", &ModelParameters::sink_needle},
    {"sink_internode", &ModelParameters::sink_internode},
    {"p_rg", &ModelParameters::ring_density},
    {"allometry_b", &ModelParameters::allometry_b},
    {"allometry_beta", &ModelParameters::allometry_beta},
};

// Splits "p_rg[2]" into base name and PA; pa stays 0 for scalar names.
bool split_indexed(const std::string& name, std::string& base, int& pa) {
  const auto open = name.find('[');
  if (open == std::string::npos) {
    base = name;
    pa = 0;
    return true;
  }
  if (name.back() != ']') return false;
  base = name.substr(0, open);
  const std::string idx = name.substr(open + 1, name.size() - open - 2);
  char* end = nullptr;
  const long v = std::strtol(idx.c_str(), &end, 10);
  if (end != idx.c_str() + idx.size() || v < 1) return false;
  pa = static_cast<int>(v);
  return true;
}

[[noreturn]] void unknown_parameter(const std::string& name) {
  throw std::invalid_argument("unknown parameter '" + name +
                              "' (scalars: r, k_beer, s_p, ring_sink_const, ring_sink_slope, "
                              "lambda, slw, wood_density, seed_biomass; per-PA: sink_needle[k], "
                              "sink_internode[k], p_rg[k], allometry_b[k], allometry_beta[k])");
}

}  // namespace

std::vector<std::string> parameter_names(const ModelParameters& params) {
  std::vector<std::string> names;
  for (const auto& s : kScalars) names.push_back(s.name);
  for (const auto& a : kArrays) {
    const auto& vec = params.*a.member;
    for (std::size_t i = 0; i < vec.size(); ++i)
      names.push_back(std::string(a.name) + "[" + std::to_string(i + 1) + "]");
  }
  return names;
}

double get_parameter(const ModelParameters& params, const std::string& name) {
  std::string base;
  int pa = 0;
  if (!split_indexed(name, base, pa)) unknown_parameter(name);
  if (pa == 0) {
    for (const auto& s : kScalars) {
      if (base == s.name) return params.*s.member;
    }
    unknown_parameter(name);
  }
  for (const auto& a : kArrays) {
    if (base != a.name) continue;
    const auto& vec = params.*a.member;
    if (pa > static_cast<int>(vec.size()))
      throw std::invalid_argument("parameter '" + name + "' indexes past PA " +
                                  std::to_string(vec.size()));
    return vec[pa - 1];
  }
  unknown_parameter(name);
}

void set_parameter(ModelParameters& params, const std::string& name, double value) {
  std::string base;
  int pa = 0;
  if (!split_indexed(name, base, pa)) unknown_parameter(name);
  if (pa == 0) {
    for (const auto& s : kScalars) {
      if (base == s.name) {
        params.*s.member = value;
        return;
      }
    }
    unknown_parameter(name);
  }
  for (const auto& a : kArrays) {
    if (base != a.name) continue;
    auto& vec = params.*a.member;
    if (pa > static_cast<int>(vec.size()))
      throw std::invalid_argument("parameter '" + name + "' indexes past PA " +
                                  std::to_string(vec.size()));
    vec[pa - 1] = value;
    return;
  }
  unknown_parameter(name);
}

std::pair<double, double> default_bounds(const std::string& name) {
  std::string base;
  int pa = 0;
  if (!split_indexed(name, base, pa)) unknown_parameter(name);
  if (base == "lambda") return {0.0, 1.0};
  return {0.0, kInf};
}

AlignmentError::AlignmentError(std::vector<std::string> unmatched)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "target rows with no simulated counterpart:";
        for (const auto& u : unmatched) os << "\n  - " << u;
        return os.str();
      }()),
      unmatched_(std::move(unmatched)) {}

FitError::FitError(const std::string& what) : std::runtime_error(what) {}

namespace {

// Smooth reparameterization keeping every iterate inside its bounds:
// log for (lo, inf), scaled logit for finite intervals.
struct Transform {
  double lo = 0.0;
  double hi = kInf;

  double to_internal(double x) const {
    if (std::isinf(hi)) return std::log(x - lo);
    return std::log((x - lo) / (hi - x));
  }
  double to_natural(double phi) const {
    if (std::isinf(hi)) return lo + std::exp(phi);
    return lo + (hi - lo) / (1.0 + std::exp(-phi));
  }
  // d natural / d internal, for the delta method on standard errors.
  double slope(double phi) const {
    if (std::isinf(hi)) return std::exp(phi);
    const double s = 1.0 / (1.0 + std::exp(-phi));
    return (hi - lo) * s * (1.0 - s);
  }
  double clamp_inside(double x) const {
    if (std::isinf(hi)) {
      const double floor = lo + std::max(1e-12, std::fabs(lo) * 1e-12);
      return std::max(x, floor);
    }
    const double margin = (hi - lo) * 1e-9;
    return std::clamp(x, lo + margin, hi - margin);
  }
};

std::int64_t row_key(ObservableKind kind, int pa, int birth, int rank) {
  return ((static_cast<std::int64_t>(kind) * 256 + pa) * 65536 + birth) * 65536 + rank;
}

// Everything fixed across residual evaluations of one problem. Each Jacobian
// thread owns one simulator that is reset, not rebuilt, per evaluation.
struct EvalSlot {
  std::unique_ptr<Simulator> simulator;
  ModelParameters params;
};

struct ResidualContext {
  const FitProblem* problem = nullptr;
  std::shared_ptr<const StructureCounts> counts;
  std::shared_ptr<const ClassTopology> topo;
  std::vector<int> sim_index;     // pattern-vector position per target row
  std::vector<double> observed;
  std::vector<double> sqrt_weight;
  std::vector<Transform> transforms;
  mutable std::vector<EvalSlot> slots;  // one per thread

  int m() const { return static_cast<int>(observed.size()); }
  int n() const { return static_cast<int>(transforms.size()); }

  EvalSlot& slot() const {
    int tid = 0;
#ifdef _OPENMP
    tid = omp_get_thread_num();
#endif
    if (tid >= static_cast<int>(slots.size()))
      throw FitError("more evaluation threads than prepared simulator slots");
    return slots[tid];
  }

  PatternVector extract(const Simulator& sim, const ModelParameters& params) const {
    return problem->targets.pattern == 1
               ? extract_pattern1(sim.classes())
               : extract_pattern2(sim.classes(), params.wood_density, problem->rules.horizon,
                                  problem->per_whorl);
  }

  // Weighted residuals at natural-scale free parameter values.
  std::vector<double> eval(std::span<const double> theta) const {
    EvalSlot& s = slot();
    s.params = problem->params;
    for (std::size_t j = 0; j < problem->free_params.size(); ++j)
      set_parameter(s.params, problem->free_params[j].name, theta[j]);
    s.simulator->reset(s.params);
    s.simulator->run_to_horizon();
    const PatternVector vec = extract(*s.simulator, s.params);
    std::vector<double> res(observed.size());
    for (std::size_t t = 0; t < observed.size(); ++t)
      res[t] = sqrt_weight[t] * (vec.rows[sim_index[t]].value - observed[t]);
    return res;
  }

  std::vector<double> eval_internal(std::span<const double> phi) const {
    std::vector<double> theta(phi.size());
    for (std::size_t j = 0; j < phi.size(); ++j) theta[j] = transforms[j].to_natural(phi[j]);
    return eval(theta);
  }
};

ResidualContext build_context(const FitProblem& problem) {
  ResidualContext ctx;
  ctx.problem = &problem;
  ctx.counts = std::make_shared<StructureCounts>(build_counts(problem.rules));
  ctx.topo = std::make_shared<ClassTopology>(ClassTopology::from_counts(*ctx.counts));

  int threads = 1;
#ifdef _OPENMP
  threads = std::max(1, omp_get_max_threads());
#endif
  ctx.slots.resize(threads);
  for (auto& s : ctx.slots) {
    s.simulator = std::make_unique<Simulator>(problem.params, problem.rules, ctx.counts,
                                              ctx.topo);
    s.params = problem.params;
  }

  for (const auto& spec : problem.free_params) {
    get_parameter(problem.params, spec.name);  // validates the name
    if (!(spec.lower < spec.upper))
      throw FitError("parameter '" + spec.name + "' has an empty bound interval");
    if (spec.init < spec.lower || spec.init > spec.upper)
      throw FitError("initial value of '" + spec.name + "' lies outside its bounds");
    ctx.transforms.push_back({spec.lower, spec.upper});
  }

  // The observable schema depends only on the rules, so one extraction of the
  // fixed parameters aligns every future evaluation.
  ctx.slots[0].simulator->run_to_horizon();
  const PatternVector vec = ctx.extract(*ctx.slots[0].simulator, problem.params);
  std::unordered_map<std::int64_t, int> index;
  index.reserve(vec.rows.size());
  for (std::size_t i = 0; i < vec.rows.size(); ++i) {
    const auto& row = vec.rows[i];
    index.emplace(row_key(row.kind, row.pa, row.birth_cycle, row.rank), static_cast<int>(i));
  }

  std::vector<std::string> unmatched;
  for (std::size_t t = 0; t < problem.targets.rows.size(); ++t) {
    const auto& row = problem.targets.rows[t];
    const auto it = index.find(row_key(row.kind, row.pa, row.birth_cycle, row.rank));
    if (it == index.end()) {
      std::ostringstream os;
      os << "row " << t + 1 << ": " << kind_name(row.kind) << " pa=" << row.pa
         << " birth_cycle=" << row.birth_cycle << " rank=" << row.rank;
      unmatched.push_back(os.str());
      continue;
    }
    ctx.sim_index.push_back(it->second);
    ctx.observed.push_back(row.value);
    double w = 1.0;
    switch (problem.weighting) {
      case WeightingMode::from_file:
        w = row.weight;
        break;
      case WeightingMode::unit:
        w = 1.0;
        break;
      case WeightingMode::relative:
        w = 1.0 / std::max(row.value * row.value, 1e-12);
        break;
    }
    ctx.sqrt_weight.push_back(std::sqrt(w));
  }
  if (!unmatched.empty()) throw AlignmentError(std::move(unmatched));
  return ctx;
}

// Forward-difference Jacobian in internal coordinates; columns evaluated
// concurrently, each into its own slot, so the result is schedule-independent.
std::vector<std::vector<double>> jacobian_forward(const ResidualContext& ctx,
                                                  std::span<const double> phi,
                                                  std::span<const double> res0,
                                                  int* evaluations = nullptr) {
  const int n = ctx.n();
  std::vector<std::vector<double>> jac(n);
  std::exception_ptr failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int j = 0; j < n; ++j) {
    try {
      // Residuals come out of a long simulation chain whose accumulated
      // rounding dwarfs eps*|res|; cbrt(eps) keeps the difference quotient
      // above that noise at the cost of slightly more truncation.
      const double h0 = std::cbrt(std::numeric_limits<double>::epsilon()) *
                        (1.0 + std::fabs(phi[j]));
      std::vector<double> phi_step(phi.begin(), phi.end());
      phi_step[j] += h0;
      const double h = phi_step[j] - phi[j];
      auto res = ctx.eval_internal(phi_step);
      for (std::size_t t = 0; t < res.size(); ++t) res[t] = (res[t] - res0[t]) / h;
      jac[j] = std::move(res);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  if (evaluations) *evaluations += n;
  return jac;
}

std::vector<std::vector<double>> jacobian_central(const ResidualContext& ctx,
                                                  std::span<const double> phi) {
  const int n = ctx.n();
  std::vector<std::vector<double>> jac(n);
  std::exception_ptr failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (int j = 0; j < n; ++j) {
    try {
      const double h0 = std::cbrt(std::numeric_limits<double>::epsilon()) *
                        (1.0 + std::fabs(phi[j]));
      std::vector<double> hi(phi.begin(), phi.end());
      std::vector<double> lo(phi.begin(), phi.end());
      hi[j] += h0;
      lo[j] -= h0;
      const double h2 = hi[j] - lo[j];
      auto res_hi = ctx.eval_internal(hi);
      const auto res_lo = ctx.eval_internal(lo);
      for (std::size_t t = 0; t < res_hi.size(); ++t) res_hi[t] = (res_hi[t] - res_lo[t]) / h2;
      jac[j] = std::move(res_hi);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return jac;
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return s;
}

std::string describe_direction(const std::vector<std::string>& names,
                               const std::vector<double>& vec) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (std::fabs(vec[j]) < 0.1) continue;
    if (!first) os << (vec[j] >= 0 ? " + " : " - ");
    else if (vec[j] < 0) os << "-";
    os << std::fabs(vec[j]) << "*" << names[j];
    first = false;
  }
  return os.str();
}

}  // namespace

std::vector<double> residuals(std::span<const double> theta, const FitProblem& problem) {
  if (theta.size() != problem.free_params.size())
    throw FitError("theta has " + std::to_string(theta.size()) + " entries for " +
                   std::to_string(problem.free_params.size()) + " free parameters");
  const ResidualContext ctx = build_context(problem);
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const auto& spec = problem.free_params[j];
    if (theta[j] < spec.lower || theta[j] > spec.upper)
      throw FitError("theta for '" + spec.name + "' lies outside its bounds");
  }
  return ctx.eval(theta);
}

std::vector<std::vector<double>> forward_jacobian(const FitProblem& problem,
                                                  std::span<const double> theta) {
  const ResidualContext ctx = build_context(problem);
  std::vector<double> phi(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j)
    phi[j] = ctx.transforms[j].to_internal(ctx.transforms[j].clamp_inside(theta[j]));
  const auto res0 = ctx.eval_internal(phi);
  return jacobian_forward(ctx, phi, res0);
}

std::vector<std::vector<double>> central_jacobian(const FitProblem& problem,
                                                  std::span<const double> theta) {
  const ResidualContext ctx = build_context(problem);
  std::vector<double> phi(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j)
    phi[j] = ctx.transforms[j].to_internal(ctx.transforms[j].clamp_inside(theta[j]));
  return jacobian_central(ctx, phi);
}

FitResult fit(const FitProblem& problem, const FitOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  const ResidualContext ctx = build_context(problem);
  const int n = ctx.n();
  const int m = ctx.m();

  FitResult result;
  for (const auto& spec : problem.free_params) result.names.push_back(spec.name);
  result.residual_count = m;

  auto finish = [&](FitResult& r) {
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                         .count();
    return r;
  };

  if (n == 0) {
    const auto res = ctx.eval({});
    result.error = squared_norm(res);
    result.residual_evaluations = 1;
    result.converged = true;
    result.stop_reason = "no free parameters";
    return finish(result);
  }
  if (m == 0) throw FitError("no target rows to fit against");
  if (m < n)
    throw FitError("only " + std::to_string(m) + " observations for " + std::to_string(n) +
                   " free parameters");

  std::vector<double> phi(n);
  for (int j = 0; j < n; ++j) {
    const auto& tr = ctx.transforms[j];
    phi[j] = tr.to_internal(tr.clamp_inside(problem.free_params[j].init));
  }

  std::vector<double> res = ctx.eval_internal(phi);
  int evaluations = 1;
  double error = squared_norm(res);

  auto natural = [&](const std::vector<double>& phi_now) {
    std::vector<double> theta(n);
    for (int j = 0; j < n; ++j) theta[j] = ctx.transforms[j].to_natural(phi_now[j]);
    return theta;
  };

  auto log_iteration = [&](int iter, double mu, double step_norm, bool accepted) {
    if (!options.record_iterations) return;
    result.iteration_log.push_back({iter, error, mu, step_norm, accepted, natural(phi)});
  };
  log_iteration(0, 0.0, 0.0, true);

  double mu = -1.0;  // set from the first Jacobian
  double nu = 2.0;
  std::string stop;
  bool converged = false;
  int iter = 0;

  std::vector<std::vector<double>> jac;
  std::vector<double> a(n * n), g(n);
  // Damping scale per direction, kept at its historical maximum so a
  // direction that goes flat (a bounded parameter on a plateau) cannot
  // regain an unbounded step.
  std::vector<double> scale(n, 0.0);

  while (iter < options.max_iterations && stop.empty()) {
    ++iter;
    jac = jacobian_forward(ctx, phi, res, &evaluations);

    // normal equations: a = J^T J, g = J^T res
    for (int j = 0; j < n; ++j) {
      for (int k = j; k < n; ++k) {
        double s = 0.0;
        for (int t = 0; t < m; ++t) s += jac[j][t] * jac[k][t];
        a[j * n + k] = s;
        a[k * n + j] = s;
      }
      double s = 0.0;
      for (int t = 0; t < m; ++t) s += jac[j][t] * res[t];
      g[j] = s;
    }

    double max_diag = 0.0;
    for (int j = 0; j < n; ++j) max_diag = std::max(max_diag, a[j * n + j]);
    for (int j = 0; j < n; ++j) scale[j] = std::max(scale[j], a[j * n + j]);
    if (max_diag == 0.0) {
      std::vector<double> nul(n, 0.0);
      nul[0] = 1.0;
      throw FitError("non-identifiable parameter set: every Jacobian column is zero (" +
                     describe_direction(result.names, nul) + ")");
    }
    if (iter == 1) {
      // An exactly-zero column at the start means the parameter provably
      // cannot move any observable. Later iterations may park a bounded
      // parameter against its bound, which squeezes the internal column
      // toward zero without meaning non-identifiability.
      for (int j = 0; j < n; ++j) {
        if (a[j * n + j] == 0.0) {
          throw FitError("non-identifiable parameter set: '" + result.names[j] +
                         "' has no effect on the fitted observables (zero Jacobian column)");
        }
      }
    }

    double g_inf = 0.0;
    for (int j = 0; j < n; ++j) g_inf = std::max(g_inf, std::fabs(g[j]));
    if (g_inf <= options.gradient_tolerance * std::max(1.0, error)) {
      stop = "gradient within tolerance";
      converged = true;
      break;
    }

    if (mu < 0.0) mu = 1e-3 * max_diag;

    bool stepped = false;
    while (!stepped && stop.empty()) {
      std::vector<double> damped = a;
      for (int j = 0; j < n; ++j)
        damped[j * n + j] += mu * std::max(scale[j], 1e-30 * max_diag);
      std::vector<double> rhs(n);
      for (int j = 0; j < n; ++j) rhs[j] = -g[j];
      auto delta = solve_spd(std::move(damped), std::move(rhs));
      if (!delta) {
        mu *= 10.0;
        nu = 2.0;
        if (mu > 1e32 * max_diag) {
          const EigenSym eig = eigen_sym(a, n);
          std::vector<double> nul(n);
          for (int j = 0; j < n; ++j) nul[j] = eig.vectors[j * static_cast<std::size_t>(n)];
          throw FitError("non-identifiable parameter set: normal matrix is singular along " +
                         describe_direction(result.names, nul));
        }
        continue;
      }

      double step_norm2 = 0.0, phi_norm2 = 0.0;
      for (int j = 0; j < n; ++j) {
        step_norm2 += (*delta)[j] * (*delta)[j];
        phi_norm2 += phi[j] * phi[j];
      }
      const double step_norm = std::sqrt(step_norm2);

      // The internal coordinates are logarithmic, so a long step is a huge
      // multiplicative jump that tends to strand parameters on plateaus.
      // Re-damp instead of evaluating such a step.
      if (step_norm > options.max_step_norm) {
        mu = std::max(mu * 4.0, 1e-12 * max_diag);
        nu = 2.0;
        continue;
      }

      std::vector<double> phi_try(n);
      for (int j = 0; j < n; ++j) phi_try[j] = phi[j] + (*delta)[j];
      const auto res_try = ctx.eval_internal(phi_try);
      ++evaluations;
      const double error_try = squared_norm(res_try);

      if (error_try < error) {
        // gain ratio drives the damping update
        double predicted = 0.0;
        for (int j = 0; j < n; ++j)
          predicted += (*delta)[j] * (mu * scale[j] * (*delta)[j] - g[j]);
        const double rho = predicted > 0.0 ? (error - error_try) / predicted : 1.0;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3.0));
        nu = 2.0;

        const double decrease = (error - error_try) / std::max(error, 1e-300);
        phi = std::move(phi_try);
        res = res_try;
        error = error_try;
        stepped = true;
        log_iteration(iter, mu, step_norm, true);

        if (decrease < options.tolerance) {
          stop = "relative error decrease within tolerance";
          converged = true;
        } else if (step_norm <=
                   options.step_tolerance * (std::sqrt(phi_norm2) + options.step_tolerance)) {
          stop = "step norm within tolerance";
          converged = true;
        } else if (error == 0.0) {
          stop = "exact fit";
          converged = true;
        }
      } else {
        log_iteration(iter, mu, step_norm, false);
        mu *= nu;
        nu *= 2.0;
        if (step_norm <=
            options.step_tolerance * (std::sqrt(phi_norm2) + options.step_tolerance)) {
          stop = "step norm within tolerance";
          converged = true;
        } else if (!std::isfinite(mu) || mu > 1e32 * max_diag) {
          stop = "damping exhausted without further decrease";
          converged = true;
        }
      }
    }
  }

  if (stop.empty()) {
    stop = "maximum iterations reached";
    converged = false;
  }

  result.estimates = natural(phi);
  result.error = error;
  result.iterations = iter;
  result.residual_evaluations = evaluations;
  result.converged = converged;
  result.stop_reason = stop;

  // covariance of the estimates at the optimum, via the internal coordinates
  jac = jacobian_forward(ctx, phi, res, &evaluations);
  result.residual_evaluations = evaluations;
  for (int j = 0; j < n; ++j) {
    for (int k = j; k < n; ++k) {
      double s = 0.0;
      for (int t = 0; t < m; ++t) s += jac[j][t] * jac[k][t];
      a[j * n + k] = s;
      a[k * n + j] = s;
    }
  }
  const double sigma2 = m > n ? error / static_cast<double>(m - n) : 0.0;
  const EigenSym eig = eigen_sym(a, n);
  const double eig_max = eig.values[n - 1];
  result.cv_percent.assign(n, 0.0);
  if (!(eig_max > 0.0) || eig.values[0] <= 1e-12 * eig_max) {
    std::vector<double> nul(n);
    for (int j = 0; j < n; ++j) nul[j] = eig.vectors[j * static_cast<std::size_t>(n)];
    result.identifiability_warning =
        "normal matrix nearly singular at the optimum; weak direction: " +
        describe_direction(result.names, nul);
    result.cv_percent.assign(n, kInf);
  } else {
    for (int j = 0; j < n; ++j) {
      double cov_jj = 0.0;
      for (int k = 0; k < n; ++k) {
        const double v = eig.vectors[j * static_cast<std::size_t>(n) + k];
        cov_jj += v * v / eig.values[k];
      }
      const double se_phi = std::sqrt(sigma2 * cov_jj);
      const double se_nat = se_phi * std::fabs(ctx.transforms[j].slope(phi[j]));
      const double estimate = std::fabs(result.estimates[j]);
      result.cv_percent[j] = estimate > 0.0 ? 100.0 * se_nat / estimate : kInf;
    }
  }

  return finish(result);
}

PatternComparison compare_patterns(const FitProblem& problem1, const FitProblem& problem2,
                                   const FitOptions& options) {
  PatternComparison cmp;
  try {
    cmp.pattern1 = fit(problem1, options);
  } catch (const std::exception& e) {
    cmp.error1 = e.what();
  }
  try {
    cmp.pattern2 = fit(problem2, options);
  } catch (const std::exception& e) {
    cmp.error2 = e.what();
  }
  if (cmp.pattern1 && cmp.pattern2 && cmp.pattern2->wall_seconds > 0.0)
    cmp.time_ratio = cmp.pattern1->wall_seconds / cmp.pattern2->wall_seconds;
  return cmp;
}

}  // namespace fstm
