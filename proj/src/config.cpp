#include "fstm/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fstm/csv.hpp"

namespace fstm {

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::ostringstream os;
  os << "configuration invalid:";
  for (const auto& e : errors) os << "\n  - " << e;
  return os.str();
}

bool finite_positive(double x) { return std::isfinite(x) && x > 0.0; }

void check_per_pa(const std::vector<double>& v, const char* name, int pa_max,
                  std::vector<std::string>& errors, bool strictly_positive = false) {
  if (static_cast<int>(v.size()) < pa_max) {
    std::ostringstream os;
    os << name << " must cover every PA up to " << pa_max << " (has " << v.size()
       << " entries, missing PA " << v.size() + 1 << ")";
    errors.push_back(os.str());
    return;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || v[i] < 0.0 || (strictly_positive && v[i] == 0.0)) {
      std::ostringstream os;
      os << name << "[" << i + 1 << "] must be " << (strictly_positive ? "> 0" : ">= 0");
      errors.push_back(os.str());
    }
  }
}

}  // namespace

double ModelParameters::env_at(int cycle) const {
  if (cycle >= 1 && cycle <= static_cast<int>(env.size())) return env[cycle - 1];
  return env_fill.value_or(1.0);
}

int OrganogenesisRules::branches_at(int pa) const {
  if (pa < 1 || pa >= pa_max) return 0;
  if (pa > static_cast<int>(branches_per_cycle.size())) return 0;
  return branches_per_cycle[pa - 1];
}

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

std::vector<std::string> validate(const ModelParameters& p, const OrganogenesisRules& rules) {
  std::vector<std::string> errors;

  if (!finite_positive(p.r)) errors.push_back("r must be > 0");
  if (!finite_positive(p.k_beer)) errors.push_back("k_beer must be > 0");
  if (!finite_positive(p.s_p)) errors.push_back("s_p must be > 0");
  if (!finite_positive(p.slw)) errors.push_back("slw must be > 0");
  if (!finite_positive(p.wood_density)) errors.push_back("wood_density must be > 0");
  if (!std::isfinite(p.seed_biomass) || p.seed_biomass < 0.0)
    errors.push_back("seed_biomass must be >= 0");
  if (!std::isfinite(p.ring_sink_const) || p.ring_sink_const < 0.0)
    errors.push_back("ring_sink_const must be >= 0");
  if (!std::isfinite(p.ring_sink_slope) || p.ring_sink_slope < 0.0)
    errors.push_back("ring_sink_slope must be >= 0");
  if (!std::isfinite(p.lambda_pressler) || p.lambda_pressler < 0.0 || p.lambda_pressler > 1.0)
    errors.push_back("lambda_pressler must be within [0, 1]");
  if (p.needle_lifespan < 1) errors.push_back("needle_lifespan must be >= 1");

  if (rules.pa_max < 1) errors.push_back("pa_max must be >= 1");
  if (rules.horizon < 1) errors.push_back("horizon must be >= 1");
  if (static_cast<int>(rules.branches_per_cycle.size()) < rules.pa_max - 1) {
    std::ostringstream os;
    os << "branches_per_cycle must cover every PA up to " << rules.pa_max - 1 << " (has "
       << rules.branches_per_cycle.size() << " entries, missing PA "
       << rules.branches_per_cycle.size() + 1 << ")";
    errors.push_back(os.str());
  }
  for (std::size_t i = 0; i < rules.branches_per_cycle.size(); ++i) {
    if (rules.branches_per_cycle[i] < 0) {
      std::ostringstream os;
      os << "branches_per_cycle[" << i + 1 << "] must be >= 0";
      errors.push_back(os.str());
    }
  }

  const int pa_max = std::max(rules.pa_max, 1);
  check_per_pa(p.sink_needle, "sink_needle", pa_max, errors);
  check_per_pa(p.sink_internode, "sink_internode", pa_max, errors);
  check_per_pa(p.ring_density, "ring_density", pa_max, errors);
  check_per_pa(p.allometry_b, "allometry_b", pa_max, errors, /*strictly_positive=*/true);
  if (static_cast<int>(p.allometry_beta.size()) < pa_max) {
    std::ostringstream os;
    os << "allometry_beta must cover every PA up to " << pa_max << " (has "
       << p.allometry_beta.size() << " entries, missing PA " << p.allometry_beta.size() + 1
       << ")";
    errors.push_back(os.str());
  }

  if (!p.sink_needle.empty() && p.sink_needle[0] != 1.0)
    errors.push_back("sink_needle[1] must equal 1 after normalization");
  if (!p.ring_density.empty() && p.ring_density[0] != 1.0)
    errors.push_back("ring_density[1] must equal 1 after normalization");

  if (!p.env_fill.has_value() && static_cast<int>(p.env.size()) < rules.horizon) {
    std::ostringstream os;
    os << "env has " << p.env.size() << " entries for a horizon of " << rules.horizon
       << " and declares no fill value";
    errors.push_back(os.str());
  }
  for (std::size_t i = 0; i < p.env.size(); ++i) {
    if (!std::isfinite(p.env[i]) || p.env[i] < 0.0) {
      std::ostringstream os;
      os << "env[" << i + 1 << "] must be >= 0";
      errors.push_back(os.str());
    }
  }

  return errors;
}

void normalize(ModelParameters& p) {
  if (!p.sink_needle.empty() && p.sink_needle[0] > 0.0 && p.sink_needle[0] != 1.0) {
    const double scale = p.sink_needle[0];
    for (auto& v : p.sink_needle) v /= scale;
    for (auto& v : p.sink_internode) v /= scale;
    p.sink_needle[0] = 1.0;
  }
  if (!p.ring_density.empty() && p.ring_density[0] > 0.0 && p.ring_density[0] != 1.0) {
    const double scale = p.ring_density[0];
    for (auto& v : p.ring_density) v /= scale;
    p.ring_density[0] = 1.0;
  }
}

namespace {

using nlohmann::json;

class SchemaReader {
 public:
  explicit SchemaReader(const json& doc, std::string scope)
      : doc_(doc), scope_(std::move(scope)) {}

  double number(const char* key) {
    const json* v = fetch(key, /*required=*/true);
    if (v && v->is_number()) return v->get<double>();
    if (v) type_error(key, "a number");
    return 0.0;
  }

  double number_or(const char* key, double fallback) {
    const json* v = fetch(key, /*required=*/false);
    if (!v) return fallback;
    if (v->is_number()) return v->get<double>();
    type_error(key, "a number");
    return fallback;
  }

  int integer(const char* key) {
    const json* v = fetch(key, /*required=*/true);
    if (v && v->is_number_integer()) return v->get<int>();
    if (v) type_error(key, "an integer");
    return 0;
  }

  int integer_or(const char* key, int fallback) {
    const json* v = fetch(key, /*required=*/false);
    if (!v) return fallback;
    if (v->is_number_integer()) return v->get<int>();
    type_error(key, "an integer");
    return fallback;
  }

  bool boolean_or(const char* key, bool fallback) {
    const json* v = fetch(key, /*required=*/false);
    if (!v) return fallback;
    if (v->is_boolean()) return v->get<bool>();
    type_error(key, "a boolean");
    return fallback;
  }

  std::vector<double> number_array(const char* key, bool required = true) {
    const json* v = fetch(key, required);
    std::vector<double> out;
    if (!v) return out;
    if (!v->is_array()) {
      type_error(key, "an array of numbers");
      return out;
    }
    for (const auto& e : *v) {
      if (!e.is_number()) {
        type_error(key, "an array of numbers");
        return {};
      }
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<int> int_array_or_empty(const char* key) {
    const json* v = fetch(key, /*required=*/false);
    std::vector<int> out;
    if (!v) return out;
    if (!v->is_array()) {
      type_error(key, "an array of integers");
      return out;
    }
    for (const auto& e : *v) {
      if (!e.is_number_integer()) {
        type_error(key, "an array of integers");
        return {};
      }
      out.push_back(e.get<int>());
    }
    return out;
  }

  const json* fetch(const char* key, bool required) {
    if (!doc_.is_object() || !doc_.contains(key)) {
      if (required) {
        errors.push_back(scope_ + "." + key + ": required field is missing");
      }
      return nullptr;
    }
    return &doc_.at(key);
  }

  void type_error(const char* key, const char* expected) {
    errors.push_back(scope_ + "." + key + ": expected " + expected);
  }

  std::vector<std::string> errors;

 private:
  const json& doc_;
  std::string scope_;
};

}  // namespace

std::pair<ModelParameters, OrganogenesisRules> parse_config(const nlohmann::json& doc) {
  std::vector<std::string> errors;
  if (!doc.is_object() || !doc.contains("parameters") || !doc.contains("rules")) {
    if (!doc.contains("parameters")) errors.push_back("parameters: required object is missing");
    if (!doc.contains("rules")) errors.push_back("rules: required object is missing");
    throw ConfigError(std::move(errors));
  }

  SchemaReader pr(doc.at("parameters"), "parameters");
  SchemaReader rr(doc.at("rules"), "rules");

  ModelParameters p;
  p.r = pr.number("r");
  p.k_beer = pr.number("k_beer");
  p.s_p = pr.number("s_p");
  p.sink_needle = pr.number_array("sink_needle");
  p.sink_internode = pr.number_array("sink_internode");
  p.ring_sink_const = pr.number("ring_sink_const");
  p.ring_sink_slope = pr.number("ring_sink_slope");
  p.lambda_pressler = pr.number("lambda_pressler");
  p.ring_density = pr.number_array("ring_density");
  p.allometry_b = pr.number_array("allometry_b");
  p.allometry_beta = pr.number_array("allometry_beta");
  p.slw = pr.number("slw");
  p.needle_lifespan = pr.integer_or("needle_lifespan", 2);
  p.wood_density = pr.number("wood_density");
  p.seed_biomass = pr.number_or("seed_biomass", 1.0);
  p.pressler_counts_own_needles = pr.boolean_or("pressler_counts_own_needles", true);
  p.pressler_mass_weighted = pr.boolean_or("pressler_mass_weighted", false);

  // env may be a constant, an array covering the horizon, or an object
  // holding both a series and a fill value. Omitted means constant 1.
  if (const json* env = pr.fetch("env", /*required=*/false)) {
    if (env->is_number()) {
      p.env_fill = env->get<double>();
    } else if (env->is_array()) {
      p.env = pr.number_array("env");
      p.env_fill.reset();
    } else if (env->is_object()) {
      SchemaReader er(*env, "parameters.env");
      p.env = er.number_array("values");
      if (er.fetch("fill", false)) p.env_fill = er.number("fill");
      for (auto& e : er.errors) pr.errors.push_back(std::move(e));
    } else {
      pr.type_error("env", "a number, an array, or {values, fill}");
    }
  } else {
    p.env_fill = 1.0;
  }

  OrganogenesisRules rules;
  rules.pa_max = rr.integer("pa_max");
  rules.branches_per_cycle = rr.int_array_or_empty("branches_per_cycle");
  if (rules.pa_max > 1 && rr.fetch("branches_per_cycle", false) == nullptr)
    rr.errors.push_back("rules.branches_per_cycle: required field is missing");
  rules.horizon = rr.integer("horizon");

  errors = std::move(pr.errors);
  errors.insert(errors.end(), rr.errors.begin(), rr.errors.end());
  if (!errors.empty()) throw ConfigError(std::move(errors));

  normalize(p);
  auto invariant_errors = validate(p, rules);
  if (!invariant_errors.empty()) throw ConfigError(std::move(invariant_errors));
  return {std::move(p), rules};
}

std::pair<ModelParameters, OrganogenesisRules> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file: " + path});
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_config(doc);
}

nlohmann::json serialize_config(const ModelParameters& p, const OrganogenesisRules& rules) {
  nlohmann::json params{
      {"r", p.r},
      {"k_beer", p.k_beer},
      {"s_p", p.s_p},
      {"sink_needle", p.sink_needle},
      {"sink_internode", p.sink_internode},
      {"ring_sink_const", p.ring_sink_const},
      {"ring_sink_slope", p.ring_sink_slope},
      {"lambda_pressler", p.lambda_pressler},
      {"ring_density", p.ring_density},
      {"allometry_b", p.allometry_b},
      {"allometry_beta", p.allometry_beta},
      {"slw", p.slw},
      {"needle_lifespan", p.needle_lifespan},
      {"wood_density", p.wood_density},
      {"seed_biomass", p.seed_biomass},
      {"pressler_counts_own_needles", p.pressler_counts_own_needles},
      {"pressler_mass_weighted", p.pressler_mass_weighted},
  };
  if (p.env.empty() && p.env_fill.has_value()) {
    params["env"] = *p.env_fill;
  } else if (p.env_fill.has_value()) {
    params["env"] = {{"values", p.env}, {"fill", *p.env_fill}};
  } else {
    params["env"] = p.env;
  }
  nlohmann::json rj{
      {"pa_max", rules.pa_max},
      {"horizon", rules.horizon},
      {"branches_per_cycle", rules.branches_per_cycle},
  };
  return nlohmann::json{{"parameters", std::move(params)}, {"rules", std::move(rj)}};
}

void save_config(const ModelParameters& params, const OrganogenesisRules& rules,
                 const std::string& path) {
  csv::write_file_atomic(path, serialize_config(params, rules).dump(2) + "\n");
}

}  // namespace fstm
