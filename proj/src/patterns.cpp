#include "fstm/patterns.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "fstm/csv.hpp"

namespace fstm {

namespace {

struct KindInfo {
  ObservableKind kind;
  const char* name;
  const char* unit;
  bool pattern1;
  bool pattern2;
};

constexpr KindInfo kKinds[] = {
    {ObservableKind::stem_len, "stem_len", "cm", true, true},
    {ObservableKind::stem_radius, "stem_radius", "cm", false, true},
    {ObservableKind::stem_wood, "stem_wood", "g", true, true},
    {ObservableKind::stem_needle, "stem_needle", "g", true, true},
    {ObservableKind::branch_len, "branch_len", "cm", true, false},
    {ObservableKind::branch_wood, "branch_wood", "g", true, false},
    {ObservableKind::branch_needle, "branch_needle", "g", true, false},
    {ObservableKind::crown_branch_wood, "crown_branch_wood", "g", false, true},
    {ObservableKind::crown_branch_needle, "crown_branch_needle", "g", false, true},
};

const KindInfo& info_of(ObservableKind kind) { return kKinds[static_cast<int>(kind)]; }

}  // namespace

const char* kind_name(ObservableKind kind) { return info_of(kind).name; }

ObservableKind kind_from_name(const std::string& name) {
  for (const auto& k : kKinds) {
    if (name == k.name) return k.kind;
  }
  throw std::invalid_argument("unknown observable kind '" + name + "'");
}

const char* kind_unit(ObservableKind kind) { return info_of(kind).unit; }

bool kind_allowed(ObservableKind kind, int pattern) {
  return pattern == 1 ? info_of(kind).pattern1 : info_of(kind).pattern2;
}

TargetFileError::TargetFileError(std::vector<std::string> errors)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "target file invalid:";
        for (const auto& e : errors) os << "\n  - " << e;
        return os.str();
      }()),
      errors_(std::move(errors)) {}

PatternVector extract_pattern1(const SimulationTrace& trace) {
  return extract_pattern1(trace.classes);
}

PatternVector extract_pattern1(std::span<const AxisClassState> classes) {
  PatternVector vec;
  vec.pattern = 1;
  std::size_t rows = 0;
  for (const auto& cls : classes) rows += 3 * cls.metamer_count();
  vec.rows.reserve(rows);
  for (const auto& cls : classes) {
    const bool stem = cls.key.pa == 1;
    const auto len_kind = stem ? ObservableKind::stem_len : ObservableKind::branch_len;
    const auto wood_kind = stem ? ObservableKind::stem_wood : ObservableKind::branch_wood;
    const auto needle_kind = stem ? ObservableKind::stem_needle : ObservableKind::branch_needle;
    for (int rank = 1; rank <= cls.metamer_count(); ++rank) {
      const int r = rank - 1;
      vec.rows.push_back({len_kind, cls.key.pa, cls.key.birth_cycle, rank, cls.length[r]});
      vec.rows.push_back({wood_kind, cls.key.pa, cls.key.birth_cycle, rank,
                          cls.internode_mass[r] + cls.ring_mass[r]});
      vec.rows.push_back(
          {needle_kind, cls.key.pa, cls.key.birth_cycle, rank, cls.needle_mass[r]});
    }
  }
  return vec;
}

PatternVector extract_pattern2(const SimulationTrace& trace, bool per_whorl) {
  return extract_pattern2(trace.classes, trace.params.wood_density, trace.rules.horizon,
                          per_whorl);
}

PatternVector extract_pattern2(std::span<const AxisClassState> classes, double wood_density,
                               int horizon, bool per_whorl) {
  PatternVector vec;
  vec.pattern = 2;
  for (const auto& cls : classes) {
    if (cls.key.pa != 1) continue;
    vec.rows.reserve(4 * cls.metamer_count() + 2 * (per_whorl ? horizon : 1));
    for (int rank = 1; rank <= cls.metamer_count(); ++rank) {
      const int r = rank - 1;
      const double wood = cls.internode_mass[r] + cls.ring_mass[r];
      vec.rows.push_back({ObservableKind::stem_len, 1, cls.key.birth_cycle, rank, cls.length[r]});
      vec.rows.push_back({ObservableKind::stem_radius, 1, cls.key.birth_cycle, rank,
                          radius_from_biomass(wood, cls.length[r], wood_density)});
      vec.rows.push_back({ObservableKind::stem_wood, 1, cls.key.birth_cycle, rank, wood});
      vec.rows.push_back(
          {ObservableKind::stem_needle, 1, cls.key.birth_cycle, rank, cls.needle_mass[r]});
    }
  }

  auto axis_wood = [](const AxisClassState& cls) {
    double total = 0.0;
    for (int r = 0; r < cls.metamer_count(); ++r)
      total += cls.internode_mass[r] + cls.ring_mass[r];
    return total;
  };
  auto axis_needle = [](const AxisClassState& cls) {
    double total = 0.0;
    for (int r = 0; r < cls.metamer_count(); ++r) total += cls.needle_mass[r];
    return total;
  };

  if (!per_whorl) {
    double wood = 0.0;
    double needle = 0.0;
    for (const auto& cls : classes) {
      if (cls.key.pa == 1) continue;
      const double mult = static_cast<double>(cls.multiplicity);
      wood += mult * axis_wood(cls);
      needle += mult * axis_needle(cls);
    }
    vec.rows.push_back({ObservableKind::crown_branch_wood, 0, 0, 0, wood});
    vec.rows.push_back({ObservableKind::crown_branch_needle, 0, 0, 0, needle});
    return vec;
  }

  // Per-whorl crown totals. A whorl is the set of PA-2 axes born at one
  // cycle together with everything they bear. Deeper classes are split over
  // whorls by the share of their multiplicity each whorl's lineage produced.
  const int n = static_cast<int>(classes.size());
  std::vector<std::vector<double>> fraction(n);  // [class][whorl birth - 1]
  std::vector<double> wood_per_whorl(horizon, 0.0);
  std::vector<double> needle_per_whorl(horizon, 0.0);
  std::vector<bool> whorl_exists(horizon, false);

  auto class_index = [&](int pa, int birth) {
    for (int i = 0; i < n; ++i) {
      if (classes[i].key.pa == pa && classes[i].key.birth_cycle == birth) return i;
    }
    return -1;
  };

  for (int idx = 0; idx < n; ++idx) {
    const auto& cls = classes[idx];
    if (cls.key.pa < 2) continue;
    fraction[idx].assign(horizon, 0.0);
    if (cls.key.pa == 2) {
      fraction[idx][cls.key.birth_cycle - 1] = 1.0;
      whorl_exists[cls.key.birth_cycle - 1] = true;
      continue;
    }
    // Laterals of cycle b come from every bearer-class axis alive at b-1,
    // one metamer each; the split follows the bearer multiplicities.
    const int b = cls.key.birth_cycle;
    double bearer_total = 0.0;
    for (int a = 1; a < b; ++a) {
      const int bearer = class_index(cls.key.pa - 1, a);
      if (bearer >= 0) bearer_total += static_cast<double>(classes[bearer].multiplicity);
    }
    if (bearer_total <= 0.0) continue;
    for (int a = 1; a < b; ++a) {
      const int bearer = class_index(cls.key.pa - 1, a);
      if (bearer < 0) continue;
      const double w = static_cast<double>(classes[bearer].multiplicity) / bearer_total;
      for (int whorl = 0; whorl < horizon; ++whorl)
        fraction[idx][whorl] += w * fraction[bearer][whorl];
    }
  }

  for (int idx = 0; idx < n; ++idx) {
    const auto& cls = classes[idx];
    if (cls.key.pa < 2) continue;
    const double mult = static_cast<double>(cls.multiplicity);
    const double wood = mult * axis_wood(cls);
    const double needle = mult * axis_needle(cls);
    for (int whorl = 0; whorl < horizon; ++whorl) {
      if (fraction[idx][whorl] == 0.0) continue;
      wood_per_whorl[whorl] += fraction[idx][whorl] * wood;
      needle_per_whorl[whorl] += fraction[idx][whorl] * needle;
    }
  }

  for (int whorl = 0; whorl < horizon; ++whorl) {
    if (!whorl_exists[whorl]) continue;
    vec.rows.push_back(
        {ObservableKind::crown_branch_wood, 0, whorl + 1, 0, wood_per_whorl[whorl]});
    vec.rows.push_back(
        {ObservableKind::crown_branch_needle, 0, whorl + 1, 0, needle_per_whorl[whorl]});
  }
  return vec;
}

namespace {

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  out = static_cast<int>(v);
  return true;
}

constexpr const char* kHeader = "pattern,kind,pa,birth_cycle,rank,value,unit,weight";

}  // namespace

TargetDataset parse_target_file(const std::string& path) {
  const auto lines = csv::read_lines(path);
  TargetDataset dataset;
  std::vector<std::string> errors;

  if (lines.empty()) {
    dataset.warnings.push_back("empty target file: " + path);
    return dataset;
  }
  if (lines[0] != kHeader) {
    throw TargetFileError({"line 1: header must be exactly '" + std::string(kHeader) + "'"});
  }
  if (lines.size() == 1) {
    dataset.warnings.push_back("target file has a header but no data rows: " + path);
    return dataset;
  }

  int pattern = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto row_error = [&](const std::string& message) {
      errors.push_back("line " + std::to_string(li + 1) + ": " + message);
    };
    const auto fields = csv::split_line(lines[li]);
    if (fields.size() != 8) {
      row_error("expected 8 fields, found " + std::to_string(fields.size()));
      continue;
    }

    int row_pattern = 0;
    if (!parse_int(fields[0], row_pattern) || (row_pattern != 1 && row_pattern != 2)) {
      row_error("pattern must be 1 or 2");
      continue;
    }
    if (pattern == 0) pattern = row_pattern;
    if (row_pattern != pattern) {
      row_error("pattern " + std::to_string(row_pattern) + " row in a pattern " +
                std::to_string(pattern) + " file");
      continue;
    }

    TargetRow row;
    try {
      row.kind = kind_from_name(fields[1]);
    } catch (const std::invalid_argument& e) {
      row_error(e.what());
      continue;
    }
    if (!kind_allowed(row.kind, row_pattern)) {
      row_error(std::string("kind ") + kind_name(row.kind) + " is not part of pattern " +
                std::to_string(row_pattern));
      continue;
    }
    if (!parse_int(fields[2], row.pa) || row.pa < 0) {
      row_error("pa must be a non-negative integer");
      continue;
    }
    if (!parse_int(fields[3], row.birth_cycle) || row.birth_cycle < 0) {
      row_error("birth_cycle must be a non-negative integer");
      continue;
    }
    if (!parse_int(fields[4], row.rank) || row.rank < 0) {
      row_error("rank must be a non-negative integer");
      continue;
    }
    if (!parse_number(fields[5], row.value) || row.value < 0.0) {
      row_error("value must be a non-negative number");
      continue;
    }
    if (fields[6] != kind_unit(row.kind)) {
      row_error(std::string("kind ") + kind_name(row.kind) + " expects unit " +
                kind_unit(row.kind) + ", got '" + fields[6] + "'");
      continue;
    }
    if (fields[7].empty()) {
      row.weight = 1.0;
    } else if (!parse_number(fields[7], row.weight) || row.weight < 0.0) {
      row_error("weight must be a non-negative number");
      continue;
    }
    dataset.rows.push_back(row);
  }

  if (!errors.empty()) throw TargetFileError(std::move(errors));
  dataset.pattern = pattern == 0 ? 1 : pattern;
  return dataset;
}

void write_target_file(const TargetDataset& dataset, const std::string& path) {
  std::ostringstream os;
  os << kHeader << "\n";
  for (const auto& row : dataset.rows) {
    os << dataset.pattern << ',' << kind_name(row.kind) << ',' << row.pa << ','
       << row.birth_cycle << ',' << row.rank << ',' << csv::format_number(row.value) << ','
       << kind_unit(row.kind) << ',' << csv::format_number(row.weight) << "\n";
  }
  csv::write_file_atomic(path, os.str());
}

TargetDataset dataset_from_pattern(const PatternVector& vec) {
  TargetDataset dataset;
  dataset.pattern = vec.pattern;
  dataset.rows.reserve(vec.rows.size());
  for (const auto& row : vec.rows)
    dataset.rows.push_back({row.kind, row.pa, row.birth_cycle, row.rank, row.value, 1.0});
  return dataset;
}

AllometryFit fit_allometry(std::span<const std::pair<double, double>> records) {
  if (records.size() < 3)
    throw std::invalid_argument("allometry fit needs at least 3 records, got " +
                                std::to_string(records.size()));
  for (const auto& [q, length] : records) {
    if (!(q > 0.0) || !(length > 0.0))
      throw std::invalid_argument("allometry fit needs strictly positive biomass and length");
  }

  const double n = static_cast<double>(records.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [q, length] : records) {
    sx += std::log(q);
    sy += std::log(length);
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [q, length] : records) {
    const double dx = std::log(q) - mx;
    const double dy = std::log(length) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0)
    throw std::invalid_argument("allometry fit needs variance in biomass (all q equal)");

  AllometryFit fit;
  fit.beta = sxy / sxx;
  fit.b = std::exp(my - fit.beta * mx);
  if (syy > 0.0) {
    const double ss_res = syy - fit.beta * sxy;
    fit.r_squared = 1.0 - ss_res / syy;
  } else {
    fit.r_squared = 0.0;  // nothing to explain
  }
  return fit;
}

}  // namespace fstm
