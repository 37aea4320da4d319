#ifndef RDSIM_PROFILE_HPP
#define RDSIM_PROFILE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdsim/common.hpp"
#include "rdsim/rng.hpp"

namespace rdsim {

enum class Manufacturer : uint8_t { S = 0, H = 1, M = 2 };

inline const char* to_string(Manufacturer m) {
  switch (m) {
    case Manufacturer::S: return "S";
    case Manufacturer::H: return "H";
    default: return "M";
  }
}

inline Manufacturer manufacturer_from_string(const std::string& s) {
  if (s == "S") return Manufacturer::S;
  if (s == "H") return Manufacturer::H;
  if (s == "M") return Manufacturer::M;
  throw ValidationError("unknown manufacturer: " + s);
}

enum class MechanismMode : uint8_t {
  // Encodes the predicted device-level behavior: mechanism directions are
  // physical charge transitions, and the PWL hammer contribution is
  // suppressed entirely under alternating double-sided activation.
  Device = 0,
  // Calibrated to measured chip behavior: mechanism directions act in
  // logical data space (mapped per cell through its encoding), and the PWL
  // hammer contribution is instead *weakened* when not alternating.
  Empirical = 1,
};

enum class EncodingPolicy : uint8_t {
  AllTrue = 0,
  AllAnti = 1,
  InterleavedBySubarray = 2,
  CustomPerSubarray = 3,
};

// Per-mechanism strengths in disturbance units. Activation-driven
// mechanisms (m1, m2) are per activation; open-time mechanisms (m4, m5)
// and retention (m6) are per nanosecond. Temperature coefficients are
// multiplicative per degree C above the 50 C reference.
struct MechanismParams {
  MechanismMode mode = MechanismMode::Empirical;

  double m1_nwl_hammer = 0.0;
  double m2_pwl_hammer = 0.0;
  double m3_doubleside_boost = 1.0;  // multiplier on m1 for alternating activations
  double m4_nwl_press_per_ns = 0.0;
  double m5_pwl_press_per_ns = 0.0;
  double m6_retention_per_ns = 0.0;

  // Scale on m2 for activations with no interleaved opposite-side
  // activation. Device mode ignores it (alternating acts contribute zero,
  // isolated acts contribute full m2).
  double single_sided_pwl_scale = 1.0;
  // Scalar asymmetry knob: open-time contributions from the upper-side
  // aggressor are scaled by this factor.
  double press_upper_scale = 1.0;

  double temp_coeff_m1 = 1.0;
  double temp_coeff_m2 = 1.0;
  double temp_coeff_m4 = 1.0;
  double temp_coeff_m5 = 1.0;
  double temp_coeff_m6 = 1.0;

  static constexpr double kReferenceTempC = 50.0;

  static double temp_factor(double coeff, double temperature_c) {
    if (temperature_c <= kReferenceTempC || coeff == 1.0) return 1.0;
    return std::pow(coeff, temperature_c - kReferenceTempC);
  }

  void validate() const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0)) throw ValidationError(std::string("mechanism strength must be >= 0: ") + name);
    };
    nonneg(m1_nwl_hammer, "m1_nwl_hammer");
    nonneg(m2_pwl_hammer, "m2_pwl_hammer");
    nonneg(m4_nwl_press_per_ns, "m4_nwl_press_per_ns");
    nonneg(m5_pwl_press_per_ns, "m5_pwl_press_per_ns");
    nonneg(m6_retention_per_ns, "m6_retention_per_ns");
    if (!(m3_doubleside_boost >= 1.0))
      throw ValidationError("m3_doubleside_boost must be >= 1");
    if (!(single_sided_pwl_scale >= 0.0 && single_sided_pwl_scale <= 1.0))
      throw ValidationError("single_sided_pwl_scale must be in [0, 1]");
    if (!(press_upper_scale > 0.0 && press_upper_scale <= 1.0))
      throw ValidationError("press_upper_scale must be in (0, 1]");
    for (double c : {temp_coeff_m1, temp_coeff_m2, temp_coeff_m4, temp_coeff_m5, temp_coeff_m6})
      if (!(c >= 1.0)) throw ValidationError("temperature coefficients must be >= 1");
  }
};

// Log-normal threshold population for one flip direction. A cell is
// vulnerable with probability p; vulnerable cells draw their threshold
// from exp(N(mu, sigma^2)), others never flip.
struct VulnParams {
  double mu = 0.0;
  double sigma = 1.0;
  double p = 0.0;

  void validate(const char* name) const {
    if (!(sigma > 0.0)) throw ValidationError(std::string(name) + ": sigma must be > 0");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + ": p must be in [0, 1]");
    if (!std::isfinite(mu)) throw ValidationError(std::string(name) + ": mu must be finite");
  }
};

// Full description of one simulated chip type.
struct ChipProfile {
  std::string name;
  Manufacturer manufacturer = Manufacturer::S;
  uint32_t die_density_gb = 8;  // 8 or 16
  std::string die_revision = "A";

  uint32_t rows_per_bank = 65536;
  uint32_t columns_per_row = 65536;  // bits per row as tested (whole-module row)
  uint32_t subarray_size = 512;

  EncodingPolicy encoding_policy = EncodingPolicy::AllTrue;
  CellKind first_subarray_kind = CellKind::TrueCell;  // parity anchor for interleaving
  std::vector<CellKind> custom_subarray_kinds;        // CustomPerSubarray only

  // Logical row address -> physical row index. Empty means identity.
  std::vector<uint32_t> logical_to_physical;
  std::vector<uint32_t> physical_to_logical;  // derived inverse, never serialized

  std::vector<uint32_t> remapped_rows;  // physical indices repaired out

  MechanismParams mechanism;
  // Thresholds keyed by the flip direction they gate. Empirical mode keys
  // by logical direction (a cell's physical threshold is drawn from the
  // population of the logical direction that transition represents);
  // device mode reads dir_1to0 as charged->discharged and dir_0to1 as
  // discharged->charged directly.
  VulnParams vuln_0to1;
  VulnParams vuln_1to0;

  uint64_t master_seed = 1;

  nlohmann::json calibration;  // provenance block written by the calibrator

  uint32_t subarray_count() const { return rows_per_bank / subarray_size; }

  uint32_t to_physical(uint32_t logical) const {
    return logical_to_physical.empty() ? logical : logical_to_physical[logical];
  }

  uint32_t to_logical(uint32_t physical) const {
    return physical_to_logical.empty() ? physical : physical_to_logical[physical];
  }

  bool is_remapped(uint32_t physical) const {
    return std::binary_search(remapped_rows.begin(), remapped_rows.end(), physical);
  }

  CellKind kind_of_subarray(uint32_t subarray) const {
    switch (encoding_policy) {
      case EncodingPolicy::AllTrue: return CellKind::TrueCell;
      case EncodingPolicy::AllAnti: return CellKind::AntiCell;
      case EncodingPolicy::InterleavedBySubarray: {
        const bool even = (subarray % 2) == 0;
        const bool first_true = first_subarray_kind == CellKind::TrueCell;
        return (even == first_true) ? CellKind::TrueCell : CellKind::AntiCell;
      }
      case EncodingPolicy::CustomPerSubarray:
        return custom_subarray_kinds.at(subarray);
    }
    throw ValidationError("bad encoding policy");
  }

  CellKind kind_of_physical_row(uint32_t physical) const {
    return kind_of_subarray(physical / subarray_size);
  }

  // Threshold population used for a physical-direction flip of a cell in
  // the given row. Empirical mode routes through the cell encoding.
  const VulnParams& vuln_for(PhysDir dir, uint32_t physical_row) const {
    if (mechanism.mode == MechanismMode::Device) {
      return dir == PhysDir::ChargedToDischarged ? vuln_1to0 : vuln_0to1;
    }
    const CellKind kind = kind_of_physical_row(physical_row);
    const bool charged_before = dir == PhysDir::ChargedToDischarged;
    const bool logical_before = logical_for_charged(charged_before, kind);
    return logical_before ? vuln_1to0 : vuln_0to1;
  }

  void finalize() {
    if (!logical_to_physical.empty()) {
      physical_to_logical.assign(rows_per_bank, 0);
      for (uint32_t l = 0; l < rows_per_bank; ++l)
        physical_to_logical[logical_to_physical[l]] = l;
    } else {
      physical_to_logical.clear();
    }
    std::sort(remapped_rows.begin(), remapped_rows.end());
    remapped_rows.erase(std::unique(remapped_rows.begin(), remapped_rows.end()),
                        remapped_rows.end());
  }

  void validate() const {
    if (rows_per_bank == 0) throw ValidationError("rows_per_bank must be > 0");
    if (columns_per_row == 0 || columns_per_row % 8 != 0)
      throw ValidationError("columns_per_row must be a positive multiple of 8");
    if (subarray_size == 0 || rows_per_bank % subarray_size != 0)
      throw ValidationError("subarray_size must divide rows_per_bank");
    if (!logical_to_physical.empty()) {
      if (logical_to_physical.size() != rows_per_bank)
        throw ValidationError("logical_to_physical must cover every row");
      std::vector<bool> seen(rows_per_bank, false);
      for (uint32_t p : logical_to_physical) {
        if (p >= rows_per_bank || seen[p])
          throw ValidationError("logical_to_physical must be a bijection over the bank");
        seen[p] = true;
      }
    }
    for (uint32_t r : remapped_rows)
      if (r >= rows_per_bank) throw ValidationError("remapped row out of range");
    if (encoding_policy == EncodingPolicy::CustomPerSubarray &&
        custom_subarray_kinds.size() != subarray_count())
      throw ValidationError("custom encoding must list every subarray");
    mechanism.validate();
    vuln_0to1.validate("vulnerability.dir_0to1");
    vuln_1to0.validate("vulnerability.dir_1to0");
  }
};

namespace detail {

inline nlohmann::json to_json(const MechanismParams& m) {
  return nlohmann::json{
      {"mode", m.mode == MechanismMode::Device ? "device" : "empirical"},
      {"m1_nwl_hammer", m.m1_nwl_hammer},
      {"m2_pwl_hammer", m.m2_pwl_hammer},
      {"m3_doubleside_boost", m.m3_doubleside_boost},
      {"m4_nwl_press_per_ns", m.m4_nwl_press_per_ns},
      {"m5_pwl_press_per_ns", m.m5_pwl_press_per_ns},
      {"m6_retention_per_ns", m.m6_retention_per_ns},
      {"single_sided_pwl_scale", m.single_sided_pwl_scale},
      {"press_upper_scale", m.press_upper_scale},
      {"temp_coeff",
       {{"m1", m.temp_coeff_m1},
        {"m2", m.temp_coeff_m2},
        {"m4", m.temp_coeff_m4},
        {"m5", m.temp_coeff_m5},
        {"m6", m.temp_coeff_m6}}},
  };
}

inline MechanismParams mechanism_from_json(const nlohmann::json& j) {
  MechanismParams m;
  const std::string mode = j.value("mode", "empirical");
  if (mode == "device")
    m.mode = MechanismMode::Device;
  else if (mode == "empirical")
    m.mode = MechanismMode::Empirical;
  else
    throw ValidationError("mechanism.mode must be 'device' or 'empirical'");
  m.m1_nwl_hammer = j.value("m1_nwl_hammer", 0.0);
  m.m2_pwl_hammer = j.value("m2_pwl_hammer", 0.0);
  m.m3_doubleside_boost = j.value("m3_doubleside_boost", 1.0);
  m.m4_nwl_press_per_ns = j.value("m4_nwl_press_per_ns", 0.0);
  m.m5_pwl_press_per_ns = j.value("m5_pwl_press_per_ns", 0.0);
  m.m6_retention_per_ns = j.value("m6_retention_per_ns", 0.0);
  m.single_sided_pwl_scale = j.value("single_sided_pwl_scale", 1.0);
  m.press_upper_scale = j.value("press_upper_scale", 1.0);
  if (j.contains("temp_coeff")) {
    const auto& t = j.at("temp_coeff");
    m.temp_coeff_m1 = t.value("m1", 1.0);
    m.temp_coeff_m2 = t.value("m2", 1.0);
    m.temp_coeff_m4 = t.value("m4", 1.0);
    m.temp_coeff_m5 = t.value("m5", 1.0);
    m.temp_coeff_m6 = t.value("m6", 1.0);
  }
  return m;
}

inline nlohmann::json to_json(const VulnParams& v) {
  return nlohmann::json{{"mu", v.mu}, {"sigma", v.sigma}, {"p", v.p}};
}

inline VulnParams vuln_from_json(const nlohmann::json& j) {
  VulnParams v;
  v.mu = j.at("mu").get<double>();
  v.sigma = j.at("sigma").get<double>();
  v.p = j.at("p").get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json to_json(const ChipProfile& p) {
  nlohmann::json j{
      {"name", p.name},
      {"manufacturer", to_string(p.manufacturer)},
      {"die_density_gb", p.die_density_gb},
      {"die_revision", p.die_revision},
      {"rows_per_bank", p.rows_per_bank},
      {"columns_per_row", p.columns_per_row},
      {"subarray_size", p.subarray_size},
      {"remapped_rows", p.remapped_rows},
      {"master_seed", p.master_seed},
      {"mechanism", detail::to_json(p.mechanism)},
      {"vulnerability",
       {{"dir_0to1", detail::to_json(p.vuln_0to1)},
        {"dir_1to0", detail::to_json(p.vuln_1to0)}}},
  };
  switch (p.encoding_policy) {
    case EncodingPolicy::AllTrue:
      j["cell_encoding"] = {{"policy", "all_true"}};
      break;
    case EncodingPolicy::AllAnti:
      j["cell_encoding"] = {{"policy", "all_anti"}};
      break;
    case EncodingPolicy::InterleavedBySubarray:
      j["cell_encoding"] = {{"policy", "interleaved"},
                            {"first_subarray", to_string(p.first_subarray_kind)}};
      break;
    case EncodingPolicy::CustomPerSubarray: {
      std::vector<std::string> kinds;
      kinds.reserve(p.custom_subarray_kinds.size());
      for (CellKind k : p.custom_subarray_kinds) kinds.emplace_back(to_string(k));
      j["cell_encoding"] = {{"policy", "custom"}, {"subarrays", kinds}};
      break;
    }
  }
  if (p.logical_to_physical.empty()) {
    j["logical_to_physical"] = {{"kind", "identity"}};
  } else {
    j["logical_to_physical"] = {{"kind", "permutation"}, {"values", p.logical_to_physical}};
  }
  if (!p.calibration.is_null()) j["calibration"] = p.calibration;
  return j;
}

inline ChipProfile profile_from_json(const nlohmann::json& j) {
  ChipProfile p;
  p.name = j.value("name", "");
  p.manufacturer = manufacturer_from_string(j.value("manufacturer", "S"));
  p.die_density_gb = j.value("die_density_gb", 8u);
  p.die_revision = j.value("die_revision", "A");
  p.rows_per_bank = j.at("rows_per_bank").get<uint32_t>();
  p.columns_per_row = j.at("columns_per_row").get<uint32_t>();
  p.subarray_size = j.at("subarray_size").get<uint32_t>();
  p.remapped_rows = j.value("remapped_rows", std::vector<uint32_t>{});
  p.master_seed = j.at("master_seed").get<uint64_t>();
  p.mechanism = detail::mechanism_from_json(j.at("mechanism"));
  p.vuln_0to1 = detail::vuln_from_json(j.at("vulnerability").at("dir_0to1"));
  p.vuln_1to0 = detail::vuln_from_json(j.at("vulnerability").at("dir_1to0"));

  const auto& enc = j.at("cell_encoding");
  const std::string policy = enc.at("policy").get<std::string>();
  if (policy == "all_true") {
    p.encoding_policy = EncodingPolicy::AllTrue;
  } else if (policy == "all_anti") {
    p.encoding_policy = EncodingPolicy::AllAnti;
  } else if (policy == "interleaved") {
    p.encoding_policy = EncodingPolicy::InterleavedBySubarray;
    const std::string first = enc.value("first_subarray", "true_cell");
    p.first_subarray_kind = first == "anti_cell" ? CellKind::AntiCell : CellKind::TrueCell;
  } else if (policy == "custom") {
    p.encoding_policy = EncodingPolicy::CustomPerSubarray;
    for (const auto& s : enc.at("subarrays")) {
      p.custom_subarray_kinds.push_back(s.get<std::string>() == "anti_cell"
                                            ? CellKind::AntiCell
                                            : CellKind::TrueCell);
    }
  } else {
    throw ValidationError("unknown cell_encoding.policy: " + policy);
  }

  if (j.contains("logical_to_physical")) {
    const auto& map = j.at("logical_to_physical");
    const std::string kind = map.value("kind", "identity");
    if (kind == "permutation") {
      p.logical_to_physical = map.at("values").get<std::vector<uint32_t>>();
    } else if (kind == "shuffle") {
      // Compact form: seeded Fisher-Yates over the whole bank.
      p.logical_to_physical.resize(p.rows_per_bank);
      std::iota(p.logical_to_physical.begin(), p.logical_to_physical.end(), 0u);
      rng::SplitMix64 g(map.at("seed").get<uint64_t>());
      for (uint32_t i = p.rows_per_bank - 1; i > 0; --i)
        std::swap(p.logical_to_physical[i], p.logical_to_physical[g.next_below(i + 1)]);
    } else if (kind != "identity") {
      throw ValidationError("unknown logical_to_physical.kind: " + kind);
    }
  }

  if (j.contains("calibration")) p.calibration = j.at("calibration");

  p.finalize();
  p.validate();
  return p;
}

struct LoadedProfile {
  ChipProfile profile;
  uint64_t file_hash = 0;  // FNV-1a of the raw file bytes
  std::string path;
};

inline LoadedProfile load_profile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open profile file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  LoadedProfile lp;
  lp.path = path;
  lp.file_hash = fnv1a(bytes);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("profile JSON parse error in " + path + ": " + e.what());
  }
  try {
    lp.profile = profile_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("profile schema error in " + path + ": " + e.what());
  }
  return lp;
}

inline void save_profile(const ChipProfile& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write profile file: " + path);
  out << to_json(p).dump(2) << "\n";
}

}  // namespace rdsim

#endif  // RDSIM_PROFILE_HPP
