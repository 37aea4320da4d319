#ifndef RDSIM_DISTURB_HPP
#define RDSIM_DISTURB_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rdsim/common.hpp"
#include "rdsim/dram_model.hpp"
#include "rdsim/profile.hpp"
#include "rdsim/rng.hpp"

namespace rdsim {

// Per-cell flip thresholds in disturbance units, one per physical
// direction. Infinite threshold means the cell is not vulnerable in that
// direction.
struct CellVulnerability {
  double threshold_c2d = std::numeric_limits<double>::infinity();
  double threshold_d2c = std::numeric_limits<double>::infinity();

  double threshold(PhysDir d) const {
    return d == PhysDir::ChargedToDischarged ? threshold_c2d : threshold_d2c;
  }
};

struct DisturbanceEvent {
  enum class Kind : uint8_t { Activation = 0, OpenTime = 1, Elapsed = 2 };

  Kind kind = Kind::Activation;
  uint32_t aggressor_physical = 0;  // unused for Elapsed
  int64_t duration_ps = 0;          // OpenTime / Elapsed
  double temperature_c = MechanismParams::kReferenceTempC;
};

struct FlipRecord {
  uint32_t physical_row = 0;
  uint32_t column = 0;
  LogicalDir logical_dir = LogicalDir::ZeroToOne;
  PhysDir phys_dir = PhysDir::DischargedToCharged;

  bool operator==(const FlipRecord&) const = default;
};

struct FlipCounts {
  uint64_t zero_to_one = 0;
  uint64_t one_to_zero = 0;

  uint64_t total() const { return zero_to_one + one_to_zero; }
  uint64_t of(LogicalDir d) const {
    return d == LogicalDir::ZeroToOne ? zero_to_one : one_to_zero;
  }
};

// The fault-mechanism engine. Owns no cell state; operates on one
// CellArray and caches sampled threshold populations per row.
class DisturbEngine {
 public:
  DisturbEngine(const ChipProfile& profile, CellArray& array)
      : profile_(&profile), array_(&array) {}

  const ChipProfile& profile() const { return *profile_; }
  CellArray& array() { return *array_; }

  // --- per-cell vulnerability sampling (pure in seed/row/col/direction) ---

  double sample_threshold(uint32_t row, uint32_t col, PhysDir dir) const {
    const VulnParams& vp = profile_->vuln_for(dir, row);
    return sample_threshold_with(vp, row, col, dir);
  }

  double sample_threshold_with(const VulnParams& vp, uint32_t row, uint32_t col,
                               PhysDir dir) const {
    if (vp.p <= 0.0) return std::numeric_limits<double>::infinity();
    const uint64_t gate = rng::cell_key(profile_->master_seed, row, col,
                                        uint8_t(dir), /*stream=*/0);
    if (vp.p < 1.0 && gate >= p_bits(vp.p))
      return std::numeric_limits<double>::infinity();
    const uint64_t draw = rng::cell_key(profile_->master_seed, row, col,
                                        uint8_t(dir), /*stream=*/1);
    double u = rng::to_unit(draw);
    u = std::min(std::max(u, 0x1.0p-53), 1.0 - 0x1.0p-53);
    return std::exp(vp.mu + vp.sigma * rng::inverse_normal_cdf(u));
  }

  std::vector<CellVulnerability> sample_vulnerabilities(uint32_t row) const {
    if (row >= profile_->rows_per_bank)
      throw ValidationError("sample_vulnerabilities: row out of range");
    std::vector<CellVulnerability> out(profile_->columns_per_row);
    for (uint32_t c = 0; c < profile_->columns_per_row; ++c) {
      out[c].threshold_c2d = sample_threshold(row, c, PhysDir::ChargedToDischarged);
      out[c].threshold_d2c = sample_threshold(row, c, PhysDir::DischargedToCharged);
    }
    return out;
  }

  // --- event application ---

  // One (or a run of) activation(s) of an aggressor row. Both physical
  // neighbors accumulate; the boost/alternation flag of the first
  // activation in the run depends on prior ordering, later ones in the
  // same run are never alternating.
  void apply_activation(uint32_t aggressor, double temperature_c, uint64_t count = 1) {
    check_row(aggressor);
    if (count == 0) return;
    const double f1 = MechanismParams::temp_factor(profile_->mechanism.temp_coeff_m1, temperature_c);
    const double f2 = MechanismParams::temp_factor(profile_->mechanism.temp_coeff_m2, temperature_c);
    for (uint64_t i = 0; i < count; ++i) array_->next_act_seq();
    const uint64_t last_seq = array_->act_seq();
    for (Side side : {Side::Lower, Side::Upper}) {
      const std::optional<uint32_t> victim = neighbor_of(aggressor, side);
      if (!victim) continue;
      RowState& st = array_->state(*victim);
      // The aggressor sits on the opposite side from the victim's view.
      SideCounters& sc = st.side[side == Side::Lower ? int(Side::Upper) : int(Side::Lower)];
      const SideCounters& other = st.side[side == Side::Lower ? int(Side::Lower) : int(Side::Upper)];
      const bool first_alternating = other.last_act_seq > sc.last_act_seq;
      const double cnt = double(count);
      const double alt = first_alternating ? 1.0 : 0.0;
      sc.acts_m1 += f1 * cnt;
      sc.acts_m1_boosted += f1 * alt;
      sc.acts_m2 += f2 * cnt;
      sc.acts_m2_alternating += f2 * alt;
      sc.raw_acts += count;
      sc.last_act_seq = last_seq;
      array_->mark_dirty(*victim);
    }
  }

  void apply_open_time(uint32_t aggressor, int64_t open_ps, double temperature_c,
                       uint64_t count = 1) {
    check_row(aggressor);
    if (count == 0 || open_ps <= 0) return;
    const double f4 = MechanismParams::temp_factor(profile_->mechanism.temp_coeff_m4, temperature_c);
    const double f5 = MechanismParams::temp_factor(profile_->mechanism.temp_coeff_m5, temperature_c);
    const double total = double(open_ps) * double(count);
    for (Side side : {Side::Lower, Side::Upper}) {
      const std::optional<uint32_t> victim = neighbor_of(aggressor, side);
      if (!victim) continue;
      RowState& st = array_->state(*victim);
      SideCounters& sc = st.side[side == Side::Lower ? int(Side::Upper) : int(Side::Lower)];
      sc.open_m4_ps += f4 * total;
      sc.open_m5_ps += f5 * total;
      sc.raw_open_ps += open_ps * int64_t(count);
      array_->mark_dirty(*victim);
    }
  }

  // Spec-level single-event entry point; returns the bitflips newly
  // crossed by this event.
  std::vector<FlipRecord> apply_event(const DisturbanceEvent& ev) {
    switch (ev.kind) {
      case DisturbanceEvent::Kind::Activation: {
        apply_activation(ev.aggressor_physical, ev.temperature_c);
        return collect_new_flips_around(ev.aggressor_physical);
      }
      case DisturbanceEvent::Kind::OpenTime: {
        if (ev.duration_ps <= 0) throw ValidationError("open-time event must have positive duration");
        apply_open_time(ev.aggressor_physical, ev.duration_ps, ev.temperature_c);
        return collect_new_flips_around(ev.aggressor_physical);
      }
      case DisturbanceEvent::Kind::Elapsed:
        if (ev.duration_ps <= 0) throw ValidationError("elapsed event must have positive duration");
        return retention_tick(ev.duration_ps, ev.temperature_c);
    }
    throw ValidationError("bad event kind");
  }

  // Advances simulated time; physically charged cells accumulate toward
  // discharge. Returns flips newly crossed in the scanned rows (all
  // initialized rows by default).
  std::vector<FlipRecord> retention_tick(int64_t elapsed_ps, double temperature_c,
                                         const std::vector<uint32_t>* scan_rows = nullptr) {
    if (elapsed_ps <= 0) throw ValidationError("retention_tick: elapsed must be > 0");
    array_->advance_time(elapsed_ps, temperature_c);
    std::vector<FlipRecord> out;
    const std::vector<uint32_t> rows = scan_rows ? *scan_rows : array_->touched_rows();
    for (uint32_t r : rows) {
      if (!array_->is_initialized(r)) continue;
      auto fresh = new_flips(r);
      out.insert(out.end(), fresh.begin(), fresh.end());
    }
    return out;
  }

  // --- fold: derived per-cell accumulators and flip queries ---

  // Channel accumulation for one parity class of one row: c10 drives
  // logical 1->0 in empirical mode (charged->discharged in device mode),
  // c01 the opposite channel. Retention is excluded here.
  struct ChannelAcc {
    double c10 = 0.0;
    double c01 = 0.0;
  };

  ChannelAcc fold_channels(const RowState& st, uint32_t parity) const {
    const MechanismParams& m = profile_->mechanism;
    const Side nwl_side = nwl_side_for_parity(parity);
    const SideCounters& nwl = st.side[int(nwl_side)];
    const SideCounters& pwl = st.side[1 - int(nwl_side)];
    const double press_nwl = nwl_side == Side::Upper ? m.press_upper_scale : 1.0;
    const double press_pwl = nwl_side == Side::Upper ? 1.0 : m.press_upper_scale;

    ChannelAcc acc;
    acc.c10 = m.m1_nwl_hammer *
                  ((nwl.acts_m1 - nwl.acts_m1_boosted) +
                   m.m3_doubleside_boost * nwl.acts_m1_boosted) +
              m.m5_pwl_press_per_ns * (pwl.open_m5_ps / 1000.0) * press_pwl;

    const double m2_single = pwl.acts_m2 - pwl.acts_m2_alternating;
    const double m2_alt = pwl.acts_m2_alternating;
    const double m2_eff = m.mode == MechanismMode::Device
                              ? m2_single
                              : m.single_sided_pwl_scale * m2_single + m2_alt;
    acc.c01 = m.m2_pwl_hammer * m2_eff +
              m.m4_nwl_press_per_ns * (nwl.open_m4_ps / 1000.0) * press_nwl;
    return acc;
  }

  double retention_units(const RowState& st) const {
    return profile_->mechanism.m6_retention_per_ns *
           (array_->retention_integral_ns() - st.ret_ref);
  }

  // Accumulated disturbance of one cell toward a physical direction.
  double accumulator(uint32_t row, uint32_t col, PhysDir dir) const {
    check_row(row);
    const RowState* st = array_->find(row);
    if (st == nullptr) return 0.0;
    return acc_phys(*st, row, col & 1, dir);
  }

  FlipCounts flip_counts(uint32_t row) {
    check_row(row);
    RowState* st = mutable_state(row);
    if (st == nullptr || !st->initialized) return {};
    if (st->uniform()) {
      const bool v0 = st->fill != 0x00;
      const LogicalDir ldir = logical_dir_of_flip(v0);
      uint64_t n = 0;
      for (uint32_t parity = 0; parity < 2; ++parity)
        n += crossed_count(*st, row, parity, v0);
      FlipCounts fc;
      (ldir == LogicalDir::ZeroToOne ? fc.zero_to_one : fc.one_to_zero) = n;
      return fc;
    }
    FlipCounts fc;
    for (const FlipRecord& f : scan_flips_mixed(*st, row))
      (f.logical_dir == LogicalDir::ZeroToOne ? fc.zero_to_one : fc.one_to_zero)++;
    return fc;
  }

  bool any_flip(uint32_t row) {
    check_row(row);
    RowState* st = mutable_state(row);
    if (st == nullptr || !st->initialized) return false;
    if (st->uniform()) {
      const bool v0 = st->fill != 0x00;
      const CellKind kind = profile_->kind_of_physical_row(row);
      const PhysDir d0 = phys_dir_of_flip(v0, kind);
      const CacheEntry& e = cache_entry(row, d0);
      for (uint32_t parity = 0; parity < 2; ++parity) {
        if (e.min_theta[parity] <= acc_phys(*st, row, parity, d0)) return true;
      }
      return false;
    }
    return flip_counts(row).total() > 0;
  }

  // All flips accrued against the row's last restore point, column order.
  std::vector<FlipRecord> list_flips(uint32_t row) {
    check_row(row);
    RowState* st = mutable_state(row);
    if (st == nullptr || !st->initialized) return {};
    std::vector<FlipRecord> out;
    if (st->uniform()) {
      const bool v0 = st->fill != 0x00;
      const CellKind kind = profile_->kind_of_physical_row(row);
      const PhysDir d0 = phys_dir_of_flip(v0, kind);
      const LogicalDir ldir = logical_dir_of_flip(v0);
      const CacheEntry& e = cache_entry(row, d0);
      for (uint32_t parity = 0; parity < 2; ++parity) {
        const uint64_t k = crossed_count(*st, row, parity, v0);
        for (uint64_t i = 0; i < k; ++i)
          out.push_back({row, e.by_parity[parity][i].second, ldir, d0});
      }
    } else {
      out = scan_flips_mixed(*st, row);
    }
    std::sort(out.begin(), out.end(),
              [](const FlipRecord& a, const FlipRecord& b) { return a.column < b.column; });
    return out;
  }

  // Flips crossed since the last new_flips/apply_event report on this row.
  std::vector<FlipRecord> new_flips(uint32_t row) {
    check_row(row);
    RowState* st = mutable_state(row);
    if (st == nullptr || !st->initialized) return {};
    std::vector<FlipRecord> out;
    if (st->uniform()) {
      const bool v0 = st->fill != 0x00;
      const CellKind kind = profile_->kind_of_physical_row(row);
      const PhysDir d0 = phys_dir_of_flip(v0, kind);
      const LogicalDir ldir = logical_dir_of_flip(v0);
      const CacheEntry& e = cache_entry(row, d0);
      for (uint32_t parity = 0; parity < 2; ++parity) {
        const uint64_t k = crossed_count(*st, row, parity, v0);
        for (uint64_t i = st->reported_parity_flips[parity]; i < k; ++i)
          out.push_back({row, e.by_parity[parity][i].second, ldir, d0});
        st->reported_parity_flips[parity] = uint32_t(k);
      }
    } else {
      auto all = scan_flips_mixed(*st, row);
      if (!st->reported_cols) st->reported_cols = std::make_unique<std::vector<uint32_t>>();
      for (const FlipRecord& f : all) {
        if (!std::binary_search(st->reported_cols->begin(), st->reported_cols->end(), f.column))
          out.push_back(f);
      }
      st->reported_cols->clear();
      for (const FlipRecord& f : all) st->reported_cols->push_back(f.column);
      std::sort(st->reported_cols->begin(), st->reported_cols->end());
    }
    std::sort(out.begin(), out.end(),
              [](const FlipRecord& a, const FlipRecord& b) { return a.column < b.column; });
    return out;
  }

  bool logical_bit(uint32_t row, uint32_t col) {
    check_row(row);
    RowState* st = mutable_state(row);
    if (st == nullptr || !st->initialized)
      throw ValidationError("logical_bit: row not initialized");
    const bool v0 = st->logical_bit_at_restore(col);
    const CellKind kind = profile_->kind_of_physical_row(row);
    const PhysDir d0 = phys_dir_of_flip(v0, kind);
    const double theta = sample_threshold(row, col, d0);
    return acc_phys(*st, row, col & 1, d0) >= theta ? !v0 : v0;
  }

  // Consolidates pending flips into the row content, then restores the
  // row (what an activation of the row itself, or a refresh, does).
  void restore_row(uint32_t row) {
    check_row(row);
    RowState& st = array_->state(row);
    if (st.initialized) {
      auto flips = list_flips(row);
      if (!flips.empty()) {
        materialize(st);
        for (const FlipRecord& f : flips)
          (*st.bytes)[f.column >> 3] ^= uint8_t(1u << (f.column & 7));
      }
    }
    array_->restore(row, st);
  }

  void refresh_all() {
    for (uint32_t r : array_->touched_rows()) restore_row(r);
  }

  // Write one byte into the (open, freshly restored) row.
  void write_byte(uint32_t row, uint32_t byte_col, uint8_t value) {
    check_row(row);
    if (byte_col >= profile_->columns_per_row / 8)
      throw ValidationError("write_byte: column out of range");
    RowState& st = array_->state(row);
    st.initialized = true;
    if (st.uniform() && value == st.fill) return;
    materialize(st);
    (*st.bytes)[byte_col] = value;
  }

  uint8_t read_byte(uint32_t row, uint32_t byte_col) {
    check_row(row);
    if (byte_col >= profile_->columns_per_row / 8)
      throw ValidationError("read_byte: column out of range");
    const RowState* st = array_->find(row);
    if (st == nullptr || !st->initialized)
      throw ValidationError("read_byte: row not initialized");
    uint8_t v = 0;
    for (uint32_t b = 0; b < 8; ++b)
      v |= uint8_t(logical_bit(row, byte_col * 8 + b)) << b;
    return v;
  }

  void drop_cache() { cache_.clear(); cache_order_.clear(); }

 private:
  struct CacheEntry {
    std::vector<std::pair<double, uint32_t>> by_parity[2];  // (theta, col) ascending
    double min_theta[2] = {std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity()};
  };

  static uint64_t p_bits(double p) {
    const long double t = static_cast<long double>(p) * 18446744073709551616.0L;
    if (t >= 18446744073709551615.0L) return UINT64_MAX;
    return static_cast<uint64_t>(t);
  }

  void check_row(uint32_t row) const {
    if (row >= profile_->rows_per_bank)
      throw ValidationError("row out of range: " + std::to_string(row));
  }

  std::optional<uint32_t> neighbor_of(uint32_t aggressor, Side side) const {
    // Side here is relative to the aggressor: the victim at aggressor-1
    // (Lower) or aggressor+1 (Upper). Subarray edges and remapped rows
    // break adjacency.
    const uint32_t sub = aggressor / profile_->subarray_size;
    if (profile_->is_remapped(aggressor)) return std::nullopt;
    if (side == Side::Lower) {
      if (aggressor % profile_->subarray_size == 0) return std::nullopt;
      const uint32_t v = aggressor - 1;
      if (profile_->is_remapped(v)) return std::nullopt;
      return v;
    }
    const uint32_t v = aggressor + 1;
    if (v >= profile_->rows_per_bank || v / profile_->subarray_size != sub) return std::nullopt;
    if (profile_->is_remapped(v)) return std::nullopt;
    return v;
  }

  RowState* mutable_state(uint32_t row) {
    return const_cast<RowState*>(array_->find(row));
  }

  double acc_phys(const RowState& st, uint32_t row, uint32_t parity, PhysDir dir) const {
    const ChannelAcc ch = fold_channels(st, parity);
    double base;
    if (profile_->mechanism.mode == MechanismMode::Device) {
      base = dir == PhysDir::ChargedToDischarged ? ch.c10 : ch.c01;
    } else {
      const CellKind kind = profile_->kind_of_physical_row(row);
      const bool charged_before = dir == PhysDir::ChargedToDischarged;
      const bool logical_before = logical_for_charged(charged_before, kind);
      base = logical_before ? ch.c10 : ch.c01;
    }
    if (dir == PhysDir::ChargedToDischarged) base += retention_units(st);
    return base;
  }

  uint64_t crossed_count(const RowState& st, uint32_t row, uint32_t parity, bool v0) {
    const CellKind kind = profile_->kind_of_physical_row(row);
    const PhysDir d0 = phys_dir_of_flip(v0, kind);
    const CacheEntry& e = cache_entry(row, d0);
    const double acc = acc_phys(st, row, parity, d0);
    const auto& vec = e.by_parity[parity];
    return uint64_t(std::upper_bound(vec.begin(), vec.end(),
                                     std::make_pair(acc, UINT32_MAX)) -
                    vec.begin());
  }

  std::vector<FlipRecord> scan_flips_mixed(const RowState& st, uint32_t row) const {
    std::vector<FlipRecord> out;
    for (uint32_t col = 0; col < profile_->columns_per_row; ++col) {
      const bool v0 = st.logical_bit_at_restore(col);
      const CellKind kind = profile_->kind_of_physical_row(row);
      const PhysDir d0 = phys_dir_of_flip(v0, kind);
      const double theta = sample_threshold(row, col, d0);
      if (acc_phys(st, row, col & 1, d0) >= theta)
        out.push_back({row, col, logical_dir_of_flip(v0), d0});
    }
    return out;
  }

  std::vector<FlipRecord> collect_new_flips_around(uint32_t aggressor) {
    std::vector<FlipRecord> out;
    for (Side side : {Side::Lower, Side::Upper}) {
      const std::optional<uint32_t> victim = neighbor_of(aggressor, side);
      if (!victim || !array_->is_initialized(*victim)) continue;
      auto fresh = new_flips(*victim);
      out.insert(out.end(), fresh.begin(), fresh.end());
    }
    return out;
  }

  const CacheEntry& cache_entry(uint32_t row, PhysDir dir) {
    const uint64_t key = (uint64_t(row) << 1) | uint64_t(dir);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    if (cache_order_.size() >= kCacheCap) {
      cache_.erase(cache_order_.front());
      cache_order_.pop_front();
    }
    CacheEntry e;
    const VulnParams& vp = profile_->vuln_for(dir, row);
    const uint64_t bits = vp.p >= 1.0 ? UINT64_MAX : p_bits(vp.p);
    for (uint32_t col = 0; col < profile_->columns_per_row; ++col) {
      if (vp.p <= 0.0) break;
      if (vp.p < 1.0) {
        const uint64_t gate = rng::cell_key(profile_->master_seed, row, col, uint8_t(dir), 0);
        if (gate >= bits) continue;
      }
      const uint64_t draw = rng::cell_key(profile_->master_seed, row, col, uint8_t(dir), 1);
      double u = rng::to_unit(draw);
      u = std::min(std::max(u, 0x1.0p-53), 1.0 - 0x1.0p-53);
      const double theta = std::exp(vp.mu + vp.sigma * rng::inverse_normal_cdf(u));
      e.by_parity[col & 1].emplace_back(theta, col);
    }
    for (uint32_t parity = 0; parity < 2; ++parity) {
      auto& vec = e.by_parity[parity];
      std::sort(vec.begin(), vec.end());
      if (!vec.empty()) e.min_theta[parity] = vec.front().first;
    }
    cache_order_.push_back(key);
    auto [pos, inserted] = cache_.emplace(key, std::move(e));
    return pos->second;
  }

  void materialize(RowState& st) const {
    if (!st.uniform()) return;
    st.bytes = std::make_unique<std::vector<uint8_t>>(profile_->columns_per_row / 8, st.fill);
  }

  static constexpr size_t kCacheCap = 8;

  const ChipProfile* profile_;
  CellArray* array_;
  std::unordered_map<uint64_t, CacheEntry> cache_;
  std::deque<uint64_t> cache_order_;
};

// Free-function forms of the engine-level operations.
inline std::vector<FlipRecord> apply_event(DisturbEngine& engine, const DisturbanceEvent& ev) {
  return engine.apply_event(ev);
}

inline std::vector<FlipRecord> retention_tick(DisturbEngine& engine, int64_t elapsed_ps,
                                              double temperature_c) {
  return engine.retention_tick(elapsed_ps, temperature_c);
}

inline std::vector<CellVulnerability> sample_vulnerabilities(const ChipProfile& profile,
                                                             CellArray& array, uint32_t row) {
  return DisturbEngine(profile, array).sample_vulnerabilities(row);
}

}  // namespace rdsim

#endif  // RDSIM_DISTURB_HPP
