#ifndef RDSIM_DRAM_MODEL_HPP
#define RDSIM_DRAM_MODEL_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rdsim/common.hpp"
#include "rdsim/profile.hpp"

namespace rdsim {

enum class MissingNeighbor : uint8_t {
  None = 0,
  SubarrayEdge = 1,     // physical row sits at a subarray boundary
  RemappedNeighbor = 2  // adjacent physical row was repaired out
};

// Physical adjacency of one victim row. Roles are reported for even
// columns; odd columns see the mirrored assignment (each wordline is NWL
// for the cells on one side and PWL for the other).
struct Adjacency {
  uint32_t victim_logical = 0;
  uint32_t victim_physical = 0;
  bool victim_remapped = false;

  std::optional<uint32_t> lower_physical;
  std::optional<uint32_t> upper_physical;
  std::optional<uint32_t> lower_logical;
  std::optional<uint32_t> upper_logical;
  MissingNeighbor lower_missing = MissingNeighbor::None;
  MissingNeighbor upper_missing = MissingNeighbor::None;

  WordlineRole upper_role_even_columns = WordlineRole::Nwl;
  WordlineRole lower_role_even_columns = WordlineRole::Pwl;

  bool has_both_neighbors() const {
    return lower_physical.has_value() && upper_physical.has_value() && !victim_remapped;
  }
};

// Side index of a neighbor relative to its victim.
enum class Side : uint8_t { Lower = 0, Upper = 1 };

// Column-parity class. Even columns have their NWL at physical row r+1,
// odd columns at r-1.
inline Side nwl_side_for_parity(uint32_t col_parity) {
  return col_parity == 0 ? Side::Upper : Side::Lower;
}

inline CellKind encoding_of(const ChipProfile& profile, uint32_t physical_row) {
  if (physical_row >= profile.rows_per_bank)
    throw ValidationError("encoding_of: physical row out of range");
  return profile.kind_of_physical_row(physical_row);
}

// Adjacency seen from an aggressor: the physical rows its activation
// disturbs. Subarray edges and remapped rows (the aggressor itself or the
// target) break adjacency.
struct PhysicalNeighbors {
  std::optional<uint32_t> lower_physical;
  std::optional<uint32_t> upper_physical;
};

inline PhysicalNeighbors neighbors_physical(const ChipProfile& profile,
                                            uint32_t aggressor_physical) {
  if (aggressor_physical >= profile.rows_per_bank)
    throw ValidationError("neighbors_physical: row out of range");
  PhysicalNeighbors out;
  if (profile.is_remapped(aggressor_physical)) return out;
  const uint32_t sub = aggressor_physical / profile.subarray_size;
  if (aggressor_physical % profile.subarray_size != 0) {
    const uint32_t v = aggressor_physical - 1;
    if (!profile.is_remapped(v)) out.lower_physical = v;
  }
  const uint32_t up = aggressor_physical + 1;
  if (up < profile.rows_per_bank && up / profile.subarray_size == sub &&
      !profile.is_remapped(up)) {
    out.upper_physical = up;
  }
  return out;
}

inline Adjacency neighbors(const ChipProfile& profile, uint32_t victim_logical) {
  if (victim_logical >= profile.rows_per_bank)
    throw ValidationError("neighbors: victim row out of range");
  Adjacency adj;
  adj.victim_logical = victim_logical;
  adj.victim_physical = profile.to_physical(victim_logical);
  adj.victim_remapped = profile.is_remapped(adj.victim_physical);

  const uint32_t p = adj.victim_physical;
  const uint32_t sub = p / profile.subarray_size;

  if (p % profile.subarray_size == 0) {
    adj.lower_missing = MissingNeighbor::SubarrayEdge;
  } else if (profile.is_remapped(p - 1)) {
    adj.lower_missing = MissingNeighbor::RemappedNeighbor;
  } else {
    adj.lower_physical = p - 1;
    adj.lower_logical = profile.to_logical(p - 1);
  }

  const bool upper_in_subarray = (p + 1) / profile.subarray_size == sub && p + 1 < profile.rows_per_bank;
  if (!upper_in_subarray) {
    adj.upper_missing = MissingNeighbor::SubarrayEdge;
  } else if (profile.is_remapped(p + 1)) {
    adj.upper_missing = MissingNeighbor::RemappedNeighbor;
  } else {
    adj.upper_physical = p + 1;
    adj.upper_logical = profile.to_logical(p + 1);
  }
  return adj;
}

// Aggregated disturbance received by one victim row from one neighbor
// side since the victim's last restore. Activation counts are weighted by
// the mechanism temperature factor at event time, open times by the
// press-mechanism factors; at the 50 C reference every weight is exactly
// 1.0 so the sums stay integer-valued and bit-exact under batching.
struct SideCounters {
  double acts_m1 = 0.0;
  double acts_m1_boosted = 0.0;
  double acts_m2 = 0.0;
  double acts_m2_alternating = 0.0;
  double open_m4_ps = 0.0;
  double open_m5_ps = 0.0;
  uint64_t raw_acts = 0;
  int64_t raw_open_ps = 0;
  uint64_t last_act_seq = 0;

  void reset(uint64_t seq_now) {
    *this = SideCounters{};
    last_act_seq = seq_now;
  }
};

struct RowState {
  bool initialized = false;
  uint8_t fill = 0x00;  // uniform content as of last restore
  // Materialized only when content stops being a uniform fill (WR of a
  // different byte, or flips consolidated by a restore).
  std::unique_ptr<std::vector<uint8_t>> bytes;

  SideCounters side[2];  // indexed by Side

  double ret_ref = 0.0;       // retention integral snapshot at last restore
  int64_t restore_ps = 0;

  // Flip-reporting watermarks for incremental "new bitflips" queries.
  // Uniform-content rows track crossings per column parity; mixed-content
  // rows fall back to an explicit reported set.
  uint32_t reported_parity_flips[2] = {0, 0};
  std::unique_ptr<std::vector<uint32_t>> reported_cols;

  bool uniform() const { return bytes == nullptr; }

  bool logical_bit_at_restore(uint32_t col) const {
    if (uniform()) return fill != 0x00;
    return ((*bytes)[col >> 3] >> (col & 7)) & 1;
  }
};

// Mutable per-bank cell state: logical content plus accumulated
// disturbance. Rows are materialized lazily; single writer per instance.
class CellArray {
 public:
  explicit CellArray(const ChipProfile& profile) : profile_(&profile) {}

  const ChipProfile& profile() const { return *profile_; }

  // Host-side initialization of one row to all-zeros or all-ones. Counts
  // as a restore: accumulators, retention clock and flip state reset.
  void init_row(uint32_t physical_row, uint8_t pattern) {
    check_row(physical_row);
    if (pattern != 0x00 && pattern != 0xFF)
      throw ValidationError("init_row: only 0x00 and 0xFF fill patterns are supported");
    RowState& st = state(physical_row);
    st.initialized = true;
    st.fill = pattern;
    st.bytes.reset();
    restore(physical_row, st);
  }

  // Resets disturbance bookkeeping while keeping current content (the
  // effect of activating the row itself, or of a refresh). Flips pending
  // against the old restore point are consolidated into the content first
  // by the caller (see DisturbEngine::restore_row).
  void restore(uint32_t physical_row, RowState& st) {
    st.side[0].reset(act_seq_);
    st.side[1].reset(act_seq_);
    st.ret_ref = ret_integral_ns_;
    st.restore_ps = now_ps_;
    st.reported_parity_flips[0] = st.reported_parity_flips[1] = 0;
    st.reported_cols.reset();
    dirty_.erase(physical_row);
  }

  bool is_initialized(uint32_t physical_row) const {
    auto it = rows_.find(physical_row);
    return it != rows_.end() && it->second.initialized;
  }

  RowState& state(uint32_t physical_row) {
    check_row(physical_row);
    return rows_[physical_row];
  }

  const RowState* find(uint32_t physical_row) const {
    auto it = rows_.find(physical_row);
    return it == rows_.end() ? nullptr : &it->second;
  }

  void mark_dirty(uint32_t physical_row) { dirty_.insert(physical_row); }

  // Rows whose disturbance counters changed since their last restore.
  std::vector<uint32_t> dirty_rows() const {
    std::vector<uint32_t> v(dirty_.begin(), dirty_.end());
    std::sort(v.begin(), v.end());
    return v;
  }

  std::vector<uint32_t> touched_rows() const {
    std::vector<uint32_t> v;
    v.reserve(rows_.size());
    for (const auto& [row, st] : rows_)
      if (st.initialized) v.push_back(row);
    std::sort(v.begin(), v.end());
    return v;
  }

  uint64_t next_act_seq() { return ++act_seq_; }
  uint64_t act_seq() const { return act_seq_; }

  int64_t now_ps() const { return now_ps_; }

  // Advances wall-clock time; the retention integral accrues weighted by
  // the retention mechanism's temperature factor.
  void advance_time(int64_t dt_ps, double temperature_c) {
    if (dt_ps < 0) throw ValidationError("advance_time: negative duration");
    now_ps_ += dt_ps;
    const double f = MechanismParams::temp_factor(profile_->mechanism.temp_coeff_m6, temperature_c);
    ret_integral_ns_ += f * (double(dt_ps) / 1000.0);
  }

  double retention_integral_ns() const { return ret_integral_ns_; }

  int64_t retention_clock_ps(uint32_t physical_row) const {
    const RowState* st = find(physical_row);
    return st == nullptr ? now_ps_ : now_ps_ - st->restore_ps;
  }

 private:
  void check_row(uint32_t row) const {
    if (row >= profile_->rows_per_bank)
      throw ValidationError("row out of range: " + std::to_string(row));
  }

  const ChipProfile* profile_;
  std::unordered_map<uint32_t, RowState> rows_;
  std::unordered_set<uint32_t> dirty_;
  int64_t now_ps_ = 0;
  double ret_integral_ns_ = 0.0;
  uint64_t act_seq_ = 0;
};

}  // namespace rdsim

#endif  // RDSIM_DRAM_MODEL_HPP
