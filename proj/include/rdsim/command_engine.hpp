#ifndef RDSIM_COMMAND_ENGINE_HPP
#define RDSIM_COMMAND_ENGINE_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rdsim/common.hpp"
#include "rdsim/disturb.hpp"
#include "rdsim/dram_model.hpp"

namespace rdsim {

enum class Opcode : uint8_t { Act = 0, Pre = 1, Rd = 2, Wr = 3, Ref = 4 };

inline const char* to_string(Opcode op) {
  switch (op) {
    case Opcode::Act: return "ACT";
    case Opcode::Pre: return "PRE";
    case Opcode::Rd: return "RD";
    case Opcode::Wr: return "WR";
    default: return "REF";
  }
}

struct TimedCommand {
  Opcode op = Opcode::Act;
  uint32_t row = 0;      // ACT
  uint32_t column = 0;   // RD/WR, byte index
  uint8_t data = 0;      // WR
  int64_t issue_ps = 0;
};

// A command program is a list of segments; each segment's body replays
// `repeat` times at a fixed period. Hammer programs stay compact this way
// (one alternation round, repeated), and the executor can process a
// repeated ACT/PRE-only body in closed form.
struct ProgramSegment {
  std::vector<TimedCommand> body;  // issue times relative to segment start
  uint64_t repeat = 1;
  int64_t period_ps = 0;  // body span per iteration; 0 allowed when repeat == 1

  int64_t span_ps() const {
    if (body.empty() || repeat == 0) return 0;
    return int64_t(repeat - 1) * period_ps + body.back().issue_ps;
  }
};

struct CommandProgram {
  std::vector<ProgramSegment> segments;

  bool empty() const {
    for (const auto& s : segments)
      if (!s.body.empty() && s.repeat > 0) return false;
    return true;
  }

  uint64_t total_commands() const {
    uint64_t n = 0;
    for (const auto& s : segments) n += uint64_t(s.body.size()) * s.repeat;
    return n;
  }

  // Expands all repeats; intended for small programs and tests.
  std::vector<TimedCommand> flatten() const {
    std::vector<TimedCommand> out;
    int64_t t0 = 0;
    for (const auto& s : segments) {
      for (uint64_t k = 0; k < s.repeat; ++k) {
        for (TimedCommand c : s.body) {
          c.issue_ps += t0 + int64_t(k) * s.period_ps;
          out.push_back(c);
        }
      }
      t0 += int64_t(s.repeat) * s.period_ps;
    }
    return out;
  }
};

struct BankState {
  std::optional<uint32_t> open_row;
  int64_t row_open_since_ps = 0;
  int64_t total_elapsed_ps = 0;
};

struct ProgramTrace {
  std::map<uint32_t, uint64_t> act_counts;  // per physical row
  std::map<uint32_t, int64_t> open_ps;      // cumulative aggressor-open time
  int64_t span_ps = 0;
  std::vector<std::string> violations;  // always empty on success; errors throw
  std::vector<std::string> warnings;    // advisory refresh-window notes

  double span_ms() const { return double(span_ps) / 1e9; }
};

struct ExecuteOptions {
  // Refresh-window handling: the hard bound (span > tREFW with refresh
  // disabled) is an error in strict mode and a warning otherwise. A span
  // beyond half the window is flagged as a warning in both modes, since
  // single-window experiments that big leave no headroom for the refresh
  // traffic a deployed part would interleave.
  bool strict_window = false;
  bool window_check = true;
};

// Builds a RowHammer/RowPress access pattern: each aggressor is opened for
// `open_ps` and precharged, repeated `count_per_aggressor` times; two
// aggressors alternate starting with the lower-addressed one.
inline CommandProgram build_hammer_program(std::vector<uint32_t> aggressors,
                                           uint64_t count_per_aggressor,
                                           int64_t open_ps = timing::kTrasPs) {
  if (aggressors.empty() || aggressors.size() > 2)
    throw ValidationError("build_hammer_program: need 1 or 2 aggressor rows");
  if (aggressors.size() == 2 && aggressors[0] == aggressors[1])
    throw ValidationError("build_hammer_program: aggressors must be distinct");
  if (open_ps < timing::kTrasPs || open_ps > timing::kMaxOpenPs)
    throw TimingViolationError("build_hammer_program: open time out of [tRAS, 7.8us]");
  std::sort(aggressors.begin(), aggressors.end());

  CommandProgram prog;
  if (count_per_aggressor == 0) return prog;

  ProgramSegment seg;
  const int64_t pair_ps = open_ps + timing::kTrpPs;
  int64_t t = 0;
  for (uint32_t row : aggressors) {
    seg.body.push_back({Opcode::Act, row, 0, 0, t});
    seg.body.push_back({Opcode::Pre, 0, 0, 0, t + open_ps});
    t += pair_ps;
  }
  seg.period_ps = t;
  seg.repeat = count_per_aggressor;
  prog.segments.push_back(std::move(seg));
  return prog;
}

namespace detail {

// Interpreter state shared by the stepped and closed-form paths.
struct ExecState {
  BankState bank;
  int64_t last_act_ps = INT64_MIN / 2;
  int64_t last_pre_end_ps = INT64_MIN / 2;  // pre issue + tRP
  int64_t last_ref_end_ps = INT64_MIN / 2;
  int64_t cursor_ps = 0;  // simulated time already accounted to the array
  int64_t last_issue_ps = INT64_MIN / 2;
  int64_t end_ps = 0;  // last issue + closing latency
};

inline void advance_to(DisturbEngine& eng, ExecState& st, int64_t t_ps, double temp) {
  if (t_ps > st.cursor_ps) {
    eng.array().advance_time(t_ps - st.cursor_ps, temp);
    st.cursor_ps = t_ps;
  }
}

inline void step_command(DisturbEngine& eng, ExecState& st, const TimedCommand& c,
                         double temp, ProgramTrace& trace) {
  if (c.issue_ps < st.last_issue_ps)
    throw ValidationError("program issue times must be non-decreasing");
  st.last_issue_ps = c.issue_ps;
  advance_to(eng, st, c.issue_ps, temp);

  switch (c.op) {
    case Opcode::Act: {
      if (st.bank.open_row)
        throw IllegalCommandError("ACT while row " + std::to_string(*st.bank.open_row) +
                                  " is open");
      if (c.issue_ps - st.last_act_ps < timing::kTrcPs)
        throw TimingViolationError("ACT-to-ACT spacing below tRC");
      if (c.issue_ps < st.last_pre_end_ps)
        throw TimingViolationError("ACT before precharge completed (tRP)");
      if (c.issue_ps < st.last_ref_end_ps)
        throw TimingViolationError("ACT before refresh completed (tRFC)");
      if (c.row >= eng.profile().rows_per_bank)
        throw ValidationError("ACT row out of range");
      // Activation senses and rewrites the row itself: pending flips
      // consolidate, its accumulators and retention clock reset.
      eng.restore_row(c.row);
      eng.apply_activation(c.row, temp);
      st.bank.open_row = c.row;
      st.bank.row_open_since_ps = c.issue_ps;
      st.last_act_ps = c.issue_ps;
      trace.act_counts[c.row] += 1;
      break;
    }
    case Opcode::Pre: {
      if (!st.bank.open_row) throw IllegalCommandError("PRE with no open row");
      const int64_t open = c.issue_ps - st.bank.row_open_since_ps;
      if (open < timing::kTrasPs)
        throw TimingViolationError("row open time below tRAS");
      if (open > timing::kMaxOpenPs)
        throw TimingViolationError("row open time above the 7.8us bound");
      eng.apply_open_time(*st.bank.open_row, open, temp);
      trace.open_ps[*st.bank.open_row] += open;
      st.bank.open_row.reset();
      st.last_pre_end_ps = c.issue_ps + timing::kTrpPs;
      break;
    }
    case Opcode::Rd: {
      if (!st.bank.open_row) throw IllegalCommandError("RD with no open row");
      (void)eng.read_byte(*st.bank.open_row, c.column);
      break;
    }
    case Opcode::Wr: {
      if (!st.bank.open_row) throw IllegalCommandError("WR with no open row");
      eng.write_byte(*st.bank.open_row, c.column, c.data);
      break;
    }
    case Opcode::Ref: {
      if (st.bank.open_row) throw IllegalCommandError("REF with a row open");
      eng.refresh_all();
      st.last_ref_end_ps = c.issue_ps + timing::kTrfcPs;
      break;
    }
  }
  st.end_ps = c.issue_ps + (c.op == Opcode::Pre ? timing::kTrpPs
                            : c.op == Opcode::Ref ? timing::kTrfcPs
                                                  : 0);
}

// True when the body is a clean sequence of ACT/PRE pairs, which is the
// shape the closed-form repeat path understands.
inline bool act_pre_pairs_only(const ProgramSegment& seg) {
  if (seg.body.size() % 2 != 0 || seg.body.empty()) return false;
  for (size_t i = 0; i < seg.body.size(); i += 2) {
    if (seg.body[i].op != Opcode::Act || seg.body[i + 1].op != Opcode::Pre) return false;
  }
  return seg.period_ps >= seg.body.back().issue_ps + timing::kTrpPs;
}

// Deterministic lower bound on any finite sampled threshold: the normal
// quantile is evaluated on arguments clamped away from 0, so exp(mu -
// 8.3*sigma) underestimates every draw.
inline double threshold_floor(const ChipProfile& p) {
  double floor = std::numeric_limits<double>::infinity();
  for (const VulnParams* vp : {&p.vuln_0to1, &p.vuln_1to0}) {
    if (vp->p <= 0.0) continue;
    floor = std::min(floor, std::exp(vp->mu - 8.3 * vp->sigma));
  }
  return floor;
}

// The repeated body may be collapsed only when per-iteration effects are
// provably identical from the second iteration on: aggressors must not be
// adjacent to each other (an activated row next to another would be
// restored mid-pattern), and retention over the whole segment must stay
// below any samplable threshold so skipped per-iteration aggressor
// restores cannot change flip outcomes.
inline bool batchable_segment(const ProgramSegment& seg, const ChipProfile& profile,
                              double temperature_c) {
  if (seg.repeat <= 3 || !act_pre_pairs_only(seg)) return false;
  std::vector<uint32_t> rows;
  for (size_t i = 0; i < seg.body.size(); i += 2) rows.push_back(seg.body[i].row);
  std::sort(rows.begin(), rows.end());
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i] - rows[i - 1] <= 1) return false;
  }
  const double m6 = profile.mechanism.m6_retention_per_ns;
  if (m6 > 0.0) {
    const double f6 = MechanismParams::temp_factor(profile.mechanism.temp_coeff_m6, temperature_c);
    const double span_ns = double(seg.span_ps() + timing::kTrpPs) / 1000.0;
    if (m6 * f6 * span_ns >= threshold_floor(profile)) return false;
  }
  return true;
}

}  // namespace detail

// Executes a timed command program against the engine's cell array.
// Illegal commands and timing violations throw; the returned trace is
// complete and has an empty violation list.
inline ProgramTrace execute(DisturbEngine& engine, const CommandProgram& program,
                            double temperature_c, const ExecuteOptions& opts = {}) {
  ProgramTrace trace;
  detail::ExecState st;
  st.cursor_ps = engine.array().now_ps();
  const int64_t t_origin = st.cursor_ps;

  int64_t seg_start = 0;
  for (const auto& seg : program.segments) {
    if (seg.body.empty() || seg.repeat == 0) continue;

    const bool batchable = detail::batchable_segment(seg, engine.profile(), temperature_c);
    const uint64_t stepped_iters = batchable ? 2 : seg.repeat;

    // Victims affected by this segment, for the steady-state snapshot.
    std::vector<uint32_t> victims;
    if (batchable) {
      for (size_t i = 0; i < seg.body.size(); i += 2) {
        const Adjacency adj = neighbors_physical(engine.profile(), seg.body[i].row);
        if (adj.lower_physical) victims.push_back(*adj.lower_physical);
        if (adj.upper_physical) victims.push_back(*adj.upper_physical);
      }
      std::sort(victims.begin(), victims.end());
      victims.erase(std::unique(victims.begin(), victims.end()), victims.end());
    }

    std::vector<std::array<SideCounters, 2>> before;
    for (uint64_t k = 0; k < stepped_iters; ++k) {
      if (batchable && k == 1) {
        before.clear();
        for (uint32_t v : victims) {
          const RowState& rs = engine.array().state(v);
          before.push_back({rs.side[0], rs.side[1]});
        }
      }
      for (TimedCommand c : seg.body) {
        c.issue_ps += t_origin + seg_start + int64_t(k) * seg.period_ps;
        detail::step_command(engine, st, c, temperature_c, trace);
      }
    }

    if (batchable) {
      // From the second iteration on, every iteration applies the same
      // per-victim counter delta (alternation flags are periodic once all
      // aggressors have acted). Apply the remaining repeat-2 iterations
      // as one multiply-add; at the 50 C reference all weights are 1.0
      // and this is bit-exact against stepping.
      const uint64_t rest = seg.repeat - 2;
      const uint64_t acts_per_iter = seg.body.size() / 2;
      const uint64_t seq_shift = rest * acts_per_iter;
      for (size_t vi = 0; vi < victims.size(); ++vi) {
        RowState& rs = engine.array().state(victims[vi]);
        for (int s = 0; s < 2; ++s) {
          SideCounters& cur = rs.side[s];
          const SideCounters& old = before[vi][s];
          const double n = double(rest);
          cur.acts_m1 += n * (cur.acts_m1 - old.acts_m1);
          cur.acts_m1_boosted += n * (cur.acts_m1_boosted - old.acts_m1_boosted);
          cur.acts_m2 += n * (cur.acts_m2 - old.acts_m2);
          cur.acts_m2_alternating += n * (cur.acts_m2_alternating - old.acts_m2_alternating);
          cur.open_m4_ps += n * (cur.open_m4_ps - old.open_m4_ps);
          cur.open_m5_ps += n * (cur.open_m5_ps - old.open_m5_ps);
          cur.raw_acts += rest * (cur.raw_acts - old.raw_acts);
          cur.raw_open_ps += int64_t(rest) * (cur.raw_open_ps - old.raw_open_ps);
          if (cur.raw_acts != old.raw_acts) cur.last_act_seq += seq_shift;
        }
        engine.array().mark_dirty(victims[vi]);
      }
      engine.array().advance_act_seq(seq_shift);

      // Per-row trace totals and the final per-aggressor restores, placed
      // at the last iteration's ACT times exactly as stepping would.
      const int64_t last_iter_start = t_origin + seg_start + int64_t(seg.repeat - 1) * seg.period_ps;
      for (size_t i = 0; i < seg.body.size(); i += 2) {
        const TimedCommand& act = seg.body[i];
        const TimedCommand& pre = seg.body[i + 1];
        const int64_t open = pre.issue_ps - act.issue_ps;
        trace.act_counts[act.row] += rest;
        trace.open_ps[act.row] += open * int64_t(rest);
        detail::advance_to(engine, st, last_iter_start + act.issue_ps, temperature_c);
        engine.restore_row(act.row);
      }
      const int64_t seg_end_abs = last_iter_start + seg.body.back().issue_ps;
      st.last_issue_ps = seg_end_abs;
      st.last_act_ps = last_iter_start + seg.body[seg.body.size() - 2].issue_ps;
      st.last_pre_end_ps = seg_end_abs + timing::kTrpPs;
      st.end_ps = seg_end_abs + timing::kTrpPs;
      detail::advance_to(engine, st, st.end_ps, temperature_c);
    }

    seg_start += int64_t(seg.repeat) * seg.period_ps;
  }

  detail::advance_to(engine, st, st.end_ps, temperature_c);
  trace.span_ps = st.end_ps - t_origin;
  if (trace.span_ps < 0) trace.span_ps = 0;

  if (opts.window_check && !program.empty()) {
    if (trace.span_ps > timing::kRefreshWindowPs) {
      const std::string msg = "program span exceeds the 64ms refresh window (refresh disabled)";
      if (opts.strict_window) throw RefreshWindowError(msg);
      trace.warnings.push_back(msg);
    } else if (trace.span_ps * 2 > timing::kRefreshWindowPs) {
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "program spans %.1f%% of the 64ms refresh window with refresh disabled",
                    100.0 * double(trace.span_ps) / double(timing::kRefreshWindowPs));
      trace.warnings.emplace_back(buf);
    }
  }
  return trace;
}

// Line-oriented trace dump: `<issue_time_ns> <OPCODE> [row|col]`.
inline void dump_program(const CommandProgram& program, std::ostream& os,
                         uint64_t max_commands = UINT64_MAX) {
  uint64_t emitted = 0;
  int64_t t0 = 0;
  char buf[64];
  for (const auto& seg : program.segments) {
    for (uint64_t k = 0; k < seg.repeat; ++k) {
      for (const TimedCommand& c : seg.body) {
        if (emitted++ >= max_commands) return;
        const int64_t t = t0 + int64_t(k) * seg.period_ps + c.issue_ps;
        std::snprintf(buf, sizeof buf, "%.2f", double(t) / 1000.0);
        os << buf << ' ' << to_string(c.op);
        if (c.op == Opcode::Act) os << ' ' << c.row;
        if (c.op == Opcode::Rd || c.op == Opcode::Wr) os << ' ' << c.column;
        os << '\n';
      }
    }
    t0 += int64_t(seg.repeat) * seg.period_ps;
  }
}

}  // namespace rdsim

#endif  // RDSIM_COMMAND_ENGINE_HPP
