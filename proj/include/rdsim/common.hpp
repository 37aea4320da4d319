#ifndef RDSIM_COMMON_HPP
#define RDSIM_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rdsim {

inline constexpr const char* kVersion = "0.1.0";

// All command timing is tracked in integer picoseconds so that repeated
// additions stay exact (tRC = 46.16 ns is not representable in ns).
namespace timing {
inline constexpr int64_t kPsPerNs = 1000;
inline constexpr int64_t kTrcPs = 46'160;          // ACT-to-ACT, same bank
inline constexpr int64_t kTrasPs = 32'000;         // minimum row-open time
inline constexpr int64_t kTrpPs = 14'160;          // precharge to activate
inline constexpr int64_t kTrfcPs = 350'000;        // refresh to activate
inline constexpr int64_t kMaxOpenPs = 7'800'000;   // JEDEC row-open upper bound (7.8 us)
inline constexpr int64_t kRefreshWindowPs = 64'000'000'000;  // tREFW, 64 ms
}  // namespace timing

// Direction of a physical charge-state transition of one cell.
enum class PhysDir : uint8_t {
  ChargedToDischarged = 0,
  DischargedToCharged = 1,
};

// Direction of a logical bit transition as seen through the data bus.
enum class LogicalDir : uint8_t {
  ZeroToOne = 0,
  OneToZero = 1,
};

enum class CellKind : uint8_t {
  TrueCell = 0,  // logical 1 stored as charged capacitor
  AntiCell = 1,  // logical 1 stored as discharged capacitor
};

enum class WordlineRole : uint8_t {
  Nwl = 0,  // neighboring wordline, shares the victim cell's active region
  Pwl = 1,  // passing wordline over the isolation region
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed profile/config/arguments.
struct ValidationError : Error {
  using Error::Error;
};

// Command issued in an illegal bank state (ACT on open bank, ...).
struct IllegalCommandError : Error {
  using Error::Error;
};

// Minimum/maximum timing constraint violated (tRC, row-open bound).
struct TimingViolationError : Error {
  using Error::Error;
};

// Program span exceeds the refresh window with refresh disabled.
struct RefreshWindowError : TimingViolationError {
  using TimingViolationError::TimingViolationError;
};

struct CalibrationError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

inline const char* to_string(PhysDir d) {
  return d == PhysDir::ChargedToDischarged ? "charged_to_discharged" : "discharged_to_charged";
}

inline const char* to_string(LogicalDir d) {
  return d == LogicalDir::ZeroToOne ? "0to1" : "1to0";
}

inline const char* to_string(CellKind k) {
  return k == CellKind::TrueCell ? "true_cell" : "anti_cell";
}

// Logical value <-> charge state for one encoding.
inline bool charged_for_logical(bool logical_one, CellKind kind) {
  return kind == CellKind::TrueCell ? logical_one : !logical_one;
}

inline bool logical_for_charged(bool charged, CellKind kind) {
  return kind == CellKind::TrueCell ? charged : !charged;
}

// Physical direction of the transition that flips logical value v0 -> !v0.
inline PhysDir phys_dir_of_flip(bool logical_before, CellKind kind) {
  const bool charged_before = charged_for_logical(logical_before, kind);
  return charged_before ? PhysDir::ChargedToDischarged : PhysDir::DischargedToCharged;
}

inline LogicalDir logical_dir_of_flip(bool logical_before) {
  return logical_before ? LogicalDir::OneToZero : LogicalDir::ZeroToOne;
}

// FNV-1a, used to fingerprint profile files in output artifacts.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace rdsim

#endif  // RDSIM_COMMON_HPP
