#pragma once

#include <string>
#include <vector>

#include "ownir/machine.hpp"

namespace ownir {

struct CacheViolation {
  std::string reg;
  std::uint64_t addr = 0;
  std::string cache;
  std::string memory;
};

struct CacheVerdict {
  std::vector<CacheViolation> violations;
  bool holds() const { return violations.empty(); }
  std::string to_string() const;
};

/// Cache equivalence: every pointer register whose tag is top of its stack
/// with kind o or mb caches exactly the memory word at its address. Only
/// meaningful where the cache is hard-wired (levels m1 and m3).
CacheVerdict check_cache_equivalence(const Machine& m);

struct LockstepOptions {
  std::uint64_t step_limit = 100000;
  bool check_cache = true;            // also run the cache check on M1 after every step
  bool skip_store_cache_sync = false; // fault injection on the M1 side
};

struct DiffReport {
  bool equivalent = true;
  std::uint64_t steps = 0;
  std::uint64_t divergence_step = 0;
  std::string divergence;  // first differing component, empty when equivalent
  std::uint64_t cache_checks = 0;
  std::vector<std::string> cache_violations;  // "step N: ..." per violating state
  Status m0_status = Status::Running;
  Status m1_status = Status::Running;
  std::string m0_rule;
  std::string m1_rule;
  std::uint64_t m1_cache_reads = 0;
  std::uint64_t implicit_borrow_ends = 0;

  bool ok() const { return equivalent && cache_violations.empty(); }
  std::string to_string() const;
};

/// Compares observable state with pointer caches projected away.
std::string observable_difference(const State& a, const State& b);

DiffReport lockstep_diff(const Program& program, const Oracle& oracle,
                         const LockstepOptions& options = {});

}  // namespace ownir
