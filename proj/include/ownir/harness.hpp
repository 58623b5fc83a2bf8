#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ownir/generator.hpp"
#include "ownir/ir.hpp"
#include "ownir/machine.hpp"
#include "ownir/smt.hpp"
#include "ownir/solver.hpp"

namespace ownir {

class EnumerationTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Validity : std::uint8_t { Valid, Invalid, Unknown, Error };

std::string_view validity_name(Validity v);

using Assignment = std::map<std::string, std::uint64_t>;

/// Oracle number `index` of the enumeration over `sites` (little-endian bit packing).
Assignment assignment_at(const std::vector<NondetSite>& sites, std::uint64_t index);

struct ConcreteVerdict {
  Validity validity = Validity::Valid;
  std::uint64_t oracles = 0;
  std::optional<Assignment> counterexample;  // lowest failing oracle
  std::string error;                         // UB rule or fragment violation
};

/// Runs M0 on every oracle. Error when any run hits UB, the step limit, or
/// ends a mutable borrow implicitly (outside what the encoders assume).
ConcreteVerdict exhaustive_concrete(const Program& program, unsigned max_bits = 20,
                                    bool parallel = true);

struct SolverVerdict {
  Validity validity = Validity::Unknown;
  smt::ArrayOps ops;
  double wall_ms = 0;
  Assignment model;
  bool replay_ok = true;  // sat model drives M0 to AssertFailed
  std::string detail;
};

/// Encodes, solves, and replays a sat model on M0.
SolverVerdict solve_program(const Program& program, bool ownsem, const SolverConfig& solver,
                            bool fault_skip_store_cache_sync = false);

struct ThreeWayOptions {
  SolverConfig solver;
  unsigned max_bits = 20;
  bool fault_skip_store_cache_sync = false;  // applies to M1 and the ownsem encoder
  bool parallel = false;
};

struct Verdict {
  ConcreteVerdict concrete;
  bool lockstep_ok = true;
  std::string lockstep_detail;
  SolverVerdict ownsem;
  SolverVerdict baseline;

  bool agree() const;
  std::string to_string() const;
};

Verdict three_way_check(const Program& program, const ThreeWayOptions& options = {});

/// Lockstep M0/M1 over every oracle (or `limit` of them), cache check on.
struct LockstepSummary {
  std::uint64_t runs = 0;
  std::uint64_t steps = 0;
  std::uint64_t cache_checks = 0;
  std::uint64_t cache_violations = 0;
  std::uint64_t divergences = 0;
  std::uint64_t ub_runs = 0;
  std::string first_problem;
  bool ok() const { return cache_violations == 0 && divergences == 0; }
};

LockstepSummary lockstep_oracles(const Program& program, bool fault_skip_store_cache_sync,
                                 std::uint64_t limit = 64);

/// Delta-debugging on the flattened program: drops instructions (with their
/// dependents) while the program stays valid and `still_fails` holds.
Program shrink(const Program& program, const std::function<bool(const Program&)>& still_fails);

// ---------------------------------------------------------------------------
// Corpus sweeps. Each has a parallel (OpenMP) path and a serial reference.

struct CorpusOptions {
  GenConfig base;
  std::vector<Level> levels = {Level::M1};  // level of seed s is levels[s % size]
  std::uint64_t first_seed = 0;
  std::uint64_t count = 1000;
  bool parallel = true;
  bool fault_skip_store_cache_sync = false;
  std::uint64_t oracles_per_program = 16;
};

GenConfig corpus_config(const CorpusOptions& options, std::uint64_t seed);

struct CorpusFailure {
  std::uint64_t seed = 0;
  std::string detail;
};

struct LockstepCorpusResult {
  std::uint64_t programs = 0;
  LockstepSummary total;
  std::vector<CorpusFailure> failures;  // sorted by seed
};

LockstepCorpusResult lockstep_corpus(const CorpusOptions& options);

struct ThreeWayCorpusResult {
  std::uint64_t programs = 0;
  std::uint64_t agreements = 0;
  std::uint64_t valid = 0;
  std::uint64_t invalid = 0;
  std::uint64_t sat_models_replayed = 0;
  std::vector<CorpusFailure> failures;  // sorted by seed
};

ThreeWayCorpusResult three_way_corpus(const CorpusOptions& options, const ThreeWayOptions& tw);

/// Minimal reproducers for corpus failures.
Program shrink_lockstep_failure(const Program& program, bool fault_skip_store_cache_sync);
Program shrink_three_way_failure(const Program& program, const ThreeWayOptions& tw);

}  // namespace ownir
