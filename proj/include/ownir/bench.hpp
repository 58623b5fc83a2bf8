#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ownir/harness.hpp"
#include "ownir/ir.hpp"
#include "ownir/solver.hpp"
#include "ownir/vcgen.hpp"

namespace ownir {

/// Both storage layouts of one benchmark instance. `cached` keeps the
/// typestate in pointer caches (set_cache/get_cache); `main_memory` keeps it
/// in a parallel one-word allocation per object.
struct BenchPrograms {
  Program cached;
  Program main_memory;
};

/// n buffers, one chosen by a nondet index; the chosen one gets typestate 1.
BenchPrograms bench_many_buffers(unsigned n);

/// open/write/close protocol over n files. With `skip_close` the final
/// check fails for whichever file was chosen.
BenchPrograms bench_file_typestate(unsigned n, bool skip_close = false);

enum class BenchMode : std::uint8_t { Ownsem, BaselineShadow, BaselineMain };

std::string_view bench_mode_name(BenchMode m);
std::optional<BenchMode> bench_mode_from_name(std::string_view s);

struct BenchSpec {
  std::string family;  // "many_buffers" or "file_typestate"
  unsigned n = 2;
  BenchMode mode = BenchMode::Ownsem;
};

/// The program and encoding a spec stands for.
BenchPrograms bench_programs(const std::string& family, unsigned n);
VcScript bench_script(const BenchSpec& spec);

struct BenchCell {
  BenchSpec spec;
  Validity verdict = Validity::Unknown;
  std::size_t reads = 0;
  std::size_t writes = 0;
  double wall_ms = 0;  // median over repetitions
  std::map<std::string, std::string> solver_stats;
  std::string error;
};

struct BenchSpeedup {
  std::string family;
  unsigned n = 0;
  BenchMode baseline = BenchMode::BaselineShadow;
  double speedup = 0;  // baseline wall time / ownsem wall time
};

struct BenchReport {
  std::vector<BenchCell> cells;  // in spec order

  std::vector<BenchSpeedup> speedups() const;
  /// Every (family, n) has one verdict across modes, and none is unknown or an error.
  bool verdicts_agree() const;
  /// Speedups below 1.0 at n = 8; reported, never a failure.
  std::vector<std::string> soft_flags() const;
  std::string to_json(bool with_timing = true) const;
};

/// Every spec for the given families, sizes and modes, in that nesting order.
std::vector<BenchSpec> bench_matrix(const std::vector<std::string>& families,
                                    const std::vector<unsigned>& ns,
                                    const std::vector<BenchMode>& modes);

/// Cells run concurrently on up to `jobs` threads. A failing cell records its
/// error and the batch continues.
BenchReport run_bench(const std::vector<BenchSpec>& specs, unsigned repetitions,
                      const SolverConfig& solver, unsigned jobs = 1);

}  // namespace ownir
