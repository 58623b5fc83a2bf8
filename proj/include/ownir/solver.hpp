#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ownir {

struct SolverConfig {
  std::string cmd = "z3";
  std::vector<std::string> args = {"-smt2", "-st"};
  double timeout_secs = 100;

  /// Reads `key = value` lines (an optional `[solver]` section prefixes keys).
  static SolverConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  /// OWNIR_SOLVER replaces the command.
  void apply_environment();
};

/// Absolute path of the configured solver, if it can be found.
std::optional<std::string> locate_solver(const SolverConfig& config);

enum class SatStatus : std::uint8_t { Sat, Unsat, Unknown };

std::string_view sat_status_name(SatStatus s);

struct SatResult {
  SatStatus status = SatStatus::Unknown;
  std::string reason;
  std::map<std::string, std::uint64_t> model;
  std::map<std::string, std::string> stats;
  double wall_ms = 0;
};

class SolverCrash : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs the external solver on SMT-LIB text. Blocking; safe to call from
/// several threads at once.
SatResult solve(const std::string& smtlib, const SolverConfig& config);

/// Parses solver stdout (exposed for tests).
SatResult parse_solver_output(const std::string& output);

}  // namespace ownir
