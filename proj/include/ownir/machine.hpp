#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ownir/borrow_stack.hpp"
#include "ownir/ir.hpp"

namespace ownir {

enum class MachineKind : std::uint8_t { M0, M1 };

/// Container cache after a pointer store at M3: address and tag only.
struct PartialPtr {
  std::uint64_t addr = 0;
  std::uint64_t tag = 0;
  friend bool operator==(const PartialPtr&, const PartialPtr&) = default;
};

using CacheVal = std::variant<std::uint64_t, PartialPtr>;

enum class CacheState : std::uint8_t { Unset, Valid, Stale };

struct PtrValue {
  std::uint64_t addr = 0;
  std::uint64_t tag = 0;
  CacheVal val = std::uint64_t{0};
  CacheState cache = CacheState::Unset;
};

struct Value {
  RegKind kind = RegKind::Scalar;
  std::uint64_t word = 0;  // scalars
  PtrValue ptr;            // pointers
};

struct StoredPtr {
  std::uint64_t addr = 0;
  std::uint64_t tag = 0;
  std::optional<std::uint64_t> val;  // set by die through memory
};

using Cell = std::variant<std::uint64_t, StoredPtr>;

struct Allocation {
  std::uint64_t base = 0;
  std::uint64_t bytes = 0;
};

enum class Status : std::uint8_t { Running, Halted, AssertFailed, AssumeInfeasible, UB, StepLimit };

std::string_view status_name(Status s);

/// Nondet values, either consumed in order or looked up by register name.
class Oracle {
 public:
  Oracle() = default;
  static Oracle sequence(std::vector<std::uint64_t> values);
  static Oracle keyed(std::map<std::string, std::uint64_t> values);

  std::uint64_t next(const std::string& reg);

 private:
  bool keyed_ = false;
  std::vector<std::uint64_t> seq_;
  std::size_t pos_ = 0;
  std::map<std::string, std::uint64_t> map_;
};

struct MachineOptions {
  MachineKind kind = MachineKind::M0;
  std::uint64_t step_limit = 100000;
  bool trace = false;
  bool pedantic = true;               // stale cache reads are UB at M3
  bool force_memory_reads = false;    // M1 never serves loads from the cache
  bool skip_store_cache_sync = false; // fault injection: store leaves caches untouched
};

/// Register slots and resolved operands, computed once per program.
struct Layout {
  explicit Layout(const Program& p);

  struct InstrSlots {
    std::vector<int> defs;
    std::vector<int> args;  // -1 for immediates
    int guard = -1;
  };
  struct PhiSlots {
    int def = -1;
    std::vector<std::pair<std::size_t, int>> incoming;  // (pred block, slot or -1)
  };
  struct BlockSlots {
    std::vector<PhiSlots> phis;
    std::vector<InstrSlots> body;
    int cond = -1;
    std::size_t target = 0, else_target = 0;
  };

  std::vector<std::string> names;
  std::vector<RegKind> kinds;
  std::unordered_map<std::string, int> slot;
  std::vector<BlockSlots> blocks;
};

struct State {
  std::size_t block = 0;
  std::size_t index = 0;
  Status status = Status::Running;
  std::string rule;  // UB rule name
  std::string message;
  SourceSpan span;

  std::vector<std::optional<Value>> regs;  // by Layout slot
  std::vector<bool> moved;
  std::vector<int> def_order;
  std::map<std::uint64_t, Cell> mem;
  BorrowStore borrows;
  std::vector<Allocation> allocs;
  std::uint64_t next_tag = 1;
  std::uint64_t next_addr = 4;
  std::uint64_t steps = 0;
  std::uint64_t memory_reads = 0;
  std::uint64_t cache_reads = 0;
};

struct Outcome {
  Status status = Status::Running;
  std::string rule;
  std::string message;
  SourceSpan span;
  std::uint64_t steps = 0;
  std::vector<std::string> trace;
  State final_state;
};

class Machine {
 public:
  Machine(std::shared_ptr<const Program> program, Oracle oracle, MachineOptions options);
  Machine(const Program& program, Oracle oracle, MachineOptions options);

  const State& state() const { return st_; }
  State& mutable_state() { return st_; }
  const Program& program() const { return *prog_; }
  const Layout& layout() const { return *layout_; }
  const MachineOptions& options() const { return opt_; }

  /// Executes one instruction or terminator. No-op unless Running.
  void step();
  Outcome run();

  const Value* reg(std::string_view name) const;
  std::optional<std::uint64_t> scalar(std::string_view name) const;
  const std::vector<std::string>& trace() const { return trace_; }

 private:
  bool caches_served() const;
  bool auto_cache() const;  // store/load maintain the cache (levels M1, M3)
  void ub(std::string rule, std::string message = {});
  void define(int slot, Value v);
  std::uint64_t word(int slot, const Operand& o) const;
  const PtrValue* pointer_arg(int slot, const char* what);
  std::optional<std::uint64_t> allocation_of(std::uint64_t addr) const;
  bool in_bounds(std::uint64_t addr) const;
  std::optional<std::uint64_t> allocate(std::uint64_t bytes);
  void sync_tag(std::uint64_t addr, std::uint64_t tag, const CacheVal& v, CacheState s);
  void exec(const Instr& in, const Layout::InstrSlots& slots);
  void exec_pair_head(const Instr& in, const Layout::InstrSlots& slots);
  void exec_load(const Instr& in, const Layout::InstrSlots& slots);
  void exec_store(const Instr& in, const Layout::InstrSlots& slots);
  void exec_die(const Layout::InstrSlots& slots);
  void exec_terminator();
  std::string describe(const Instr* in, const Layout::InstrSlots* slots);

  std::shared_ptr<const Program> prog_;
  std::shared_ptr<const Layout> layout_;
  Oracle oracle_;
  MachineOptions opt_;
  State st_;
  std::vector<std::string> trace_;

  struct Pending {
    PtrValue succ;
    bool valid = false;
  } pending_;
  std::vector<std::uint64_t> touched_mem_;
  std::vector<std::uint64_t> touched_stacks_;
};

Outcome run_m0(const Program& p, Oracle oracle, std::uint64_t step_limit = 100000,
               bool trace = false);
Outcome run_m1(const Program& p, Oracle oracle, std::uint64_t step_limit = 100000,
               bool trace = false);

std::string format_value(const Value& v);
std::string format_cell(const Cell& c);

/// Scalar and pointer registers in definition order as `name = value` lines.
std::vector<std::string> final_registers(const Machine& m);

}  // namespace ownir
