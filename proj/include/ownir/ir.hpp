#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ownir {

struct SourceSpan {
  std::uint32_t line = 0;
  std::uint32_t column = 0;
  std::uint32_t offset = 0;
};

enum class RegKind : std::uint8_t { Scalar, Pointer, Memory };

/// A register name carries its kind in its prefix: `r` scalar, `p`/`q`/`c` pointer, `m` memory.
struct Reg {
  RegKind kind = RegKind::Scalar;
  std::string name;

  friend bool operator==(const Reg&, const Reg&) = default;
  friend auto operator<=>(const Reg&, const Reg&) = default;
};

struct Imm {
  std::uint64_t value = 0;
  friend bool operator==(const Imm&, const Imm&) = default;
};

using Operand = std::variant<Reg, Imm>;

inline bool is_reg(const Operand& o) { return std::holds_alternative<Reg>(o); }
inline const Reg& as_reg(const Operand& o) { return std::get<Reg>(o); }

enum class Op : std::uint8_t {
  Mov,
  Binary,
  Not,
  Select,
  Nondet,
  MemInit,
  MkOwn,
  Malloc,
  MutMkbor,
  MutMkborOff,
  MutMksuc,
  RoMkbor,
  RoMkborOff,
  RoMksuc,
  CpyMkcpy1,
  CpyMkcpy1Off,
  CpyMkcpy2,
  Die,
  Load,
  Store,
  SetCache,
  GetCache,
  BeginUnique,
  EndUnique,
  MutMkborMem2Reg,
  MovReg2Mem,
  Assume,
  Assert,
};

enum class BinOp : std::uint8_t {
  Add, Sub, Mul, And, Or, Xor, Shl, Lshr,
  Eq, Ne, Ult, Ule, Ugt, Uge,
  LAnd, LOr,
};

std::string_view binop_symbol(BinOp op);
std::optional<BinOp> binop_from_symbol(std::string_view sym);
bool binop_is_compare(BinOp op);

/// Machine feature level. M1: hard-wired word cache. M2: sized allocation and
/// programmer-managed cache. M3: M1 plus fat pointers stored in memory.
enum class Level : std::uint8_t { M1, M2, M3 };

std::string_view level_name(Level level);

struct Instr {
  Op op = Op::Mov;
  BinOp binop = BinOp::Add;
  std::uint32_t bits = 0;  // Nondet only
  std::vector<Reg> defs;
  std::vector<Operand> args;
  std::optional<Reg> guard;
  SourceSpan span;

  friend bool operator==(const Instr& a, const Instr& b) {
    return a.op == b.op && a.binop == b.binop && a.bits == b.bits && a.defs == b.defs &&
           a.args == b.args && a.guard == b.guard;
  }
};

struct PhiIncoming {
  Operand value;
  std::string label;
  friend bool operator==(const PhiIncoming&, const PhiIncoming&) = default;
};

struct Phi {
  Reg def;
  std::vector<PhiIncoming> incoming;
  SourceSpan span;
  friend bool operator==(const Phi& a, const Phi& b) {
    return a.def == b.def && a.incoming == b.incoming;
  }
};

struct Terminator {
  enum class Kind : std::uint8_t { Br, CondBr, Halt };
  Kind kind = Kind::Halt;
  Operand cond = Imm{0};
  std::string target;
  std::string else_target;
  SourceSpan span;

  friend bool operator==(const Terminator& a, const Terminator& b) {
    return a.kind == b.kind && a.cond == b.cond && a.target == b.target &&
           a.else_target == b.else_target;
  }
};

struct BasicBlock {
  std::string label;
  std::vector<Phi> phis;
  std::vector<Instr> body;
  Terminator term;
  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

struct Program {
  std::string name = "main";
  unsigned word_width = 64;
  Level level = Level::M1;
  std::vector<BasicBlock> blocks;  // blocks.front() is the entry

  const BasicBlock* find_block(std::string_view label) const;
  std::size_t block_index(std::string_view label) const;  // npos when absent
  std::size_t instruction_count() const;  // body instructions plus terminators

  friend bool operator==(const Program& a, const Program& b) {
    return a.name == b.name && a.word_width == b.word_width && a.level == b.level &&
           a.blocks == b.blocks;
  }
};

/// Static signature of an opcode: mnemonic, result kinds and operand kinds.
struct OpInfo {
  std::string_view mnemonic;
  std::vector<RegKind> defs;
  std::vector<RegKind> args;  // Scalar operands may be immediates
  bool has_side_effect = false;
};

const OpInfo& op_info(Op op);
std::optional<Op> op_from_mnemonic(std::string_view mnemonic);

bool is_pair_head(Op op);  // mut_mkbor, ro_mkbor, cpy_mkcpy1 and offset forms
Op pair_tail(Op head);     // matching successor instruction

std::uint64_t word_mask(unsigned width);
unsigned word_bytes(unsigned width);

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  std::string rule;
  std::string message;
  std::string block;
  std::size_t index = 0;  // instruction index in block; body.size() = terminator
  SourceSpan span;
};

struct ValidationReport {
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
  bool has(std::string_view rule) const;
  std::string to_string() const;
};

ValidationReport validate(const Program& program);

// ---------------------------------------------------------------------------
// Flattening to pure dataflow

class CyclicCfg : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidProgram : public std::runtime_error {
 public:
  explicit InvalidProgram(ValidationReport report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Replaces control dependence by data dependence: blocks are ordered
/// topologically, phis become select chains over edge conditions, and
/// side-effecting instructions are guarded by their block condition.
Program flatten(const Program& program);

bool has_cycle(const Program& program);

/// Nondet registers in text order, with their bit widths.
struct NondetSite {
  Reg reg;
  unsigned bits = 0;
};
std::vector<NondetSite> nondet_sites(const Program& program);

}  // namespace ownir
