#include "ownir/ir.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ownir {

namespace {

constexpr RegKind S = RegKind::Scalar;
constexpr RegKind P = RegKind::Pointer;
constexpr RegKind M = RegKind::Memory;

struct OpRow {
  Op op;
  OpInfo info;
};

const std::vector<OpRow>& op_table() {
  static const std::vector<OpRow> table = {
      {Op::Mov, {"", {S}, {S}, false}},
      {Op::Binary, {"", {S}, {S, S}, false}},
      {Op::Not, {"not", {S}, {S}, false}},
      {Op::Select, {"select", {S}, {S, S, S}, false}},
      {Op::Nondet, {"nondet", {S}, {}, false}},
      {Op::MemInit, {"mem.init", {M}, {}, false}},
      {Op::MkOwn, {"mk_own", {P, M}, {S, M}, true}},
      {Op::Malloc, {"malloc", {P, M}, {S, M}, true}},
      {Op::MutMkbor, {"mut_mkbor", {P}, {P}, true}},
      {Op::MutMkborOff, {"mut_mkbor_off", {P}, {P, S}, true}},
      {Op::MutMksuc, {"mut_mksuc", {P}, {P}, true}},
      {Op::RoMkbor, {"ro_mkbor", {P}, {P}, true}},
      {Op::RoMkborOff, {"ro_mkbor_off", {P}, {P, S}, true}},
      {Op::RoMksuc, {"ro_mksuc", {P}, {P}, true}},
      {Op::CpyMkcpy1, {"cpy_mkcpy1", {P}, {P}, true}},
      {Op::CpyMkcpy1Off, {"cpy_mkcpy1_off", {P}, {P, S}, true}},
      {Op::CpyMkcpy2, {"cpy_mkcpy2", {P}, {P}, true}},
      {Op::Die, {"die", {}, {P}, true}},
      {Op::Load, {"load", {S}, {P, M}, true}},
      {Op::Store, {"store", {M}, {S, P, M}, true}},
      {Op::SetCache, {"set_cache", {P}, {P, S}, true}},
      {Op::GetCache, {"get_cache", {S}, {P}, true}},
      {Op::BeginUnique, {"begin_unique", {P}, {P}, true}},
      {Op::EndUnique, {"end_unique", {P}, {P}, true}},
      {Op::MutMkborMem2Reg, {"mut_mkbor_mem2reg", {P, M}, {P, M}, true}},
      {Op::MovReg2Mem, {"mov_reg2mem", {M}, {P, P, M}, true}},
      {Op::Assume, {"assume", {}, {S}, true}},
      {Op::Assert, {"assert", {}, {S}, true}},
  };
  return table;
}

}  // namespace

const OpInfo& op_info(Op op) {
  for (const auto& row : op_table()) {
    if (row.op == op) return row.info;
  }
  throw std::logic_error("unknown opcode");
}

std::optional<Op> op_from_mnemonic(std::string_view mnemonic) {
  if (mnemonic.empty()) return std::nullopt;
  for (const auto& row : op_table()) {
    if (row.info.mnemonic == mnemonic) return row.op;
  }
  return std::nullopt;
}

bool is_pair_head(Op op) {
  switch (op) {
    case Op::MutMkbor:
    case Op::MutMkborOff:
    case Op::RoMkbor:
    case Op::RoMkborOff:
    case Op::CpyMkcpy1:
    case Op::CpyMkcpy1Off:
      return true;
    default:
      return false;
  }
}

Op pair_tail(Op head) {
  switch (head) {
    case Op::MutMkbor:
    case Op::MutMkborOff:
      return Op::MutMksuc;
    case Op::RoMkbor:
    case Op::RoMkborOff:
      return Op::RoMksuc;
    case Op::CpyMkcpy1:
    case Op::CpyMkcpy1Off:
      return Op::CpyMkcpy2;
    default:
      throw std::logic_error("not a pair head");
  }
}

namespace {

bool is_pair_tail(Op op) {
  return op == Op::MutMksuc || op == Op::RoMksuc || op == Op::CpyMkcpy2;
}

struct BinRow {
  BinOp op;
  std::string_view sym;
};

constexpr BinRow kBinOps[] = {
    {BinOp::Add, "+"},   {BinOp::Sub, "-"},   {BinOp::Mul, "*"},   {BinOp::And, "&"},
    {BinOp::Or, "|"},    {BinOp::Xor, "^"},   {BinOp::Shl, "<<"},  {BinOp::Lshr, ">>"},
    {BinOp::Eq, "=="},   {BinOp::Ne, "!="},   {BinOp::Ult, "<"},   {BinOp::Ule, "<="},
    {BinOp::Ugt, ">"},   {BinOp::Uge, ">="},  {BinOp::LAnd, "&&"}, {BinOp::LOr, "||"},
};

}  // namespace

std::string_view binop_symbol(BinOp op) {
  for (const auto& row : kBinOps) {
    if (row.op == op) return row.sym;
  }
  return "?";
}

std::optional<BinOp> binop_from_symbol(std::string_view sym) {
  for (const auto& row : kBinOps) {
    if (row.sym == sym) return row.op;
  }
  return std::nullopt;
}

bool binop_is_compare(BinOp op) {
  switch (op) {
    case BinOp::Eq:
    case BinOp::Ne:
    case BinOp::Ult:
    case BinOp::Ule:
    case BinOp::Ugt:
    case BinOp::Uge:
    case BinOp::LAnd:
    case BinOp::LOr:
      return true;
    default:
      return false;
  }
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::M1: return "m1";
    case Level::M2: return "m2";
    case Level::M3: return "m3";
  }
  return "?";
}

std::uint64_t word_mask(unsigned width) {
  return width >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
}

unsigned word_bytes(unsigned width) { return std::max(1u, (width + 7) / 8); }

const BasicBlock* Program::find_block(std::string_view label) const {
  for (const auto& b : blocks) {
    if (b.label == label) return &b;
  }
  return nullptr;
}

std::size_t Program::block_index(std::string_view label) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].label == label) return i;
  }
  return static_cast<std::size_t>(-1);
}

std::size_t Program::instruction_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.body.size() + 1;
  return n;
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::has(std::string_view rule) const {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [&](const Diagnostic& d) { return d.rule == rule; });
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& d : diagnostics) {
    os << d.span.line << ":" << d.span.column << ": " << d.rule << ": " << d.message;
    if (!d.block.empty()) os << " (in " << d.block << ")";
    os << "\n";
  }
  return os.str();
}

InvalidProgram::InvalidProgram(ValidationReport report)
    : std::runtime_error("invalid program:\n" + report.to_string()), report_(std::move(report)) {}

namespace {

std::vector<std::string> successors(const BasicBlock& b) {
  switch (b.term.kind) {
    case Terminator::Kind::Br:
      return {b.term.target};
    case Terminator::Kind::CondBr:
      if (b.term.target == b.term.else_target) return {b.term.target};
      return {b.term.target, b.term.else_target};
    case Terminator::Kind::Halt:
      return {};
  }
  return {};
}

struct Cfg {
  std::vector<std::vector<std::size_t>> succ;
  std::vector<std::vector<std::size_t>> pred;
  std::vector<bool> reachable;
};

Cfg build_cfg(const Program& p) {
  Cfg cfg;
  const std::size_t n = p.blocks.size();
  cfg.succ.resize(n);
  cfg.pred.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& s : successors(p.blocks[i])) {
      std::size_t j = p.block_index(s);
      if (j >= n) continue;
      cfg.succ[i].push_back(j);
      cfg.pred[j].push_back(i);
    }
  }
  cfg.reachable.assign(n, false);
  if (n == 0) return cfg;
  std::vector<std::size_t> work{0};
  cfg.reachable[0] = true;
  while (!work.empty()) {
    std::size_t b = work.back();
    work.pop_back();
    for (std::size_t s : cfg.succ[b]) {
      if (!cfg.reachable[s]) {
        cfg.reachable[s] = true;
        work.push_back(s);
      }
    }
  }
  return cfg;
}

// dom[b] = set of blocks dominating b (reachable blocks only).
std::vector<std::vector<bool>> dominators(const Cfg& cfg) {
  const std::size_t n = cfg.succ.size();
  std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, true));
  if (n == 0) return dom;
  dom[0].assign(n, false);
  dom[0][0] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t b = 1; b < n; ++b) {
      if (!cfg.reachable[b]) continue;
      std::vector<bool> next(n, true);
      bool any = false;
      for (std::size_t p : cfg.pred[b]) {
        if (!cfg.reachable[p]) continue;
        any = true;
        for (std::size_t k = 0; k < n; ++k) next[k] = next[k] && dom[p][k];
      }
      if (!any) next.assign(n, false);
      next[b] = true;
      if (next != dom[b]) {
        dom[b] = std::move(next);
        changed = true;
      }
    }
  }
  return dom;
}

struct DefSite {
  std::size_t block;
  std::size_t pos;  // phis: 0; body[i]: i + 1; terminator: body.size() + 1
};

class Validator {
 public:
  explicit Validator(const Program& p) : p_(p) {}

  ValidationReport run() {
    if (p_.word_width < 1 || p_.word_width > 64) {
      add("word-width", "word width must be in 1..64", "", 0, {});
    }
    if (p_.blocks.empty()) {
      add("no-blocks", "program has no basic blocks", "", 0, {});
      return std::move(report_);
    }
    check_labels();
    cfg_ = build_cfg(p_);
    dom_ = dominators(cfg_);
    collect_defs();
    for (std::size_t b = 0; b < p_.blocks.size(); ++b) check_block(b);
    return std::move(report_);
  }

 private:
  void add(std::string rule, std::string msg, const std::string& block, std::size_t index,
           SourceSpan span) {
    report_.diagnostics.push_back({std::move(rule), std::move(msg), block, index, span});
  }

  void check_labels() {
    std::set<std::string> seen;
    for (const auto& b : p_.blocks) {
      if (!seen.insert(b.label).second) {
        add("duplicate-label", "label '" + b.label + "' defined twice", b.label, 0, b.term.span);
      }
    }
    for (const auto& b : p_.blocks) {
      for (const auto& s : successors(b)) {
        if (!seen.count(s)) {
          add("undefined-label", "branch to undefined label '" + s + "'", b.label,
              b.body.size(), b.term.span);
        }
      }
    }
  }

  void define(const Reg& r, DefSite site, const std::string& block, SourceSpan span) {
    auto [it, inserted] = defs_.emplace(r.name, site);
    if (!inserted) {
      add("ssa-violation", "register '" + r.name + "' assigned more than once", block,
          site.pos == 0 ? 0 : site.pos - 1, span);
    }
  }

  void collect_defs() {
    for (std::size_t b = 0; b < p_.blocks.size(); ++b) {
      const auto& blk = p_.blocks[b];
      for (const auto& phi : blk.phis) define(phi.def, {b, 0}, blk.label, phi.span);
      for (std::size_t i = 0; i < blk.body.size(); ++i) {
        for (const auto& d : blk.body[i].defs) define(d, {b, i + 1}, blk.label, blk.body[i].span);
      }
    }
  }

  bool dominates(std::size_t a, std::size_t b) const { return dom_[b][a]; }

  void check_use(const Reg& r, std::size_t block, std::size_t pos, std::size_t index,
                 SourceSpan span) {
    auto it = defs_.find(r.name);
    if (it == defs_.end()) {
      add("undefined-register", "register '" + r.name + "' is never assigned",
          p_.blocks[block].label, index, span);
      return;
    }
    if (!cfg_.reachable[block]) return;
    const DefSite d = it->second;
    bool ok = (d.block == block && d.pos < pos) || (d.block != block && dominates(d.block, block));
    if (!ok) {
      add("use-before-def", "register '" + r.name + "' may be used before assignment",
          p_.blocks[block].label, index, span);
    }
  }

  void check_operand_kind(const Operand& o, RegKind want, const std::string& block,
                          std::size_t index, SourceSpan span, std::string_view what) {
    if (is_reg(o)) {
      if (as_reg(o).kind != want) {
        add("kind-mismatch", std::string(what) + ": register '" + as_reg(o).name +
                                 "' has the wrong kind",
            block, index, span);
      }
    } else if (want != RegKind::Scalar) {
      add("kind-mismatch", std::string(what) + ": immediate where a register is required",
          block, index, span);
    }
  }

  void check_level(const Instr& in, const std::string& block, std::size_t index) {
    auto fail = [&](std::string_view why) {
      add("feature-level", std::string(why) + " is not available at level " +
                               std::string(level_name(p_.level)),
          block, index, in.span);
    };
    const Level lv = p_.level;
    switch (in.op) {
      case Op::SetCache:
        if (lv != Level::M2) fail("set_cache");
        break;
      case Op::GetCache:
      case Op::BeginUnique:
      case Op::EndUnique:
        if (lv == Level::M1) fail(op_info(in.op).mnemonic);
        break;
      case Op::MutMkborOff:
      case Op::RoMkborOff:
      case Op::CpyMkcpy1Off:
        if (lv != Level::M2) fail(op_info(in.op).mnemonic);
        break;
      case Op::MutMkborMem2Reg:
      case Op::MovReg2Mem:
        if (lv != Level::M3) fail(op_info(in.op).mnemonic);
        break;
      case Op::Load:
        if (!in.defs.empty() && in.defs[0].kind == RegKind::Pointer && lv != Level::M3) {
          fail("pointer load");
        }
        break;
      case Op::Store:
        if (!in.args.empty() && is_reg(in.args[0]) && as_reg(in.args[0]).kind == RegKind::Pointer &&
            lv != Level::M3) {
          fail("pointer store");
        }
        break;
      default:
        break;
    }
    if ((in.op == Op::MkOwn && lv == Level::M2) || in.op == Op::Malloc) {
      if (in.args.empty() || is_reg(in.args[0]) || std::get<Imm>(in.args[0]).value == 0) {
        add("alloc-size", "allocation size must be a positive literal", block, index, in.span);
      }
    }
  }

  void check_signature(const Instr& in, const std::string& block, std::size_t index) {
    const OpInfo& info = op_info(in.op);
    if (in.defs.size() != info.defs.size() || in.args.size() != info.args.size()) {
      add("arity", "wrong number of results or operands", block, index, in.span);
      return;
    }
    auto def_kind_ok = [&](std::size_t k, RegKind want) {
      if (in.defs[k].kind != want) {
        add("kind-mismatch", "result '" + in.defs[k].name + "' has the wrong kind", block, index,
            in.span);
      }
    };
    switch (in.op) {
      case Op::Select: {
        check_operand_kind(in.args[0], RegKind::Scalar, block, index, in.span, "select condition");
        const RegKind k = in.defs[0].kind;
        check_operand_kind(in.args[1], k, block, index, in.span, "select operand");
        check_operand_kind(in.args[2], k, block, index, in.span, "select operand");
        return;
      }
      case Op::Load:
        if (in.defs[0].kind == RegKind::Memory) def_kind_ok(0, RegKind::Scalar);
        check_operand_kind(in.args[0], RegKind::Pointer, block, index, in.span, "load address");
        check_operand_kind(in.args[1], RegKind::Memory, block, index, in.span, "load memory");
        return;
      case Op::Store:
        def_kind_ok(0, RegKind::Memory);
        if (is_reg(in.args[0]) && as_reg(in.args[0]).kind == RegKind::Memory) {
          add("kind-mismatch", "cannot store a memory register", block, index, in.span);
        }
        check_operand_kind(in.args[1], RegKind::Pointer, block, index, in.span, "store address");
        check_operand_kind(in.args[2], RegKind::Memory, block, index, in.span, "store memory");
        return;
      default:
        break;
    }
    for (std::size_t k = 0; k < info.defs.size(); ++k) def_kind_ok(k, info.defs[k]);
    for (std::size_t k = 0; k < info.args.size(); ++k) {
      check_operand_kind(in.args[k], info.args[k], block, index, in.span, info.mnemonic);
    }
    if (in.op == Op::Nondet && (in.bits < 1 || in.bits > p_.word_width)) {
      add("nondet-bits", "nondet width must be in 1..word width", block, index, in.span);
    }
  }

  void check_block(std::size_t b) {
    const auto& blk = p_.blocks[b];
    // Phis
    if (b == 0 && !blk.phis.empty()) {
      add("phi-in-entry", "entry block cannot contain phis", blk.label, 0, blk.phis[0].span);
    }
    std::set<std::string> preds;
    for (std::size_t pb : cfg_.pred[b]) preds.insert(p_.blocks[pb].label);
    for (const auto& phi : blk.phis) {
      std::set<std::string> labels;
      for (const auto& inc : phi.incoming) {
        if (!labels.insert(inc.label).second || !preds.count(inc.label)) {
          add("phi-mismatch", "phi '" + phi.def.name + "' has a bad incoming label '" +
                                  inc.label + "'",
              blk.label, 0, phi.span);
          continue;
        }
        check_operand_kind(inc.value, phi.def.kind, blk.label, 0, phi.span, "phi operand");
        if (is_reg(inc.value)) {
          const std::size_t pb = p_.block_index(inc.label);
          const auto& r = as_reg(inc.value);
          auto it = defs_.find(r.name);
          if (it == defs_.end()) {
            add("undefined-register", "register '" + r.name + "' is never assigned", blk.label,
                0, phi.span);
          } else if (cfg_.reachable[pb] && !dominates(it->second.block, pb)) {
            add("use-before-def", "phi operand '" + r.name + "' not available on edge",
                blk.label, 0, phi.span);
          }
        }
      }
      if (labels != preds) {
        add("phi-mismatch", "phi '" + phi.def.name + "' does not cover every predecessor",
            blk.label, 0, phi.span);
      }
    }
    // Body
    for (std::size_t i = 0; i < blk.body.size(); ++i) {
      const Instr& in = blk.body[i];
      check_signature(in, blk.label, i);
      check_level(in, blk.label, i);
      for (const auto& a : in.args) {
        if (is_reg(a)) check_use(as_reg(a), b, i + 1, i, in.span);
      }
      if (in.guard) {
        if (in.guard->kind != RegKind::Scalar) {
          add("kind-mismatch", "guard must be a scalar register", blk.label, i, in.span);
        }
        check_use(*in.guard, b, i + 1, i, in.span);
      }
      if (is_pair_head(in.op)) {
        const bool paired = i + 1 < blk.body.size() && blk.body[i + 1].op == pair_tail(in.op) &&
                            !in.args.empty() && !blk.body[i + 1].args.empty() &&
                            blk.body[i + 1].args[0] == in.args[0] &&
                            blk.body[i + 1].guard == in.guard;
        if (!paired) {
          add("unpaired-borrow",
              std::string(op_info(in.op).mnemonic) + " must be immediately followed by " +
                  std::string(op_info(pair_tail(in.op)).mnemonic) + " on the same lender",
              blk.label, i, in.span);
        }
      } else if (is_pair_tail(in.op)) {
        const bool paired = i > 0 && is_pair_head(blk.body[i - 1].op) &&
                            pair_tail(blk.body[i - 1].op) == in.op;
        if (!paired) {
          add("unpaired-borrow",
              std::string(op_info(in.op).mnemonic) + " without a preceding borrow instruction",
              blk.label, i, in.span);
        }
      }
    }
    // Terminator
    if (blk.term.kind == Terminator::Kind::CondBr) {
      check_operand_kind(blk.term.cond, RegKind::Scalar, blk.label, blk.body.size(),
                         blk.term.span, "branch condition");
      if (is_reg(blk.term.cond)) {
        check_use(as_reg(blk.term.cond), b, blk.body.size() + 1, blk.body.size(), blk.term.span);
      }
    }
  }

  const Program& p_;
  ValidationReport report_;
  Cfg cfg_;
  std::vector<std::vector<bool>> dom_;
  std::unordered_map<std::string, DefSite> defs_;
};

}  // namespace

ValidationReport validate(const Program& program) { return Validator(program).run(); }

// ---------------------------------------------------------------------------
// Flattening

bool has_cycle(const Program& program) {
  const Cfg cfg = build_cfg(program);
  const std::size_t n = cfg.succ.size();
  std::vector<int> color(n, 0);  // 0 white, 1 grey, 2 black
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != 0) continue;
    stack.push_back({root, 0});
    color[root] = 1;
    while (!stack.empty()) {
      auto& [b, k] = stack.back();
      if (k < cfg.succ[b].size()) {
        std::size_t s = cfg.succ[b][k++];
        if (color[s] == 1) return true;
        if (color[s] == 0) {
          color[s] = 1;
          stack.push_back({s, 0});
        }
      } else {
        color[b] = 2;
        stack.pop_back();
      }
    }
  }
  return false;
}

namespace {

class Flattener {
 public:
  explicit Flattener(const Program& p) : p_(p), cfg_(build_cfg(p)) {
    for (const auto& b : p.blocks) {
      for (const auto& phi : b.phis) used_.insert(phi.def.name);
      for (const auto& in : b.body) {
        for (const auto& d : in.defs) used_.insert(d.name);
      }
    }
  }

  Program run() {
    const std::vector<std::size_t> order = topo_order();
    const std::vector<bool> always = always_executed();
    cond_.assign(p_.blocks.size(), Imm{0});

    Program out;
    out.name = p_.name;
    out.word_width = p_.word_width;
    out.level = p_.level;
    BasicBlock entry;
    entry.label = p_.blocks.front().label;
    entry.term.kind = Terminator::Kind::Halt;
    body_ = &entry.body;

    for (std::size_t b : order) {
      const BasicBlock& blk = p_.blocks[b];
      if (always[b]) {
        cond_[b] = Imm{1};
      } else {
        std::vector<Operand> edges;
        for (std::size_t pb : cfg_.pred[b]) {
          if (cfg_.reachable[pb]) edges.push_back(edge_cond(pb, b));
        }
        cond_[b] = disjunction(edges);
      }
      lower_phis(b, blk);
      for (const Instr& in : blk.body) {
        Instr copy = in;
        if (op_info(in.op).has_side_effect) copy.guard = combine_guard(cond_[b], in.guard);
        body_->push_back(std::move(copy));
      }
    }
    out.blocks.push_back(std::move(entry));
    return out;
  }

 private:
  std::vector<std::size_t> topo_order() const {
    const std::size_t n = p_.blocks.size();
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t b = 0; b < n; ++b) {
      if (!cfg_.reachable[b]) continue;
      for (std::size_t s : cfg_.succ[b]) ++indeg[s];
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    ready.push(0);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
      std::size_t b = ready.top();
      ready.pop();
      order.push_back(b);
      for (std::size_t s : cfg_.succ[b]) {
        if (--indeg[s] == 0) ready.push(s);
      }
    }
    return order;
  }

  // Blocks visited by every complete path from the entry.
  std::vector<bool> always_executed() const {
    const std::size_t n = p_.blocks.size();
    std::vector<std::optional<std::set<std::size_t>>> pd(n);
    std::vector<std::size_t> order = topo_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t b = *it;
      std::optional<std::set<std::size_t>> acc;
      for (std::size_t s : cfg_.succ[b]) {
        if (!acc) {
          acc = *pd[s];
        } else {
          std::set<std::size_t> meet;
          std::set_intersection(acc->begin(), acc->end(), pd[s]->begin(), pd[s]->end(),
                                std::inserter(meet, meet.begin()));
          acc = std::move(meet);
        }
      }
      if (!acc) acc.emplace();
      acc->insert(b);
      pd[b] = std::move(acc);
    }
    std::vector<bool> always(n, false);
    for (std::size_t b : *pd[0]) always[b] = true;
    return always;
  }

  Reg fresh(RegKind kind) {
    const char prefix = kind == RegKind::Scalar ? 'r' : kind == RegKind::Pointer ? 'p' : 'm';
    for (;;) {
      std::string name = std::string(1, prefix) + "_g" + std::to_string(counter_++);
      if (used_.insert(name).second) return Reg{kind, name};
    }
  }

  static bool is_true(const Operand& o) {
    return !is_reg(o) && std::get<Imm>(o).value != 0;
  }

  Operand emit_binary(BinOp op, Operand a, Operand b) {
    Instr in;
    in.op = Op::Binary;
    in.binop = op;
    in.defs = {fresh(RegKind::Scalar)};
    in.args = {std::move(a), std::move(b)};
    Reg r = in.defs[0];
    body_->push_back(std::move(in));
    return r;
  }

  Operand emit_not(Operand a) {
    Instr in;
    in.op = Op::Not;
    in.defs = {fresh(RegKind::Scalar)};
    in.args = {std::move(a)};
    Reg r = in.defs[0];
    body_->push_back(std::move(in));
    return r;
  }

  Operand conj(const Operand& a, const Operand& b) {
    if (is_true(a)) return b;
    if (is_true(b)) return a;
    return emit_binary(BinOp::LAnd, a, b);
  }

  Operand disjunction(const std::vector<Operand>& ops) {
    if (ops.empty()) return Imm{0};
    Operand acc = ops.front();
    for (std::size_t i = 1; i < ops.size(); ++i) {
      if (is_true(acc) || is_true(ops[i])) return Imm{1};
      acc = emit_binary(BinOp::LOr, acc, ops[i]);
    }
    return acc;
  }

  Operand edge_cond(std::size_t from, std::size_t to) {
    auto key = std::make_pair(from, to);
    if (auto it = edges_.find(key); it != edges_.end()) return it->second;
    const BasicBlock& blk = p_.blocks[from];
    Operand result = cond_[from];
    if (blk.term.kind == Terminator::Kind::CondBr && blk.term.target != blk.term.else_target) {
      const bool taken = p_.block_index(blk.term.target) == to;
      Operand c = blk.term.cond;
      if (!is_reg(c)) {
        const bool v = std::get<Imm>(c).value != 0;
        c = Imm{(v == taken) ? 1u : 0u};
      } else if (!taken) {
        c = emit_not(c);
      }
      result = conj(cond_[from], c);
    }
    edges_.emplace(key, result);
    return result;
  }

  std::optional<Reg> combine_guard(const Operand& block_cond, const std::optional<Reg>& g) {
    if (is_true(block_cond)) return g;
    Operand c = g ? conj(block_cond, *g) : block_cond;
    if (!is_reg(c)) {
      // Statically dead block: materialize a constant false guard.
      Instr in;
      in.op = Op::Mov;
      in.defs = {fresh(RegKind::Scalar)};
      in.args = {c};
      Reg r = in.defs[0];
      body_->push_back(std::move(in));
      return r;
    }
    return as_reg(c);
  }

  void lower_phis(std::size_t b, const BasicBlock& blk) {
    for (const Phi& phi : blk.phis) {
      std::vector<std::pair<Operand, Operand>> arms;  // (edge condition, value)
      for (const auto& inc : phi.incoming) {
        const std::size_t pb = p_.block_index(inc.label);
        if (!cfg_.reachable[pb]) continue;
        arms.emplace_back(edge_cond(pb, b), inc.value);
      }
      if (arms.empty()) continue;
      Operand acc = arms.back().second;
      for (std::size_t k = arms.size() - 1; k-- > 0;) {
        const bool last = k == 0;
        Reg dst = last ? phi.def : fresh(phi.def.kind);
        emit_select(dst, arms[k].first, arms[k].second, acc);
        acc = dst;
      }
      if (arms.size() == 1) emit_select(phi.def, Imm{1}, acc, acc);
    }
  }

  void emit_select(const Reg& dst, Operand c, Operand a, Operand b) {
    Instr in;
    in.op = Op::Select;
    in.defs = {dst};
    in.args = {std::move(c), std::move(a), std::move(b)};
    body_->push_back(std::move(in));
  }

  const Program& p_;
  Cfg cfg_;
  std::set<std::string> used_;
  std::vector<Operand> cond_;
  std::map<std::pair<std::size_t, std::size_t>, Operand> edges_;
  std::vector<Instr>* body_ = nullptr;
  unsigned counter_ = 0;
};

}  // namespace

Program flatten(const Program& program) {
  if (has_cycle(program)) throw CyclicCfg("cyclic CFG: flatten requires an acyclic program");
  ValidationReport report = validate(program);
  if (!report.ok()) throw InvalidProgram(std::move(report));
  if (program.blocks.size() == 1) return program;
  return Flattener(program).run();
}

std::vector<NondetSite> nondet_sites(const Program& program) {
  std::vector<NondetSite> sites;
  for (const auto& b : program.blocks) {
    for (const auto& in : b.body) {
      if (in.op == Op::Nondet && !in.defs.empty()) sites.push_back({in.defs[0], in.bits});
    }
  }
  return sites;
}

}  // namespace ownir
