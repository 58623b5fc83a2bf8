#include "ownir/machine.hpp"

#include <algorithm>
#include <sstream>

#include "ownir/text.hpp"

namespace ownir {

std::string_view status_name(Status s) {
  switch (s) {
    case Status::Running: return "running";
    case Status::Halted: return "halted";
    case Status::AssertFailed: return "assert-failed";
    case Status::AssumeInfeasible: return "assume-infeasible";
    case Status::UB: return "ub";
    case Status::StepLimit: return "step-limit";
  }
  return "?";
}

Oracle Oracle::sequence(std::vector<std::uint64_t> values) {
  Oracle o;
  o.seq_ = std::move(values);
  return o;
}

Oracle Oracle::keyed(std::map<std::string, std::uint64_t> values) {
  Oracle o;
  o.keyed_ = true;
  o.map_ = std::move(values);
  return o;
}

std::uint64_t Oracle::next(const std::string& reg) {
  if (keyed_) {
    auto it = map_.find(reg);
    return it == map_.end() ? 0 : it->second;
  }
  return pos_ < seq_.size() ? seq_[pos_++] : 0;
}

Layout::Layout(const Program& p) {
  auto slot_of = [&](const Reg& r) {
    auto [it, inserted] = slot.emplace(r.name, static_cast<int>(names.size()));
    if (inserted) {
      names.push_back(r.name);
      kinds.push_back(r.kind);
    }
    return it->second;
  };
  auto operand_slot = [&](const Operand& o) { return is_reg(o) ? slot_of(as_reg(o)) : -1; };
  for (const auto& b : p.blocks) {
    for (const auto& phi : b.phis) slot_of(phi.def);
    for (const auto& in : b.body) {
      for (const auto& d : in.defs) slot_of(d);
    }
  }
  blocks.resize(p.blocks.size());
  for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
    const auto& b = p.blocks[bi];
    auto& bs = blocks[bi];
    for (const auto& phi : b.phis) {
      PhiSlots ps;
      ps.def = slot_of(phi.def);
      for (const auto& inc : phi.incoming) {
        ps.incoming.emplace_back(p.block_index(inc.label), operand_slot(inc.value));
      }
      bs.phis.push_back(std::move(ps));
    }
    for (const auto& in : b.body) {
      InstrSlots s;
      for (const auto& d : in.defs) s.defs.push_back(slot_of(d));
      for (const auto& a : in.args) s.args.push_back(operand_slot(a));
      if (in.guard) s.guard = slot_of(*in.guard);
      bs.body.push_back(std::move(s));
    }
    if (b.term.kind == Terminator::Kind::CondBr) bs.cond = operand_slot(b.term.cond);
    if (b.term.kind != Terminator::Kind::Halt) bs.target = p.block_index(b.term.target);
    if (b.term.kind == Terminator::Kind::CondBr) bs.else_target = p.block_index(b.term.else_target);
  }
}

Machine::Machine(std::shared_ptr<const Program> program, Oracle oracle, MachineOptions options)
    : prog_(std::move(program)),
      layout_(std::make_shared<Layout>(*prog_)),
      oracle_(std::move(oracle)),
      opt_(options) {
  st_.regs.resize(layout_->names.size());
  st_.moved.assign(layout_->names.size(), false);
  if (prog_->blocks.empty()) {
    st_.status = Status::Halted;
  }
}

Machine::Machine(const Program& program, Oracle oracle, MachineOptions options)
    : Machine(std::make_shared<const Program>(program), std::move(oracle), options) {}

bool Machine::caches_served() const {
  return opt_.kind == MachineKind::M1 && !opt_.force_memory_reads;
}

bool Machine::auto_cache() const { return prog_->level != Level::M2; }

void Machine::ub(std::string rule, std::string message) {
  st_.status = Status::UB;
  st_.rule = std::move(rule);
  st_.message = std::move(message);
}

void Machine::define(int slot, Value v) {
  if (slot < 0) return;
  if (!st_.regs[slot]) st_.def_order.push_back(slot);
  st_.regs[slot] = std::move(v);
}

std::uint64_t Machine::word(int slot, const Operand& o) const {
  const std::uint64_t mask = word_mask(prog_->word_width);
  if (!is_reg(o)) return std::get<Imm>(o).value & mask;
  if (slot < 0 || !st_.regs[slot]) return 0;
  return st_.regs[slot]->word & mask;
}

const PtrValue* Machine::pointer_arg(int slot, const char* what) {
  if (slot < 0 || !st_.regs[slot] || st_.regs[slot]->kind != RegKind::Pointer) {
    ub("invalid-pointer", std::string(what) + " is not a pointer");
    return nullptr;
  }
  if (st_.moved[slot]) {
    ub("use-after-move", "pointer " + layout_->names[slot] + " was moved to memory");
    return nullptr;
  }
  const PtrValue& p = st_.regs[slot]->ptr;
  if (p.tag == 0 || !allocation_of(p.addr)) {
    ub("invalid-pointer", layout_->names[slot] + " does not point into an allocation");
    return nullptr;
  }
  return &p;
}

std::optional<std::uint64_t> Machine::allocation_of(std::uint64_t addr) const {
  const std::uint64_t wb = word_bytes(prog_->word_width);
  for (const auto& a : st_.allocs) {
    const std::uint64_t words = std::max<std::uint64_t>(1, (a.bytes + wb - 1) / wb);
    if (addr >= a.base && addr < a.base + words * wb) return a.base;
  }
  return std::nullopt;
}

bool Machine::in_bounds(std::uint64_t addr) const {
  for (const auto& a : st_.allocs) {
    if (addr >= a.base && addr < a.base + std::max<std::uint64_t>(a.bytes, 1)) return true;
  }
  return false;
}

std::optional<std::uint64_t> Machine::allocate(std::uint64_t bytes) {
  const std::uint64_t wb = word_bytes(prog_->word_width);
  const std::uint64_t words = std::max<std::uint64_t>(1, (bytes + wb - 1) / wb);
  const std::uint64_t base = st_.next_addr;
  const std::uint64_t limit = word_mask(prog_->word_width);
  if (words > (limit - base) / wb || base + words * wb - 1 > limit) return std::nullopt;
  st_.next_addr = base + words * wb;
  st_.allocs.push_back({base, bytes});
  return base;
}

void Machine::sync_tag(std::uint64_t addr, std::uint64_t tag, const CacheVal& v, CacheState s) {
  for (std::size_t i = 0; i < st_.regs.size(); ++i) {
    auto& r = st_.regs[i];
    if (!r || r->kind != RegKind::Pointer || st_.moved[i]) continue;
    if (r->ptr.addr == addr && r->ptr.tag == tag) {
      r->ptr.val = v;
      r->ptr.cache = s;
    }
  }
}

namespace {

Value scalar_value(std::uint64_t w) {
  Value v;
  v.kind = RegKind::Scalar;
  v.word = w;
  return v;
}

Value pointer_value(PtrValue p) {
  Value v;
  v.kind = RegKind::Pointer;
  v.ptr = std::move(p);
  return v;
}

Value memory_token() {
  Value v;
  v.kind = RegKind::Memory;
  return v;
}

Value undefined_value(RegKind k) {
  Value v;
  v.kind = k;
  return v;
}

std::uint64_t eval_binary(BinOp op, std::uint64_t a, std::uint64_t b, unsigned width) {
  const std::uint64_t mask = word_mask(width);
  switch (op) {
    case BinOp::Add: return (a + b) & mask;
    case BinOp::Sub: return (a - b) & mask;
    case BinOp::Mul: return (a * b) & mask;
    case BinOp::And: return a & b;
    case BinOp::Or: return a | b;
    case BinOp::Xor: return a ^ b;
    case BinOp::Shl: return b >= width ? 0 : (a << b) & mask;
    case BinOp::Lshr: return b >= width ? 0 : a >> b;
    case BinOp::Eq: return a == b;
    case BinOp::Ne: return a != b;
    case BinOp::Ult: return a < b;
    case BinOp::Ule: return a <= b;
    case BinOp::Ugt: return a > b;
    case BinOp::Uge: return a >= b;
    case BinOp::LAnd: return a != 0 && b != 0;
    case BinOp::LOr: return a != 0 || b != 0;
  }
  return 0;
}

PairKind pair_kind(Op op) {
  switch (op) {
    case Op::MutMkbor:
    case Op::MutMkborOff:
      return PairKind::Mut;
    case Op::RoMkbor:
    case Op::RoMkborOff:
      return PairKind::Ro;
    default:
      return PairKind::Cpy;
  }
}

bool is_offset(Op op) {
  return op == Op::MutMkborOff || op == Op::RoMkborOff || op == Op::CpyMkcpy1Off;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::string format_cache(const PtrValue& p) {
  switch (p.cache) {
    case CacheState::Unset:
      return "?";
    case CacheState::Stale:
      return "stale";
    case CacheState::Valid:
      break;
  }
  if (auto w = std::get_if<std::uint64_t>(&p.val)) return std::to_string(*w);
  const auto& pp = std::get<PartialPtr>(p.val);
  return "(" + hex(pp.addr) + "," + std::to_string(pp.tag) + ")";
}

}  // namespace

std::string format_value(const Value& v) {
  switch (v.kind) {
    case RegKind::Scalar:
      return std::to_string(v.word);
    case RegKind::Pointer:
      return "(" + hex(v.ptr.addr) + "," + std::to_string(v.ptr.tag) + ")";
    case RegKind::Memory:
      return "mem";
  }
  return "?";
}

std::string format_cell(const Cell& c) {
  if (auto w = std::get_if<std::uint64_t>(&c)) return std::to_string(*w);
  const auto& p = std::get<StoredPtr>(c);
  return "(" + hex(p.addr) + "," + std::to_string(p.tag) + ")";
}

void Machine::exec_pair_head(const Instr& in, const Layout::InstrSlots& s) {
  const PtrValue* pp = pointer_arg(s.args[0], "lender");
  if (!pp) return;
  const PtrValue p = *pp;
  const std::uint64_t base = *allocation_of(p.addr);
  std::uint64_t qaddr = p.addr;
  if (is_offset(in.op)) {
    qaddr = (p.addr + word(s.args[1], in.args[1])) & word_mask(prog_->word_width);
    if (!in_bounds(qaddr) || allocation_of(qaddr) != base) {
      ub("out-of-bounds", "offset borrow leaves its allocation");
      return;
    }
  }
  const std::uint64_t succ = st_.next_tag++;
  const std::uint64_t bor = st_.next_tag++;
  const PairKind kind = pair_kind(in.op);
  PairEffect eff;
  if (auto rule = st_.borrows.pair(base, p.tag, kind, succ, bor, &eff)) {
    ub(*rule);
    return;
  }
  touched_stacks_.push_back(base);

  CacheVal v = p.val;
  CacheState cs = p.cache;
  if (auto_cache()) {
    const bool kind_ok = eff.lender_kind == PtrKind::O || eff.lender_kind == PtrKind::MB ||
                         (kind != PairKind::Mut && eff.lender_kind == PtrKind::RB);
    if (!(eff.lender_was_top && kind_ok && p.cache == CacheState::Valid)) {
      auto it = st_.mem.find(p.addr);
      ++st_.memory_reads;
      if (it == st_.mem.end()) {
        v = std::uint64_t{0};
        cs = CacheState::Unset;
      } else if (auto w = std::get_if<std::uint64_t>(&it->second)) {
        v = *w;
        cs = CacheState::Valid;
      } else {
        const auto& sp = std::get<StoredPtr>(it->second);
        v = PartialPtr{sp.addr, sp.tag};
        cs = CacheState::Valid;
      }
    }
  }
  define(s.defs[0], pointer_value(PtrValue{qaddr, bor, v, cs}));
  pending_.succ = PtrValue{p.addr, succ, v, cs};
  pending_.valid = true;
}

void Machine::exec_die(const Layout::InstrSlots& s) {
  const PtrValue* qp = pointer_arg(s.args[0], "die operand");
  if (!qp) return;
  const PtrValue q = *qp;
  const std::uint64_t base = *allocation_of(q.addr);
  std::optional<std::uint64_t> succ;
  if (auto rule = st_.borrows.die(base, q.tag, &succ)) {
    ub(*rule);
    return;
  }
  touched_stacks_.push_back(base);
  if (!succ) return;
  bool found = false;
  for (std::size_t i = 0; i < st_.regs.size(); ++i) {
    auto& r = st_.regs[i];
    if (!r || r->kind != RegKind::Pointer || st_.moved[i] || r->ptr.tag != *succ) continue;
    r->ptr.val = q.val;
    r->ptr.cache = q.cache;
    found = true;
  }
  if (found) return;
  std::vector<std::uint64_t> cells;
  for (auto& [addr, cell] : st_.mem) {
    if (auto sp = std::get_if<StoredPtr>(&cell); sp && sp->tag == *succ) cells.push_back(addr);
  }
  if (cells.empty()) {
    ub("die-successor-not-found");
    return;
  }
  if (cells.size() > 1) {
    ub("die-successor-ambiguous");
    return;
  }
  auto& sp = std::get<StoredPtr>(st_.mem[cells[0]]);
  if (q.cache == CacheState::Valid && std::holds_alternative<std::uint64_t>(q.val)) {
    sp.val = std::get<std::uint64_t>(q.val);
  } else {
    sp.val.reset();
  }
  touched_mem_.push_back(cells[0]);
}

void Machine::exec_load(const Instr& in, const Layout::InstrSlots& s) {
  const PtrValue* pp = pointer_arg(s.args[0], "load address");
  if (!pp) return;
  const PtrValue p = *pp;
  const std::uint64_t base = *allocation_of(p.addr);
  if (!in_bounds(p.addr)) {
    ub("out-of-bounds");
    return;
  }
  const auto entry = st_.borrows.entry(base, p.tag);
  const bool top = st_.borrows.is_top(base, p.tag);
  if (auto rule = st_.borrows.load_access(base, p.tag)) {
    ub(*rule);
    return;
  }
  touched_stacks_.push_back(base);
  auto it = st_.mem.find(p.addr);
  if (it == st_.mem.end()) {
    ub("read-uninit", "load from " + hex(p.addr) + " before any store");
    return;
  }
  const bool cache_path = auto_cache() && top && entry &&
                          (entry->kind == PtrKind::O || entry->kind == PtrKind::MB) &&
                          p.cache == CacheState::Valid;
  const RegKind want = in.defs[0].kind;
  if (want == RegKind::Scalar) {
    const auto* w = std::get_if<std::uint64_t>(&it->second);
    if (!w) {
      ub("mixed-cell-kind", "scalar load found a stored pointer");
      return;
    }
    std::uint64_t r;
    if (cache_path && std::holds_alternative<std::uint64_t>(p.val)) {
      if (caches_served()) {
        r = std::get<std::uint64_t>(p.val);
        ++st_.cache_reads;
      } else {
        r = *w;
        ++st_.memory_reads;
      }
    } else {
      r = *w;
      ++st_.memory_reads;
      if (auto_cache()) sync_tag(p.addr, p.tag, r, CacheState::Valid);
    }
    define(s.defs[0], scalar_value(r));
    return;
  }
  const auto* sp = std::get_if<StoredPtr>(&it->second);
  if (!sp) {
    ub("mixed-cell-kind", "pointer load found a scalar");
    return;
  }
  PtrValue x;
  if (cache_path && std::holds_alternative<PartialPtr>(p.val)) {
    const auto& part = std::get<PartialPtr>(p.val);
    x.addr = part.addr;
    x.tag = part.tag;
    auto target = st_.mem.find(part.addr);
    if (target != st_.mem.end() && std::holds_alternative<std::uint64_t>(target->second)) {
      x.val = std::get<std::uint64_t>(target->second);
      x.cache = CacheState::Valid;
    }
    if (caches_served()) ++st_.cache_reads; else ++st_.memory_reads;
  } else {
    x.addr = sp->addr;
    x.tag = sp->tag;
    x.cache = CacheState::Stale;
    ++st_.memory_reads;
    if (auto_cache()) sync_tag(p.addr, p.tag, PartialPtr{sp->addr, sp->tag}, CacheState::Valid);
  }
  define(s.defs[0], pointer_value(x));
}

void Machine::exec_store(const Instr& in, const Layout::InstrSlots& s) {
  Cell cell;
  CacheVal cv;
  if (is_reg(in.args[0]) && as_reg(in.args[0]).kind == RegKind::Pointer) {
    const PtrValue* src = pointer_arg(s.args[0], "stored pointer");
    if (!src) return;
    cell = StoredPtr{src->addr, src->tag, std::nullopt};
    cv = PartialPtr{src->addr, src->tag};
  } else {
    const std::uint64_t w = word(s.args[0], in.args[0]);
    cell = w;
    cv = w;
  }
  const PtrValue* pp = pointer_arg(s.args[1], "store address");
  if (!pp) return;
  const PtrValue p = *pp;
  const std::uint64_t base = *allocation_of(p.addr);
  if (!in_bounds(p.addr)) {
    ub("out-of-bounds");
    return;
  }
  if (auto rule = st_.borrows.store_access(base, p.tag)) {
    ub(*rule);
    return;
  }
  touched_stacks_.push_back(base);
  st_.mem[p.addr] = cell;
  touched_mem_.push_back(p.addr);
  if (auto_cache() && !opt_.skip_store_cache_sync) sync_tag(p.addr, p.tag, cv, CacheState::Valid);
  define(s.defs[0], memory_token());
}

void Machine::exec(const Instr& in, const Layout::InstrSlots& s) {
  if (s.guard >= 0 && word(s.guard, Operand{*in.guard}) == 0) {
    for (std::size_t k = 0; k < s.defs.size(); ++k) define(s.defs[k], undefined_value(in.defs[k].kind));
    if (is_pair_head(in.op)) pending_.valid = false;
    return;
  }
  const unsigned width = prog_->word_width;
  switch (in.op) {
    case Op::Mov:
      define(s.defs[0], scalar_value(word(s.args[0], in.args[0])));
      return;
    case Op::Binary:
      define(s.defs[0], scalar_value(eval_binary(in.binop, word(s.args[0], in.args[0]),
                                                 word(s.args[1], in.args[1]), width)));
      return;
    case Op::Not:
      define(s.defs[0], scalar_value(word(s.args[0], in.args[0]) == 0 ? 1 : 0));
      return;
    case Op::Select: {
      const bool c = word(s.args[0], in.args[0]) != 0;
      const int pick = c ? s.args[1] : s.args[2];
      const Operand& op = c ? in.args[1] : in.args[2];
      const RegKind k = in.defs[0].kind;
      if (k == RegKind::Scalar) {
        define(s.defs[0], scalar_value(word(pick, op)));
      } else if (k == RegKind::Memory) {
        define(s.defs[0], memory_token());
      } else {
        Value v = (pick >= 0 && st_.regs[pick]) ? *st_.regs[pick] : undefined_value(k);
        define(s.defs[0], v);
        if (pick >= 0 && st_.moved[pick]) st_.moved[s.defs[0]] = true;
      }
      return;
    }
    case Op::Nondet: {
      const std::uint64_t v = oracle_.next(in.defs[0].name) & word_mask(in.bits);
      define(s.defs[0], scalar_value(v));
      return;
    }
    case Op::MemInit:
      define(s.defs[0], memory_token());
      return;
    case Op::MkOwn:
    case Op::Malloc: {
      const bool sized = in.op == Op::Malloc || prog_->level == Level::M2;
      const std::uint64_t wb = word_bytes(width);
      const std::uint64_t bytes = sized ? word(s.args[0], in.args[0]) : wb;
      if (bytes == 0) {
        ub("zero-size-alloc");
        return;
      }
      auto base = allocate(bytes);
      if (!base) {
        ub("address-space-exhausted");
        return;
      }
      const std::uint64_t tag = st_.next_tag++;
      st_.borrows.create(*base, tag, in.op == Op::Malloc ? PtrKind::C : PtrKind::O);
      touched_stacks_.push_back(*base);
      PtrValue p{*base, tag, std::uint64_t{0}, CacheState::Unset};
      if (!sized) {
        const std::uint64_t n = word(s.args[0], in.args[0]);
        st_.mem[*base] = n;
        touched_mem_.push_back(*base);
        p.val = n;
        p.cache = CacheState::Valid;
      }
      define(s.defs[0], pointer_value(p));
      define(s.defs[1], memory_token());
      return;
    }
    case Op::MutMkbor:
    case Op::MutMkborOff:
    case Op::RoMkbor:
    case Op::RoMkborOff:
    case Op::CpyMkcpy1:
    case Op::CpyMkcpy1Off:
      exec_pair_head(in, s);
      return;
    case Op::MutMksuc:
    case Op::RoMksuc:
    case Op::CpyMkcpy2:
      if (!pending_.valid) {
        ub("unpaired-borrow");
        return;
      }
      define(s.defs[0], pointer_value(pending_.succ));
      pending_.valid = false;
      return;
    case Op::Die:
      exec_die(s);
      return;
    case Op::Load:
      exec_load(in, s);
      return;
    case Op::Store:
      exec_store(in, s);
      return;
    case Op::SetCache: {
      const PtrValue* pp = pointer_arg(s.args[0], "set_cache operand");
      if (!pp) return;
      const PtrValue p = *pp;
      const std::uint64_t base = *allocation_of(p.addr);
      if (!st_.borrows.entry(base, p.tag)) {
        ub("cache-op-on-untracked");
        return;
      }
      if (auto rule = st_.borrows.store_access(base, p.tag)) {
        ub(*rule);
        return;
      }
      touched_stacks_.push_back(base);
      PtrValue np = p;
      np.val = word(s.args[1], in.args[1]);
      np.cache = CacheState::Valid;
      define(s.defs[0], pointer_value(np));
      return;
    }
    case Op::GetCache: {
      const PtrValue* pp = pointer_arg(s.args[0], "get_cache operand");
      if (!pp) return;
      const PtrValue p = *pp;
      const std::uint64_t base = *allocation_of(p.addr);
      if (!st_.borrows.entry(base, p.tag)) {
        ub("cache-op-on-untracked");
        return;
      }
      if (auto rule = st_.borrows.load_access(base, p.tag)) {
        ub(*rule);
        return;
      }
      touched_stacks_.push_back(base);
      if (p.cache == CacheState::Unset) {
        ub("cache-uninit");
        return;
      }
      if (p.cache == CacheState::Stale && opt_.pedantic) {
        ub("stale-cache");
        return;
      }
      if (!std::holds_alternative<std::uint64_t>(p.val)) {
        ub("cache-holds-pointer");
        return;
      }
      ++st_.cache_reads;
      define(s.defs[0], scalar_value(std::get<std::uint64_t>(p.val) & word_mask(width)));
      return;
    }
    case Op::BeginUnique:
    case Op::EndUnique: {
      const PtrValue* pp = pointer_arg(s.args[0], "unique operand");
      if (!pp) return;
      const PtrValue p = *pp;
      const std::uint64_t base = *allocation_of(p.addr);
      const bool begin = in.op == Op::BeginUnique;
      if (auto rule = st_.borrows.rekind(base, p.tag, begin ? PtrKind::C : PtrKind::U,
                                         begin ? PtrKind::U : PtrKind::C)) {
        ub(*rule);
        return;
      }
      touched_stacks_.push_back(base);
      define(s.defs[0], pointer_value(p));
      return;
    }
    case Op::MutMkborMem2Reg: {
      const PtrValue* cp = pointer_arg(s.args[0], "container");
      if (!cp) return;
      const PtrValue c = *cp;
      const std::uint64_t cbase = *allocation_of(c.addr);
      if (auto rule = st_.borrows.load_access(cbase, c.tag)) {
        ub(*rule);
        return;
      }
      auto it = st_.mem.find(c.addr);
      if (it == st_.mem.end()) {
        ub("read-uninit");
        return;
      }
      const auto* sp = std::get_if<StoredPtr>(&it->second);
      if (!sp) {
        ub("mixed-cell-kind", "mut_mkbor_mem2reg found a scalar");
        return;
      }
      const StoredPtr x = *sp;
      ++st_.memory_reads;
      auto xbase = allocation_of(x.addr);
      if (!xbase) {
        ub("invalid-pointer");
        return;
      }
      const std::uint64_t succ = st_.next_tag++;
      const std::uint64_t bor = st_.next_tag++;
      if (auto rule = st_.borrows.pair(*xbase, x.tag, PairKind::Mut, succ, bor, nullptr)) {
        ub(*rule);
        return;
      }
      PtrValue q{x.addr, bor, std::uint64_t{0}, CacheState::Unset};
      auto target = st_.mem.find(x.addr);
      ++st_.memory_reads;
      if (target != st_.mem.end() && std::holds_alternative<std::uint64_t>(target->second)) {
        q.val = std::get<std::uint64_t>(target->second);
        q.cache = CacheState::Valid;
      }
      if (auto rule = st_.borrows.store_access(cbase, c.tag)) {
        ub(*rule);
        return;
      }
      touched_stacks_.push_back(cbase);
      touched_stacks_.push_back(*xbase);
      st_.mem[c.addr] = StoredPtr{x.addr, succ, std::nullopt};
      touched_mem_.push_back(c.addr);
      if (auto_cache() && !opt_.skip_store_cache_sync) {
        sync_tag(c.addr, c.tag, PartialPtr{x.addr, succ}, CacheState::Valid);
      }
      define(s.defs[0], pointer_value(q));
      define(s.defs[1], memory_token());
      return;
    }
    case Op::MovReg2Mem: {
      exec_store(in, s);
      if (st_.status == Status::Running && s.args[0] >= 0) st_.moved[s.args[0]] = true;
      return;
    }
    case Op::Assume:
      if (word(s.args[0], in.args[0]) == 0) st_.status = Status::AssumeInfeasible;
      return;
    case Op::Assert:
      if (word(s.args[0], in.args[0]) == 0) st_.status = Status::AssertFailed;
      return;
  }
}

void Machine::exec_terminator() {
  const BasicBlock& b = prog_->blocks[st_.block];
  const auto& bs = layout_->blocks[st_.block];
  std::size_t target;
  switch (b.term.kind) {
    case Terminator::Kind::Halt:
      st_.status = Status::Halted;
      return;
    case Terminator::Kind::Br:
      target = bs.target;
      break;
    case Terminator::Kind::CondBr:
    default:
      target = word(bs.cond, b.term.cond) != 0 ? bs.target : bs.else_target;
      break;
  }
  if (target >= prog_->blocks.size()) {
    ub("invalid-branch");
    return;
  }
  const auto& tphis = layout_->blocks[target].phis;
  const auto& tblock = prog_->blocks[target];
  std::vector<std::pair<int, Value>> updates;
  std::vector<bool> moved_updates;
  for (std::size_t k = 0; k < tphis.size(); ++k) {
    const auto& ps = tphis[k];
    const RegKind kind = tblock.phis[k].def.kind;
    Value v = undefined_value(kind);
    bool moved = false;
    for (std::size_t j = 0; j < ps.incoming.size(); ++j) {
      if (ps.incoming[j].first != st_.block) continue;
      const int slot = ps.incoming[j].second;
      const Operand& op = tblock.phis[k].incoming[j].value;
      if (kind == RegKind::Scalar) {
        v = scalar_value(word(slot, op));
      } else if (slot >= 0 && st_.regs[slot]) {
        v = *st_.regs[slot];
        moved = st_.moved[slot];
      }
      break;
    }
    updates.emplace_back(ps.def, std::move(v));
    moved_updates.push_back(moved);
  }
  for (std::size_t k = 0; k < updates.size(); ++k) {
    define(updates[k].first, std::move(updates[k].second));
    if (moved_updates[k]) st_.moved[updates[k].first] = true;
  }
  st_.block = target;
  st_.index = 0;
}

void Machine::step() {
  if (st_.status != Status::Running) return;
  if (st_.steps >= opt_.step_limit) {
    st_.status = Status::StepLimit;
    return;
  }
  ++st_.steps;
  touched_mem_.clear();
  touched_stacks_.clear();
  const BasicBlock& b = prog_->blocks[st_.block];
  const Instr* in = nullptr;
  const Layout::InstrSlots* slots = nullptr;
  if (st_.index < b.body.size()) {
    in = &b.body[st_.index];
    slots = &layout_->blocks[st_.block].body[st_.index];
    st_.span = in->span;
    exec(*in, *slots);
    if (st_.status == Status::Running) ++st_.index;
  } else {
    st_.span = b.term.span;
    exec_terminator();
  }
  if (opt_.trace) trace_.push_back(describe(in, slots));
}

std::string Machine::describe(const Instr* in, const Layout::InstrSlots* slots) {
  std::ostringstream os;
  os << "step " << st_.steps << ": ";
  if (in) {
    os << print_instr(*in);
  } else {
    const auto& t = prog_->blocks[st_.block].term;
    os << (t.kind == Terminator::Kind::Halt ? "halt" : "br");
  }
  std::vector<std::string> parts;
  if (slots) {
    for (int d : slots->defs) {
      const auto& v = st_.regs[d];
      if (!v || v->kind == RegKind::Memory) continue;
      parts.push_back("R[" + layout_->names[d] + "]=" + format_value(*v));
    }
  }
  std::sort(touched_mem_.begin(), touched_mem_.end());
  touched_mem_.erase(std::unique(touched_mem_.begin(), touched_mem_.end()), touched_mem_.end());
  for (auto a : touched_mem_) {
    auto it = st_.mem.find(a);
    if (it != st_.mem.end()) parts.push_back("M[" + hex(a) + "]=" + format_cell(it->second));
  }
  std::sort(touched_stacks_.begin(), touched_stacks_.end());
  touched_stacks_.erase(std::unique(touched_stacks_.begin(), touched_stacks_.end()),
                        touched_stacks_.end());
  for (auto a : touched_stacks_) {
    if (const auto* s = st_.borrows.stack(a)) parts.push_back("SB[" + hex(a) + "]=" + format_stack(*s));
  }
  if (opt_.kind == MachineKind::M1 && slots) {
    for (int d : slots->defs) {
      const auto& v = st_.regs[d];
      if (!v || v->kind != RegKind::Pointer) continue;
      parts.push_back("C[" + layout_->names[d] + "]=" + format_cache(v->ptr));
    }
  }
  if (st_.status == Status::UB) parts.push_back("UB " + st_.rule);
  if (!parts.empty()) {
    os << " ;";
    for (const auto& p : parts) os << " " << p;
  }
  return os.str();
}

Outcome Machine::run() {
  while (st_.status == Status::Running) step();
  Outcome o;
  o.status = st_.status;
  o.rule = st_.rule;
  o.message = st_.message;
  o.span = st_.span;
  o.steps = st_.steps;
  o.trace = trace_;
  o.final_state = st_;
  return o;
}

const Value* Machine::reg(std::string_view name) const {
  auto it = layout_->slot.find(std::string(name));
  if (it == layout_->slot.end() || !st_.regs[it->second]) return nullptr;
  return &*st_.regs[it->second];
}

std::optional<std::uint64_t> Machine::scalar(std::string_view name) const {
  const Value* v = reg(name);
  if (!v || v->kind != RegKind::Scalar) return std::nullopt;
  return v->word;
}

Outcome run_m0(const Program& p, Oracle oracle, std::uint64_t step_limit, bool trace) {
  MachineOptions o;
  o.kind = MachineKind::M0;
  o.step_limit = step_limit;
  o.trace = trace;
  return Machine(p, std::move(oracle), o).run();
}

Outcome run_m1(const Program& p, Oracle oracle, std::uint64_t step_limit, bool trace) {
  MachineOptions o;
  o.kind = MachineKind::M1;
  o.step_limit = step_limit;
  o.trace = trace;
  return Machine(p, std::move(oracle), o).run();
}

std::vector<std::string> final_registers(const Machine& m) {
  std::vector<std::string> out;
  for (int slot : m.state().def_order) {
    const auto& v = m.state().regs[slot];
    if (!v || v->kind == RegKind::Memory) continue;
    std::string line = m.layout().names[slot] + " = " + format_value(*v);
    if (v->kind == RegKind::Pointer && m.options().kind == MachineKind::M1) {
      line += " cache " + format_cache(v->ptr);
    }
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace ownir
