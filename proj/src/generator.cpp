#include "ownir/generator.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ownir/borrow_stack.hpp"

namespace ownir {

namespace {

Reg scalar_reg(std::string n) { return {RegKind::Scalar, std::move(n)}; }
Reg ptr_reg(std::string n) { return {RegKind::Pointer, std::move(n)}; }
Reg mem_reg(std::string n) { return {RegKind::Memory, std::move(n)}; }

struct Entry {
  std::string reg;
  PtrKind kind = PtrKind::O;
  unsigned word = 0;
  bool cache_set = false;
  std::optional<Operand> cache;  // M2: value last put in the cache
};

struct Alloc {
  std::vector<Entry> stack;
  unsigned words = 1;
  std::vector<bool> init;
  std::vector<std::optional<Operand>> known;  // memory contents per word
  std::size_t floor = 0;                      // entries below belong to the enclosing code
};

struct Fact {
  Operand a, b;
};

struct GState {
  std::vector<Alloc> allocs;
  std::vector<std::string> scalars;
  std::string mem;
  std::vector<Fact> facts;
};

enum Move {
  kArith, kNondet, kAlloc, kLoad, kStore, kPopCopies, kMut, kRo, kCopy, kDie, kSetCache,
  kGetCache, kBranch, kAssume, kAssert,
};

class Gen {
 public:
  explicit Gen(const GenConfig& c) : cfg_(c), rng_(c.seed ^ 0x6f776e6972ULL) {}

  Program run() {
    prog_.name = "gen" + std::to_string(cfg_.seed);
    prog_.word_width = cfg_.width;
    prog_.level = cfg_.level;
    new_block();
    st_.mem = fresh("m");
    emit(Op::MemInit, {mem_reg(st_.mem)}, {});
    body(cfg_.max_instrs);
    finish_program();
    return std::move(prog_);
  }

 private:
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : rng_() % n; }
  bool chance(double p) { return static_cast<double>(rng_() % 1000000) < p * 1000000; }
  std::string fresh(const char* prefix) { return prefix + std::to_string(counter_++); }
  std::uint64_t mask() const { return word_mask(cfg_.width); }
  unsigned wb() const { return word_bytes(cfg_.width); }

  std::size_t new_block() {
    BasicBlock b;
    b.label = prog_.blocks.empty() ? "entry" : "b" + std::to_string(prog_.blocks.size());
    prog_.blocks.push_back(std::move(b));
    cur_ = prog_.blocks.size() - 1;
    return cur_;
  }

  void emit(Op op, std::vector<Reg> defs, std::vector<Operand> args, BinOp bop = BinOp::Add,
            unsigned bits = 0) {
    Instr in;
    in.op = op;
    in.binop = bop;
    in.bits = bits;
    in.defs = std::move(defs);
    in.args = std::move(args);
    prog_.blocks[cur_].body.push_back(std::move(in));
  }

  Operand any_scalar() {
    if (!st_.scalars.empty() && chance(0.7)) return scalar_reg(st_.scalars[below(st_.scalars.size())]);
    return Imm{small_imm()};
  }
  std::uint64_t small_imm() {
    return chance(0.5) ? below(4) : below(mask() + 1);
  }
  std::string define_scalar() {
    std::string n = fresh("r");
    st_.scalars.push_back(n);
    return n;
  }

  std::string compare_with_constant(const Operand& x) {
    static const BinOp cmps[] = {BinOp::Eq, BinOp::Ne, BinOp::Ult, BinOp::Ugt, BinOp::Ule};
    const std::string r = define_scalar();
    emit(Op::Binary, {scalar_reg(r)}, {x, Imm{small_imm()}}, cmps[below(5)]);
    return r;
  }

  std::string fact_check(const Fact& f) {
    const std::string r = define_scalar();
    emit(Op::Binary, {scalar_reg(r)}, {f.a, f.b}, BinOp::Eq);
    return r;
  }

  std::vector<std::size_t> allocs_where(bool (*pred)(const Alloc&, const GenConfig&),
                                        bool with_floor = false) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < st_.allocs.size(); ++i) {
      const Alloc& a = st_.allocs[i];
      if (a.stack.empty()) continue;
      if (with_floor && a.stack.size() <= a.floor) continue;
      if (pred(a, cfg_)) out.push_back(i);
    }
    return out;
  }

  static PtrKind top_kind(const Alloc& a) { return a.stack.back().kind; }

  void body(unsigned moves) {
    for (unsigned k = 0; k < moves; ++k) {
      std::vector<std::pair<double, Move>> opts;
      const OpMix& w = cfg_.mix;
      const bool m2 = cfg_.level == Level::M2;
      opts.push_back({w.arith, kArith});
      if (nondets_ < cfg_.nondet_budget && nondet_bits_ < cfg_.nondet_bits) {
        opts.push_back({w.nondet, kNondet});
      }
      if (st_.allocs.size() < 4) opts.push_back({w.alloc, kAlloc});
      if (!allocs_where([](const Alloc& a, const GenConfig&) {
             return a.init[a.stack.back().word];
           }).empty()) {
        opts.push_back({w.load, kLoad});
      }
      if (!allocs_where([](const Alloc& a, const GenConfig&) {
             return top_kind(a) != PtrKind::RB;
           }).empty()) {
        opts.push_back({w.store, kStore});
      }
      if (!pop_copy_candidates().empty()) opts.push_back({w.store * 0.5, kPopCopies});
      if (!allocs_where([](const Alloc& a, const GenConfig&) {
             return top_kind(a) == PtrKind::O || top_kind(a) == PtrKind::MB;
           }).empty()) {
        opts.push_back({w.mut_borrow, kMut});
        if (m2) opts.push_back({w.cache, kSetCache});
      }
      if (!allocs_where([](const Alloc& a, const GenConfig&) {
             return top_kind(a) != PtrKind::C;
           }).empty()) {
        opts.push_back({w.ro_borrow, kRo});
      }
      if (!m2 && !in_arm_ && !allocs_where([](const Alloc& a, const GenConfig&) {
                               return top_kind(a) != PtrKind::RB;
                             }).empty()) {
        opts.push_back({w.copy, kCopy});
      }
      if (!allocs_where([](const Alloc& a, const GenConfig&) {
             return top_kind(a) == PtrKind::MB || top_kind(a) == PtrKind::RB;
           }, true).empty()) {
        opts.push_back({w.die, kDie});
      }
      if (m2 && !allocs_where([](const Alloc& a, const GenConfig&) {
                   return a.stack.back().cache_set;
                 }).empty()) {
        opts.push_back({w.cache, kGetCache});
      }
      if (!in_arm_ && prog_.blocks.size() + 3 <= cfg_.max_blocks) opts.push_back({w.branch, kBranch});
      if (!st_.scalars.empty()) {
        opts.push_back({w.assume, kAssume});
        opts.push_back({w.assert_, kAssert});
      }
      double total = 0;
      for (auto& o : opts) total += o.first;
      if (total <= 0) return;
      double x = static_cast<double>(below(1u << 30)) / (1u << 30) * total;
      Move mv = opts.back().second;
      for (auto& o : opts) {
        if (x < o.first) {
          mv = o.second;
          break;
        }
        x -= o.first;
      }
      apply(mv);
    }
  }

  std::vector<std::size_t> pop_copy_candidates() {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < st_.allocs.size(); ++i) {
      const Alloc& a = st_.allocs[i];
      std::size_t j = a.stack.size();
      while (j > 0 && a.stack[j - 1].kind == PtrKind::C) --j;
      if (j == a.stack.size() || j == 0) continue;
      const PtrKind below_kind = a.stack[j - 1].kind;
      if ((below_kind == PtrKind::O || below_kind == PtrKind::MB) && j >= a.floor) out.push_back(i);
    }
    return out;
  }

  std::size_t pick(const std::vector<std::size_t>& v) { return v[below(v.size())]; }

  void do_store(Alloc& a, std::size_t entry) {
    const Operand v = any_scalar();
    const std::string m = fresh("m");
    emit(Op::Store, {mem_reg(m)}, {v, ptr_reg(a.stack[entry].reg), mem_reg(st_.mem)});
    st_.mem = m;
    const unsigned word = a.stack[entry].word;
    a.init[word] = true;
    a.known[word] = v;
    if (a.stack[entry].kind != PtrKind::C) a.stack.resize(entry + 1);
  }

  void pair(Alloc& a, Op head, Op tail, PtrKind kind, bool offset) {
    Entry lender = a.stack.back();
    const std::string q = fresh("p");
    const std::string s = fresh("p");
    std::vector<Operand> args{ptr_reg(lender.reg)};
    Entry borrowed = lender;
    borrowed.reg = q;
    borrowed.kind = kind;
    if (offset) {
      args.push_back(Imm{wb()});
      borrowed.word = lender.word + 1;
    }
    emit(head, {ptr_reg(q)}, args);
    emit(tail, {ptr_reg(s)}, {ptr_reg(lender.reg)});
    a.stack.back().reg = s;
    a.stack.push_back(borrowed);
  }

  void apply(Move mv) {
    const bool m2 = cfg_.level == Level::M2;
    switch (mv) {
      case kArith: {
        const unsigned kind = static_cast<unsigned>(below(10));
        if (kind == 0) {
          const Operand x = any_scalar();
          emit(Op::Not, {scalar_reg(define_scalar())}, {x});
        } else if (kind == 1) {
          const Operand c = any_scalar(), x = any_scalar(), y = any_scalar();
          emit(Op::Select, {scalar_reg(define_scalar())}, {c, x, y});
        } else {
          const Operand x = any_scalar(), y = any_scalar();
          const BinOp op = static_cast<BinOp>(below(16));
          emit(Op::Binary, {scalar_reg(define_scalar())}, {x, y}, op);
        }
        return;
      }
      case kNondet: {
        const unsigned left = cfg_.nondet_bits - nondet_bits_;
        const unsigned bits = static_cast<unsigned>(
            std::min<std::uint64_t>({1 + below(4), left, cfg_.width}));
        ++nondets_;
        nondet_bits_ += bits;
        emit(Op::Nondet, {scalar_reg(define_scalar())}, {}, BinOp::Add, bits);
        return;
      }
      case kAlloc: {
        Alloc a;
        const std::string p = fresh("p");
        const std::string m = fresh("m");
        Entry e;
        e.reg = p;
        if (m2) {
          a.words = chance(0.4) ? 2 : 1;
          emit(Op::MkOwn, {ptr_reg(p), mem_reg(m)}, {Imm{a.words * wb()}, mem_reg(st_.mem)});
          a.init.assign(a.words, false);
          a.known.assign(a.words, std::nullopt);
        } else if (cfg_.mix.copy > 0 && chance(0.15)) {
          // malloc hands out a copied pointer, so it shares the copy weight
          e.kind = PtrKind::C;
          emit(Op::Malloc, {ptr_reg(p), mem_reg(m)}, {Imm{wb()}, mem_reg(st_.mem)});
          a.init.assign(1, false);
          a.known.assign(1, std::nullopt);
        } else {
          const Operand v = any_scalar();
          emit(Op::MkOwn, {ptr_reg(p), mem_reg(m)}, {v, mem_reg(st_.mem)});
          a.init.assign(1, true);
          a.known.assign(1, v);
        }
        st_.mem = m;
        a.stack.push_back(e);
        a.floor = 0;
        st_.allocs.push_back(std::move(a));
        return;
      }
      case kLoad: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return x.init[x.stack.back().word];
        }))];
        const std::string r = define_scalar();
        emit(Op::Load, {scalar_reg(r)}, {ptr_reg(a.stack.back().reg), mem_reg(st_.mem)});
        if (auto k = a.known[a.stack.back().word]) st_.facts.push_back({scalar_reg(r), *k});
        return;
      }
      case kStore: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return top_kind(x) != PtrKind::RB;
        }))];
        do_store(a, a.stack.size() - 1);
        return;
      }
      case kPopCopies: {
        Alloc& a = st_.allocs[pick(pop_copy_candidates())];
        std::size_t j = a.stack.size();
        while (a.stack[j - 1].kind == PtrKind::C) --j;
        do_store(a, j - 1);
        return;
      }
      case kMut: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return top_kind(x) == PtrKind::O || top_kind(x) == PtrKind::MB;
        }))];
        const bool offset = m2 && a.stack.back().word + 1 < a.words && chance(0.5);
        pair(a, offset ? Op::MutMkborOff : Op::MutMkbor, Op::MutMksuc, PtrKind::MB, offset);
        return;
      }
      case kRo: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return top_kind(x) != PtrKind::C;
        }))];
        const bool offset = m2 && a.stack.back().word + 1 < a.words && chance(0.5);
        pair(a, offset ? Op::RoMkborOff : Op::RoMkbor, Op::RoMksuc, PtrKind::RB, offset);
        return;
      }
      case kCopy: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return top_kind(x) != PtrKind::RB;
        }))];
        pair(a, Op::CpyMkcpy1, Op::CpyMkcpy2, PtrKind::C, false);
        return;
      }
      case kDie: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return top_kind(x) == PtrKind::MB || top_kind(x) == PtrKind::RB;
        }, true))];
        die_top(a);
        return;
      }
      case kSetCache: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return top_kind(x) == PtrKind::O || top_kind(x) == PtrKind::MB;
        }))];
        const Operand v = any_scalar();
        const std::string p = fresh("p");
        emit(Op::SetCache, {ptr_reg(p)}, {ptr_reg(a.stack.back().reg), v});
        a.stack.back().reg = p;
        a.stack.back().cache_set = true;
        a.stack.back().cache = v;
        return;
      }
      case kGetCache: {
        Alloc& a = st_.allocs[pick(allocs_where([](const Alloc& x, const GenConfig&) {
          return x.stack.back().cache_set;
        }))];
        const std::string r = define_scalar();
        emit(Op::GetCache, {scalar_reg(r)}, {ptr_reg(a.stack.back().reg)});
        if (auto c = a.stack.back().cache) st_.facts.push_back({scalar_reg(r), *c});
        return;
      }
      case kBranch:
        diamond();
        return;
      case kAssume: {
        const std::string r = compare_with_constant(scalar_reg(st_.scalars[below(st_.scalars.size())]));
        emit(Op::Assume, {}, {scalar_reg(r)});
        return;
      }
      case kAssert:
        emit_assert();
        return;
    }
  }

  void die_top(Alloc& a) {
    const Entry q = a.stack.back();
    emit(Op::Die, {}, {ptr_reg(q.reg)});
    a.stack.pop_back();
    if (q.kind == PtrKind::MB) {
      a.stack.back().cache_set = q.cache_set;
      a.stack.back().cache = q.cache;
    }
  }

  void emit_assert() {
    std::string r;
    if (!st_.facts.empty() && chance(0.6)) {
      r = fact_check(st_.facts[below(st_.facts.size())]);
    } else if (!st_.scalars.empty()) {
      r = compare_with_constant(scalar_reg(st_.scalars[below(st_.scalars.size())]));
    } else {
      r = define_scalar();
      emit(Op::Mov, {scalar_reg(r)}, {Imm{1}});
    }
    emit(Op::Assert, {}, {scalar_reg(r)});
  }

  void close_arm() {
    for (std::size_t i = 0; i < arm_allocs_; ++i) {
      Alloc& a = st_.allocs[i];
      while (a.stack.size() > a.floor) die_top(a);
    }
  }

  std::string merge_operand(const std::string& a, const std::string& b, const std::string& la,
                            const std::string& lb, RegKind kind, std::vector<Phi>& phis) {
    if (a == b) return a;
    const std::string n = fresh(kind == RegKind::Pointer ? "p" : kind == RegKind::Memory ? "m" : "r");
    Phi phi;
    phi.def = Reg{kind, n};
    phi.incoming = {{Reg{kind, a}, la}, {Reg{kind, b}, lb}};
    phis.push_back(std::move(phi));
    return n;
  }

  std::optional<Operand> merge_value(const std::optional<Operand>& a, const std::optional<Operand>& b,
                                     const std::string& la, const std::string& lb,
                                     std::vector<Phi>& phis) {
    if (!a || !b) return std::nullopt;
    if (*a == *b) return a;
    const std::string n = fresh("r");
    Phi phi;
    phi.def = scalar_reg(n);
    phi.incoming = {{*a, la}, {*b, lb}};
    phis.push_back(std::move(phi));
    return Operand{scalar_reg(n)};
  }

  void diamond() {
    std::string c;
    if (!st_.scalars.empty() && chance(0.5)) {
      c = st_.scalars[below(st_.scalars.size())];
    } else {
      c = compare_with_constant(any_scalar());
    }
    const GState before = st_;
    const std::size_t pre = cur_;
    const bool two_armed = chance(0.5);

    const std::size_t then_b = new_block();
    std::size_t else_b = 0;
    if (two_armed) else_b = new_block();
    const std::size_t join = new_block();

    auto run_arm = [&](std::size_t block) {
      cur_ = block;
      st_ = before;
      for (auto& a : st_.allocs) a.floor = a.stack.size();
      arm_allocs_ = st_.allocs.size();
      in_arm_ = true;
      body(1 + static_cast<unsigned>(below(cfg_.max_instrs)));
      close_arm();
      in_arm_ = false;
      prog_.blocks[block].term = Terminator{Terminator::Kind::Br, Imm{0}, prog_.blocks[join].label, {}, {}};
      GState out = st_;
      out.allocs.resize(before.allocs.size());
      for (std::size_t i = 0; i < out.allocs.size(); ++i) out.allocs[i].floor = before.allocs[i].floor;
      return out;
    };

    prog_.blocks[pre].term = Terminator{Terminator::Kind::CondBr, scalar_reg(c),
                                        prog_.blocks[then_b].label,
                                        prog_.blocks[two_armed ? else_b : join].label, {}};
    GState a = run_arm(then_b);
    GState b = before;
    if (two_armed) b = run_arm(else_b);
    const std::string la = prog_.blocks[then_b].label;
    const std::string lb = prog_.blocks[two_armed ? else_b : pre].label;

    cur_ = join;
    std::vector<Phi> phis;
    GState m = before;
    m.mem = merge_operand(a.mem, b.mem, la, lb, RegKind::Memory, phis);
    for (std::size_t i = 0; i < m.allocs.size(); ++i) {
      Alloc& x = m.allocs[i];
      const Alloc& ax = a.allocs[i];
      const Alloc& bx = b.allocs[i];
      for (std::size_t j = 0; j < x.stack.size(); ++j) {
        x.stack[j].reg = merge_operand(ax.stack[j].reg, bx.stack[j].reg, la, lb, RegKind::Pointer, phis);
        x.stack[j].cache_set = ax.stack[j].cache_set && bx.stack[j].cache_set;
        x.stack[j].cache = x.stack[j].cache_set
                               ? merge_value(ax.stack[j].cache, bx.stack[j].cache, la, lb, phis)
                               : std::nullopt;
      }
      for (unsigned w = 0; w < x.words; ++w) {
        x.init[w] = ax.init[w] && bx.init[w];
        x.known[w] = x.init[w] ? merge_value(ax.known[w], bx.known[w], la, lb, phis) : std::nullopt;
      }
    }
    for (const Phi& p : phis) {
      if (p.def.kind == RegKind::Scalar) m.scalars.push_back(p.def.name);
    }
    prog_.blocks[join].phis = std::move(phis);
    st_ = std::move(m);
  }

  void finish_program() {
    const unsigned n = 1 + static_cast<unsigned>(below(2));
    for (unsigned k = 0; k < n; ++k) emit_assert();
    prog_.blocks[cur_].term = Terminator{};
  }

  const GenConfig& cfg_;
  std::mt19937_64 rng_;
  Program prog_;
  std::size_t cur_ = 0;
  unsigned counter_ = 0;
  unsigned nondets_ = 0;
  unsigned nondet_bits_ = 0;
  bool in_arm_ = false;
  std::size_t arm_allocs_ = 0;
  GState st_;
};

}  // namespace

Program gen_program(const GenConfig& config) { return Gen(config).run(); }

Program gen_pointer_roundtrip(std::uint64_t seed, unsigned width) {
  std::mt19937_64 rng(seed ^ 0x726f756e64ULL);
  auto below = [&](std::uint64_t n) { return rng() % n; };
  Program p;
  p.name = "roundtrip" + std::to_string(seed);
  p.word_width = width;
  p.level = Level::M3;
  BasicBlock b;
  b.label = "entry";
  unsigned counter = 0;
  auto fresh = [&](const char* prefix) { return prefix + std::to_string(counter++); };
  auto add = [&](Op op, std::vector<Reg> defs, std::vector<Operand> args, BinOp bop = BinOp::Add) {
    Instr in;
    in.op = op;
    in.binop = bop;
    in.defs = std::move(defs);
    in.args = std::move(args);
    b.body.push_back(std::move(in));
  };
  const std::uint64_t mask = word_mask(width);
  std::string mem = fresh("m");
  add(Op::MemInit, {mem_reg(mem)}, {});

  const unsigned n = 1 + static_cast<unsigned>(below(3));
  struct Parked {
    std::string container;
    std::uint64_t value;
  };
  std::vector<Parked> parked;
  for (unsigned i = 0; i < n; ++i) {
    const std::uint64_t v = below(mask + 1);
    const std::string p = fresh("p"), c = fresh("c");
    std::string m1 = fresh("m"), m2 = fresh("m"), m3 = fresh("m");
    add(Op::MkOwn, {ptr_reg(p), mem_reg(m1)}, {Imm{v}, mem_reg(mem)});
    add(Op::MkOwn, {ptr_reg(c), mem_reg(m2)}, {Imm{0}, mem_reg(m1)});
    add(Op::MovReg2Mem, {mem_reg(m3)}, {ptr_reg(p), ptr_reg(c), mem_reg(m2)});
    mem = m3;
    parked.push_back({c, v});
  }
  for (auto& k : parked) {
    const unsigned rounds = 1 + static_cast<unsigned>(below(2));
    for (unsigned r = 0; r < rounds; ++r) {
      const std::string q = fresh("q"), m1 = fresh("m");
      add(Op::MutMkborMem2Reg, {ptr_reg(q), mem_reg(m1)}, {ptr_reg(k.container), mem_reg(mem)});
      mem = m1;
      const std::string got = fresh("r");
      add(Op::Load, {scalar_reg(got)}, {ptr_reg(q), mem_reg(mem)});
      const std::string ok = fresh("r");
      add(Op::Binary, {scalar_reg(ok)}, {scalar_reg(got), Imm{k.value}}, BinOp::Eq);
      add(Op::Assert, {}, {scalar_reg(ok)});
      if (below(2) == 0) {
        k.value = below(mask + 1);
        const std::string m2 = fresh("m");
        add(Op::Store, {mem_reg(m2)}, {Imm{k.value}, ptr_reg(q), mem_reg(mem)});
        mem = m2;
      }
      add(Op::Die, {}, {ptr_reg(q)});
    }
    const std::string x = fresh("p");
    add(Op::Load, {ptr_reg(x)}, {ptr_reg(k.container), mem_reg(mem)});
    const std::string got = fresh("r"), ok = fresh("r");
    add(Op::Load, {scalar_reg(got)}, {ptr_reg(x), mem_reg(mem)});
    add(Op::Binary, {scalar_reg(ok)}, {scalar_reg(got), Imm{k.value}}, BinOp::Eq);
    add(Op::Assert, {}, {scalar_reg(ok)});
  }
  b.term = Terminator{};
  p.blocks.push_back(std::move(b));
  return p;
}

}  // namespace ownir
