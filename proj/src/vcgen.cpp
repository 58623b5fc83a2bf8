#include "ownir/vcgen.hpp"

#include <numeric>
#include <set>
#include <unordered_map>

namespace ownir {

using smt::Kind;
using smt::Sort;
using smt::TermId;

std::string_view encoder_name(Encoder e) {
  return e == Encoder::Ownsem ? "ownsem" : "baseline";
}

namespace {

constexpr unsigned kTagWidth = 16;

struct SymPtr {
  TermId addr = 0;
  TermId tag = 0;
  TermId val = 0;
  TermId ret = 0;
  TermId home = 0;  // address the successor lives at
  TermId mut = 0;   // Bool: die transfers the cache
  int site = -1;    // allocation site (union-find element)
};

/// Memory array versions. Definitions are kept aside so that unread writes
/// can be dropped at the end.
struct ArrayChain {
  std::string prefix;
  Sort sort;
  TermId initial = 0;
  TermId cur = 0;
  std::vector<std::pair<TermId, TermId>> defs;  // defs[k] defines version k+1
  int max_read = -1;
  bool touched = false;
};

/// Allocation sites that ever meet a copied or raw pointer lose the cache
/// shortcut; sites merged by pointer selects share that fate.
class SiteTrust {
 public:
  explicit SiteTrust(std::size_t n) : parent_(n), untrusted_(n, false) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void merge(int a, int b) {
    if (a < 0 || b < 0) return;
    a = find(a);
    b = find(b);
    if (a == b) return;
    parent_[b] = a;
    untrusted_[a] = untrusted_[a] || untrusted_[b];
  }
  void taint(int a) {
    if (a >= 0) untrusted_[find(a)] = true;
  }
  bool trusted(int a) { return a >= 0 && !untrusted_[find(a)]; }

 private:
  std::vector<int> parent_;
  std::vector<bool> untrusted_;
};

bool is_memory_level3(const Instr& in) {
  if (in.op == Op::MutMkborMem2Reg || in.op == Op::MovReg2Mem) return true;
  if (in.op == Op::Load && in.defs[0].kind == RegKind::Pointer) return true;
  if (in.op == Op::Store && is_reg(in.args[0]) && as_reg(in.args[0]).kind == RegKind::Pointer) {
    return true;
  }
  return false;
}

class Encoding {
 public:
  Encoding(const Program& flat, Encoder enc, const EncodeOptions& opt)
      : p_(flat), enc_(enc), opt_(opt), w_(flat.word_width), trust_(flat.blocks.front().body.size()) {
    mem_.prefix = "mem";
    shadow_.prefix = "shadow";
  }

  VcScript run();

 private:
  smt::TermBank& bank() { return vc_.script.bank; }
  TermId lit(std::uint64_t v) { return bank().bv_lit(v & word_mask(w_), w_); }
  TermId tag_lit(std::uint64_t v) { return bank().bv_lit(v, kTagWidth); }
  TermId ne0(TermId t) { return bank().not_(bank().eq(t, lit(0))); }
  TermId boolword(TermId b) { return bank().ite(b, lit(1), lit(0)); }
  bool atomic(TermId t) {
    const Kind k = bank().node(t).kind;
    return k == Kind::Symbol || k == Kind::BVLit || k == Kind::BoolLit;
  }
  std::string fresh_name(const std::string& base);
  TermId name(const std::string& base, TermId t);
  TermId operand(const Operand& o);
  TermId guard_of(const Instr& in);
  const SymPtr& ptr(const Reg& r);
  bool cached(const SymPtr& p) { return enc_ == Encoder::Ownsem && auto_cache() && trust_.trusted(p.site); }
  bool auto_cache() const { return p_.level != Level::M2; }

  void define_scalar(const Reg& r, TermId value, TermId g);
  void define_ptr(const Reg& r, SymPtr v, TermId g);
  TermId read(ArrayChain& a, TermId index);
  void write(ArrayChain& a, TermId g, TermId index, TermId value);
  void finish(ArrayChain& a, bool slice);

  void prepass();
  void step(const Instr& in, std::size_t index);
  void pair_head(const Instr& in, TermId g);
  void store(const Instr& in, TermId g);

  const Program& p_;
  Encoder enc_;
  EncodeOptions opt_;
  unsigned w_;
  VcScript vc_;
  SiteTrust trust_;

  std::unordered_map<std::string, TermId> scalars_;
  std::unordered_map<std::string, SymPtr> ptrs_;
  std::vector<std::string> ptr_order_;
  std::set<std::string> names_;
  std::unordered_map<std::string, unsigned> variants_;
  ArrayChain mem_;
  ArrayChain shadow_;
  TermId alloc_ = 0;
  unsigned alloc_version_ = 0;
  std::uint64_t next_tag_ = 1;
  SymPtr pending_;
  bool seen_assert_ = false;
  std::vector<TermId> prefix_;
  std::vector<TermId> failures_;
};

std::string Encoding::fresh_name(const std::string& base) {
  std::string n = base;
  for (unsigned k = 1; names_.count(n) || vc_.script.declared(n); ++k) n = base + "." + std::to_string(k);
  names_.insert(n);
  return n;
}

TermId Encoding::name(const std::string& base, TermId t) {
  if (atomic(t)) return t;
  const TermId s = vc_.script.declare(fresh_name(base), bank().sort(t));
  vc_.script.assert_(bank().eq(s, t));
  return s;
}

TermId Encoding::operand(const Operand& o) {
  if (!is_reg(o)) return lit(std::get<Imm>(o).value);
  const Reg& r = as_reg(o);
  auto it = scalars_.find(r.name);
  if (it == scalars_.end()) throw UnsupportedInstr("scalar " + r.name + " used before definition");
  return it->second;
}

TermId Encoding::guard_of(const Instr& in) {
  if (!in.guard) return bank().bool_lit(true);
  return ne0(operand(Operand{*in.guard}));
}

const SymPtr& Encoding::ptr(const Reg& r) {
  auto it = ptrs_.find(r.name);
  if (it == ptrs_.end()) throw UnsupportedInstr("pointer " + r.name + " used before definition");
  return it->second;
}

void Encoding::define_scalar(const Reg& r, TermId value, TermId g) {
  value = bank().ite(g, value, lit(0));
  const TermId s = vc_.script.declare(fresh_name(r.name), Sort::bv(w_));
  vc_.script.assert_(bank().eq(s, value));
  scalars_[r.name] = s;
}

void Encoding::define_ptr(const Reg& r, SymPtr v, TermId g) {
  v.addr = name(r.name + ".addr", bank().ite(g, v.addr, lit(0)));
  v.tag = name(r.name + ".tag", bank().ite(g, v.tag, tag_lit(0)));
  v.val = name(r.name + ".val", v.val);
  v.home = name(r.name + ".home", v.home);
  if (!ptrs_.count(r.name)) ptr_order_.push_back(r.name);
  ptrs_[r.name] = v;
}

TermId Encoding::read(ArrayChain& a, TermId index) {
  if (!a.touched) {
    a.sort = Sort::array(w_, w_);
    a.initial = a.cur = bank().symbol(a.prefix + ".0", a.sort);
    a.touched = true;
  }
  a.max_read = static_cast<int>(a.defs.size());
  return bank().select(a.cur, index);
}

void Encoding::write(ArrayChain& a, TermId g, TermId index, TermId value) {
  if (bank().is_false(g)) return;
  if (!a.touched) {
    a.sort = Sort::array(w_, w_);
    a.initial = a.cur = bank().symbol(a.prefix + ".0", a.sort);
    a.touched = true;
  }
  const TermId next = bank().symbol(a.prefix + "." + std::to_string(a.defs.size() + 1), a.sort);
  a.defs.emplace_back(next, bank().ite(g, bank().store(a.cur, index, value), a.cur));
  a.cur = next;
}

void Encoding::finish(ArrayChain& a, bool slice) {
  if (!a.touched) return;
  const int upto = slice ? a.max_read : static_cast<int>(a.defs.size());
  if (upto < 0) return;
  vc_.script.declare(a.prefix + ".0", a.sort);
  for (int k = 0; k < upto; ++k) {
    vc_.script.declare(bank().node(a.defs[k].first).name, a.sort);
    vc_.script.assert_(bank().eq(a.defs[k].first, a.defs[k].second));
  }
}

void Encoding::prepass() {
  std::unordered_map<std::string, int> site;
  int pending = -1;
  const auto& body = p_.blocks.front().body;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const Instr& in = body[i];
    auto site_of = [&](const Operand& o) {
      if (!is_reg(o)) return -1;
      auto it = site.find(as_reg(o).name);
      return it == site.end() ? -1 : it->second;
    };
    switch (in.op) {
      case Op::MkOwn:
      case Op::Malloc:
        site[in.defs[0].name] = static_cast<int>(i);
        if (in.op == Op::Malloc) trust_.taint(static_cast<int>(i));
        break;
      case Op::MutMkbor:
      case Op::MutMkborOff:
      case Op::RoMkbor:
      case Op::RoMkborOff:
      case Op::CpyMkcpy1:
      case Op::CpyMkcpy1Off:
        pending = site_of(in.args[0]);
        site[in.defs[0].name] = pending;
        if (in.op == Op::CpyMkcpy1 || in.op == Op::CpyMkcpy1Off) trust_.taint(pending);
        break;
      case Op::MutMksuc:
      case Op::RoMksuc:
      case Op::CpyMkcpy2:
        site[in.defs[0].name] = pending;
        break;
      case Op::SetCache:
        site[in.defs[0].name] = site_of(in.args[0]);
        break;
      case Op::BeginUnique:
      case Op::EndUnique:
        site[in.defs[0].name] = site_of(in.args[0]);
        trust_.taint(site_of(in.args[0]));
        break;
      case Op::Select:
        if (in.defs[0].kind == RegKind::Pointer) {
          const int a = site_of(in.args[1]);
          const int b = site_of(in.args[2]);
          trust_.merge(a, b);
          site[in.defs[0].name] = a >= 0 ? a : b;
        }
        break;
      default:
        break;
    }
  }
}

void Encoding::pair_head(const Instr& in, TermId g) {
  const SymPtr lender = ptr(as_reg(in.args[0]));
  const bool offset = in.op == Op::MutMkborOff || in.op == Op::RoMkborOff || in.op == Op::CpyMkcpy1Off;
  const bool mut = in.op == Op::MutMkbor || in.op == Op::MutMkborOff;
  TermId qaddr = lender.addr;
  if (offset) qaddr = bank().bv(Kind::BvAdd, lender.addr, operand(in.args[1]));

  TermId v = lit(0);
  if (enc_ == Encoder::Ownsem && (!auto_cache() || cached(lender))) v = lender.val;

  if (enc_ == Encoder::Baseline && !auto_cache() && qaddr != lender.addr) {
    write(shadow_, g, qaddr, read(shadow_, lender.addr));
  }

  SymPtr q;
  q.addr = qaddr;
  q.tag = tag_lit(next_tag_ + 1);
  q.val = v;
  q.home = lender.addr;
  q.site = lender.site;
  q.mut = bank().bool_lit(mut);
  q.ret = lit(0);

  SymPtr s = lender;
  s.tag = tag_lit(next_tag_);
  s.val = v;
  s.home = lender.home;
  next_tag_ += 2;

  if (mut && enc_ == Encoder::Ownsem) {
    const std::string pname = fresh_name("proph_" + in.defs[0].name);
    const TermId proph = vc_.script.declare(pname, Sort::bv(w_));
    vc_.prophecies.push_back(pname);
    q.ret = proph;
    s.val = proph;
  }
  define_ptr(in.defs[0], q, g);
  pending_ = s;
}

void Encoding::store(const Instr& in, TermId g) {
  const SymPtr p = ptr(as_reg(in.args[1]));
  const TermId v = operand(in.args[0]);
  if (cached(p)) {
    if (opt_.skip_store_cache_sync) return;
    for (const auto& n : ptr_order_) {
      SymPtr& s = ptrs_[n];
      if (!trust_.trusted(s.site) || trust_.find(s.site) != trust_.find(p.site)) continue;
      const TermId c = bank().and_({g, bank().eq(s.tag, p.tag)});
      if (bank().is_false(c)) continue;
      const TermId nv = bank().ite(c, v, s.val);
      if (nv == s.val) continue;
      if (atomic(nv)) {
        s.val = nv;
      } else {
        const unsigned k = ++variants_[n];
        s.val = name(n + ".v" + std::to_string(k) + ".val", nv);
      }
    }
    return;
  }
  write(mem_, g, p.addr, v);
}

void Encoding::step(const Instr& in, std::size_t index) {
  if (is_memory_level3(in)) {
    throw UnsupportedInstr(std::string(op_info(in.op).mnemonic) +
                           " moves pointers through memory; the encoders cover scalar memory only");
  }
  const TermId g = guard_of(in);
  auto& b = bank();
  switch (in.op) {
    case Op::Mov:
      define_scalar(in.defs[0], operand(in.args[0]), g);
      return;
    case Op::Binary: {
      const TermId a = operand(in.args[0]);
      const TermId c = operand(in.args[1]);
      TermId r = 0;
      switch (in.binop) {
        case BinOp::Add: r = b.bv(Kind::BvAdd, a, c); break;
        case BinOp::Sub: r = b.bv(Kind::BvSub, a, c); break;
        case BinOp::Mul: r = b.bv(Kind::BvMul, a, c); break;
        case BinOp::And: r = b.bv(Kind::BvAnd, a, c); break;
        case BinOp::Or: r = b.bv(Kind::BvOr, a, c); break;
        case BinOp::Xor: r = b.bv(Kind::BvXor, a, c); break;
        case BinOp::Shl: r = b.bv(Kind::BvShl, a, c); break;
        case BinOp::Lshr: r = b.bv(Kind::BvLshr, a, c); break;
        case BinOp::Eq: r = boolword(b.eq(a, c)); break;
        case BinOp::Ne: r = boolword(b.not_(b.eq(a, c))); break;
        case BinOp::Ult: r = boolword(b.bv(Kind::BvUlt, a, c)); break;
        case BinOp::Ule: r = boolword(b.bv(Kind::BvUle, a, c)); break;
        case BinOp::Ugt: r = boolword(b.bv(Kind::BvUgt, a, c)); break;
        case BinOp::Uge: r = boolword(b.bv(Kind::BvUge, a, c)); break;
        case BinOp::LAnd: r = boolword(b.and_({ne0(a), ne0(c)})); break;
        case BinOp::LOr: r = boolword(b.or_({ne0(a), ne0(c)})); break;
      }
      define_scalar(in.defs[0], r, g);
      return;
    }
    case Op::Not:
      define_scalar(in.defs[0], boolword(b.eq(operand(in.args[0]), lit(0))), g);
      return;
    case Op::Select: {
      const RegKind k = in.defs[0].kind;
      if (k == RegKind::Memory) return;
      const TermId c = ne0(operand(in.args[0]));
      if (k == RegKind::Scalar) {
        define_scalar(in.defs[0], b.ite(c, operand(in.args[1]), operand(in.args[2])), g);
        return;
      }
      const SymPtr x = ptr(as_reg(in.args[1]));
      const SymPtr y = ptr(as_reg(in.args[2]));
      SymPtr s;
      s.addr = b.ite(c, x.addr, y.addr);
      s.tag = b.ite(c, x.tag, y.tag);
      s.val = b.ite(c, x.val, y.val);
      s.ret = b.ite(c, x.ret, y.ret);
      s.home = b.ite(c, x.home, y.home);
      s.mut = b.ite(c, x.mut, y.mut);
      s.site = x.site >= 0 ? x.site : y.site;
      s.ret = name(in.defs[0].name + ".ret", s.ret);
      define_ptr(in.defs[0], s, g);
      return;
    }
    case Op::Nondet: {
      const TermId s = vc_.script.declare(fresh_name(in.defs[0].name), Sort::bv(w_));
      vc_.nondets.push_back({in.defs[0], in.bits});
      if (in.bits < w_) vc_.script.assert_(b.bv(Kind::BvUle, s, lit(word_mask(in.bits))));
      if (in.guard) {
        define_scalar(Reg{RegKind::Scalar, in.defs[0].name + ".def"}, s, g);
        scalars_[in.defs[0].name] = scalars_[in.defs[0].name + ".def"];
      } else {
        scalars_[in.defs[0].name] = s;
      }
      return;
    }
    case Op::MemInit:
      return;
    case Op::MkOwn:
    case Op::Malloc: {
      const bool sized = in.op == Op::Malloc || p_.level == Level::M2;
      const std::uint64_t wb = word_bytes(w_);
      std::uint64_t bytes = wb;
      if (sized) {
        if (is_reg(in.args[0])) throw UnsupportedInstr("allocation size must be a literal");
        bytes = std::get<Imm>(in.args[0]).value & word_mask(w_);
      }
      const std::uint64_t words = std::max<std::uint64_t>(1, (bytes + wb - 1) / wb);
      if (alloc_ == 0) alloc_ = lit(4);
      SymPtr p;
      p.addr = alloc_;
      p.tag = tag_lit(next_tag_++);
      p.val = lit(0);
      p.ret = lit(0);
      p.home = alloc_;
      p.mut = b.bool_lit(false);
      p.site = static_cast<int>(index);
      alloc_ = b.ite(g, b.bv(Kind::BvAdd, alloc_, lit(words * wb)), alloc_);
      if (!atomic(alloc_)) alloc_ = name("alloc." + std::to_string(++alloc_version_), alloc_);
      if (!sized) {
        const TermId n = operand(in.args[0]);
        p.val = n;
        if (!cached(p)) write(mem_, g, p.addr, n);
      }
      define_ptr(in.defs[0], p, g);
      return;
    }
    case Op::MutMkbor:
    case Op::MutMkborOff:
    case Op::RoMkbor:
    case Op::RoMkborOff:
    case Op::CpyMkcpy1:
    case Op::CpyMkcpy1Off:
      pair_head(in, g);
      return;
    case Op::MutMksuc:
    case Op::RoMksuc:
    case Op::CpyMkcpy2:
      define_ptr(in.defs[0], pending_, g);
      return;
    case Op::Die: {
      const SymPtr& x = ptr(as_reg(in.args[0]));
      if (enc_ == Encoder::Ownsem) {
        vc_.script.assert_(b.implies(b.and_({g, x.mut}), b.eq(x.val, x.ret)));
      } else if (!auto_cache() && x.home != x.addr && !b.is_false(x.mut)) {
        write(shadow_, b.and_({g, x.mut}), x.home, read(shadow_, x.addr));
      }
      return;
    }
    case Op::Load: {
      const SymPtr& p = ptr(as_reg(in.args[0]));
      const TermId r = cached(p) ? p.val : read(mem_, p.addr);
      define_scalar(in.defs[0], r, g);
      return;
    }
    case Op::Store:
      store(in, g);
      return;
    case Op::SetCache: {
      SymPtr q = ptr(as_reg(in.args[0]));
      const TermId v = operand(in.args[1]);
      if (enc_ == Encoder::Ownsem) {
        q.val = v;
      } else {
        write(shadow_, g, q.addr, v);
      }
      define_ptr(in.defs[0], q, g);
      return;
    }
    case Op::GetCache: {
      const SymPtr& p = ptr(as_reg(in.args[0]));
      TermId r;
      if (auto_cache()) {
        if (!trust_.trusted(p.site)) {
          throw UnsupportedInstr("get_cache on a copied allocation is not encoded");
        }
        r = enc_ == Encoder::Ownsem ? p.val : read(mem_, p.addr);
      } else {
        r = enc_ == Encoder::Ownsem ? p.val : read(shadow_, p.addr);
      }
      define_scalar(in.defs[0], r, g);
      return;
    }
    case Op::BeginUnique:
    case Op::EndUnique:
      define_ptr(in.defs[0], ptr(as_reg(in.args[0])), g);
      return;
    case Op::Assume: {
      const TermId c = b.implies(g, ne0(operand(in.args[0])));
      if (seen_assert_) {
        prefix_.push_back(c);
      } else {
        vc_.script.assert_(c);
      }
      return;
    }
    case Op::Assert: {
      seen_assert_ = true;
      std::vector<TermId> conj = prefix_;
      conj.push_back(g);
      conj.push_back(b.eq(operand(in.args[0]), lit(0)));
      failures_.push_back(b.and_(std::move(conj)));
      return;
    }
    case Op::MutMkborMem2Reg:
    case Op::MovReg2Mem:
      break;
  }
  throw UnsupportedInstr(std::string(op_info(in.op).mnemonic));
}

VcScript Encoding::run() {
  prepass();
  const auto& body = p_.blocks.front().body;
  for (std::size_t i = 0; i < body.size(); ++i) step(body[i], i);
  const bool slice = enc_ == Encoder::Ownsem;
  finish(mem_, slice);
  finish(shadow_, slice);
  vc_.script.goal = bank().or_(failures_);
  vc_.script.has_goal = true;
  smt::check_sorts(vc_.script);
  return std::move(vc_);
}

}  // namespace

VcScript encode(const Program& program, Encoder encoder, const EncodeOptions& options) {
  const Program flat = flatten(program);
  if (flat.blocks.size() != 1) throw UnsupportedInstr("program did not flatten to one block");
  return Encoding(flat, encoder, options).run();
}

VcScript encode_ownsem(const Program& program, const EncodeOptions& options) {
  return encode(program, Encoder::Ownsem, options);
}

VcScript encode_baseline(const Program& program) {
  return encode(program, Encoder::Baseline, {});
}

Oracle oracle_from_model(const VcScript& vc, const std::map<std::string, std::uint64_t>& model) {
  std::map<std::string, std::uint64_t> keyed;
  for (const auto& site : vc.nondets) {
    auto it = model.find(site.reg.name);
    keyed[site.reg.name] = it == model.end() ? 0 : it->second;
  }
  return Oracle::keyed(std::move(keyed));
}

}  // namespace ownir
