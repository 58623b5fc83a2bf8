#include "ownir/check.hpp"

#include <sstream>

namespace ownir {

std::string CacheVerdict::to_string() const {
  if (holds()) return "cache equivalence holds";
  std::ostringstream os;
  for (const auto& v : violations) {
    os << "cache of " << v.reg << " is " << v.cache << " but memory holds " << v.memory << "\n";
  }
  return os.str();
}

CacheVerdict check_cache_equivalence(const Machine& m) {
  CacheVerdict verdict;
  if (m.program().level == Level::M2) return verdict;
  const State& st = m.state();
  for (std::size_t i = 0; i < st.regs.size(); ++i) {
    const auto& r = st.regs[i];
    if (!r || r->kind != RegKind::Pointer || st.moved[i]) continue;
    const PtrValue& p = r->ptr;
    if (p.tag == 0 || p.cache != CacheState::Valid) continue;
    std::optional<std::uint64_t> base;
    for (const auto& a : st.allocs) {
      if (p.addr == a.base) base = a.base;
    }
    if (!base) continue;
    const BorrowStack* s = st.borrows.stack(*base);
    if (!s || s->empty() || s->back().tag != p.tag) continue;
    if (s->back().kind != PtrKind::O && s->back().kind != PtrKind::MB) continue;
    auto it = st.mem.find(p.addr);
    bool same = false;
    std::string mem_text = "nothing";
    if (it != st.mem.end()) {
      mem_text = format_cell(it->second);
      if (auto w = std::get_if<std::uint64_t>(&it->second)) {
        same = std::holds_alternative<std::uint64_t>(p.val) && std::get<std::uint64_t>(p.val) == *w;
      } else {
        const auto& sp = std::get<StoredPtr>(it->second);
        const auto* pp = std::get_if<PartialPtr>(&p.val);
        same = pp && pp->addr == sp.addr && pp->tag == sp.tag;
      }
    }
    if (!same) {
      std::string cache_text;
      if (auto w = std::get_if<std::uint64_t>(&p.val)) {
        cache_text = std::to_string(*w);
      } else {
        const auto& pp = std::get<PartialPtr>(p.val);
        cache_text = format_cell(StoredPtr{pp.addr, pp.tag, std::nullopt});
      }
      verdict.violations.push_back({m.layout().names[i], p.addr, cache_text, mem_text});
    }
  }
  return verdict;
}

namespace {

std::string pc_text(const State& s) {
  return std::to_string(s.block) + ":" + std::to_string(s.index);
}

}  // namespace

std::string observable_difference(const State& a, const State& b) {
  if (a.block != b.block || a.index != b.index) return "pc " + pc_text(a) + " vs " + pc_text(b);
  if (a.status != b.status || a.rule != b.rule) {
    return "status " + std::string(status_name(a.status)) + a.rule + " vs " +
           std::string(status_name(b.status)) + b.rule;
  }
  if (a.regs.size() != b.regs.size()) return "register file size";
  for (std::size_t i = 0; i < a.regs.size(); ++i) {
    const auto& x = a.regs[i];
    const auto& y = b.regs[i];
    if (x.has_value() != y.has_value()) return "register slot " + std::to_string(i) + " definedness";
    if (!x) continue;
    if (x->kind != y->kind) return "register slot " + std::to_string(i) + " kind";
    if (x->kind == RegKind::Scalar && x->word != y->word) {
      return "register slot " + std::to_string(i) + " value " + std::to_string(x->word) + " vs " +
             std::to_string(y->word);
    }
    if (x->kind == RegKind::Pointer && (x->ptr.addr != y->ptr.addr || x->ptr.tag != y->ptr.tag)) {
      return "register slot " + std::to_string(i) + " pointer " + format_value(*x) + " vs " +
             format_value(*y);
    }
    if (a.moved[i] != b.moved[i]) return "register slot " + std::to_string(i) + " moved flag";
  }
  if (a.mem.size() != b.mem.size()) return "memory domain";
  for (auto ia = a.mem.begin(), ib = b.mem.begin(); ia != a.mem.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return "memory domain";
    const Cell& ca = ia->second;
    const Cell& cb = ib->second;
    if (ca.index() != cb.index()) return "memory cell kind";
    if (auto wa = std::get_if<std::uint64_t>(&ca)) {
      if (*wa != std::get<std::uint64_t>(cb)) {
        return "memory cell " + format_cell(ca) + " vs " + format_cell(cb);
      }
    } else {
      const auto& pa = std::get<StoredPtr>(ca);
      const auto& pb = std::get<StoredPtr>(cb);
      if (pa.addr != pb.addr || pa.tag != pb.tag) {
        return "memory cell " + format_cell(ca) + " vs " + format_cell(cb);
      }
    }
  }
  if (!(a.borrows == b.borrows)) return "borrow stacks";
  if (a.next_tag != b.next_tag || a.next_addr != b.next_addr) return "allocation counters";
  return {};
}

DiffReport lockstep_diff(const Program& program, const Oracle& oracle,
                         const LockstepOptions& options) {
  auto shared = std::make_shared<const Program>(program);
  MachineOptions o0;
  o0.kind = MachineKind::M0;
  o0.step_limit = options.step_limit;
  MachineOptions o1 = o0;
  o1.kind = MachineKind::M1;
  o1.skip_store_cache_sync = options.skip_store_cache_sync;
  Machine m0(shared, oracle, o0);
  Machine m1(shared, oracle, o1);
  DiffReport rep;
  const bool check = options.check_cache && program.level != Level::M2;
  auto check_now = [&] {
    if (!check) return;
    ++rep.cache_checks;
    CacheVerdict v = check_cache_equivalence(m1);
    if (!v.holds()) {
      rep.cache_violations.push_back("step " + std::to_string(m1.state().steps) + ": " +
                                     v.to_string());
    }
  };
  check_now();
  while (m0.state().status == Status::Running || m1.state().status == Status::Running) {
    m0.step();
    m1.step();
    ++rep.steps;
    check_now();
    std::string d = observable_difference(m0.state(), m1.state());
    if (!d.empty()) {
      rep.equivalent = false;
      rep.divergence = d;
      rep.divergence_step = rep.steps;
      break;
    }
  }
  rep.m0_status = m0.state().status;
  rep.m1_status = m1.state().status;
  rep.m0_rule = m0.state().rule;
  rep.m1_rule = m1.state().rule;
  rep.m1_cache_reads = m1.state().cache_reads;
  rep.implicit_borrow_ends = m0.state().borrows.implicit_borrow_ends();
  return rep;
}

std::string DiffReport::to_string() const {
  std::ostringstream os;
  if (equivalent) {
    os << "no divergence over " << steps << " steps (" << status_name(m0_status)
       << (m0_rule.empty() ? "" : " " + m0_rule) << ")";
  } else {
    os << "divergence at step " << divergence_step << ": " << divergence;
  }
  if (!cache_violations.empty()) {
    os << "\n" << cache_violations.size() << " cache equivalence violations; first: "
       << cache_violations.front();
  }
  return os.str();
}

}  // namespace ownir
