// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failing criteria.
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "ownir/bench.hpp"
#include "ownir/check.hpp"
#include "ownir/generator.hpp"
#include "ownir/harness.hpp"
#include "ownir/machine.hpp"
#include "ownir/smt.hpp"
#include "ownir/text.hpp"
#include "ownir/vcgen.hpp"

using namespace ownir;

namespace {

std::string data(const std::string& name) { return std::string(OWNIR_TEST_DATA) + "/" + name; }

SolverConfig solver() {
  SolverConfig c;
  c.apply_environment();
  return c;
}

struct Result {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::size_t instr_count(const Program& p) {
  std::size_t n = 0;
  for (const auto& b : p.blocks) n += b.body.size();
  return n;
}

std::vector<std::uint64_t> stack_tags(const State& s, std::uint64_t base) {
  std::vector<std::uint64_t> out;
  if (const BorrowStack* st = s.borrows.stack(base)) {
    for (std::size_t i = st->size(); i-- > 0;) out.push_back((*st)[i].tag);
  }
  return out;
}

Result golden_trace() {
  Result r;
  const Program p = parse_file(data("borrows.oseair"));
  for (MachineKind kind : {MachineKind::M0, MachineKind::M1}) {
    const std::string tag = kind == MachineKind::M0 ? "m0 " : "m1 ";
    MachineOptions o;
    o.kind = kind;
    Machine m(p, Oracle{}, o);
    m.step();
    m.step();
    const Value* p0 = m.reg("p0");
    r.require(p0 && p0->ptr.addr == 0x4 && p0->ptr.tag == 1, tag + "regs[p0] != (0x4,1)");
    auto cell = m.state().mem.find(0x4);
    r.require(cell != m.state().mem.end() && std::get<std::uint64_t>(cell->second) == 42,
              tag + "mem[0x4] != 42");
    r.require(stack_tags(m.state(), 0x4) == std::vector<std::uint64_t>{1}, tag + "borrows != [1]");
    m.step();
    m.step();
    r.require(stack_tags(m.state(), 0x4) == std::vector<std::uint64_t>{3, 2},
              tag + "borrows != [3,2] after the pair");
    for (int i = 0; i < 4; ++i) m.step();
    r.require(stack_tags(m.state(), 0x4) == std::vector<std::uint64_t>{2}, tag + "borrows != [2] after die");
    const Outcome out = m.run();
    r.require(out.status == Status::Halted, tag + "did not halt");
    r.require(m.scalar("r") == 43u, tag + "r != 43");
  }
  r.detail = r.pass ? "borrows on m0 and m1: (0x4,1), 42, [1], [3,2], [2], r = 43" : r.detail;
  return r;
}

Result running_example() {
  Result r;
  const Program p = parse_file(data("guarded.oseair"));
  const VcScript own = encode_ownsem(p);
  const auto ops = smt::count_array_ops(own.script);
  r.require(ops.reads == 0 && ops.writes == 0, "ownsem has array terms");
  const SolverVerdict o = solve_program(p, true, solver());
  const SolverVerdict b = solve_program(p, false, solver());
  r.require(o.validity == Validity::Valid, "ownsem not unsat: " + o.detail);
  r.require(b.validity == Validity::Valid, "baseline not unsat: " + b.detail);
  r.require(b.ops.writes > 0, "baseline models no store");
  if (r.pass) {
    std::ostringstream os;
    os << "guarded ownsem unsat with 0 array reads/writes (BB1 store not modelled); baseline unsat with "
       << b.ops.reads << " reads / " << b.ops.writes << " writes";
    r.detail = os.str();
  }
  return r;
}

CorpusOptions m1_corpus(bool fault) {
  CorpusOptions o;
  o.levels = {Level::M1};
  o.count = 1000;
  o.oracles_per_program = 16;
  o.fault_skip_store_cache_sync = fault;
  return o;
}

Result cache_equivalence(const LockstepCorpusResult& c) {
  Result r;
  r.require(c.programs >= 1000, "corpus too small");
  r.require(c.total.cache_checks > 0, "no cache checks ran");
  r.require(c.total.cache_violations == 0, std::to_string(c.total.cache_violations) + " violations");
  std::ostringstream os;
  os << c.programs << " m1 programs, " << c.total.runs << " runs, " << c.total.cache_checks
     << " per-step cache checks, " << c.total.cache_violations << " violations";
  if (r.pass) r.detail = os.str();
  return r;
}

Result lockstep(const LockstepCorpusResult& c) {
  Result r;
  r.require(c.total.divergences == 0, std::to_string(c.total.divergences) + " divergences");
  r.require(c.total.ub_runs == 0, std::to_string(c.total.ub_runs) + " runs hit UB");
  std::ostringstream os;
  os << c.programs << " m1 programs, " << c.total.steps << " lockstep steps, " << c.total.divergences
     << " divergences";
  if (r.pass) r.detail = os.str();
  if (!c.failures.empty()) r.detail += "; first: " + c.failures.front().detail;
  return r;
}

CorpusOptions three_way_options(bool fault, std::uint64_t count) {
  CorpusOptions o;
  o.levels = {Level::M1, Level::M2};
  o.count = count;
  o.base.width = 8;
  o.base.nondet_budget = 3;
  o.fault_skip_store_cache_sync = fault;
  return o;
}

Result three_way() {
  Result r;
  ThreeWayOptions tw;
  tw.solver = solver();
  const ThreeWayCorpusResult c = three_way_corpus(three_way_options(false, 500), tw);
  r.require(c.agreements == c.programs, std::to_string(c.programs - c.agreements) + " disagreements");
  if (!c.failures.empty()) {
    r.detail += "; first seed " + std::to_string(c.failures.front().seed) + ": " + c.failures.front().detail;
  }
  r.require(c.sat_models_replayed == 2 * c.invalid, "some sat model did not replay");
  if (r.pass) {
    std::ostringstream os;
    os << c.agreements << "/" << c.programs << " agree (" << c.valid << " valid, " << c.invalid
       << " invalid), " << c.sat_models_replayed << " sat models replayed to AssertFailed on m0";
    r.detail = os.str();
  }
  return r;
}

Result bench_structure() {
  Result r;
  const std::vector<unsigned> ns = {2, 4, 8};
  const auto specs = bench_matrix({"many_buffers", "file_typestate"}, ns,
                                  {BenchMode::Ownsem, BenchMode::BaselineShadow, BenchMode::BaselineMain});
  const BenchReport rep = run_bench(specs, 3, solver(), 1);
  r.require(rep.verdicts_agree(), "verdicts differ across modes");
  std::ostringstream os;
  for (const std::string family : {"many_buffers", "file_typestate"}) {
    std::map<BenchMode, std::vector<std::size_t>> reads;
    for (const auto& c : rep.cells) {
      if (c.spec.family == family) reads[c.spec.mode].push_back(c.reads);
      if (!c.error.empty()) r.require(false, family + " cell error: " + c.error);
    }
    const auto& own = reads[BenchMode::Ownsem];
    r.require(own.size() == 3 && own[0] == own[1] && own[1] == own[2], family + " ownsem reads vary with n");
    for (BenchMode m : {BenchMode::BaselineShadow, BenchMode::BaselineMain}) {
      const auto& b = reads[m];
      bool linear = b.size() == 3;
      for (std::size_t i = 0; linear && i < 3; ++i) {
        linear = b[i] >= ns[i] && (i == 0 || b[i] - b[i - 1] >= ns[i] - ns[i - 1]);
      }
      r.require(linear, family + " " + std::string(bench_mode_name(m)) + " reads not linear in n");
    }
    os << family << " reads ownsem " << own[0] << "/" << own[1] << "/" << own[2] << ", shadow "
       << reads[BenchMode::BaselineShadow][0] << "/" << reads[BenchMode::BaselineShadow][1] << "/"
       << reads[BenchMode::BaselineShadow][2] << "; ";
  }
  os << "speedups (reported only):";
  for (const auto& s : rep.speedups()) {
    if (s.n == 8) {
      char buf[96];
      std::snprintf(buf, sizeof buf, " %s/%s %.2fx", s.family.c_str(),
                    std::string(bench_mode_name(s.baseline)).c_str(), s.speedup);
      os << buf;
    }
  }
  os << " vs reference band 1.3-5x";
  for (const auto& f : rep.soft_flags()) os << "; note: " << f;
  if (r.pass) r.detail = os.str();
  return r;
}

Result pointer_roundtrip() {
  Result r;
  unsigned cells_updated_by_die = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Program p = gen_pointer_roundtrip(seed);
    const std::string id = "seed " + std::to_string(seed);
    Machine m(p, Oracle{}, MachineOptions{});
    const Outcome out = m.run();
    r.require(out.status == Status::Halted, id + " ended " + std::string(status_name(out.status)) + " " + out.rule);
    if (out.status != Status::Halted) continue;
    const auto& body = p.blocks.front().body;
    // Expected (addr, tag) held by each container, walked in program order.
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> expect;
    for (std::size_t i = 0; i < body.size(); ++i) {
      const Instr& in = body[i];
      if (in.op == Op::MovReg2Mem) {
        const Value* a = m.reg(as_reg(in.args[0]).name);
        if (a) expect[as_reg(in.args[1]).name] = {a->ptr.addr, a->ptr.tag};
      }
      if (in.op == Op::MutMkborMem2Reg) {
        // The cell now holds the successor, issued just before the borrow tag.
        const std::string container = as_reg(in.args[0]).name;
        const Value* q = m.reg(in.defs[0].name);
        auto e = expect.find(container);
        r.require(q && e != expect.end() && q->ptr.addr == e->second.first, id + " borrow from " + container + " has wrong address");
        if (q && e != expect.end()) e->second.second = q->ptr.tag - 1;
      }
      if (in.op == Op::Load && in.defs[0].kind == RegKind::Pointer) {
        const std::string container = as_reg(in.args[0]).name;
        const Value* b = m.reg(in.defs[0].name);
        auto e = expect.find(container);
        r.require(b && e != expect.end() && b->ptr.addr == e->second.first && b->ptr.tag == e->second.second,
                  id + " reload of " + container + " differs");
      }
      if (in.op == Op::Die && i > 0 && body[i - 1].op == Op::Store) {
        // The borrow came from memory; its stored cell must carry the written value.
        const std::string q = as_reg(in.args[0]).name;
        for (const Instr& src : body) {
          if (src.op != Op::MutMkborMem2Reg || src.defs[0].name != q) continue;
          const Value* c = m.reg(as_reg(src.args[0]).name);
          auto cell = c ? m.state().mem.find(c->ptr.addr) : m.state().mem.end();
          const bool stored = cell != m.state().mem.end() && std::holds_alternative<StoredPtr>(cell->second);
          r.require(stored, id + " container cell lost its pointer");
          if (stored && std::get<StoredPtr>(cell->second).val) ++cells_updated_by_die;
        }
      }
    }
    const DiffReport d = lockstep_diff(p, Oracle{});
    r.require(d.ok(), id + " lockstep: " + d.to_string());
  }
  r.require(cells_updated_by_die > 0, "no die through memory updated a stored cell");
  if (r.pass) {
    r.detail = "100 m3 programs halt on m0 with every reload exact; " +
               std::to_string(cells_updated_by_die) + " die-through-memory cell updates; m0/m1 lockstep ok";
  }
  return r;
}

Result negative_controls() {
  Result r;
  std::ostringstream os;
  const LockstepCorpusResult c = lockstep_corpus(m1_corpus(true));
  r.require(c.total.cache_violations > 0 || c.total.divergences > 0, "faulty build passes criterion 3");
  if (!c.failures.empty()) {
    const CorpusOptions o = m1_corpus(true);
    const Program p = gen_program(corpus_config(o, c.failures.front().seed));
    const Program small = shrink_lockstep_failure(p, true);
    r.require(instr_count(small) <= 15, "criterion 3 reproducer has " + std::to_string(instr_count(small)));
    r.require(!lockstep_oracles(small, true, 16).ok(), "criterion 3 reproducer does not fail");
    os << "criterion 3 under fault: " << c.total.cache_violations << " violations in "
       << c.failures.size() << " programs, reproducer " << instr_count(small) << " instrs; ";
  }
  ThreeWayOptions tw;
  tw.solver = solver();
  tw.fault_skip_store_cache_sync = true;
  const CorpusOptions o5 = three_way_options(true, 100);
  const ThreeWayCorpusResult t = three_way_corpus(o5, tw);
  r.require(!t.failures.empty(), "faulty build passes criterion 5");
  if (!t.failures.empty()) {
    const Program p = gen_program(corpus_config(o5, t.failures.front().seed));
    const Program small = shrink_three_way_failure(p, tw);
    r.require(instr_count(small) <= 15, "criterion 5 reproducer has " + std::to_string(instr_count(small)));
    os << "criterion 5 under fault: " << t.failures.size() << "/" << t.programs
       << " disagree, reproducer " << instr_count(small) << " instrs";
  }
  if (r.pass) r.detail = os.str();
  return r;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* name, double limit_s, const std::function<Result()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Result r;
    try {
      r = f();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && s > limit_s) r.require(false, "took longer than the time budget");
    if (!r.pass) ++failures;
    std::printf("%s %d %s (%.2f s): %s\n", r.pass ? "PASS" : "FAIL", n, name, s, r.detail.c_str());
    std::fflush(stdout);
  };

  LockstepCorpusResult corpus;
  report(1, "golden trace", 1, golden_trace);
  report(2, "running example", 5, running_example);
  report(3, "cache equivalence", 120, [&] {
    corpus = lockstep_corpus(m1_corpus(false));
    return cache_equivalence(corpus);
  });
  report(4, "lockstep simulation", 120, [&] { return lockstep(corpus); });
  report(5, "three-way oracle", 600, three_way);
  report(6, "benchmark structure", 0, bench_structure);
  report(7, "pointer round-trip", 60, pointer_roundtrip);
  report(8, "negative controls", 0, negative_controls);
  return failures;
}
