#include <gtest/gtest.h>
#include <omp.h>

#include "ownir/bench.hpp"
#include "ownir/check.hpp"
#include "ownir/generator.hpp"
#include "ownir/harness.hpp"
#include "ownir/smt.hpp"
#include "ownir/text.hpp"
#include "ownir/vcgen.hpp"
#include "test_util.hpp"

using namespace ownir;

namespace {

// Forces real worker threads even on a one-core box, restoring the old count.
struct Threads {
  explicit Threads(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
  int saved;
};

bool contains_op(const Program& p, Op op) {
  for (const auto& b : p.blocks) {
    for (const auto& in : b.body) {
      if (in.op == op) return true;
    }
  }
  return false;
}

std::size_t instr_count(const Program& p) {
  std::size_t n = 0;
  for (const auto& b : p.blocks) n += b.body.size();
  return n;
}

}  // namespace

// --- generator ------------------------------------------------------------------

TEST(Generator, Deterministic) {
  for (std::uint64_t seed : {0u, 1u, 77u}) {
    GenConfig c;
    c.seed = seed;
    EXPECT_EQ(print(gen_program(c)), print(gen_program(c)));
  }
  GenConfig a, b;
  b.seed = 1;
  EXPECT_NE(print(gen_program(a)), print(gen_program(b)));
}

TEST(Generator, ThousandSeedsAreWellFormed) {
  for (Level lv : {Level::M1, Level::M2}) {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      GenConfig c;
      c.seed = seed;
      c.level = lv;
      const Program p = gen_program(c);
      const ValidationReport v = validate(p);
      ASSERT_TRUE(v.ok()) << seed << "\n" << v.to_string() << print(p);
      ASSERT_FALSE(has_cycle(p));
      ASSERT_TRUE(contains_op(p, Op::Assert)) << seed;
      ASSERT_EQ(parse(print(p)), p) << seed;
      unsigned bits = 0;
      for (const auto& site : nondet_sites(p)) bits += site.bits;
      ASSERT_LE(bits, c.nondet_bits) << seed;
    }
  }
}

TEST(Generator, ZeroCopyWeightMeansNoCopiesAndArrayFreeOwnsem) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    GenConfig c;
    c.seed = seed;
    c.mix.copy = 0;
    const Program p = gen_program(c);
    ASSERT_FALSE(contains_op(p, Op::CpyMkcpy1) || contains_op(p, Op::Malloc)) << seed;
    const auto ops = smt::count_array_ops(encode_ownsem(p).script);
    EXPECT_EQ(ops.reads, 0u) << seed << "\n" << print(p);
  }
}

TEST(Generator, NoUbOrImplicitEnds) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    GenConfig c;
    c.seed = seed;
    c.level = seed % 2 ? Level::M2 : Level::M1;
    const Program p = gen_program(c);
    const ConcreteVerdict v = exhaustive_concrete(p, 20, false);
    EXPECT_NE(v.validity, Validity::Error) << seed << " " << v.error << "\n" << print(p);
  }
}

TEST(Generator, PointerRoundTripPrograms) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Program p = gen_pointer_roundtrip(seed);
    ASSERT_TRUE(validate(p).ok()) << validate(p).to_string();
    EXPECT_EQ(p.level, Level::M3);
    EXPECT_TRUE(contains_op(p, Op::MovReg2Mem));
    EXPECT_TRUE(contains_op(p, Op::MutMkborMem2Reg));
    const Outcome out = run_m0(p, Oracle{});
    EXPECT_EQ(out.status, Status::Halted) << seed << " " << out.rule << " " << out.message;
    EXPECT_TRUE(lockstep_diff(p, Oracle{}).ok());
  }
}

// --- enumeration ----------------------------------------------------------------

TEST(Harness, AssignmentPacking) {
  const std::vector<NondetSite> sites = {{Reg{RegKind::Scalar, "a"}, 3},
                                         {Reg{RegKind::Scalar, "b"}, 1},
                                         {Reg{RegKind::Scalar, "c"}, 4}};
  std::set<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> seen;
  for (std::uint64_t k = 0; k < 256; ++k) {
    const Assignment a = assignment_at(sites, k);
    EXPECT_EQ(a.at("a"), k & 7);
    EXPECT_EQ(a.at("b"), (k >> 3) & 1);
    EXPECT_EQ(a.at("c"), k >> 4);
    seen.insert({a.at("a"), a.at("b"), a.at("c")});
  }
  EXPECT_EQ(seen.size(), 256u);
}

TEST(Harness, ConcreteVerdicts) {
  const Program bad = parse("fun f() width 8 {\nb:\n  r1 = nd_char()\n  r2 = r1 == 0\n  assert r2\n  halt\n}\n");
  const ConcreteVerdict v = exhaustive_concrete(bad);
  EXPECT_EQ(v.validity, Validity::Invalid);
  EXPECT_EQ(v.oracles, 256u);
  ASSERT_TRUE(v.counterexample);
  EXPECT_EQ(v.counterexample->at("r1"), 1u);  // lowest failing oracle

  EXPECT_EQ(exhaustive_concrete(load_fixture("guarded.oseair")).validity, Validity::Valid);
  EXPECT_EQ(exhaustive_concrete(load_fixture("guarded_weak.oseair")).validity, Validity::Invalid);
  EXPECT_EQ(exhaustive_concrete(load_fixture("ub.oseair")).validity, Validity::Error);
}

TEST(Harness, EnumerationLimit) {
  const Program p = parse(
      "fun f() width 8 {\nb:\n  r1 = nd_char()\n  r2 = nd_char()\n  r3 = nd_char()\n  halt\n}\n");
  EXPECT_THROW(exhaustive_concrete(p, 20), EnumerationTooLarge);
  EXPECT_NO_THROW(exhaustive_concrete(p, 24));
}

TEST(Harness, ThreeWayGuarded) {
  ThreeWayOptions o;
  o.solver = test_solver();
  const Verdict v = three_way_check(load_fixture("guarded.oseair"), o);
  EXPECT_TRUE(v.agree()) << v.to_string();
  EXPECT_EQ(v.concrete.validity, Validity::Valid);
  EXPECT_EQ(v.concrete.oracles, 1u << 17);
}

TEST(Harness, ThreeWayFalsifiable) {
  ThreeWayOptions o;
  o.solver = test_solver();
  const Verdict v = three_way_check(
      parse("fun f() width 8 {\nb:\n  r1 = nd_char()\n  r2 = r1 == 0\n  assert r2\n  halt\n}\n"), o);
  EXPECT_TRUE(v.agree()) << v.to_string();
  EXPECT_EQ(v.ownsem.validity, Validity::Invalid);
  EXPECT_TRUE(v.ownsem.replay_ok);
}

// --- serial reference versus OpenMP -------------------------------------------------

TEST(Parallel, ExhaustiveMatchesSerial) {
  Threads t(4);
  for (const char* f : {"guarded.oseair", "guarded_weak.oseair", "ub.oseair"}) {
    const Program p = load_fixture(f);
    const ConcreteVerdict a = exhaustive_concrete(p, 20, false);
    const ConcreteVerdict b = exhaustive_concrete(p, 20, true);
    EXPECT_EQ(a.validity, b.validity) << f;
    EXPECT_EQ(a.counterexample, b.counterexample) << f;
    EXPECT_EQ(a.error, b.error) << f;
  }
}

TEST(Parallel, LockstepCorpusMatchesSerial) {
  Threads t(4);
  for (bool fault : {false, true}) {
    CorpusOptions o;
    o.count = 150;
    o.levels = {Level::M1, Level::M2};
    o.fault_skip_store_cache_sync = fault;
    o.parallel = false;
    const LockstepCorpusResult a = lockstep_corpus(o);
    o.parallel = true;
    const LockstepCorpusResult b = lockstep_corpus(o);
    EXPECT_EQ(a.total.runs, b.total.runs);
    EXPECT_EQ(a.total.steps, b.total.steps);
    EXPECT_EQ(a.total.cache_checks, b.total.cache_checks);
    EXPECT_EQ(a.total.cache_violations, b.total.cache_violations);
    EXPECT_EQ(a.total.divergences, b.total.divergences);
    ASSERT_EQ(a.failures.size(), b.failures.size());
    for (std::size_t i = 0; i < a.failures.size(); ++i) {
      EXPECT_EQ(a.failures[i].seed, b.failures[i].seed);
      EXPECT_EQ(a.failures[i].detail, b.failures[i].detail);
    }
    if (fault) EXPECT_FALSE(a.failures.empty());
  }
}

TEST(Parallel, ThreeWayCorpusMatchesSerial) {
  Threads t(4);
  CorpusOptions o;
  o.count = 24;
  o.levels = {Level::M1, Level::M2};
  ThreeWayOptions tw;
  tw.solver = test_solver();
  o.parallel = false;
  const ThreeWayCorpusResult a = three_way_corpus(o, tw);
  o.parallel = true;
  const ThreeWayCorpusResult b = three_way_corpus(o, tw);
  EXPECT_EQ(a.agreements, b.agreements);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_EQ(a.invalid, b.invalid);
  EXPECT_EQ(a.sat_models_replayed, b.sat_models_replayed);
  EXPECT_EQ(a.failures.size(), b.failures.size());
  EXPECT_EQ(a.agreements, a.programs);
}

// --- shrinking --------------------------------------------------------------------

TEST(Shrink, KeepsOnlyWhatThePredicateNeeds) {
  const Program p = load_fixture("guarded.oseair");
  const Program small = shrink(p, [](const Program& q) { return contains_op(q, Op::GetCache); });
  EXPECT_TRUE(validate(small).ok());
  // mem.init, mk_own, the borrow pair, get_cache
  EXPECT_EQ(instr_count(small), 5u) << print(small);
}

TEST(Shrink, FaultReproducerIsSmall) {
  CorpusOptions o;
  o.count = 60;
  o.fault_skip_store_cache_sync = true;
  const LockstepCorpusResult r = lockstep_corpus(o);
  ASSERT_FALSE(r.failures.empty());
  const Program p = gen_program(corpus_config(o, r.failures.front().seed));
  const Program small = shrink_lockstep_failure(p, true);
  EXPECT_LE(instr_count(small), 15u) << print(small);
  EXPECT_FALSE(lockstep_oracles(small, true, 16).ok());
  EXPECT_TRUE(lockstep_oracles(small, false, 16).ok());
}

// --- benchmarks -------------------------------------------------------------------

TEST(Bench, ProgramsAreValidAndAgreeConcretely) {
  for (unsigned n : {2u, 3u, 4u, 8u}) {
    for (const BenchPrograms& bp : {bench_many_buffers(n), bench_file_typestate(n)}) {
      for (const Program* p : {&bp.cached, &bp.main_memory}) {
        ASSERT_TRUE(validate(*p).ok()) << validate(*p).to_string();
        const ConcreteVerdict v = exhaustive_concrete(*p);
        EXPECT_EQ(v.validity, Validity::Valid) << n << " " << v.error << "\n" << print(*p);
      }
      EXPECT_TRUE(lockstep_oracles(bp.cached, false, 256).ok());
      EXPECT_TRUE(lockstep_oracles(bp.main_memory, false, 256).ok());
    }
  }
  EXPECT_EQ(exhaustive_concrete(bench_file_typestate(1).cached).validity, Validity::Valid);
  EXPECT_THROW(bench_many_buffers(1), std::invalid_argument);
}

TEST(Bench, SkippedCloseFailsForTheChosenFile) {
  const BenchPrograms bp = bench_file_typestate(3, true);
  for (const Program* p : {&bp.cached, &bp.main_memory}) {
    const ConcreteVerdict v = exhaustive_concrete(*p);
    ASSERT_EQ(v.validity, Validity::Invalid);
    const std::string choice = nondet_sites(*p).front().reg.name;
    EXPECT_LT(v.counterexample->at(choice), 3u);
    for (bool ownsem : {true, false}) {
      const SolverVerdict s = solve_program(*p, ownsem, test_solver());
      EXPECT_EQ(s.validity, Validity::Invalid);
      EXPECT_TRUE(s.replay_ok);
      EXPECT_LT(s.model.at(choice), 3u);
    }
  }
}

TEST(Bench, ArrayReadsScaleOnlyForBaselines) {
  for (const std::string family : {"many_buffers", "file_typestate"}) {
    std::vector<std::size_t> own, shadow, main;
    for (unsigned n : {2u, 4u, 8u}) {
      own.push_back(smt::count_array_ops(bench_script({family, n, BenchMode::Ownsem}).script).reads);
      shadow.push_back(
          smt::count_array_ops(bench_script({family, n, BenchMode::BaselineShadow}).script).reads);
      main.push_back(
          smt::count_array_ops(bench_script({family, n, BenchMode::BaselineMain}).script).reads);
    }
    EXPECT_EQ(own[0], own[1]) << family;
    EXPECT_EQ(own[1], own[2]) << family;
    const std::vector<unsigned> ns = {2, 4, 8};
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(shadow[i], ns[i]) << family;
      EXPECT_GE(main[i], ns[i]) << family;
      if (i) {
        EXPECT_GE(shadow[i] - shadow[i - 1], ns[i] - ns[i - 1]) << family;
        EXPECT_GE(main[i] - main[i - 1], ns[i] - ns[i - 1]) << family;
      }
    }
  }
}

TEST(Bench, ReportShapeAndDeterminism) {
  EXPECT_TRUE(run_bench({}, 1, test_solver()).cells.empty());
  const auto specs = bench_matrix({"many_buffers"}, {2, 4, 8}, {BenchMode::Ownsem, BenchMode::BaselineShadow});
  ASSERT_EQ(specs.size(), 6u);
  const BenchReport a = run_bench(specs, 1, test_solver(), 2);
  const BenchReport b = run_bench(specs, 1, test_solver(), 1);
  ASSERT_EQ(a.cells.size(), 6u);
  for (const auto& c : a.cells) EXPECT_EQ(c.verdict, Validity::Valid) << c.error;
  EXPECT_TRUE(a.verdicts_agree());
  EXPECT_EQ(a.to_json(false), b.to_json(false));
  EXPECT_EQ(a.speedups().size(), 3u);
  const std::string j = a.to_json();
  EXPECT_NE(j.find("\"speedup_reference_band\""), std::string::npos);
  EXPECT_NE(j.find("\"solver_stats\""), std::string::npos);
}
