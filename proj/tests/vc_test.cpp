#include <gtest/gtest.h>

#include "ownir/harness.hpp"
#include "ownir/machine.hpp"
#include "ownir/smt.hpp"
#include "ownir/solver.hpp"
#include "ownir/text.hpp"
#include "ownir/vcgen.hpp"
#include "test_util.hpp"

using namespace ownir;
namespace s = ownir::smt;

// --- term bank ----------------------------------------------------------------

TEST(Smt, HashConsing) {
  s::TermBank b;
  const auto x = b.symbol("x", s::Sort::bv(8));
  const auto one = b.bv_lit(1, 8);
  EXPECT_EQ(b.bv(s::Kind::BvAdd, x, one), b.bv(s::Kind::BvAdd, x, one));
  EXPECT_NE(b.bv(s::Kind::BvAdd, x, one), b.bv(s::Kind::BvAdd, one, x));
  EXPECT_EQ(b.literal(one), 1u);
  EXPECT_TRUE(b.is_true(b.bool_lit(true)));
}

TEST(Smt, SortErrors) {
  auto ill = [](auto build) {
    s::Script sc;
    const auto x = sc.declare("x", s::Sort::bv(8));
    const auto y = sc.declare("y", s::Sort::bv(16));
    sc.assert_(build(sc.bank, x, y));
    return sc;
  };
  EXPECT_THROW(s::check_sorts(ill([](s::TermBank& b, auto x, auto y) { return b.eq(x, y); })),
               s::SortError);
  EXPECT_THROW(s::check_sorts(ill([](s::TermBank& b, auto x, auto) {
                 return b.eq(b.bv(s::Kind::BvAdd, x, b.bool_lit(true)), x);
               })),
               s::SortError);
  EXPECT_THROW(s::check_sorts(ill([](s::TermBank& b, auto x, auto) {
                 return b.eq(b.ite(x, x, b.bv_lit(0, 8)), x);
               })),
               s::SortError);
  EXPECT_NO_THROW(s::check_sorts(ill([](s::TermBank& b, auto x, auto) { return b.eq(x, x); })));
}

TEST(Smt, CountsArrayOps) {
  s::Script sc;
  auto& b = sc.bank;
  const auto mem = sc.declare("mem", s::Sort::array(8, 8));
  const auto a = sc.declare("a", s::Sort::bv(8));
  const auto m1 = b.store(mem, a, b.bv_lit(3, 8));
  const auto r = b.select(m1, a);
  sc.assert_(b.eq(r, b.bv_lit(3, 8)));
  sc.goal = b.not_(b.eq(b.select(m1, a), b.bv_lit(3, 8)));
  sc.has_goal = true;
  const auto ops = s::count_array_ops(sc);
  EXPECT_EQ(ops.reads, 1u);  // shared by hash-consing
  EXPECT_EQ(ops.writes, 1u);
  EXPECT_TRUE(s::uses_arrays(sc));
  EXPECT_NO_THROW(s::check_sorts(sc));
}

TEST(Smt, SmtlibText) {
  s::Script sc;
  auto& b = sc.bank;
  const auto x = sc.declare("x", s::Sort::bv(8));
  sc.assert_(b.bv(s::Kind::BvUle, x, b.bv_lit(5, 8)));
  sc.goal = b.eq(x, b.bv_lit(7, 8));
  sc.has_goal = true;
  const std::string t = s::to_smtlib(sc);
  EXPECT_NE(t.find("(declare-const x (_ BitVec 8))"), std::string::npos);
  EXPECT_NE(t.find("(check-sat)"), std::string::npos);
  EXPECT_NE(t.find("#x05"), std::string::npos);
  EXPECT_EQ(t, s::to_smtlib(sc));
}

// --- solver output parsing ------------------------------------------------------

TEST(SolverParse, SatWithModel) {
  const SatResult r = parse_solver_output(
      "sat\n(\n  (define-fun r1 () (_ BitVec 8)\n    #x2a)\n  (define-fun b () Bool true)\n"
      "  (define-fun w () (_ BitVec 3) #b101)\n  (define-fun z () (_ BitVec 16) (_ bv300 16))\n)\n");
  EXPECT_EQ(r.status, SatStatus::Sat);
  EXPECT_EQ(r.model.at("r1"), 42u);
  EXPECT_EQ(r.model.at("b"), 1u);
  EXPECT_EQ(r.model.at("w"), 5u);
  EXPECT_EQ(r.model.at("z"), 300u);
}

TEST(SolverParse, UnsatWithStatistics) {
  const SatResult r = parse_solver_output("unsat\n(:conflicts 12\n :time 0.01\n :memory 3.2)\n");
  EXPECT_EQ(r.status, SatStatus::Unsat);
  EXPECT_EQ(r.stats.at("conflicts"), "12");
  EXPECT_EQ(r.stats.at("time"), "0.01");
}

TEST(SolverParse, UnknownWithReason) {
  const SatResult r = parse_solver_output("unknown\n(:reason-unknown \"canceled\")\n");
  EXPECT_EQ(r.status, SatStatus::Unknown);
  EXPECT_EQ(r.reason, "canceled");
}

TEST(SolverParse, ErrorsBeforeStatusAreCrashes) {
  EXPECT_THROW(parse_solver_output("(error \"line 3: unknown constant foo\")\n"), SolverCrash);
  EXPECT_THROW(parse_solver_output(""), SolverCrash);
  // get-model after unsat produces an error that is not the verdict.
  EXPECT_EQ(parse_solver_output("unsat\n(error \"model is not available\")\n").status,
            SatStatus::Unsat);
}

TEST(SolverConfig, KeysAndEnvironment) {
  SolverConfig c;
  c.set("solver.cmd", "cvc5");
  c.set("solver.args", "--lang smt2 --produce-models");
  c.set("solver.timeout_secs", "7.5");
  EXPECT_EQ(c.cmd, "cvc5");
  EXPECT_EQ(c.args, (std::vector<std::string>{"--lang", "smt2", "--produce-models"}));
  EXPECT_DOUBLE_EQ(c.timeout_secs, 7.5);
  EXPECT_THROW(c.set("solver.colour", "red"), std::exception);
  ::setenv("OWNIR_SOLVER", "/opt/z3", 1);
  c.apply_environment();
  ::unsetenv("OWNIR_SOLVER");
  EXPECT_EQ(c.cmd, "/opt/z3");
}

TEST(Solver, RunsZ3) {
  const SolverConfig c = test_solver();
  ASSERT_TRUE(locate_solver(c)) << "solver " << c.cmd << " not found";
  const SatResult sat = solve(
      "(set-option :produce-models true)\n(declare-fun x () (_ BitVec 8))\n"
      "(assert (= (bvadd x #x01) #x00))\n(check-sat)\n(get-model)\n",
      c);
  EXPECT_EQ(sat.status, SatStatus::Sat);
  EXPECT_EQ(sat.model.at("x"), 255u);
  const SatResult unsat = solve("(declare-fun x () Bool)\n(assert (and x (not x)))\n(check-sat)\n", c);
  EXPECT_EQ(unsat.status, SatStatus::Unsat);
}

TEST(Solver, MissingBinaryIsAnError) {
  SolverConfig c;
  c.cmd = "/nonexistent/solver";
  EXPECT_THROW(solve("(check-sat)\n", c), std::exception);
}

// --- encoders -------------------------------------------------------------------

TEST(Vcgen, ArrayFreeOwnsemForCachedAccesses) {
  for (const char* f : {"cached.oseair", "guarded.oseair"}) {
    const VcScript own = encode_ownsem(load_fixture(f));
    const auto ops = s::count_array_ops(own.script);
    EXPECT_EQ(ops.reads, 0u) << f;
    EXPECT_EQ(ops.writes, 0u) << f;
    const VcScript base = encode_baseline(load_fixture(f));
    EXPECT_GT(s::count_array_ops(base.script).reads, 0u) << f;
    EXPECT_GT(s::count_array_ops(base.script).writes, 0u) << f;
    EXPECT_NO_THROW(s::check_sorts(own.script));
    EXPECT_NO_THROW(s::check_sorts(base.script));
  }
}

TEST(Vcgen, DeterministicText) {
  const Program p = load_fixture("guarded.oseair");
  EXPECT_EQ(s::to_smtlib(encode_ownsem(p).script), s::to_smtlib(encode_ownsem(p).script));
  EXPECT_EQ(s::to_smtlib(encode_baseline(p).script), s::to_smtlib(encode_baseline(p).script));
}

TEST(Vcgen, CyclicRejected) {
  EXPECT_THROW(encode_ownsem(load_fixture("looped.oseair")), CyclicCfg);
}

TEST(Vcgen, PointersThroughMemoryUnsupported) {
  const Program p = parse(
      "fun f() width 16 level m3 {\nb:\n  m0 = mem.init()\n  c0, m1 = mk_own 0, m0\n"
      "  p0, m2 = mk_own 5, m1\n  m3 = mov_reg2mem c0, p0, m2\n  halt\n}\n");
  ASSERT_TRUE(validate(p).ok()) << validate(p).to_string();
  EXPECT_THROW(encode_ownsem(p), UnsupportedInstr);
}

struct FixtureVerdict {
  const char* file;
  Validity expected;
};

class FixtureVerdicts : public ::testing::TestWithParam<FixtureVerdict> {};

TEST_P(FixtureVerdicts, BothEncoders) {
  const Program p = load_fixture(GetParam().file);
  for (bool ownsem : {true, false}) {
    const SolverVerdict v = solve_program(p, ownsem, test_solver());
    EXPECT_EQ(v.validity, GetParam().expected) << (ownsem ? "ownsem " : "baseline ") << v.detail;
    EXPECT_TRUE(v.replay_ok) << v.detail;
  }
}

INSTANTIATE_TEST_SUITE_P(Fixtures, FixtureVerdicts,
                         ::testing::Values(FixtureVerdict{"borrows.oseair", Validity::Valid},
                                           FixtureVerdict{"cached.oseair", Validity::Valid},
                                           FixtureVerdict{"guarded.oseair", Validity::Valid},
                                           FixtureVerdict{"guarded_err.oseair", Validity::Valid},
                                           FixtureVerdict{"guarded_weak.oseair", Validity::Invalid}));

TEST(Vcgen, WeakenedGuardedModelReplays) {
  const Program p = load_fixture("guarded_weak.oseair");
  const VcScript vc = encode_ownsem(p);
  const SatResult r = solve(s::to_smtlib(vc.script), test_solver());
  ASSERT_EQ(r.status, SatStatus::Sat);
  EXPECT_EQ(r.model.at("r18"), 44u);
  EXPECT_EQ(run_m0(p, oracle_from_model(vc, r.model)).status, Status::AssertFailed);
}

TEST(Vcgen, FalsifiableNondetAssert) {
  const Program p = parse("fun f() width 8 {\nb:\n  r1 = nd_char()\n  r2 = r1 == 0\n  assert r2\n  halt\n}\n");
  for (bool ownsem : {true, false}) {
    const SolverVerdict v = solve_program(p, ownsem, test_solver());
    EXPECT_EQ(v.validity, Validity::Invalid);
    EXPECT_NE(v.model.at("r1"), 0u);
    EXPECT_TRUE(v.replay_ok);
  }
}

// The solver verdict matches brute-force enumeration for a family of
// arithmetic asserts over one 8-bit nondet.
TEST(Vcgen, AgreesWithEnumerationOnArithmetic) {
  for (unsigned k : {0u, 1u, 3u, 17u, 128u, 255u}) {
    const std::string src = "fun f() width 8 {\nb:\n  r1 = nd_char()\n  r2 = r1 & 240\n  r3 = r2 + " +
                            std::to_string(k) + "\n  r4 = r3 != 1\n  assert r4\n  halt\n}\n";
    const Program p = parse(src);
    bool reachable = false;
    for (std::uint64_t x = 0; x < 256; ++x) reachable |= (((x & 240) + k) & 0xff) == 1;
    const Validity expect = reachable ? Validity::Invalid : Validity::Valid;
    EXPECT_EQ(solve_program(p, true, test_solver()).validity, expect) << k;
    EXPECT_EQ(solve_program(p, false, test_solver()).validity, expect) << k;
  }
}
