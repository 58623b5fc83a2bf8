#include <gtest/gtest.h>

#include "ownir/borrow_stack.hpp"
#include "ownir/check.hpp"
#include "ownir/machine.hpp"
#include "ownir/text.hpp"
#include "test_util.hpp"

using namespace ownir;

namespace {

std::vector<std::uint64_t> tags(const BorrowStore& b, std::uint64_t base) {
  std::vector<std::uint64_t> out;
  const BorrowStack* s = b.stack(base);
  if (!s) return out;
  for (std::size_t i = s->size(); i-- > 0;) out.push_back((*s)[i].tag);  // top first
  return out;
}

std::uint64_t mem_word(const State& s, std::uint64_t addr) {
  return std::get<std::uint64_t>(s.mem.at(addr));
}

}  // namespace

// --- borrow stacks ------------------------------------------------------------

TEST(BorrowStack, MutPairReplacesLenderAndPushesBorrow) {
  BorrowStore b;
  b.create(4, 1, PtrKind::O);
  PairEffect e;
  ASSERT_FALSE(b.pair(4, 1, PairKind::Mut, 2, 3, &e));
  EXPECT_TRUE(e.lender_was_top);
  EXPECT_EQ(tags(b, 4), (std::vector<std::uint64_t>{3, 2}));
  EXPECT_EQ(b.entry(4, 3)->kind, PtrKind::MB);
  EXPECT_EQ(b.entry(4, 2)->kind, PtrKind::O);
  EXPECT_FALSE(b.entry(4, 1));
  EXPECT_EQ(format_stack(*b.stack(4)), "3::2::[]");
}

TEST(BorrowStack, DieReturnsSuccessor) {
  BorrowStore b;
  b.create(4, 1, PtrKind::O);
  ASSERT_FALSE(b.pair(4, 1, PairKind::Mut, 2, 3, nullptr));
  std::optional<std::uint64_t> succ;
  ASSERT_FALSE(b.die(4, 3, &succ));
  EXPECT_EQ(succ, 2u);
  EXPECT_EQ(tags(b, 4), (std::vector<std::uint64_t>{2}));
}

TEST(BorrowStack, LenderWritePopsBorrowImplicitly) {
  BorrowStore b;
  b.create(4, 1, PtrKind::O);
  ASSERT_FALSE(b.pair(4, 1, PairKind::Mut, 2, 3, nullptr));
  ASSERT_FALSE(b.store_access(4, 2));
  EXPECT_EQ(tags(b, 4), (std::vector<std::uint64_t>{2}));
  EXPECT_EQ(b.implicit_borrow_ends(), 1u);
  EXPECT_EQ(b.store_access(4, 3), "tag-not-in-stack");
}

TEST(BorrowStack, ReadOnlyBorrowRejectsWrites) {
  BorrowStore b;
  b.create(4, 1, PtrKind::O);
  ASSERT_FALSE(b.pair(4, 1, PairKind::Ro, 2, 3, nullptr));
  EXPECT_EQ(b.store_access(4, 3), "write-through-ro");
  EXPECT_FALSE(b.load_access(4, 3));
}

TEST(BorrowStack, CopiesSurviveReadsBelow) {
  BorrowStore b;
  b.create(4, 1, PtrKind::O);
  ASSERT_FALSE(b.pair(4, 1, PairKind::Cpy, 2, 3, nullptr));
  ASSERT_FALSE(b.load_access(4, 2));
  EXPECT_TRUE(b.entry(4, 3));
  ASSERT_FALSE(b.store_access(4, 2));
  EXPECT_FALSE(b.entry(4, 3));
}

TEST(BorrowStack, DieErrors) {
  BorrowStore b;
  b.create(4, 1, PtrKind::O);
  EXPECT_EQ(b.die(4, 1, nullptr), "die-on-owned");
  EXPECT_EQ(b.die(8, 1, nullptr), "invalid-pointer");
  ASSERT_FALSE(b.pair(4, 1, PairKind::Mut, 2, 3, nullptr));
  EXPECT_EQ(b.die(4, 2, nullptr), "die-not-top");
  ASSERT_FALSE(b.pair(4, 3, PairKind::Cpy, 4, 5, nullptr));
  EXPECT_EQ(b.die(4, 5, nullptr), "die-on-copied");
}

TEST(BorrowStack, MutBorrowNeedsWritableLender) {
  BorrowStore b;
  b.create(4, 1, PtrKind::O);
  ASSERT_FALSE(b.pair(4, 1, PairKind::Ro, 2, 3, nullptr));
  EXPECT_EQ(b.pair(4, 3, PairKind::Mut, 4, 5, nullptr), "borrow-wrong-kind");
}

// --- machines ---------------------------------------------------------------

class Borrows : public ::testing::TestWithParam<MachineKind> {};

TEST_P(Borrows, GoldenStates) {
  const Program p = load_fixture("borrows.oseair");
  MachineOptions o;
  o.kind = GetParam();
  Machine m(p, Oracle{}, o);
  m.step();  // mem.init
  m.step();  // mk_own 42
  ASSERT_EQ(m.state().status, Status::Running);
  EXPECT_EQ(m.reg("p0")->ptr.addr, 0x4u);
  EXPECT_EQ(m.reg("p0")->ptr.tag, 1u);
  EXPECT_EQ(mem_word(m.state(), 0x4), 42u);
  EXPECT_EQ(tags(m.state().borrows, 0x4), (std::vector<std::uint64_t>{1}));
  m.step();  // mut_mkbor
  m.step();  // mut_mksuc
  EXPECT_EQ(tags(m.state().borrows, 0x4), (std::vector<std::uint64_t>{3, 2}));
  EXPECT_EQ(m.reg("q0")->ptr.tag, 3u);
  EXPECT_EQ(m.reg("p1")->ptr.tag, 2u);
  m.step();  // load
  m.step();  // add
  m.step();  // store
  EXPECT_EQ(mem_word(m.state(), 0x4), 43u);
  m.step();  // die
  EXPECT_EQ(tags(m.state().borrows, 0x4), (std::vector<std::uint64_t>{2}));
  const Outcome out = m.run();
  EXPECT_EQ(out.status, Status::Halted);
  EXPECT_EQ(m.scalar("r"), 43u);
}

INSTANTIATE_TEST_SUITE_P(BothMachines, Borrows, ::testing::Values(MachineKind::M0, MachineKind::M1));

TEST(Machine, M1ServesLoadsFromCache) {
  const Program p = load_fixture("borrows.oseair");
  const Outcome m0 = run_m0(p, Oracle{});
  const Outcome m1 = run_m1(p, Oracle{});
  EXPECT_EQ(m0.final_state.cache_reads, 0u);
  EXPECT_EQ(m0.final_state.memory_reads, 2u);
  EXPECT_EQ(m1.final_state.cache_reads, 2u);
  EXPECT_EQ(m1.final_state.memory_reads, 0u);
}

TEST(Machine, UbProgramNamesRule) {
  const Outcome out = run_m0(load_fixture("ub.oseair"), Oracle{});
  EXPECT_EQ(out.status, Status::UB);
  EXPECT_EQ(out.rule, "tag-not-in-stack");
}

TEST(Machine, GuardedOutcomes) {
  const Program p = load_fixture("guarded.oseair");
  EXPECT_EQ(run_m0(p, Oracle::sequence({42, 1, 50})).status, Status::Halted);
  EXPECT_EQ(run_m0(p, Oracle::sequence({41, 1, 50})).status, Status::AssumeInfeasible);
  EXPECT_EQ(run_m0(p, Oracle::sequence({42, 0})).status, Status::Halted);
  // The weakened assertion admits 44.
  EXPECT_EQ(run_m0(load_fixture("guarded_weak.oseair"), Oracle::sequence({42, 1, 44})).status,
            Status::AssertFailed);
}

TEST(Machine, LoopHitsStepLimit) {
  const Outcome out = run_m0(load_fixture("looped.oseair"), Oracle{}, 500);
  EXPECT_EQ(out.status, Status::StepLimit);
}

TEST(Machine, KeyedOracleMatchesSequence) {
  const Program p = load_fixture("guarded.oseair");
  const Outcome a = run_m0(p, Oracle::sequence({42, 1, 50}));
  const Outcome b = run_m0(p, Oracle::keyed({{"r5", 42}, {"r15", 1}, {"r18", 50}}));
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_EQ(observable_difference(a.final_state, b.final_state), "");
}

TEST(Machine, ProgrammerManagedCacheAtM2) {
  const Program p = parse(
      "fun f() width 8 level m2 {\nb:\n  m0 = mem.init()\n  p0, m1 = mk_own 1, m0\n"
      "  p1 = set_cache p0, 9\n  m2 = store 3, p1, m1\n  r1 = get_cache p1\n  r2 = load p1, m2\n"
      "  halt\n}\n");
  Machine m(p, Oracle{}, MachineOptions{});
  EXPECT_EQ(m.run().status, Status::Halted);
  EXPECT_EQ(m.scalar("r1"), 9u);  // store leaves the cache alone
  EXPECT_EQ(m.scalar("r2"), 3u);
}

TEST(Machine, GetCacheBeforeSetIsUb) {
  const Program p = parse(
      "fun f() width 8 level m2 {\nb:\n  m0 = mem.init()\n  p0, m1 = mk_own 1, m0\n"
      "  r1 = get_cache p0\n  halt\n}\n");
  const Outcome out = run_m0(p, Oracle{});
  EXPECT_EQ(out.status, Status::UB);
}

TEST(Machine, OutOfBoundsOffset) {
  const Program p = parse(
      "fun f() width 8 level m2 {\nb:\n  m0 = mem.init()\n  p0, m1 = mk_own 2, m0\n"
      "  q0 = mut_mkbor_off p0, 5\n  p1 = mut_mksuc p0\n  r1 = load q0, m1\n  halt\n}\n");
  const Outcome out = run_m0(p, Oracle{});
  EXPECT_EQ(out.status, Status::UB);
}

// Binary operators against an independent computation, width 8, all pairs
// from a grid that covers wrap-around and shift overflow.
TEST(Machine, BinaryOperatorsAtWidth8) {
  const std::vector<std::pair<std::string, std::function<std::uint64_t(std::uint64_t, std::uint64_t)>>>
      ops = {
          {"+", [](auto a, auto b) { return (a + b) & 0xff; }},
          {"-", [](auto a, auto b) { return (a - b) & 0xff; }},
          {"*", [](auto a, auto b) { return (a * b) & 0xff; }},
          {"&", [](auto a, auto b) { return a & b; }},
          {"|", [](auto a, auto b) { return a | b; }},
          {"^", [](auto a, auto b) { return a ^ b; }},
          {"<<", [](auto a, auto b) { return b >= 8 ? 0 : (a << b) & 0xff; }},
          {">>", [](auto a, auto b) { return b >= 8 ? 0 : a >> b; }},
          {"==", [](auto a, auto b) { return std::uint64_t{a == b}; }},
          {"!=", [](auto a, auto b) { return std::uint64_t{a != b}; }},
          {"<", [](auto a, auto b) { return std::uint64_t{a < b}; }},
          {"<=", [](auto a, auto b) { return std::uint64_t{a <= b}; }},
          {">", [](auto a, auto b) { return std::uint64_t{a > b}; }},
          {">=", [](auto a, auto b) { return std::uint64_t{a >= b}; }},
          {"&&", [](auto a, auto b) { return std::uint64_t{a != 0 && b != 0}; }},
          {"||", [](auto a, auto b) { return std::uint64_t{a != 0 || b != 0}; }},
      };
  const std::vector<std::uint64_t> grid = {0, 1, 2, 7, 8, 9, 100, 127, 128, 200, 254, 255};
  for (const auto& [sym, ref] : ops) {
    const Program p = parse("fun f() width 8 {\nb:\n  r1 = nd_char()\n  r2 = nd_char()\n  r3 = r1 " +
                            sym + " r2\n  halt\n}\n");
    for (auto a : grid) {
      for (auto b : grid) {
        Machine m(p, Oracle::sequence({a, b}), MachineOptions{});
        ASSERT_EQ(m.run().status, Status::Halted);
        EXPECT_EQ(m.scalar("r3"), ref(a, b)) << a << " " << sym << " " << b;
      }
    }
  }
}

// --- checks -----------------------------------------------------------------

TEST(Check, CacheEquivalenceHoldsThroughBorrows) {
  const Program p = load_fixture("borrows.oseair");
  MachineOptions o;
  o.kind = MachineKind::M1;
  Machine m(p, Oracle{}, o);
  while (m.state().status == Status::Running) {
    m.step();
    const CacheVerdict v = check_cache_equivalence(m);
    EXPECT_TRUE(v.holds()) << v.to_string();
  }
}

TEST(Check, LockstepBorrows) {
  const DiffReport d = lockstep_diff(load_fixture("borrows.oseair"), Oracle{});
  EXPECT_TRUE(d.ok()) << d.to_string();
  EXPECT_GT(d.cache_checks, 0u);
  EXPECT_EQ(d.m0_status, Status::Halted);
  EXPECT_EQ(d.m1_status, Status::Halted);
}

TEST(Check, LockstepGuardedAllOracleGrid) {
  const Program p = load_fixture("guarded.oseair");
  for (std::uint64_t a : {0, 42, 255}) {
    for (std::uint64_t b : {0, 1}) {
      for (std::uint64_t c : {0, 43, 44, 255}) {
        const DiffReport d = lockstep_diff(p, Oracle::sequence({a, b, c}));
        EXPECT_TRUE(d.ok()) << d.to_string();
      }
    }
  }
}

TEST(Check, SkippedStoreSyncIsDetected) {
  // Without the sync the owner's cache keeps 1 while memory holds 5.
  const Program p = parse(
      "fun f() width 8 {\nb:\n  m0 = mem.init()\n  p0, m1 = mk_own 1, m0\n  m2 = store 5, p0, m1\n"
      "  r1 = load p0, m2\n  halt\n}\n");
  LockstepOptions o;
  o.skip_store_cache_sync = true;
  const DiffReport bad = lockstep_diff(p, Oracle{}, o);
  EXPECT_FALSE(bad.ok());
  EXPECT_FALSE(bad.cache_violations.empty());
  EXPECT_TRUE(lockstep_diff(p, Oracle{}).ok());
}
