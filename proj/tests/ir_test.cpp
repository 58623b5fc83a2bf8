#include <gtest/gtest.h>

#include "ownir/ir.hpp"
#include "ownir/machine.hpp"
#include "ownir/text.hpp"
#include "test_util.hpp"

using namespace ownir;

TEST(Text, ParsesBorrowsShape) {
  const Program p = load_fixture("borrows.oseair");
  ASSERT_EQ(p.blocks.size(), 1u);
  EXPECT_EQ(p.blocks[0].body.size(), 9u);
  EXPECT_EQ(p.blocks[0].term.kind, Terminator::Kind::Halt);
  EXPECT_EQ(p.word_width, 64u);
  EXPECT_EQ(p.level, Level::M1);
  EXPECT_EQ(p.blocks[0].body[1].op, Op::MkOwn);
  EXPECT_EQ(p.blocks[0].body[1].defs.size(), 2u);
}

TEST(Text, PrintParseRoundTripOnFixtures) {
  for (const char* f : {"borrows.oseair", "cached.oseair", "guarded.oseair", "guarded_weak.oseair",
                        "guarded_err.oseair", "ub.oseair", "looped.oseair"}) {
    const Program p = load_fixture(f);
    const std::string once = print(p);
    const Program q = parse(once);
    EXPECT_EQ(p, q) << f;
    EXPECT_EQ(once, print(q)) << f;
  }
}

TEST(Text, ParseErrorCarriesPosition) {
  const char* src = "fun main() {\nBB0:\n  r1 = frobnicate 3\n  halt\n}\n";
  try {
    parse(src);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.span().line, 3u);
  }
}

TEST(Text, RejectsUnterminatedProgram) {
  EXPECT_THROW(parse("fun main() {\nBB0:\n  r1 = 1 + 2\n"), ParseError);
  EXPECT_THROW(parse(""), ParseError);
}

TEST(Text, NondetSpellings) {
  const Program p = parse(
      "fun f() width 16 {\nb:\n  r1 = nd_char()\n  r2 = nd_bool()\n  r3 = nondet 5\n  r4 = "
      "nd_size_t()\n  halt\n}\n");
  const auto sites = nondet_sites(p);
  ASSERT_EQ(sites.size(), 4u);
  EXPECT_EQ(sites[0].bits, 8u);
  EXPECT_EQ(sites[1].bits, 1u);
  EXPECT_EQ(sites[2].bits, 5u);
  EXPECT_EQ(sites[3].bits, 16u);
}

TEST(Validate, FixturesAreWellFormed) {
  for (const char* f : {"borrows.oseair", "cached.oseair", "guarded.oseair", "ub.oseair", "looped.oseair"}) {
    EXPECT_TRUE(validate(load_fixture(f)).ok()) << f << validate(load_fixture(f)).to_string();
  }
}

TEST(Validate, UseBeforeDefinition) {
  const Program p = parse("fun f() {\nb:\n  r2 = r1 + 1\n  r1 = 3\n  halt\n}\n");
  EXPECT_FALSE(validate(p).ok());
}

TEST(Validate, DoubleDefinition) {
  const Program p = parse("fun f() {\nb:\n  r1 = 1\n  r1 = 2\n  halt\n}\n");
  EXPECT_FALSE(validate(p).ok());
}

TEST(Validate, BorrowWithoutSuccessor) {
  const Program p = parse(
      "fun f() {\nb:\n  m0 = mem.init()\n  p0, m1 = mk_own 1, m0\n  q0 = mut_mkbor p0\n  r1 = 1\n"
      "  p1 = mut_mksuc p0\n  halt\n}\n");
  EXPECT_FALSE(validate(p).ok());
}

TEST(Validate, CacheOpsNeedLevelM2) {
  const char* body =
      "b:\n  m0 = mem.init()\n  p0, m1 = mk_own 1, m0\n  p1 = set_cache p0, 3\n  halt\n}\n";
  EXPECT_FALSE(validate(parse(std::string("fun f() width 8 {\n") + body)).ok());
  EXPECT_TRUE(validate(parse(std::string("fun f() width 8 level m2 {\n") + body)).ok());
}

TEST(Validate, KindMismatch) {
  const Program p = parse("fun f() {\nb:\n  m0 = mem.init()\n  r1 = load m0, m0\n  halt\n}\n");
  EXPECT_FALSE(validate(p).ok());
}

TEST(Flatten, CyclicProgramRejected) {
  const Program p = load_fixture("looped.oseair");
  EXPECT_TRUE(has_cycle(p));
  EXPECT_THROW(flatten(p), CyclicCfg);
}

TEST(Flatten, ProducesOneValidBlock) {
  for (const char* f : {"borrows.oseair", "cached.oseair", "guarded.oseair"}) {
    const Program flat = flatten(load_fixture(f));
    EXPECT_EQ(flat.blocks.size(), 1u) << f;
    EXPECT_TRUE(validate(flat).ok()) << f << validate(flat).to_string();
  }
}

// Flattening preserves the outcome of every run: brute force over a grid of
// oracle values for the Fig. 8 program.
TEST(Flatten, PreservesOutcomesOnGuarded) {
  const Program p = load_fixture("guarded.oseair");
  const Program flat = flatten(p);
  unsigned compared = 0;
  for (std::uint64_t a : {0, 1, 41, 42, 43, 44, 200, 255}) {
    for (std::uint64_t b : {0, 1}) {
      for (std::uint64_t c = 0; c < 256; ++c) {
        const std::map<std::string, std::uint64_t> o{{"r5", a}, {"r15", b}, {"r18", c}};
        const Outcome x = run_m0(p, Oracle::keyed(o));
        const Outcome y = run_m0(flat, Oracle::keyed(o));
        ASSERT_EQ(x.status, y.status) << a << " " << b << " " << c;
        ++compared;
      }
    }
  }
  EXPECT_EQ(compared, 8u * 2 * 256);
}

TEST(Ir, WordHelpers) {
  EXPECT_EQ(word_mask(8), 0xffu);
  EXPECT_EQ(word_mask(64), ~std::uint64_t{0});
  EXPECT_EQ(word_bytes(8), 1u);
  EXPECT_EQ(word_bytes(12), 2u);
  EXPECT_EQ(word_bytes(64), 8u);
}

TEST(Ir, BinopSymbols) {
  for (auto op : {BinOp::Add, BinOp::Sub, BinOp::Ult, BinOp::LAnd, BinOp::LOr, BinOp::Ne}) {
    EXPECT_EQ(binop_from_symbol(binop_symbol(op)), op);
  }
  EXPECT_FALSE(binop_from_symbol("<>").has_value());
}
