#pragma once

#include <cstdint>

#include "ownir/ir.hpp"

namespace ownir {

/// Relative weights of the generator's moves. Zero disables a move.
struct OpMix {
  double arith = 3;
  double nondet = 1;
  double alloc = 1;
  double load = 3;
  double store = 3;
  double mut_borrow = 2;
  double ro_borrow = 1;
  double copy = 1;
  double die = 3;
  double cache = 2;  // M2 set_cache / get_cache
  double branch = 1;
  double assume = 0.5;
  double assert_ = 0.5;
};

struct GenConfig {
  std::uint64_t seed = 0;
  unsigned max_blocks = 7;      // entry plus up to two blocks per diamond
  unsigned max_instrs = 10;     // moves per block before closing it
  unsigned nondet_budget = 3;   // nondet reads
  unsigned nondet_bits = 12;    // total oracle bits across all reads
  Level level = Level::M1;
  unsigned width = 8;
  OpMix mix;
};

/// Random acyclic program following the borrow discipline: no UB and no
/// implicit borrow ends on any oracle. Deterministic in the config.
Program gen_program(const GenConfig& config);

/// M3 program that parks owned pointers in containers, borrows through
/// memory, and reloads them.
Program gen_pointer_roundtrip(std::uint64_t seed, unsigned width = 16);

}  // namespace ownir
