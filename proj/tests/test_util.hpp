#pragma once

#include <string>

#include "ownir/solver.hpp"
#include "ownir/text.hpp"

inline std::string fixture_path(const std::string& name) {
  return std::string(OWNIR_TEST_DATA) + "/" + name;
}

inline ownir::Program load_fixture(const std::string& name) {
  return ownir::parse_file(fixture_path(name));
}

inline ownir::SolverConfig test_solver() {
  ownir::SolverConfig c;
  c.apply_environment();
  return c;
}
