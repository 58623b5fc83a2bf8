#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ownir/ir.hpp"

namespace ownir {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, SourceSpan span, std::set<std::string> expected);

  const SourceSpan& span() const { return span_; }
  const std::set<std::string>& expected() const { return expected_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  SourceSpan span_;
  std::set<std::string> expected_;
};

/// Parses `.oseair` text. Throws ParseError; never anything else.
Program parse(std::string_view text);

/// Canonical text: two-space indent, one instruction per line.
std::string print(const Program& program);
std::string print_instr(const Instr& instr);

Program parse_file(const std::string& path);

}  // namespace ownir
