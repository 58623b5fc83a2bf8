#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace ownir::smt {

enum class SortKind : std::uint8_t { Bool, BV, Array };

struct Sort {
  SortKind kind = SortKind::Bool;
  unsigned width = 0;       // BV width, or array element width
  unsigned index_width = 0; // arrays only

  static Sort boolean() { return {SortKind::Bool, 0, 0}; }
  static Sort bv(unsigned w) { return {SortKind::BV, w, 0}; }
  static Sort array(unsigned index, unsigned elem) { return {SortKind::Array, elem, index}; }

  friend bool operator==(const Sort&, const Sort&) = default;
  friend auto operator<=>(const Sort&, const Sort&) = default;
};

std::string sort_text(const Sort& s);

enum class Kind : std::uint8_t {
  BoolLit, BVLit, Symbol,
  Eq, Not, And, Or, Implies, Ite,
  BvAdd, BvSub, BvMul, BvAnd, BvOr, BvXor, BvShl, BvLshr,
  BvUlt, BvUle, BvUgt, BvUge,
  Select, Store,
};

using TermId = std::uint32_t;

struct Node {
  Kind kind = Kind::BoolLit;
  Sort sort;
  std::vector<TermId> kids;
  std::uint64_t value = 0;  // literals
  std::string name;         // symbols
};

class SortError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hash-consed term DAG. Structurally equal terms share one id.
class TermBank {
 public:
  TermId bool_lit(bool b);
  TermId bv_lit(std::uint64_t v, unsigned width);
  TermId symbol(const std::string& name, Sort sort);

  TermId eq(TermId a, TermId b);
  TermId not_(TermId a);
  TermId and_(std::vector<TermId> xs);
  TermId or_(std::vector<TermId> xs);
  TermId implies(TermId a, TermId b);
  TermId ite(TermId c, TermId a, TermId b);
  TermId bv(Kind op, TermId a, TermId b);
  TermId select(TermId array, TermId index);
  TermId store(TermId array, TermId index, TermId value);

  const Node& node(TermId id) const { return nodes_.at(id); }
  const Sort& sort(TermId id) const { return nodes_.at(id).sort; }
  std::size_t size() const { return nodes_.size(); }
  bool is_true(TermId id) const;
  bool is_false(TermId id) const;
  std::optional<std::uint64_t> literal(TermId id) const;

 private:
  TermId intern(Node n);

  std::vector<Node> nodes_;
  std::map<std::tuple<Kind, Sort, std::vector<TermId>, std::uint64_t, std::string>, TermId> index_;
};

/// Declarations, top-level constraints and the goal (a violated property).
struct Script {
  TermBank bank;
  std::vector<TermId> declarations;  // symbol terms, in declaration order
  std::vector<TermId> assertions;
  TermId goal = 0;
  bool has_goal = false;

  TermId declare(const std::string& name, Sort sort);
  void assert_(TermId t);
  bool declared(const std::string& name) const;
  std::optional<TermId> lookup(const std::string& name) const;

 private:
  std::map<std::string, TermId> by_name_;
};

/// Throws SortError naming the first ill-sorted node.
void check_sorts(const Script& script);

bool uses_arrays(const Script& script);
std::string to_smtlib(const Script& script);
std::string term_text(const TermBank& bank, TermId id);

struct ArrayOps {
  std::size_t reads = 0;
  std::size_t writes = 0;
};

/// Distinct select/store nodes reachable from the constraints and goal.
ArrayOps count_array_ops(const Script& script);

}  // namespace ownir::smt
