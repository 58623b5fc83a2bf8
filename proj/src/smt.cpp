#include "ownir/smt.hpp"

#include <optional>
#include <set>
#include <sstream>

namespace ownir::smt {

std::string sort_text(const Sort& s) {
  switch (s.kind) {
    case SortKind::Bool:
      return "Bool";
    case SortKind::BV:
      return "(_ BitVec " + std::to_string(s.width) + ")";
    case SortKind::Array:
      return "(Array (_ BitVec " + std::to_string(s.index_width) + ") (_ BitVec " +
             std::to_string(s.width) + "))";
  }
  return "?";
}

namespace {

std::uint64_t mask(unsigned w) { return w >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << w) - 1); }

bool is_compare(Kind k) {
  return k == Kind::BvUlt || k == Kind::BvUle || k == Kind::BvUgt || k == Kind::BvUge;
}

std::string_view op_name(Kind k) {
  switch (k) {
    case Kind::Eq: return "=";
    case Kind::Not: return "not";
    case Kind::And: return "and";
    case Kind::Or: return "or";
    case Kind::Implies: return "=>";
    case Kind::Ite: return "ite";
    case Kind::BvAdd: return "bvadd";
    case Kind::BvSub: return "bvsub";
    case Kind::BvMul: return "bvmul";
    case Kind::BvAnd: return "bvand";
    case Kind::BvOr: return "bvor";
    case Kind::BvXor: return "bvxor";
    case Kind::BvShl: return "bvshl";
    case Kind::BvLshr: return "bvlshr";
    case Kind::BvUlt: return "bvult";
    case Kind::BvUle: return "bvule";
    case Kind::BvUgt: return "bvugt";
    case Kind::BvUge: return "bvuge";
    case Kind::Select: return "select";
    case Kind::Store: return "store";
    default: return "?";
  }
}

}  // namespace

TermId TermBank::intern(Node n) {
  auto key = std::make_tuple(n.kind, n.sort, n.kids, n.value, n.name);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const TermId id = static_cast<TermId>(nodes_.size());
  nodes_.push_back(std::move(n));
  index_.emplace(std::move(key), id);
  return id;
}

TermId TermBank::bool_lit(bool b) {
  Node n;
  n.kind = Kind::BoolLit;
  n.sort = Sort::boolean();
  n.value = b ? 1 : 0;
  return intern(std::move(n));
}

TermId TermBank::bv_lit(std::uint64_t v, unsigned width) {
  Node n;
  n.kind = Kind::BVLit;
  n.sort = Sort::bv(width);
  n.value = v & mask(width);
  return intern(std::move(n));
}

TermId TermBank::symbol(const std::string& name, Sort sort) {
  Node n;
  n.kind = Kind::Symbol;
  n.sort = sort;
  n.name = name;
  return intern(std::move(n));
}

bool TermBank::is_true(TermId id) const {
  const Node& n = node(id);
  return n.kind == Kind::BoolLit && n.value == 1;
}

bool TermBank::is_false(TermId id) const {
  const Node& n = node(id);
  return n.kind == Kind::BoolLit && n.value == 0;
}

std::optional<std::uint64_t> TermBank::literal(TermId id) const {
  const Node& n = node(id);
  if (n.kind == Kind::BVLit || n.kind == Kind::BoolLit) return n.value;
  return std::nullopt;
}

TermId TermBank::eq(TermId a, TermId b) {
  if (a == b) return bool_lit(true);
  auto la = literal(a), lb = literal(b);
  if (la && lb && sort(a) == sort(b)) return bool_lit(*la == *lb);
  if (a > b) std::swap(a, b);
  Node n;
  n.kind = Kind::Eq;
  n.sort = Sort::boolean();
  n.kids = {a, b};
  return intern(std::move(n));
}

TermId TermBank::not_(TermId a) {
  if (is_true(a)) return bool_lit(false);
  if (is_false(a)) return bool_lit(true);
  if (node(a).kind == Kind::Not) return node(a).kids[0];
  Node n;
  n.kind = Kind::Not;
  n.sort = Sort::boolean();
  n.kids = {a};
  return intern(std::move(n));
}

TermId TermBank::and_(std::vector<TermId> xs) {
  std::vector<TermId> kept;
  for (TermId x : xs) {
    if (is_false(x)) return bool_lit(false);
    if (!is_true(x)) kept.push_back(x);
  }
  if (kept.empty()) return bool_lit(true);
  if (kept.size() == 1) return kept[0];
  Node n;
  n.kind = Kind::And;
  n.sort = Sort::boolean();
  n.kids = std::move(kept);
  return intern(std::move(n));
}

TermId TermBank::or_(std::vector<TermId> xs) {
  std::vector<TermId> kept;
  for (TermId x : xs) {
    if (is_true(x)) return bool_lit(true);
    if (!is_false(x)) kept.push_back(x);
  }
  if (kept.empty()) return bool_lit(false);
  if (kept.size() == 1) return kept[0];
  Node n;
  n.kind = Kind::Or;
  n.sort = Sort::boolean();
  n.kids = std::move(kept);
  return intern(std::move(n));
}

TermId TermBank::implies(TermId a, TermId b) {
  if (is_true(a)) return b;
  if (is_false(a) || is_true(b)) return bool_lit(true);
  Node n;
  n.kind = Kind::Implies;
  n.sort = Sort::boolean();
  n.kids = {a, b};
  return intern(std::move(n));
}

TermId TermBank::ite(TermId c, TermId a, TermId b) {
  if (is_true(c)) return a;
  if (is_false(c)) return b;
  if (a == b) return a;
  Node n;
  n.kind = Kind::Ite;
  n.sort = sort(a);
  n.kids = {c, a, b};
  return intern(std::move(n));
}

TermId TermBank::bv(Kind op, TermId a, TermId b) {
  const Sort s = sort(a);
  auto la = literal(a), lb = literal(b);
  if (la && lb && s.kind == SortKind::BV && sort(b) == s) {
    const unsigned w = s.width;
    const std::uint64_t x = *la, y = *lb;
    switch (op) {
      case Kind::BvAdd: return bv_lit(x + y, w);
      case Kind::BvSub: return bv_lit(x - y, w);
      case Kind::BvMul: return bv_lit(x * y, w);
      case Kind::BvAnd: return bv_lit(x & y, w);
      case Kind::BvOr: return bv_lit(x | y, w);
      case Kind::BvXor: return bv_lit(x ^ y, w);
      case Kind::BvShl: return bv_lit(y >= w ? 0 : x << y, w);
      case Kind::BvLshr: return bv_lit(y >= w ? 0 : x >> y, w);
      case Kind::BvUlt: return bool_lit(x < y);
      case Kind::BvUle: return bool_lit(x <= y);
      case Kind::BvUgt: return bool_lit(x > y);
      case Kind::BvUge: return bool_lit(x >= y);
      default: break;
    }
  }
  Node n;
  n.kind = op;
  n.sort = is_compare(op) ? Sort::boolean() : s;
  n.kids = {a, b};
  return intern(std::move(n));
}

TermId TermBank::select(TermId array, TermId index) {
  Node n;
  n.kind = Kind::Select;
  n.sort = Sort::bv(sort(array).width);
  n.kids = {array, index};
  return intern(std::move(n));
}

TermId TermBank::store(TermId array, TermId index, TermId value) {
  Node n;
  n.kind = Kind::Store;
  n.sort = sort(array);
  n.kids = {array, index, value};
  return intern(std::move(n));
}

TermId Script::declare(const std::string& name, Sort sort) {
  if (auto it = by_name_.find(name); it != by_name_.end()) {
    if (bank.sort(it->second) != sort) throw SortError("symbol " + name + " redeclared with another sort");
    return it->second;
  }
  const TermId id = bank.symbol(name, sort);
  by_name_.emplace(name, id);
  declarations.push_back(id);
  return id;
}

void Script::assert_(TermId t) {
  if (!bank.is_true(t)) assertions.push_back(t);
}

bool Script::declared(const std::string& name) const { return by_name_.count(name) != 0; }

std::optional<TermId> Script::lookup(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

namespace {

void walk(const TermBank& bank, TermId root, std::vector<bool>& seen, std::vector<TermId>& order) {
  std::vector<std::pair<TermId, bool>> stack{{root, false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(id);
      continue;
    }
    if (seen[id]) continue;
    seen[id] = true;
    stack.push_back({id, true});
    for (TermId k : bank.node(id).kids) {
      if (!seen[k]) stack.push_back({k, false});
    }
  }
}

std::vector<TermId> reachable(const Script& s) {
  std::vector<bool> seen(s.bank.size(), false);
  std::vector<TermId> order;
  for (TermId a : s.assertions) walk(s.bank, a, seen, order);
  if (s.has_goal) walk(s.bank, s.goal, seen, order);
  return order;
}

std::string describe(const TermBank& bank, TermId id) {
  std::string t = term_text(bank, id);
  if (t.size() > 80) t = t.substr(0, 77) + "...";
  return "node " + std::to_string(id) + " " + t;
}

}  // namespace

void check_sorts(const Script& script) {
  const TermBank& b = script.bank;
  std::set<std::string> declared;
  for (TermId d : script.declarations) declared.insert(b.node(d).name);
  auto fail = [&](TermId id, const std::string& why) {
    throw SortError(describe(b, id) + ": " + why);
  };
  for (TermId id : reachable(script)) {
    const Node& n = b.node(id);
    auto ks = [&](std::size_t i) { return b.sort(n.kids[i]); };
    auto want_bool = [&](std::size_t i) {
      if (ks(i).kind != SortKind::Bool) fail(id, "operand " + std::to_string(i) + " is not Bool");
    };
    switch (n.kind) {
      case Kind::BoolLit:
      case Kind::BVLit:
        if (n.kind == Kind::BVLit && (n.sort.width == 0 || n.sort.width > 64)) fail(id, "bad width");
        break;
      case Kind::Symbol:
        if (!declared.count(n.name)) fail(id, "undeclared symbol");
        break;
      case Kind::Eq:
        if (!(ks(0) == ks(1))) fail(id, "operands of = differ in sort");
        break;
      case Kind::Not:
        want_bool(0);
        break;
      case Kind::And:
      case Kind::Or:
      case Kind::Implies:
        for (std::size_t i = 0; i < n.kids.size(); ++i) want_bool(i);
        break;
      case Kind::Ite:
        want_bool(0);
        if (!(ks(1) == ks(2))) fail(id, "ite branches differ in sort");
        break;
      case Kind::Select:
        if (ks(0).kind != SortKind::Array) fail(id, "select on a non-array");
        if (!(ks(1) == Sort::bv(ks(0).index_width))) fail(id, "select index sort");
        break;
      case Kind::Store:
        if (ks(0).kind != SortKind::Array) fail(id, "store on a non-array");
        if (!(ks(1) == Sort::bv(ks(0).index_width))) fail(id, "store index sort");
        if (!(ks(2) == Sort::bv(ks(0).width))) fail(id, "store value sort");
        break;
      default:
        if (ks(0).kind != SortKind::BV || !(ks(0) == ks(1))) fail(id, "bit-vector operands differ");
        break;
    }
  }
  for (TermId a : script.assertions) {
    if (b.sort(a).kind != SortKind::Bool) throw SortError(describe(b, a) + ": assertion is not Bool");
  }
  if (script.has_goal && b.sort(script.goal).kind != SortKind::Bool) {
    throw SortError(describe(b, script.goal) + ": goal is not Bool");
  }
}

bool uses_arrays(const Script& script) {
  for (TermId d : script.declarations) {
    if (script.bank.sort(d).kind == SortKind::Array) return true;
  }
  for (TermId id : reachable(script)) {
    const Kind k = script.bank.node(id).kind;
    if (k == Kind::Select || k == Kind::Store) return true;
  }
  return false;
}

namespace {

std::string literal_text(std::uint64_t v, unsigned w) {
  std::string s;
  if (w % 4 == 0) {
    static const char* digits = "0123456789abcdef";
    for (unsigned i = w / 4; i-- > 0;) s += digits[(v >> (4 * i)) & 0xf];
    return "#x" + s;
  }
  for (unsigned i = w; i-- > 0;) s += ((v >> i) & 1) ? '1' : '0';
  return "#b" + s;
}

void emit(const TermBank& bank, TermId id, std::string& out) {
  const Node& n = bank.node(id);
  switch (n.kind) {
    case Kind::BoolLit:
      out += n.value ? "true" : "false";
      return;
    case Kind::BVLit:
      out += literal_text(n.value, n.sort.width);
      return;
    case Kind::Symbol:
      out += n.name;
      return;
    default:
      break;
  }
  out += "(";
  out += op_name(n.kind);
  for (TermId k : n.kids) {
    out += " ";
    emit(bank, k, out);
  }
  out += ")";
}

}  // namespace

std::string term_text(const TermBank& bank, TermId id) {
  std::string out;
  emit(bank, id, out);
  return out;
}

std::string to_smtlib(const Script& script) {
  check_sorts(script);
  std::string out;
  out += "(set-option :produce-models true)\n";
  out += uses_arrays(script) ? "(set-logic QF_ABV)\n" : "(set-logic QF_BV)\n";
  for (TermId d : script.declarations) {
    const Node& n = script.bank.node(d);
    out += "(declare-const " + n.name + " " + sort_text(n.sort) + ")\n";
  }
  for (TermId a : script.assertions) {
    out += "(assert ";
    emit(script.bank, a, out);
    out += ")\n";
  }
  if (script.has_goal) {
    out += "(assert ";
    emit(script.bank, script.goal, out);
    out += ")\n";
  }
  out += "(check-sat)\n(get-model)\n";
  return out;
}

ArrayOps count_array_ops(const Script& script) {
  ArrayOps ops;
  for (TermId id : reachable(script)) {
    const Kind k = script.bank.node(id).kind;
    if (k == Kind::Select) ++ops.reads;
    if (k == Kind::Store) ++ops.writes;
  }
  return ops;
}

}  // namespace ownir::smt
