#include "ownir/borrow_stack.hpp"

namespace ownir {

std::string_view ptr_kind_name(PtrKind k) {
  switch (k) {
    case PtrKind::O: return "o";
    case PtrKind::MB: return "mb";
    case PtrKind::RB: return "rb";
    case PtrKind::C: return "c";
    case PtrKind::U: return "u";
  }
  return "?";
}

void BorrowStore::create(std::uint64_t base, std::uint64_t tag, PtrKind kind) {
  stacks_[base] = BorrowStack{{tag, kind}};
}

const BorrowStack* BorrowStore::stack(std::uint64_t base) const {
  auto it = stacks_.find(base);
  return it == stacks_.end() ? nullptr : &it->second;
}

std::optional<std::size_t> BorrowStore::find(const BorrowStack& s, std::uint64_t tag) const {
  for (std::size_t i = s.size(); i-- > 0;) {
    if (s[i].tag == tag) return i;
  }
  return std::nullopt;
}

std::optional<StackEntry> BorrowStore::entry(std::uint64_t base, std::uint64_t tag) const {
  const BorrowStack* s = stack(base);
  if (!s) return std::nullopt;
  auto i = find(*s, tag);
  if (!i) return std::nullopt;
  return (*s)[*i];
}

bool BorrowStore::is_top(std::uint64_t base, std::uint64_t tag) const {
  const BorrowStack* s = stack(base);
  return s && !s->empty() && s->back().tag == tag;
}

void BorrowStore::pop_above(BorrowStack& s, std::size_t index, bool keep_copies) {
  BorrowStack kept;
  for (std::size_t i = index + 1; i < s.size(); ++i) {
    if (keep_copies && s[i].kind == PtrKind::C) {
      kept.push_back(s[i]);
    } else if (s[i].kind == PtrKind::MB) {
      ++implicit_ends_;
    }
  }
  s.resize(index + 1);
  s.insert(s.end(), kept.begin(), kept.end());
}

std::optional<std::string> BorrowStore::store_access(std::uint64_t base, std::uint64_t tag) {
  auto it = stacks_.find(base);
  if (it == stacks_.end()) return "invalid-pointer";
  auto i = find(it->second, tag);
  if (!i) return "tag-not-in-stack";
  const PtrKind k = it->second[*i].kind;
  if (k == PtrKind::RB) return "write-through-ro";
  if (k != PtrKind::C) pop_above(it->second, *i, false);
  return std::nullopt;
}

std::optional<std::string> BorrowStore::load_access(std::uint64_t base, std::uint64_t tag) {
  auto it = stacks_.find(base);
  if (it == stacks_.end()) return "invalid-pointer";
  auto i = find(it->second, tag);
  if (!i) return "tag-not-in-stack";
  if (it->second[*i].kind != PtrKind::C) pop_above(it->second, *i, true);
  return std::nullopt;
}

std::optional<std::string> BorrowStore::pair(std::uint64_t base, std::uint64_t lender,
                                             PairKind kind, std::uint64_t succ_tag,
                                             std::uint64_t bor_tag, PairEffect* effect) {
  auto it = stacks_.find(base);
  if (it == stacks_.end()) return "invalid-pointer";
  BorrowStack& s = it->second;
  auto i = find(s, lender);
  if (!i) return "tag-not-in-stack";
  const PtrKind t = s[*i].kind;
  switch (kind) {
    case PairKind::Mut:
      if (t != PtrKind::O && t != PtrKind::MB && t != PtrKind::U) return "borrow-wrong-kind";
      break;
    case PairKind::Ro:
      if (t == PtrKind::C) return "ro-borrow-from-copied";
      break;
    case PairKind::Cpy:
      break;
  }
  if (effect) {
    effect->lender_was_top = *i + 1 == s.size();
    effect->lender_kind = t;
  }
  pop_above(s, *i, false);
  s.back() = StackEntry{succ_tag, t};
  const PtrKind bor = kind == PairKind::Mut ? PtrKind::MB : kind == PairKind::Ro ? PtrKind::RB : PtrKind::C;
  s.push_back(StackEntry{bor_tag, bor});
  return std::nullopt;
}

std::optional<std::string> BorrowStore::die(std::uint64_t base, std::uint64_t tag,
                                            std::optional<std::uint64_t>* successor) {
  if (successor) successor->reset();
  auto it = stacks_.find(base);
  if (it == stacks_.end()) return "invalid-pointer";
  BorrowStack& s = it->second;
  auto i = find(s, tag);
  if (!i) return "tag-not-in-stack";
  if (*i + 1 != s.size()) return "die-not-top";
  switch (s[*i].kind) {
    case PtrKind::MB: {
      if (*i == 0) return "die-lender-kind";
      const StackEntry below = s[*i - 1];
      if (below.kind != PtrKind::O && below.kind != PtrKind::MB && below.kind != PtrKind::U) {
        return "die-lender-kind";
      }
      s.pop_back();
      if (successor) *successor = below.tag;
      return std::nullopt;
    }
    case PtrKind::RB:
      s.pop_back();
      return std::nullopt;
    case PtrKind::C:
      return "die-on-copied";
    case PtrKind::O:
      return "die-on-owned";
    case PtrKind::U:
      return "die-wrong-kind";
  }
  return "die-wrong-kind";
}

std::optional<std::string> BorrowStore::rekind(std::uint64_t base, std::uint64_t tag,
                                               PtrKind from, PtrKind to) {
  auto it = stacks_.find(base);
  if (it == stacks_.end()) return "cache-op-on-untracked";
  auto i = find(it->second, tag);
  if (!i) return "cache-op-on-untracked";
  if (it->second[*i].kind != from) return "unique-kind";
  it->second[*i].kind = to;
  return std::nullopt;
}

std::string format_stack(const BorrowStack& s) {
  std::string out;
  for (std::size_t i = s.size(); i-- > 0;) {
    out += std::to_string(s[i].tag);
    out += "::";
  }
  return out + "[]";
}

}  // namespace ownir
