#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ownir {

enum class PtrKind : std::uint8_t { O, MB, RB, C, U };

std::string_view ptr_kind_name(PtrKind k);

struct StackEntry {
  std::uint64_t tag = 0;
  PtrKind kind = PtrKind::O;
  friend bool operator==(const StackEntry&, const StackEntry&) = default;
};

/// Entries bottom to top; back() is the top of stack.
using BorrowStack = std::vector<StackEntry>;

enum class PairKind : std::uint8_t { Mut, Ro, Cpy };

/// Result of a pair operation: whether the lender was on top before any
/// popping (B0 empty) and the lender's kind.
struct PairEffect {
  bool lender_was_top = false;
  PtrKind lender_kind = PtrKind::O;
};

/// Per-allocation borrow stacks keyed by allocation base address.
class BorrowStore {
 public:
  void create(std::uint64_t base, std::uint64_t tag, PtrKind kind);
  bool has_allocation(std::uint64_t base) const { return stacks_.count(base) != 0; }

  const BorrowStack* stack(std::uint64_t base) const;
  const std::map<std::uint64_t, BorrowStack>& stacks() const { return stacks_; }

  /// Entry for tag, or nullopt when the tag has been popped.
  std::optional<StackEntry> entry(std::uint64_t base, std::uint64_t tag) const;
  bool is_top(std::uint64_t base, std::uint64_t tag) const;

  // Each operation returns the violated rule name, or nullopt on success.
  std::optional<std::string> store_access(std::uint64_t base, std::uint64_t tag);
  std::optional<std::string> load_access(std::uint64_t base, std::uint64_t tag);
  std::optional<std::string> pair(std::uint64_t base, std::uint64_t lender, PairKind kind,
                                  std::uint64_t succ_tag, std::uint64_t bor_tag,
                                  PairEffect* effect);
  /// Pops tag; on a mutable borrow reports the successor tag left on top.
  std::optional<std::string> die(std::uint64_t base, std::uint64_t tag,
                                 std::optional<std::uint64_t>* successor);
  std::optional<std::string> rekind(std::uint64_t base, std::uint64_t tag, PtrKind from,
                                    PtrKind to);

  /// mb entries removed by anything other than die.
  std::uint64_t implicit_borrow_ends() const { return implicit_ends_; }

  friend bool operator==(const BorrowStore& a, const BorrowStore& b) {
    return a.stacks_ == b.stacks_;
  }

 private:
  std::optional<std::size_t> find(const BorrowStack& s, std::uint64_t tag) const;
  void pop_above(BorrowStack& s, std::size_t index, bool keep_copies);

  std::map<std::uint64_t, BorrowStack> stacks_;
  std::uint64_t implicit_ends_ = 0;
};

/// `3::2::[]`, top first.
std::string format_stack(const BorrowStack& s);

}  // namespace ownir
