#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ownir/ir.hpp"
#include "ownir/machine.hpp"
#include "ownir/smt.hpp"

namespace ownir {

class UnsupportedInstr : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Encoder : std::uint8_t { Ownsem, Baseline };

std::string_view encoder_name(Encoder e);

struct EncodeOptions {
  /// Fault injection mirroring MachineOptions::skip_store_cache_sync.
  bool skip_store_cache_sync = false;
};

/// A verification condition: sat iff some execution fails an assertion.
struct VcScript {
  smt::Script script;
  std::vector<NondetSite> nondets;   // symbol name = register name
  std::vector<std::string> prophecies;
};

/// Ownership encoding. The program is flattened first; the encoder trusts
/// the borrow discipline (no UB, no implicit borrow ends).
VcScript encode_ownsem(const Program& program, const EncodeOptions& options = {});

/// Address-map encoding: every access is an array read or write, cache
/// operations go through a shadow array keyed by address.
VcScript encode_baseline(const Program& program);

VcScript encode(const Program& program, Encoder encoder, const EncodeOptions& options = {});

/// Keyed oracle assigning each nondet register its model value (0 if absent).
Oracle oracle_from_model(const VcScript& vc, const std::map<std::string, std::uint64_t>& model);

}  // namespace ownir
