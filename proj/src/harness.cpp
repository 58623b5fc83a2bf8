#include "ownir/harness.hpp"

#include <algorithm>
#include <memory>
#include <set>
#include <sstream>

#include "ownir/check.hpp"
#include "ownir/text.hpp"
#include "ownir/vcgen.hpp"

namespace ownir {

std::string_view validity_name(Validity v) {
  switch (v) {
    case Validity::Valid: return "valid";
    case Validity::Invalid: return "invalid";
    case Validity::Unknown: return "unknown";
    case Validity::Error: return "error";
  }
  return "?";
}

Assignment assignment_at(const std::vector<NondetSite>& sites, std::uint64_t index) {
  Assignment a;
  for (const auto& s : sites) {
    a[s.reg.name] = index & word_mask(s.bits);
    index = s.bits >= 64 ? 0 : index >> s.bits;
  }
  return a;
}

namespace {

unsigned total_bits(const std::vector<NondetSite>& sites) {
  unsigned b = 0;
  for (const auto& s : sites) b += s.bits;
  return b;
}

enum RunCode : std::uint8_t { kPass, kFail, kUb, kLimit, kImplicit };

}  // namespace

ConcreteVerdict exhaustive_concrete(const Program& program, unsigned max_bits, bool parallel) {
  const auto sites = nondet_sites(program);
  const unsigned bits = total_bits(sites);
  if (bits > max_bits) {
    throw EnumerationTooLarge(std::to_string(bits) + " oracle bits exceed the limit of " +
                              std::to_string(max_bits));
  }
  const std::int64_t total = std::int64_t{1} << bits;
  auto shared = std::make_shared<const Program>(program);
  std::vector<std::uint8_t> code(static_cast<std::size_t>(total), kPass);
  auto run_one = [&](std::int64_t k) -> std::uint8_t {
    MachineOptions o;
    o.kind = MachineKind::M0;
    Machine m(shared, Oracle::keyed(assignment_at(sites, static_cast<std::uint64_t>(k))), o);
    const Outcome out = m.run();
    switch (out.status) {
      case Status::AssertFailed: return kFail;
      case Status::UB: return kUb;
      case Status::StepLimit:
      case Status::Running: return kLimit;
      default: break;
    }
    return out.final_state.borrows.implicit_borrow_ends() > 0 ? kImplicit : kPass;
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 32)
    for (std::int64_t k = 0; k < total; ++k) code[static_cast<std::size_t>(k)] = run_one(k);
  } else {
    for (std::int64_t k = 0; k < total; ++k) code[static_cast<std::size_t>(k)] = run_one(k);
  }

  ConcreteVerdict v;
  v.oracles = static_cast<std::uint64_t>(total);
  for (std::int64_t k = 0; k < total; ++k) {
    const auto c = code[static_cast<std::size_t>(k)];
    if (c == kUb || c == kLimit || c == kImplicit) {
      v.validity = Validity::Error;
      const Assignment a = assignment_at(sites, static_cast<std::uint64_t>(k));
      if (c == kImplicit) {
        v.error = "implicit borrow end";
      } else {
        const Outcome out = run_m0(program, Oracle::keyed(a));
        v.error = std::string(status_name(out.status)) + (out.rule.empty() ? "" : " " + out.rule);
      }
      v.counterexample = a;
      return v;
    }
  }
  for (std::int64_t k = 0; k < total; ++k) {
    if (code[static_cast<std::size_t>(k)] == kFail) {
      v.validity = Validity::Invalid;
      v.counterexample = assignment_at(sites, static_cast<std::uint64_t>(k));
      break;
    }
  }
  return v;
}

SolverVerdict solve_program(const Program& program, bool ownsem, const SolverConfig& solver,
                            bool fault_skip_store_cache_sync) {
  SolverVerdict v;
  try {
    EncodeOptions eo;
    eo.skip_store_cache_sync = fault_skip_store_cache_sync;
    const VcScript vc = ownsem ? encode_ownsem(program, eo) : encode_baseline(program);
    v.ops = smt::count_array_ops(vc.script);
    const SatResult r = solve(smt::to_smtlib(vc.script), solver);
    v.wall_ms = r.wall_ms;
    switch (r.status) {
      case SatStatus::Unsat:
        v.validity = Validity::Valid;
        break;
      case SatStatus::Sat: {
        v.validity = Validity::Invalid;
        v.model = r.model;
        const Outcome out = run_m0(program, oracle_from_model(vc, r.model));
        v.replay_ok = out.status == Status::AssertFailed;
        if (!v.replay_ok) v.detail = "model replay ended " + std::string(status_name(out.status));
        break;
      }
      case SatStatus::Unknown:
        v.validity = Validity::Unknown;
        v.detail = r.reason;
        break;
    }
  } catch (const SolverTimeout& e) {
    v.validity = Validity::Unknown;
    v.detail = e.what();
  } catch (const std::exception& e) {
    v.validity = Validity::Error;
    v.detail = e.what();
  }
  return v;
}

bool Verdict::agree() const {
  const Validity c = concrete.validity;
  if (c != Validity::Valid && c != Validity::Invalid) return false;
  return lockstep_ok && ownsem.validity == c && baseline.validity == c && ownsem.replay_ok &&
         baseline.replay_ok;
}

std::string Verdict::to_string() const {
  std::ostringstream os;
  os << "concrete=" << validity_name(concrete.validity) << " (" << concrete.oracles << " oracles";
  if (!concrete.error.empty()) os << ", " << concrete.error;
  os << ") lockstep=" << (lockstep_ok ? "ok" : "FAIL") << " ownsem=" << validity_name(ownsem.validity)
     << " baseline=" << validity_name(baseline.validity);
  if (!lockstep_detail.empty()) os << "\n  lockstep: " << lockstep_detail;
  if (!ownsem.detail.empty()) os << "\n  ownsem: " << ownsem.detail;
  if (!baseline.detail.empty()) os << "\n  baseline: " << baseline.detail;
  return os.str();
}

LockstepSummary lockstep_oracles(const Program& program, bool fault_skip_store_cache_sync,
                                 std::uint64_t limit) {
  const auto sites = nondet_sites(program);
  const unsigned bits = std::min(total_bits(sites), 62u);
  const std::uint64_t total = std::uint64_t{1} << bits;
  const std::uint64_t runs = std::min<std::uint64_t>(total, std::max<std::uint64_t>(1, limit));
  LockstepSummary s;
  LockstepOptions lo;
  lo.skip_store_cache_sync = fault_skip_store_cache_sync;
  for (std::uint64_t i = 0; i < runs; ++i) {
    // Spread the sample over the whole space, always including 0 and the last oracle.
    const std::uint64_t k =
        runs == total ? i : (runs == 1 ? 0 : static_cast<std::uint64_t>(
                                                  static_cast<long double>(total - 1) * i / (runs - 1)));
    const DiffReport d = lockstep_diff(program, Oracle::keyed(assignment_at(sites, k)), lo);
    ++s.runs;
    s.steps += d.steps;
    s.cache_checks += d.cache_checks;
    s.cache_violations += d.cache_violations.size();
    if (!d.equivalent) ++s.divergences;
    if (d.m0_status == Status::UB) ++s.ub_runs;
    if (s.first_problem.empty() && (!d.ok() || d.m0_status == Status::UB)) {
      s.first_problem = d.to_string();
      if (d.m0_status == Status::UB) s.first_problem += " [M0 UB " + d.m0_rule + "]";
    }
  }
  return s;
}

Verdict three_way_check(const Program& program, const ThreeWayOptions& options) {
  Verdict v;
  v.concrete = exhaustive_concrete(program, options.max_bits, options.parallel);
  const LockstepSummary ls = lockstep_oracles(program, options.fault_skip_store_cache_sync, 4096);
  v.lockstep_ok = ls.ok();
  if (!ls.ok()) v.lockstep_detail = ls.first_problem;
  v.ownsem = solve_program(program, true, options.solver, options.fault_skip_store_cache_sync);
  v.baseline = solve_program(program, false, options.solver);
  return v;
}

// ---------------------------------------------------------------------------
// Shrinking

namespace {

/// Instructions whose single definition can be replaced by one of their
/// operands when the instruction is dropped.
std::optional<Reg> passthrough(const Instr& in) {
  switch (in.op) {
    case Op::Store:
    case Op::MovReg2Mem:
      if (is_reg(in.args.back())) return as_reg(in.args.back());
      return std::nullopt;
    case Op::SetCache:
    case Op::BeginUnique:
    case Op::EndUnique:
      return as_reg(in.args[0]);
    case Op::Select:
      if (in.defs[0].kind != RegKind::Scalar && is_reg(in.args[1])) return as_reg(in.args[1]);
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

bool is_pair_tail(Op op) { return op == Op::MutMksuc || op == Op::RoMksuc || op == Op::CpyMkcpy2; }

std::optional<Program> without(const Program& p, std::size_t victim) {
  const auto& body = p.blocks.front().body;
  std::set<std::size_t> gone{victim};
  if (is_pair_head(body[victim].op) && victim + 1 < body.size()) gone.insert(victim + 1);
  if (is_pair_tail(body[victim].op) && victim > 0) gone.insert(victim - 1);

  std::map<std::string, Reg> rename;
  std::set<std::string> dead;
  auto resolve = [&](Reg r) {
    for (auto it = rename.find(r.name); it != rename.end(); it = rename.find(r.name)) r = it->second;
    return r;
  };
  auto retire = [&](const Instr& in) {
    std::optional<Reg> mem_in;
    for (const auto& a : in.args) {
      if (is_reg(a) && as_reg(a).kind == RegKind::Memory) mem_in = as_reg(a);
    }
    auto through = passthrough(in);
    for (const auto& d : in.defs) {
      if (d.kind == RegKind::Memory && mem_in) {
        rename[d.name] = *mem_in;
      } else if (through && in.defs.size() == 1) {
        rename[d.name] = *through;
      } else {
        dead.insert(d.name);
      }
    }
  };
  Program out = p;
  auto& nb = out.blocks.front().body;
  nb.clear();
  for (std::size_t i = 0; i < body.size(); ++i) {
    Instr in = body[i];
    bool drop = gone.count(i) != 0;
    if (!drop) {
      for (auto& a : in.args) {
        if (!is_reg(a)) continue;
        a = resolve(as_reg(a));
        if (dead.count(as_reg(a).name)) drop = true;
      }
      if (in.guard) {
        in.guard = resolve(*in.guard);
        if (dead.count(in.guard->name)) drop = true;
      }
    }
    if (drop) {
      // Keep borrow pairs intact.
      if (is_pair_head(in.op) && i + 1 < body.size()) gone.insert(i + 1);
      if (is_pair_tail(in.op) && !nb.empty() && i > 0 && !gone.count(i - 1)) return std::nullopt;
      retire(in);
      continue;
    }
    nb.push_back(std::move(in));
  }
  return out;
}

}  // namespace

Program shrink(const Program& program, const std::function<bool(const Program&)>& still_fails) {
  Program cur = program;
  try {
    cur = flatten(program);
  } catch (const std::exception&) {
    return program;
  }
  if (cur.blocks.size() != 1) return cur;
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t i = cur.blocks.front().body.size(); i-- > 0;) {
      if (i >= cur.blocks.front().body.size()) continue;
      auto cand = without(cur, i);
      if (!cand || !validate(*cand).ok() || !still_fails(*cand)) continue;
      cur = std::move(*cand);
      progress = true;
    }
    for (std::size_t i = 0; i < cur.blocks.front().body.size(); ++i) {
      if (!cur.blocks.front().body[i].guard) continue;
      Program cand = cur;
      cand.blocks.front().body[i].guard.reset();
      if (!validate(cand).ok() || !still_fails(cand)) continue;
      cur = std::move(cand);
      progress = true;
    }
  }
  return cur;
}

Program shrink_lockstep_failure(const Program& program, bool fault_skip_store_cache_sync) {
  return shrink(program, [&](const Program& p) {
    const LockstepSummary s = lockstep_oracles(p, fault_skip_store_cache_sync, 16);
    return !s.ok() && s.ub_runs == 0;
  });
}

Program shrink_three_way_failure(const Program& program, const ThreeWayOptions& tw) {
  ThreeWayOptions o = tw;
  o.parallel = false;
  return shrink(program, [&](const Program& p) {
    try {
      const Verdict v = three_way_check(p, o);
      return v.concrete.validity != Validity::Error && !v.agree();
    } catch (const std::exception&) {
      return false;
    }
  });
}

// ---------------------------------------------------------------------------
// Corpus sweeps

GenConfig corpus_config(const CorpusOptions& options, std::uint64_t seed) {
  GenConfig c = options.base;
  c.seed = seed;
  if (!options.levels.empty()) c.level = options.levels[seed % options.levels.size()];
  return c;
}

LockstepCorpusResult lockstep_corpus(const CorpusOptions& options) {
  const auto n = static_cast<std::int64_t>(options.count);
  std::vector<LockstepSummary> per(static_cast<std::size_t>(n));
  auto one = [&](std::int64_t i) {
    const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(i);
    try {
      const Program p = gen_program(corpus_config(options, seed));
      per[static_cast<std::size_t>(i)] =
          lockstep_oracles(p, options.fault_skip_store_cache_sync, options.oracles_per_program);
    } catch (const std::exception& e) {
      per[static_cast<std::size_t>(i)].divergences = 1;
      per[static_cast<std::size_t>(i)].first_problem = e.what();
    }
  };
  if (options.parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < n; ++i) one(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) one(i);
  }
  LockstepCorpusResult r;
  r.programs = options.count;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& s = per[static_cast<std::size_t>(i)];
    r.total.runs += s.runs;
    r.total.steps += s.steps;
    r.total.cache_checks += s.cache_checks;
    r.total.cache_violations += s.cache_violations;
    r.total.divergences += s.divergences;
    r.total.ub_runs += s.ub_runs;
    if (!s.ok() || s.ub_runs) {
      r.failures.push_back({options.first_seed + static_cast<std::uint64_t>(i), s.first_problem});
      if (r.total.first_problem.empty()) r.total.first_problem = s.first_problem;
    }
  }
  return r;
}

ThreeWayCorpusResult three_way_corpus(const CorpusOptions& options, const ThreeWayOptions& tw) {
  const auto n = static_cast<std::int64_t>(options.count);
  std::vector<Verdict> per(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  ThreeWayOptions inner = tw;
  inner.parallel = false;
  inner.fault_skip_store_cache_sync = tw.fault_skip_store_cache_sync || options.fault_skip_store_cache_sync;
  auto one = [&](std::int64_t i) {
    const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(i);
    try {
      per[static_cast<std::size_t>(i)] = three_way_check(gen_program(corpus_config(options, seed)), inner);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  };
  if (options.parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) one(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) one(i);
  }
  ThreeWayCorpusResult r;
  r.programs = options.count;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(i);
    if (!errors[idx].empty()) {
      r.failures.push_back({seed, errors[idx]});
      continue;
    }
    const Verdict& v = per[idx];
    if (v.agree()) {
      ++r.agreements;
      if (v.concrete.validity == Validity::Valid) ++r.valid; else ++r.invalid;
      if (v.ownsem.validity == Validity::Invalid) ++r.sat_models_replayed;
      if (v.baseline.validity == Validity::Invalid) ++r.sat_models_replayed;
    } else {
      r.failures.push_back({seed, v.to_string()});
    }
  }
  return r;
}

}  // namespace ownir
