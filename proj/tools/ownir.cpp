#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ownir/bench.hpp"
#include "ownir/check.hpp"
#include "ownir/generator.hpp"
#include "ownir/harness.hpp"
#include "ownir/machine.hpp"
#include "ownir/smt.hpp"
#include "ownir/solver.hpp"
#include "ownir/text.hpp"
#include "ownir/vcgen.hpp"

using namespace ownir;
using nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kFail = 1,
  kUb = 2,
  kAssume = 3,
  kUnknown = 4,
  kError = 5,
  kUsage = 64,
  kBadInput = 65,
};

struct Globals {
  std::string config_path;
  std::string solver_cmd;
  bool json = false;
  unsigned jobs = 0;
};

// Parse errors, validation failures and cyclic programs all exit 65.
struct BadInput {
  std::string message;
};

Program load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BadInput{"cannot read " + path};
  std::stringstream ss;
  ss << in.rdbuf();
  Program p;
  try {
    p = parse(ss.str());
  } catch (const ParseError& e) {
    throw BadInput{path + ": " + e.what()};
  }
  const ValidationReport v = validate(p);
  if (!v.ok()) throw BadInput{path + ": " + v.to_string()};
  return p;
}

SolverConfig solver_config(const Globals& g) {
  SolverConfig c;
  if (!g.config_path.empty()) c = SolverConfig::from_file(g.config_path);
  c.apply_environment();
  if (!g.solver_cmd.empty()) c.cmd = g.solver_cmd;
  return c;
}

std::vector<std::uint64_t> parse_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoull(item, nullptr, 0));
  }
  return out;
}

std::optional<Level> level_from(const std::string& s) {
  for (auto l : {Level::M1, Level::M2, Level::M3}) {
    if (level_name(l) == s) return l;
  }
  return std::nullopt;
}

std::string assignment_text(const Assignment& a) {
  std::string s;
  for (const auto& [k, v] : a) s += (s.empty() ? "" : ", ") + k + " = " + std::to_string(v);
  return s;
}

int status_exit(Status s) {
  switch (s) {
    case Status::Halted: return kOk;
    case Status::AssertFailed: return kFail;
    case Status::UB: return kUb;
    case Status::AssumeInfeasible: return kAssume;
    default: return kError;
  }
}

int validity_exit(Validity v) {
  switch (v) {
    case Validity::Valid: return kOk;
    case Validity::Invalid: return kFail;
    case Validity::Unknown: return kUnknown;
    case Validity::Error: return kError;
  }
  return kError;
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string file;
  std::string machine = "m0";
  std::string oracle;
  std::uint64_t steps = 100000;
  bool quiet = false;
  bool fault = false;
};

int cmd_run(const RunArgs& a, const Globals& g) {
  const Program p = load(a.file);
  MachineOptions o;
  o.kind = a.machine == "m1" ? MachineKind::M1 : MachineKind::M0;
  o.step_limit = a.steps;
  o.trace = !a.quiet;
  o.skip_store_cache_sync = a.fault;
  Machine m(p, Oracle::sequence(parse_list(a.oracle)), o);
  const Outcome out = m.run();
  const auto regs = final_registers(m);
  if (g.json) {
    json j{{"status", status_name(out.status)}, {"steps", out.steps}, {"registers", regs}};
    if (!out.rule.empty()) j["rule"] = out.rule;
    if (!out.message.empty()) j["message"] = out.message;
    if (!a.quiet) j["trace"] = out.trace;
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& t : out.trace) std::cout << t << "\n";
    std::cout << "status: " << status_name(out.status);
    if (!out.rule.empty()) std::cout << " " << out.rule;
    if (!out.message.empty()) std::cout << ": " << out.message;
    std::cout << "\n";
    for (const auto& r : regs) std::cout << r << "\n";
  }
  return status_exit(out.status);
}

// --- verify ----------------------------------------------------------------

struct VerifyArgs {
  std::string file;
  std::string encoder = "ownsem";
  bool emit_smt = false;
};

int cmd_verify(const VerifyArgs& a, const Globals& g) {
  const Program p = load(a.file);
  const bool ownsem = a.encoder == "ownsem";
  VcScript vc;
  try {
    vc = ownsem ? encode_ownsem(p) : encode_baseline(p);
  } catch (const CyclicCfg& e) {
    throw BadInput{a.file + ": " + e.what()};
  }
  if (a.emit_smt) {
    std::cout << smt::to_smtlib(vc.script);
    return kOk;
  }
  const SolverVerdict v = solve_program(p, ownsem, solver_config(g));
  if (g.json) {
    json j{{"encoder", a.encoder},
           {"verdict", validity_name(v.validity)},
           {"reads", v.ops.reads},
           {"writes", v.ops.writes},
           {"wall_ms", v.wall_ms}};
    if (v.validity == Validity::Invalid) {
      j["model"] = v.model;
      j["replay_ok"] = v.replay_ok;
    }
    if (!v.detail.empty()) j["detail"] = v.detail;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << validity_name(v.validity) << " (" << a.encoder << ", " << v.ops.reads
              << " array reads, " << v.ops.writes << " array writes)\n";
    if (v.validity == Validity::Invalid) {
      Assignment oracle;
      for (const auto& site : nondet_sites(p)) {
        auto it = v.model.find(site.reg.name);
        oracle[site.reg.name] = it == v.model.end() ? 0 : it->second;
      }
      std::cout << "counterexample: " << assignment_text(oracle) << "\n";
      std::cout << "replay on m0: " << (v.replay_ok ? "assert failed" : v.detail) << "\n";
    } else if (!v.detail.empty()) {
      std::cout << v.detail << "\n";
    }
  }
  if (v.validity == Validity::Invalid && !v.replay_ok) return kError;
  return validity_exit(v.validity);
}

// --- diff ------------------------------------------------------------------

struct DiffArgs {
  std::string file;
  std::string corpus;
  bool full = false;
  bool fault = false;
  std::string levels = "m1";
  std::uint64_t oracles = 16;
};

std::vector<Level> parse_levels(const std::string& s) {
  std::vector<Level> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto l = level_from(item);
    if (!l) throw CLI::ValidationError("--levels", "unknown level " + item);
    out.push_back(*l);
  }
  return out;
}

int diff_file(const DiffArgs& a, const Globals& g) {
  const Program p = load(a.file);
  const LockstepSummary ls = lockstep_oracles(p, a.fault, 4096);
  bool ok = ls.ok();
  std::string detail = ls.first_problem;
  std::optional<Verdict> v;
  if (a.full) {
    ThreeWayOptions tw;
    tw.solver = solver_config(g);
    tw.fault_skip_store_cache_sync = a.fault;
    tw.parallel = true;
    try {
      v = three_way_check(p, tw);
    } catch (const CyclicCfg& e) {
      throw BadInput{a.file + ": " + e.what()};
    }
    ok = v->agree();
    detail = v->to_string();
  }
  if (g.json) {
    json j{{"ok", ok}, {"runs", ls.runs}, {"steps", ls.steps}, {"cache_checks", ls.cache_checks},
           {"cache_violations", ls.cache_violations}, {"divergences", ls.divergences}};
    if (!detail.empty()) j["detail"] = detail;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << (ok ? "no divergence" : "FAILED") << " over " << ls.runs << " oracles, "
              << ls.steps << " steps, " << ls.cache_checks << " cache checks\n";
    if (v) std::cout << v->to_string() << "\n";
    else if (!ok) std::cout << detail << "\n";
  }
  if (!ok) {
    const Program small = a.full ? shrink_three_way_failure(p, {solver_config(g), 20, a.fault, false})
                                 : shrink_lockstep_failure(p, a.fault);
    std::cout << "shrunk reproducer:\n" << print(small);
  }
  return ok ? kOk : kFail;
}

int diff_corpus(const DiffArgs& a, const Globals& g) {
  const auto nums = parse_list(a.corpus);
  if (nums.size() != 2) throw CLI::ValidationError("--corpus", "expected seed,count");
  CorpusOptions co;
  co.first_seed = nums[0];
  co.count = nums[1];
  co.levels = parse_levels(a.levels);
  co.fault_skip_store_cache_sync = a.fault;
  co.oracles_per_program = a.oracles;

  std::vector<CorpusFailure> failures;
  json j;
  if (a.full) {
    ThreeWayOptions tw;
    tw.solver = solver_config(g);
    tw.fault_skip_store_cache_sync = a.fault;
    const ThreeWayCorpusResult r = three_way_corpus(co, tw);
    failures = r.failures;
    j = {{"programs", r.programs}, {"agreements", r.agreements}, {"valid", r.valid},
         {"invalid", r.invalid}, {"sat_models_replayed", r.sat_models_replayed}};
    if (!g.json) {
      std::cout << r.agreements << "/" << r.programs << " programs agree (" << r.valid << " valid, "
                << r.invalid << " invalid, " << r.sat_models_replayed << " models replayed)\n";
    }
  } else {
    const LockstepCorpusResult r = lockstep_corpus(co);
    failures = r.failures;
    j = {{"programs", r.programs}, {"runs", r.total.runs}, {"steps", r.total.steps},
         {"cache_checks", r.total.cache_checks}, {"cache_violations", r.total.cache_violations},
         {"divergences", r.total.divergences}};
    if (!g.json) {
      std::cout << r.programs << " programs, " << r.total.runs << " runs, " << r.total.steps
                << " steps, " << r.total.cache_checks << " cache checks, "
                << r.total.cache_violations << " violations, " << r.total.divergences
                << " divergences\n";
    }
  }
  j["failures"] = failures.size();
  if (g.json) std::cout << j.dump(2) << "\n";
  if (failures.empty()) return kOk;

  const CorpusFailure& first = failures.front();
  const Program p = gen_program(corpus_config(co, first.seed));
  ThreeWayOptions tw;
  tw.solver = solver_config(g);
  tw.fault_skip_store_cache_sync = a.fault;
  const Program small = a.full ? shrink_three_way_failure(p, tw) : shrink_lockstep_failure(p, a.fault);
  std::cerr << failures.size() << " failing programs; first seed " << first.seed << "\n"
            << first.detail << "\nshrunk reproducer (" << small.blocks.front().body.size()
            << " instructions):\n"
            << print(small);
  return kFail;
}

// --- bench -----------------------------------------------------------------

struct BenchArgs {
  std::vector<std::string> families;
  std::string ns = "2,4,8";
  std::string modes = "ownsem,baseline-shadow";
  unsigned reps = 3;
  std::string out;
};

int cmd_bench(const BenchArgs& a, const Globals& g) {
  std::vector<unsigned> ns;
  for (auto v : parse_list(a.ns)) ns.push_back(static_cast<unsigned>(v));
  std::vector<BenchMode> modes;
  std::stringstream ss(a.modes);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto m = bench_mode_from_name(item);
    if (!m) throw CLI::ValidationError("--modes", "unknown mode " + item);
    modes.push_back(*m);
  }
  for (const auto& f : a.families) {
    for (unsigned n : ns) {
      if (n < (f == "many_buffers" ? 2u : 1u)) throw CLI::ValidationError("--n", f + " n too small");
    }
  }
  const auto specs = bench_matrix(a.families, ns, modes);
  const BenchReport report = run_bench(specs, a.reps, solver_config(g), std::max(1u, g.jobs));
  const std::string text = report.to_json();
  if (!a.out.empty()) {
    std::ofstream(a.out) << text << "\n";
  }
  if (g.json || a.out.empty()) {
    std::cout << text << "\n";
  } else {
    for (const auto& c : report.cells) {
      std::printf("%-16s n=%-3u %-16s %-8s reads=%-4zu writes=%-4zu %8.1f ms\n",
                  c.spec.family.c_str(), c.spec.n, std::string(bench_mode_name(c.spec.mode)).c_str(),
                  std::string(validity_name(c.verdict)).c_str(), c.reads, c.writes, c.wall_ms);
    }
    for (const auto& f : report.soft_flags()) std::cout << "note: " << f << "\n";
  }
  return report.verdicts_agree() ? kOk : kFail;
}

// --- gen / print / flatten ---------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 0;
  std::string level = "m1";
  unsigned width = 8;
  bool roundtrip = false;
};

int cmd_gen(const GenArgs& a) {
  if (a.roundtrip) {
    std::cout << print(gen_pointer_roundtrip(a.seed));
    return kOk;
  }
  GenConfig c;
  c.seed = a.seed;
  c.width = a.width;
  auto l = level_from(a.level);
  if (!l || *l == Level::M3) throw CLI::ValidationError("--level", "generator levels are m1 and m2");
  c.level = *l;
  std::cout << print(gen_program(c));
  return kOk;
}

int cmd_flatten(const std::string& file) {
  const Program p = load(file);
  try {
    std::cout << print(flatten(p));
  } catch (const CyclicCfg& e) {
    throw BadInput{file + ": " + e.what()};
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ownir: ownership-aware IR interpreter, verifier and differential tester"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "solver config file ([solver] cmd/args/timeout_secs)")
      ->check(CLI::ExistingFile);
  app.add_option("--solver", g.solver_cmd, "solver command (overrides config and OWNIR_SOLVER)");
  app.add_flag("--json", g.json, "machine-readable output");
  app.add_option("--jobs,-j", g.jobs, "worker threads (default: all cores)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "execute a program on a machine");
  run_cmd->add_option("file", run.file)->required();
  run_cmd->add_option("--machine", run.machine)->check(CLI::IsMember({"m0", "m1"}));
  run_cmd->add_option("--oracle", run.oracle, "comma-separated nondet values, in order");
  run_cmd->add_option("--steps", run.steps, "step limit");
  run_cmd->add_flag("--quiet,-q", run.quiet, "omit the trace");
  run_cmd->add_flag("--fault", run.fault, "M1 store leaves caches untouched");

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "encode, solve and replay");
  verify_cmd->add_option("file", verify.file)->required();
  verify_cmd->add_option("--encoder", verify.encoder)->check(CLI::IsMember({"ownsem", "baseline"}));
  verify_cmd->add_flag("--emit-smt", verify.emit_smt, "print the SMT-LIB script instead of solving");

  DiffArgs diff;
  auto* diff_cmd = app.add_subcommand("diff", "lockstep M0/M1 and optional three-way check");
  auto* diff_file_opt = diff_cmd->add_option("file", diff.file);
  auto* corpus_opt = diff_cmd->add_option("--corpus", diff.corpus, "seed,count of generated programs");
  diff_file_opt->excludes(corpus_opt);
  diff_cmd->add_flag("--full", diff.full, "also run exhaustive M0 and both encoders");
  diff_cmd->add_flag("--fault", diff.fault, "disable the cache sync on store (negative control)");
  diff_cmd->add_option("--levels", diff.levels, "generator levels, cycled by seed (m1,m2)");
  diff_cmd->add_option("--oracles", diff.oracles, "oracles per generated program");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "typestate benchmarks across encodings");
  bench_cmd->add_option("family", bench.families)
      ->required()
      ->check(CLI::IsMember({"many_buffers", "file_typestate"}));
  bench_cmd->add_option("--n", bench.ns, "comma-separated sizes");
  bench_cmd->add_option("--modes", bench.modes, "ownsem,baseline-shadow,baseline-main");
  bench_cmd->add_option("--reps", bench.reps, "repetitions per cell (median reported)");
  bench_cmd->add_option("--out,-o", bench.out, "write the JSON report here");

  std::string print_file;
  auto* print_cmd = app.add_subcommand("print", "parse, validate and print canonically");
  print_cmd->add_option("file", print_file)->required();

  std::string flatten_file;
  auto* flatten_cmd = app.add_subcommand("flatten", "print the single-block form");
  flatten_cmd->add_option("file", flatten_file)->required();

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "print a generated program");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--level", gen.level);
  gen_cmd->add_option("--width", gen.width);
  gen_cmd->add_flag("--roundtrip", gen.roundtrip, "M3 pointer round-trip program");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }
  if (g.jobs > 0) omp_set_num_threads(static_cast<int>(g.jobs));

  try {
    if (*run_cmd) return cmd_run(run, g);
    if (*verify_cmd) return cmd_verify(verify, g);
    if (*diff_cmd) {
      if (diff.file.empty() == diff.corpus.empty()) {
        std::cerr << "diff needs a file or --corpus seed,count\n";
        return kUsage;
      }
      return diff.file.empty() ? diff_corpus(diff, g) : diff_file(diff, g);
    }
    if (*bench_cmd) return cmd_bench(bench, g);
    if (*print_cmd) {
      std::cout << print(load(print_file));
      return kOk;
    }
    if (*flatten_cmd) return cmd_flatten(flatten_file);
    if (*gen_cmd) return cmd_gen(gen);
  } catch (const BadInput& e) {
    std::cerr << "error: " << e.message << "\n";
    return kBadInput;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kUsage;
}
