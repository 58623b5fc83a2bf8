// Serial reference versus OpenMP kernels on the same workloads.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "CLI11.hpp"

#include "ownir/harness.hpp"
#include "ownir/solver.hpp"
#include "ownir/text.hpp"

using namespace ownir;

namespace {

double seconds(const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void row(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s serial %8.3f s  parallel %8.3f s  speedup %5.2fx  %s\n", name, serial, parallel,
              parallel > 0 ? serial / parallel : 0.0, same ? "results equal" : "RESULTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ownir corpus benchmark: serial reference vs OpenMP"};
  std::uint64_t lockstep_count = 2000;
  std::uint64_t three_way_count = 40;
  int threads = 0;
  std::string fixture;
  app.add_option("--lockstep", lockstep_count, "programs in the lockstep sweep");
  app.add_option("--three-way", three_way_count, "programs in the three-way sweep (0 skips)");
  app.add_option("--threads", threads, "OpenMP threads (default: runtime choice)");
  app.add_option("--enumerate", fixture, "program file for the exhaustive-enumeration kernel");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);
  std::printf("threads %d, cores %d\n", omp_get_max_threads(), omp_get_num_procs());
  bool all_same = true;

  {
    CorpusOptions o;
    o.count = lockstep_count;
    o.levels = {Level::M1, Level::M2};
    LockstepCorpusResult a, b;
    o.parallel = false;
    const double ts = seconds([&] { a = lockstep_corpus(o); });
    o.parallel = true;
    const double tp = seconds([&] { b = lockstep_corpus(o); });
    const bool same = a.total.steps == b.total.steps && a.total.cache_checks == b.total.cache_checks &&
                      a.failures.size() == b.failures.size();
    all_same &= same;
    row("lockstep corpus", ts, tp, same);
  }

  if (!fixture.empty()) {
    const Program p = parse_file(fixture);
    ConcreteVerdict a, b;
    const double ts = seconds([&] { a = exhaustive_concrete(p, 24, false); });
    const double tp = seconds([&] { b = exhaustive_concrete(p, 24, true); });
    const bool same = a.validity == b.validity && a.counterexample == b.counterexample;
    all_same &= same;
    row("exhaustive enumeration", ts, tp, same);
  }

  if (three_way_count > 0) {
    CorpusOptions o;
    o.count = three_way_count;
    o.levels = {Level::M1, Level::M2};
    ThreeWayOptions tw;
    tw.solver.apply_environment();
    ThreeWayCorpusResult a, b;
    o.parallel = false;
    const double ts = seconds([&] { a = three_way_corpus(o, tw); });
    o.parallel = true;
    const double tp = seconds([&] { b = three_way_corpus(o, tw); });
    const bool same = a.agreements == b.agreements && a.valid == b.valid && a.invalid == b.invalid;
    all_same &= same;
    row("three-way corpus", ts, tp, same);
  }
  return all_same ? 0 : 1;
}
