#include "ownir/bench.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

#include "ownir/smt.hpp"
#include "ownir/text.hpp"
#include "ownir/vcgen.hpp"

namespace ownir {

namespace {

constexpr std::uint64_t kOpen = 1;
constexpr std::uint64_t kClosed = 2;

// Straight-line program text with fresh register names per kind.
class Builder {
 public:
  Builder(const std::string& name) { os_ << "fun " << name << "() width 8 level m2 {\nentry:\n"; }

  std::string scalar() { return "r" + std::to_string(++next_); }
  std::string ptr() { return "p" + std::to_string(++next_); }
  std::string mem() { return "m" + std::to_string(++next_); }

  void line(const std::string& s) { os_ << "  " << s << "\n"; }

  Program finish() {
    os_ << "  halt\n}\n";
    return parse(os_.str());
  }

 private:
  std::ostringstream os_;
  unsigned next_ = 0;
};

struct Common {
  std::string choice;
  std::vector<std::string> is_chosen;  // r == i per object
};

// nondet choice, `assume choice < n`, and one equality per object.
Common choose(Builder& b, unsigned n) {
  Common c;
  c.choice = b.scalar();
  b.line(c.choice + " = nondet 8");
  const std::string in_range = b.scalar();
  b.line(in_range + " = " + c.choice + " < " + std::to_string(n));
  b.line("assume " + in_range);
  for (unsigned i = 0; i < n; ++i) {
    c.is_chosen.push_back(b.scalar());
    b.line(c.is_chosen.back() + " = " + c.choice + " == " + std::to_string(i));
  }
  return c;
}

// Pointer to the chosen object; the last object is the fallback the assume rules out.
std::string select_chain(Builder& b, const Common& c, const std::vector<std::string>& objs) {
  std::string sel = objs.back();
  for (std::size_t i = objs.size() - 1; i-- > 0;) {
    const std::string next = b.ptr();
    b.line(next + " = select " + c.is_chosen[i] + ", " + objs[i] + ", " + sel);
    sel = next;
  }
  return sel;
}

std::vector<std::string> alloc(Builder& b, unsigned n, std::string& m) {
  std::vector<std::string> out;
  for (unsigned i = 0; i < n; ++i) {
    out.push_back(b.ptr());
    const std::string nm = b.mem();
    b.line(out.back() + ", " + nm + " = mk_own 1, " + m);
    m = nm;
  }
  return out;
}

void assert_all(Builder& b, const std::vector<std::string>& checks) {
  std::string acc = checks.front();
  for (std::size_t i = 1; i < checks.size(); ++i) {
    const std::string next = b.scalar();
    b.line(next + " = " + acc + " && " + checks[i]);
    acc = next;
  }
  b.line("assert " + acc);
}

enum class Proto : std::uint8_t { Buffers, File, FileNoClose };

Program cached_variant(const std::string& name, unsigned n, Proto proto) {
  Builder b(name);
  std::string m = b.mem();
  b.line(m + " = mem.init()");
  const auto owners = alloc(b, n, m);
  std::vector<std::string> objs;
  for (const auto& o : owners) {
    objs.push_back(b.ptr());
    b.line(objs.back() + " = set_cache " + o + ", 0");
  }
  const Common c = choose(b, n);
  std::string cur = select_chain(b, c, objs);
  const std::string opened = b.ptr();
  b.line(opened + " = set_cache " + cur + ", " + std::to_string(kOpen));
  cur = opened;
  if (proto != Proto::Buffers) {
    const std::string st = b.scalar();
    b.line(st + " = get_cache " + cur);
    const std::string ok = b.scalar();
    b.line(ok + " = " + st + " == " + std::to_string(kOpen));
    b.line("assert " + ok);
  }
  const std::string nm = b.mem();
  b.line(nm + " = store " + c.choice + ", " + cur + ", " + m);
  m = nm;
  if (proto == Proto::File) {
    const std::string closed = b.ptr();
    b.line(closed + " = set_cache " + cur + ", " + std::to_string(kClosed));
    cur = closed;
  }
  std::vector<std::string> checks;
  for (unsigned i = 0; i < n; ++i) {
    const std::string back = b.ptr();
    b.line(back + " = select " + c.is_chosen[i] + ", " + cur + ", " + objs[i]);
    const std::string got = b.scalar();
    b.line(got + " = get_cache " + back);
    checks.push_back(b.scalar());
    if (proto == Proto::Buffers) {
      b.line(checks.back() + " = " + got + " == " + c.is_chosen[i]);
    } else {
      const std::string closed = b.scalar();
      b.line(closed + " = " + got + " == " + std::to_string(kClosed));
      const std::string other = b.scalar();
      b.line(other + " = " + c.choice + " != " + std::to_string(i));
      b.line(checks.back() + " = " + closed + " || " + other);
    }
  }
  assert_all(b, checks);
  return b.finish();
}

// Same protocol, typestate word kept in a parallel allocation per object.
Program main_variant(const std::string& name, unsigned n, Proto proto) {
  Builder b(name);
  std::string m = b.mem();
  b.line(m + " = mem.init()");
  const auto data = alloc(b, n, m);
  const auto state = alloc(b, n, m);
  auto store = [&](const std::string& v, const std::string& p) {
    const std::string nm = b.mem();
    b.line(nm + " = store " + v + ", " + p + ", " + m);
    m = nm;
  };
  for (const auto& s : state) store("0", s);
  const Common c = choose(b, n);
  const std::string dsel = select_chain(b, c, data);
  const std::string ssel = select_chain(b, c, state);
  store(std::to_string(kOpen), ssel);
  if (proto != Proto::Buffers) {
    const std::string st = b.scalar();
    b.line(st + " = load " + ssel + ", " + m);
    const std::string ok = b.scalar();
    b.line(ok + " = " + st + " == " + std::to_string(kOpen));
    b.line("assert " + ok);
  }
  store(c.choice, dsel);
  if (proto == Proto::File) store(std::to_string(kClosed), ssel);
  std::vector<std::string> checks;
  for (unsigned i = 0; i < n; ++i) {
    const std::string got = b.scalar();
    b.line(got + " = load " + state[i] + ", " + m);
    checks.push_back(b.scalar());
    if (proto == Proto::Buffers) {
      b.line(checks.back() + " = " + got + " == " + c.is_chosen[i]);
    } else {
      const std::string closed = b.scalar();
      b.line(closed + " = " + got + " == " + std::to_string(kClosed));
      const std::string other = b.scalar();
      b.line(other + " = " + c.choice + " != " + std::to_string(i));
      b.line(checks.back() + " = " + closed + " || " + other);
    }
  }
  assert_all(b, checks);
  return b.finish();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : (v[h - 1] + v[h]) / 2;
}

}  // namespace

BenchPrograms bench_many_buffers(unsigned n) {
  if (n < 2) throw std::invalid_argument("many_buffers needs n >= 2");
  const std::string name = "many_buffers_" + std::to_string(n);
  return {cached_variant(name, n, Proto::Buffers), main_variant(name, n, Proto::Buffers)};
}

BenchPrograms bench_file_typestate(unsigned n, bool skip_close) {
  if (n < 1) throw std::invalid_argument("file_typestate needs n >= 1");
  const std::string name = "file_typestate_" + std::to_string(n);
  const Proto proto = skip_close ? Proto::FileNoClose : Proto::File;
  return {cached_variant(name, n, proto), main_variant(name, n, proto)};
}

std::string_view bench_mode_name(BenchMode m) {
  switch (m) {
    case BenchMode::Ownsem: return "ownsem";
    case BenchMode::BaselineShadow: return "baseline-shadow";
    case BenchMode::BaselineMain: return "baseline-main";
  }
  return "?";
}

std::optional<BenchMode> bench_mode_from_name(std::string_view s) {
  for (auto m : {BenchMode::Ownsem, BenchMode::BaselineShadow, BenchMode::BaselineMain}) {
    if (bench_mode_name(m) == s) return m;
  }
  return std::nullopt;
}

BenchPrograms bench_programs(const std::string& family, unsigned n) {
  if (family == "many_buffers") return bench_many_buffers(n);
  if (family == "file_typestate") return bench_file_typestate(n);
  throw std::invalid_argument("unknown benchmark family " + family);
}

VcScript bench_script(const BenchSpec& spec) {
  const BenchPrograms p = bench_programs(spec.family, spec.n);
  switch (spec.mode) {
    case BenchMode::Ownsem: return encode_ownsem(p.cached);
    case BenchMode::BaselineShadow: return encode_baseline(p.cached);
    case BenchMode::BaselineMain: return encode_baseline(p.main_memory);
  }
  throw std::logic_error("bad mode");
}

std::vector<BenchSpec> bench_matrix(const std::vector<std::string>& families,
                                    const std::vector<unsigned>& ns,
                                    const std::vector<BenchMode>& modes) {
  std::vector<BenchSpec> out;
  for (const auto& f : families) {
    for (unsigned n : ns) {
      for (BenchMode m : modes) out.push_back({f, n, m});
    }
  }
  return out;
}

BenchReport run_bench(const std::vector<BenchSpec>& specs, unsigned repetitions,
                      const SolverConfig& solver, unsigned jobs) {
  BenchReport report;
  report.cells.resize(specs.size());
  const auto total = static_cast<std::int64_t>(specs.size());
  const unsigned reps = std::max(1u, repetitions);
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1u, jobs))
  for (std::int64_t k = 0; k < total; ++k) {
    BenchCell& cell = report.cells[static_cast<std::size_t>(k)];
    cell.spec = specs[static_cast<std::size_t>(k)];
    try {
      const VcScript vc = bench_script(cell.spec);
      const auto ops = smt::count_array_ops(vc.script);
      cell.reads = ops.reads;
      cell.writes = ops.writes;
      const std::string text = smt::to_smtlib(vc.script);
      std::vector<double> times;
      for (unsigned r = 0; r < reps; ++r) {
        const SatResult res = solve(text, solver);
        times.push_back(res.wall_ms);
        cell.solver_stats = res.stats;
        switch (res.status) {
          case SatStatus::Unsat: cell.verdict = Validity::Valid; break;
          case SatStatus::Sat: cell.verdict = Validity::Invalid; break;
          case SatStatus::Unknown:
            cell.verdict = Validity::Unknown;
            cell.error = res.reason;
            break;
        }
      }
      cell.wall_ms = median(times);
    } catch (const SolverTimeout& e) {
      cell.verdict = Validity::Unknown;
      cell.error = e.what();
    } catch (const std::exception& e) {
      cell.verdict = Validity::Error;
      cell.error = e.what();
    }
  }
  return report;
}

std::vector<BenchSpeedup> BenchReport::speedups() const {
  std::vector<BenchSpeedup> out;
  for (const auto& own : cells) {
    if (own.spec.mode != BenchMode::Ownsem || !own.error.empty()) continue;
    for (const auto& base : cells) {
      if (base.spec.mode == BenchMode::Ownsem || base.spec.family != own.spec.family ||
          base.spec.n != own.spec.n || !base.error.empty()) {
        continue;
      }
      BenchSpeedup s{own.spec.family, own.spec.n, base.spec.mode, 0};
      s.speedup = own.wall_ms > 0 ? base.wall_ms / own.wall_ms : 0;
      out.push_back(s);
    }
  }
  return out;
}

bool BenchReport::verdicts_agree() const {
  std::map<std::pair<std::string, unsigned>, Validity> seen;
  for (const auto& c : cells) {
    if (c.verdict != Validity::Valid && c.verdict != Validity::Invalid) return false;
    auto [it, fresh] = seen.emplace(std::make_pair(c.spec.family, c.spec.n), c.verdict);
    if (!fresh && it->second != c.verdict) return false;
  }
  return true;
}

std::vector<std::string> BenchReport::soft_flags() const {
  std::vector<std::string> out;
  for (const auto& s : speedups()) {
    if (s.n != 8 || s.speedup >= 1.0) continue;
    std::ostringstream os;
    os << s.family << " n=8 " << bench_mode_name(s.baseline) << " speedup " << s.speedup
       << " is below 1.0";
    out.push_back(os.str());
  }
  return out;
}

std::string BenchReport::to_json(bool with_timing) const {
  using nlohmann::json;
  json records = json::array();
  for (const auto& c : cells) {
    json r{{"spec", c.spec.family},
           {"n", c.spec.n},
           {"mode", bench_mode_name(c.spec.mode)},
           {"verdict", c.verdict == Validity::Valid     ? "unsat"
                       : c.verdict == Validity::Invalid ? "sat"
                                                        : validity_name(c.verdict)},
           {"reads", c.reads},
           {"writes", c.writes}};
    if (with_timing) {
      r["wall_ms"] = c.wall_ms;
      r["solver_stats"] = c.solver_stats;
    }
    if (!c.error.empty()) r["error"] = c.error;
    records.push_back(std::move(r));
  }
  json speed = json::array();
  if (with_timing) {
    for (const auto& s : speedups()) {
      speed.push_back({{"spec", s.family},
                       {"n", s.n},
                       {"baseline", bench_mode_name(s.baseline)},
                       {"speedup", s.speedup}});
    }
  }
  json meta{{"speedup_reference_band", {1.3, 5.0}},
            {"speedup_definition", "baseline wall_ms / ownsem wall_ms"},
            {"verdicts_agree", verdicts_agree()}};
  if (with_timing) meta["soft_flags"] = soft_flags();
  return json{{"meta", meta}, {"records", records}, {"speedups", speed}}.dump(2);
}

}  // namespace ownir
