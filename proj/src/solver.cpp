#include "ownir/solver.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ownir {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

}  // namespace

void SolverConfig::set(const std::string& key, const std::string& value) {
  if (key == "solver.cmd") {
    cmd = value;
  } else if (key == "solver.args") {
    args = split_words(value);
  } else if (key == "solver.timeout_secs") {
    try {
      timeout_secs = std::stod(value);
    } catch (const std::exception&) {
      throw std::invalid_argument("solver.timeout_secs: not a number: " + value);
    }
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

SolverConfig SolverConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  SolverConfig c;
  std::string section;
  for (std::string line; std::getline(in, line);) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + line);
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    c.set(key, trim(line.substr(eq + 1)));
  }
  return c;
}

void SolverConfig::apply_environment() {
  if (const char* env = std::getenv("OWNIR_SOLVER"); env && *env) cmd = env;
}

std::optional<std::string> locate_solver(const SolverConfig& config) {
  auto executable = [](const std::string& p) {
    struct stat st {};
    return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && ::access(p.c_str(), X_OK) == 0;
  };
  if (config.cmd.find('/') != std::string::npos) {
    return executable(config.cmd) ? std::optional(config.cmd) : std::nullopt;
  }
  const char* path = std::getenv("PATH");
  std::istringstream dirs(path ? path : "/usr/local/bin:/usr/bin:/bin");
  for (std::string dir; std::getline(dirs, dir, ':');) {
    if (dir.empty()) continue;
    std::string candidate = dir + "/" + config.cmd;
    if (executable(candidate)) return candidate;
  }
  return std::nullopt;
}

std::string_view sat_status_name(SatStatus s) {
  switch (s) {
    case SatStatus::Sat: return "sat";
    case SatStatus::Unsat: return "unsat";
    case SatStatus::Unknown: return "unknown";
  }
  return "?";
}

namespace {

struct SExpr {
  std::string atom;
  std::vector<SExpr> list;
  bool is_list = false;
};

class SExprReader {
 public:
  explicit SExprReader(std::string_view s) : s_(s) {}

  bool next(SExpr& out) {
    skip();
    if (i_ >= s_.size()) return false;
    out = read();
    return true;
  }

 private:
  void skip() {
    while (i_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[i_]))) {
        ++i_;
      } else if (s_[i_] == ';') {
        while (i_ < s_.size() && s_[i_] != '\n') ++i_;
      } else {
        break;
      }
    }
  }

  SExpr read() {
    skip();
    SExpr e;
    if (i_ >= s_.size()) return e;
    if (s_[i_] == '(') {
      ++i_;
      e.is_list = true;
      for (;;) {
        skip();
        if (i_ >= s_.size()) break;
        if (s_[i_] == ')') {
          ++i_;
          break;
        }
        e.list.push_back(read());
      }
      return e;
    }
    if (s_[i_] == ')') {
      ++i_;
      return e;
    }
    if (s_[i_] == '"') {
      std::size_t j = i_ + 1;
      while (j < s_.size() && s_[j] != '"') ++j;
      e.atom = std::string(s_.substr(i_, j + 1 - i_));
      i_ = std::min(j + 1, s_.size());
      return e;
    }
    if (s_[i_] == '|') {
      std::size_t j = i_ + 1;
      while (j < s_.size() && s_[j] != '|') ++j;
      e.atom = std::string(s_.substr(i_ + 1, j - i_ - 1));
      i_ = std::min(j + 1, s_.size());
      return e;
    }
    std::size_t j = i_;
    while (j < s_.size() && !std::isspace(static_cast<unsigned char>(s_[j])) && s_[j] != '(' &&
           s_[j] != ')') {
      ++j;
    }
    e.atom = std::string(s_.substr(i_, j - i_));
    i_ = j;
    return e;
  }

  std::string_view s_;
  std::size_t i_ = 0;
};

std::optional<std::uint64_t> parse_value(const SExpr& e) {
  if (!e.is_list) {
    const std::string& a = e.atom;
    if (a == "true") return 1;
    if (a == "false") return 0;
    if (a.size() > 2 && a[0] == '#' && (a[1] == 'x' || a[1] == 'b')) {
      std::uint64_t v = 0;
      const unsigned shift = a[1] == 'x' ? 4 : 1;
      for (std::size_t i = 2; i < a.size(); ++i) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(a[i])));
        unsigned d;
        if (c >= '0' && c <= '9') d = static_cast<unsigned>(c - '0');
        else if (c >= 'a' && c <= 'f') d = static_cast<unsigned>(c - 'a' + 10);
        else return std::nullopt;
        v = (v << shift) | d;
      }
      return v;
    }
    return std::nullopt;
  }
  // (_ bvN W)
  if (e.list.size() == 3 && !e.list[0].is_list && e.list[0].atom == "_" && !e.list[1].is_list &&
      e.list[1].atom.rfind("bv", 0) == 0) {
    try {
      return std::stoull(e.list[1].atom.substr(2));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void collect_model(const SExpr& e, SatResult& r) {
  if (!e.is_list) return;
  if (!e.list.empty() && !e.list[0].is_list && e.list[0].atom == "define-fun") {
    if (e.list.size() >= 5 && !e.list[1].is_list) {
      if (auto v = parse_value(e.list.back())) r.model[e.list[1].atom] = *v;
    }
    return;
  }
  if (!e.list.empty() && !e.list[0].is_list && !e.list[0].atom.empty() &&
      e.list[0].atom[0] == ':') {
    for (std::size_t i = 0; i + 1 < e.list.size(); i += 2) {
      if (e.list[i].is_list) break;
      const SExpr& v = e.list[i + 1];
      r.stats[e.list[i].atom.substr(1)] = v.is_list ? "(...)" : v.atom;
    }
    return;
  }
  for (const auto& k : e.list) collect_model(k, r);
}

}  // namespace

SatResult parse_solver_output(const std::string& output) {
  SatResult r;
  SExprReader reader(output);
  bool have_status = false;
  for (SExpr e; reader.next(e);) {
    if (!have_status && !e.is_list) {
      if (e.atom == "sat" || e.atom == "unsat" || e.atom == "unknown") {
        r.status = e.atom == "sat" ? SatStatus::Sat
                   : e.atom == "unsat" ? SatStatus::Unsat
                                       : SatStatus::Unknown;
        have_status = true;
        continue;
      }
    }
    if (e.is_list && !e.list.empty() && !e.list[0].is_list && e.list[0].atom == "error") {
      // get-model after unsat is rejected by some solvers; not a failure.
      if (!have_status) {
        std::string msg = e.list.size() > 1 ? e.list[1].atom : "error";
        throw SolverCrash("solver error: " + msg);
      }
      continue;
    }
    if (have_status) collect_model(e, r);
  }
  if (!have_status) throw SolverCrash("solver produced no status line");
  if (r.status == SatStatus::Unknown) {
    auto it = r.stats.find("reason-unknown");
    r.reason = it != r.stats.end() ? it->second : "unknown";
    if (r.reason.size() >= 2 && r.reason.front() == '"' && r.reason.back() == '"') {
      r.reason = r.reason.substr(1, r.reason.size() - 2);
    }
  }
  return r;
}

SatResult solve(const std::string& smtlib, const SolverConfig& config) {
  auto path = locate_solver(config);
  if (!path) throw SolverCrash("solver not found: " + config.cmd);

  char tmpl[] = "/tmp/ownir-XXXXXX.smt2";
  int fd = ::mkstemps(tmpl, 5);
  if (fd < 0) throw SolverCrash(std::string("cannot create temp file: ") + std::strerror(errno));
  {
    std::size_t off = 0;
    while (off < smtlib.size()) {
      ssize_t n = ::write(fd, smtlib.data() + off, smtlib.size() - off);
      if (n <= 0) {
        ::close(fd);
        ::unlink(tmpl);
        throw SolverCrash("cannot write temp file");
      }
      off += static_cast<std::size_t>(n);
    }
    ::close(fd);
  }
  const std::string file = tmpl;

  std::vector<std::string> argv_s{*path};
  argv_s.insert(argv_s.end(), config.args.begin(), config.args.end());
  argv_s.push_back(file);
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);

  int pipefd[2];
  if (::pipe2(pipefd, O_CLOEXEC) != 0) {
    ::unlink(file.c_str());
    throw SolverCrash("pipe failed");
  }
  const auto start = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    ::unlink(file.c_str());
    throw SolverCrash("fork failed");
  }
  if (pid == 0) {
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::dup2(pipefd[1], STDERR_FILENO);
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  ::close(pipefd[1]);

  std::string output;
  bool timed_out = false;
  const auto deadline = start + std::chrono::duration<double>(config.timeout_secs);
  char buf[4096];
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    const int wait_ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1);
    pollfd p{pipefd[0], POLLIN, 0};
    int rc = ::poll(&p, 1, std::min(wait_ms, 1000));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) break;
    if (rc == 0) continue;
    ssize_t n = ::read(pipefd[0], buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    output.append(buf, static_cast<std::size_t>(n));
  }
  if (timed_out) ::kill(pid, SIGKILL);
  ::close(pipefd[0]);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  ::unlink(file.c_str());
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  if (timed_out) throw SolverTimeout("solver exceeded " + std::to_string(config.timeout_secs) + " s");
  SatResult r;
  try {
    r = parse_solver_output(output);
  } catch (const SolverCrash& e) {
    std::string detail = output.substr(0, 400);
    if (WIFEXITED(status) && WEXITSTATUS(status) == 127) detail = "could not execute " + *path;
    throw SolverCrash(std::string(e.what()) + ": " + detail);
  }
  r.wall_ms = wall_ms;
  return r;
}

}  // namespace ownir
