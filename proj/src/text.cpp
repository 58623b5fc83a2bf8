#include "ownir/text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace ownir {

ParseError::ParseError(std::string message, SourceSpan span, std::set<std::string> expected)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << span.line << ":" << span.column << ": " << message;
        return os.str();
      }()),
      detail_(std::move(message)),
      span_(span),
      expected_(std::move(expected)) {}

namespace {

enum class Tok { Ident, Number, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::uint64_t value = 0;
  SourceSpan span;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::uint32_t line = 1, col = 1;
  std::size_t i = 0;
  auto here = [&] { return SourceSpan{line, col, static_cast<std::uint32_t>(i)}; };
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == ';') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t;
    t.span = here();
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      int base = 10;
      if (c == '0' && j + 1 < src.size() && (src[j + 1] == 'x' || src[j + 1] == 'X')) {
        base = 16;
        j += 2;
      }
      const std::size_t digits = j;
      while (j < src.size() && std::isxdigit(static_cast<unsigned char>(src[j]))) ++j;
      std::string_view body = src.substr(digits, j - digits);
      if (body.empty()) throw ParseError("malformed number", t.span, {"number"});
      std::uint64_t v = 0;
      for (char d : body) {
        unsigned dv;
        if (std::isdigit(static_cast<unsigned char>(d))) {
          dv = static_cast<unsigned>(d - '0');
        } else {
          dv = static_cast<unsigned>(std::tolower(static_cast<unsigned char>(d)) - 'a' + 10);
        }
        if (dv >= static_cast<unsigned>(base)) throw ParseError("malformed number", t.span, {"number"});
        const std::uint64_t next = v * static_cast<std::uint64_t>(base) + dv;
        if ((next - dv) / static_cast<std::uint64_t>(base) != v) {
          throw ParseError("integer literal out of range", t.span, {"number"});
        }
        v = next;
      }
      if (j < src.size() && ident_char(src[j])) throw ParseError("malformed number", t.span, {"number"});
      t.kind = Tok::Number;
      t.value = v;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else {
      static constexpr std::string_view two[] = {"<<", ">>", "==", "!=", "<=", ">=", "&&", "||"};
      t.kind = Tok::Punct;
      bool matched = false;
      if (i + 1 < src.size()) {
        for (auto op : two) {
          if (src.substr(i, 2) == op) {
            t.text = std::string(op);
            matched = true;
            break;
          }
        }
      }
      if (!matched) {
        static constexpr std::string_view one = "=,:()[]{}+-*&|^<>";
        if (one.find(c) == std::string_view::npos) {
          std::string shown = std::isprint(static_cast<unsigned char>(c))
                                  ? std::string(1, c)
                                  : "\\x" + std::to_string(static_cast<unsigned char>(c));
          throw ParseError("unexpected character '" + shown + "'", t.span, {});
        }
        t.text = std::string(1, c);
      }
      advance(t.text.size());
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Tok::End;
  end.span = here();
  out.push_back(end);
  return out;
}

std::optional<RegKind> register_kind(std::string_view s) {
  if (s.empty()) return std::nullopt;
  RegKind k;
  switch (s[0]) {
    case 'r': k = RegKind::Scalar; break;
    case 'p':
    case 'q':
    case 'c':
      k = RegKind::Pointer;
      break;
    case 'm': k = RegKind::Memory; break;
    default: return std::nullopt;
  }
  if (s.size() == 1) return k;
  if (!(std::isdigit(static_cast<unsigned char>(s[1])) || s[1] == '_')) return std::nullopt;
  for (char c : s.substr(1)) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return std::nullopt;
  }
  return k;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(lex(src)) {}

  Program program() {
    Program p;
    expect_ident("fun");
    p.name = expect_kind(Tok::Ident, "function name").text;
    expect_punct("(");
    expect_punct(")");
    for (;;) {
      if (at_ident("width")) {
        next();
        const Token& t = expect_kind(Tok::Number, "width");
        if (t.value < 1 || t.value > 64) throw ParseError("width must be in 1..64", t.span, {"width"});
        p.word_width = static_cast<unsigned>(t.value);
      } else if (at_ident("level")) {
        next();
        const Token& t = expect_kind(Tok::Ident, "level");
        if (t.text == "m1") p.level = Level::M1;
        else if (t.text == "m2") p.level = Level::M2;
        else if (t.text == "m3") p.level = Level::M3;
        else throw ParseError("unknown level '" + t.text + "'", t.span, {"m1", "m2", "m3"});
      } else {
        break;
      }
    }
    width_ = p.word_width;
    expect_punct("{");
    while (!at_punct("}")) p.blocks.push_back(block());
    next();
    if (peek().kind != Tok::End) fail({"end of input"});
    if (p.blocks.empty()) throw ParseError("function has no blocks", peek().span, {"label"});
    return p;
  }

 private:
  const Token& peek(std::size_t k = 0) const {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool at_ident(std::string_view s) const { return peek().kind == Tok::Ident && peek().text == s; }
  bool at_punct(std::string_view s) const { return peek().kind == Tok::Punct && peek().text == s; }

  [[noreturn]] void fail(std::set<std::string> expected) const {
    const Token& t = peek();
    std::string got = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    std::string list;
    for (const auto& e : expected) list += (list.empty() ? "" : " or ") + e;
    throw ParseError("expected " + list + ", found " + got, t.span, std::move(expected));
  }

  void expect_ident(std::string_view s) {
    if (!at_ident(s)) fail({std::string(s)});
    next();
  }
  void expect_punct(std::string_view s) {
    if (!at_punct(s)) fail({std::string(s)});
    next();
  }
  const Token& expect_kind(Tok kind, std::string what) {
    if (peek().kind != kind) fail({std::move(what)});
    return next();
  }

  bool at_register() const {
    return peek().kind == Tok::Ident && register_kind(peek().text).has_value();
  }

  Reg reg() {
    if (!at_register()) fail({"register"});
    const Token& t = next();
    return Reg{*register_kind(t.text), t.text};
  }

  Operand operand() {
    if (peek().kind == Tok::Number) return Imm{next().value};
    if (at_ident("true")) {
      next();
      return Imm{1};
    }
    if (at_ident("false")) {
      next();
      return Imm{0};
    }
    if (at_register()) return reg();
    fail({"register", "literal"});
  }

  std::string label() {
    const Token& t = expect_kind(Tok::Ident, "label");
    return t.text;
  }

  BasicBlock block() {
    BasicBlock b;
    if (peek().kind != Tok::Ident || !(peek(1).kind == Tok::Punct && peek(1).text == ":")) {
      fail({"label"});
    }
    b.label = next().text;
    next();
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::Ident && (t.text == "br" || t.text == "halt")) {
        b.term = terminator();
        return b;
      }
      if (t.kind == Tok::Punct && t.text == "}") fail({"br", "halt"});
      if (t.kind == Tok::End) fail({"br", "halt", "instruction"});
      statement(b);
    }
  }

  Terminator terminator() {
    Terminator term;
    term.span = peek().span;
    if (at_ident("halt")) {
      next();
      term.kind = Terminator::Kind::Halt;
      return term;
    }
    next();  // br
    if (peek().kind == Tok::Ident && !(peek(1).kind == Tok::Punct && peek(1).text == ",")) {
      term.kind = Terminator::Kind::Br;
      term.target = label();
      return term;
    }
    term.kind = Terminator::Kind::CondBr;
    term.cond = operand();
    expect_punct(",");
    term.target = label();
    expect_punct(",");
    term.else_target = label();
    return term;
  }

  void optional_comma() {
    if (at_punct(",")) next();
  }

  void guard(Instr& in) {
    if (at_ident("if")) {
      next();
      in.guard = reg();
    }
  }

  void statement(BasicBlock& b) {
    const SourceSpan span = peek().span;
    Instr in;
    in.span = span;
    if (at_ident("die") || at_ident("assume") || at_ident("assert")) {
      in.op = *op_from_mnemonic(peek().text);
      next();
      in.args.push_back(operand());
      guard(in);
      b.body.push_back(std::move(in));
      return;
    }
    std::vector<Reg> defs{reg()};
    while (at_punct(",")) {
      next();
      defs.push_back(reg());
    }
    expect_punct("=");

    if (at_ident("phi")) {
      if (defs.size() != 1) throw ParseError("phi defines exactly one register", span, {"="});
      if (!b.body.empty()) throw ParseError("phi after a non-phi instruction", span, {"instruction"});
      next();
      Phi phi;
      phi.def = defs[0];
      phi.span = span;
      do {
        if (!phi.incoming.empty()) next();
        expect_punct("[");
        PhiIncoming inc;
        inc.value = operand();
        expect_punct(",");
        inc.label = label();
        expect_punct("]");
        phi.incoming.push_back(std::move(inc));
      } while (at_punct(","));
      b.phis.push_back(std::move(phi));
      return;
    }

    in.defs = std::move(defs);
    if (peek().kind == Tok::Ident && !at_register() && !at_ident("true") && !at_ident("false")) {
      const Token& t = next();
      const std::string m = t.text;
      if (m == "nd_char" || m == "nd_bool" || m == "nd_size_t" || m == "nondet") {
        in.op = Op::Nondet;
        if (m == "nondet") {
          const Token& n = expect_kind(Tok::Number, "bit width");
          if (n.value < 1 || n.value > 64) throw ParseError("bad nondet width", n.span, {"1..64"});
          in.bits = static_cast<std::uint32_t>(n.value);
        } else {
          expect_punct("(");
          expect_punct(")");
          in.bits = m == "nd_char" ? 8u : m == "nd_bool" ? 1u : width_;
          in.bits = std::min<std::uint32_t>(in.bits, width_);
        }
      } else if (m == "not") {
        in.op = Op::Not;
        in.args.push_back(operand());
      } else if (m == "select") {
        in.op = Op::Select;
        in.args.push_back(operand());
        optional_comma();
        in.args.push_back(operand());
        optional_comma();
        in.args.push_back(operand());
      } else if (auto op = op_from_mnemonic(m)) {
        in.op = *op;
        if (in.op == Op::MemInit && at_punct("(")) {
          next();
          expect_punct(")");
        }
        const std::size_t n = op_info(in.op).args.size();
        for (std::size_t k = 0; k < n; ++k) {
          if (k > 0) optional_comma();
          in.args.push_back(operand());
        }
      } else {
        throw ParseError("unknown instruction '" + m + "'", t.span, {"instruction"});
      }
    } else {
      Operand a = operand();
      if (peek().kind == Tok::Punct) {
        if (auto bop = binop_from_symbol(peek().text)) {
          next();
          in.op = Op::Binary;
          in.binop = *bop;
          in.args = {std::move(a), operand()};
          guard(in);
          b.body.push_back(std::move(in));
          return;
        }
      }
      in.op = Op::Mov;
      in.args = {std::move(a)};
    }
    guard(in);
    b.body.push_back(std::move(in));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  unsigned width_ = 64;
};

std::string operand_text(const Operand& o) {
  if (is_reg(o)) return as_reg(o).name;
  return std::to_string(std::get<Imm>(o).value);
}

}  // namespace

Program parse(std::string_view text) {
  Parser p(text);
  return p.program();
}

std::string print_instr(const Instr& in) {
  std::string s;
  for (std::size_t k = 0; k < in.defs.size(); ++k) {
    if (k) s += ", ";
    s += in.defs[k].name;
  }
  if (!in.defs.empty()) s += " = ";
  auto join_args = [&](std::size_t from) {
    for (std::size_t k = from; k < in.args.size(); ++k) {
      s += k == from ? " " : ", ";
      s += operand_text(in.args[k]);
    }
  };
  switch (in.op) {
    case Op::Mov:
      s += operand_text(in.args.at(0));
      break;
    case Op::Binary:
      s += operand_text(in.args.at(0));
      s += " ";
      s += binop_symbol(in.binop);
      s += " ";
      s += operand_text(in.args.at(1));
      break;
    case Op::Nondet:
      s += "nondet " + std::to_string(in.bits);
      break;
    case Op::MemInit:
      s += "mem.init()";
      break;
    default:
      s += op_info(in.op).mnemonic;
      join_args(0);
      break;
  }
  if (in.guard) s += " if " + in.guard->name;
  return s;
}

std::string print(const Program& program) {
  std::ostringstream os;
  os << "fun " << program.name << "()";
  if (program.word_width != 64) os << " width " << program.word_width;
  if (program.level != Level::M1) os << " level " << level_name(program.level);
  os << " {\n";
  for (const auto& b : program.blocks) {
    os << b.label << ":\n";
    for (const auto& phi : b.phis) {
      os << "  " << phi.def.name << " = phi ";
      for (std::size_t k = 0; k < phi.incoming.size(); ++k) {
        if (k) os << ", ";
        os << "[" << operand_text(phi.incoming[k].value) << ", " << phi.incoming[k].label << "]";
      }
      os << "\n";
    }
    for (const auto& in : b.body) os << "  " << print_instr(in) << "\n";
    switch (b.term.kind) {
      case Terminator::Kind::Halt:
        os << "  halt\n";
        break;
      case Terminator::Kind::Br:
        os << "  br " << b.term.target << "\n";
        break;
      case Terminator::Kind::CondBr:
        os << "  br " << operand_text(b.term.cond) << ", " << b.term.target << ", "
           << b.term.else_target << "\n";
        break;
    }
  }
  os << "}\n";
  return os.str();
}

Program parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace ownir
