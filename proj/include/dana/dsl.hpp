#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dana/ast.hpp"
#include "dana/shape.hpp"

// Textual UDF language (.dana files).
//
//   model w[10];
//   input x[10];
//   output y;
//   meta lr = 0.01;
//   algo linearR {
//     update {
//       err = sigma(w * x, 1) - y;
//       grad = err * x;
//       w_up = w - lr * grad;
//       setModel(w_up);
//     }
//     merge { merge(grad, 16, "+"); }
//     terminator { setEpochs(10); }
//   }

namespace dana::dsl {

namespace detail {

struct Token {
  enum class Kind { Ident, Number, String, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  double number = 0.0;
  SourcePos pos;
};

inline std::string describe(const Token& t) {
  switch (t.kind) {
    case Token::Kind::End: return "end of input";
    case Token::Kind::String: return "\"" + t.text + "\"";
    default: return "'" + t.text + "'";
  }
}

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }
    if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    Token t;
    t.pos = {line, col};
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      t.kind = Token::Kind::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      t.kind = Token::Kind::Number;
      t.text = std::string(src.substr(i, j - i));
      if (!parse_double(t.text, t.number))
        throw DiagnosticError(t.pos, "malformed number '" + t.text + "'");
      advance(j - i);
    } else if (c == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') ++j;
      if (j >= src.size() || src[j] != '"') throw DiagnosticError(t.pos, "unterminated string");
      t.kind = Token::Kind::String;
      t.text = std::string(src.substr(i + 1, j - i - 1));
      advance(j - i + 1);
    } else if (c == '=' && i + 1 < src.size() && src[i + 1] == '=') {
      t.kind = Token::Kind::Punct;
      t.text = "==";
      advance(2);
    } else if (std::string_view("{}[]();,=+-*/<>").find(c) != std::string_view::npos) {
      t.kind = Token::Kind::Punct;
      t.text = std::string(1, c);
      advance(1);
    } else {
      throw DiagnosticError(t.pos, std::string("unexpected character '") + c + "'");
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.pos = {line, col};
  out.push_back(end);
  return out;
}

inline std::optional<DeclKind> decl_kind(const std::string& s) {
  if (s == "input") return DeclKind::Input;
  if (s == "output") return DeclKind::Output;
  if (s == "model") return DeclKind::Model;
  if (s == "meta") return DeclKind::Meta;
  if (s == "inter") return DeclKind::Inter;
  return std::nullopt;
}

inline std::optional<NonlinearOp> nonlinear_op(const std::string& s) {
  if (s == "sigmoid") return NonlinearOp::Sigmoid;
  if (s == "gaussian") return NonlinearOp::Gaussian;
  if (s == "sqrt") return NonlinearOp::Sqrt;
  if (s == "exp") return NonlinearOp::Exp;
  if (s == "log") return NonlinearOp::Log;
  if (s == "abs") return NonlinearOp::Abs;
  return std::nullopt;
}

inline std::optional<GroupOp> group_op(const std::string& s) {
  if (s == "sigma") return GroupOp::Sigma;
  if (s == "pi") return GroupOp::Pi;
  if (s == "norm") return GroupOp::Norm;
  return std::nullopt;
}

inline bool is_builtin(const std::string& s) {
  return s == "merge" || s == "setEpochs" || s == "setConvergence" || s == "setModel";
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  SourceUnit parse_unit() {
    SourceUnit unit;
    std::set<std::string> names;
    bool seen_algo = false;
    while (peek().kind != Token::Kind::End) {
      if (peek().kind == Token::Kind::Ident && peek().text == "algo") {
        if (seen_algo) throw DiagnosticError(peek().pos, "duplicate algo construct");
        seen_algo = true;
        parse_algo(unit, names);
      } else if (peek().kind == Token::Kind::Ident && decl_kind(peek().text)) {
        unit.declarations.push_back(parse_decl(names));
      } else {
        fail_expected("declaration or 'algo'");
      }
    }
    if (!seen_algo) throw DiagnosticError(peek().pos, "no algo construct");
    return unit;
  }

 private:
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  Token take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void fail_expected(const std::string& what) const {
    throw DiagnosticError(peek().pos, "expected " + what + " but found " + describe(peek()));
  }

  bool accept(const char* punct) {
    if (peek().kind == Token::Kind::Punct && peek().text == punct) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(const char* punct) {
    if (!accept(punct)) fail_expected(std::string("'") + punct + "'");
  }

  Token expect_ident() {
    if (peek().kind != Token::Kind::Ident) fail_expected("identifier");
    return take();
  }

  int expect_int(const std::string& what) {
    if (peek().kind != Token::Kind::Number) fail_expected(what);
    Token t = take();
    std::int64_t v = 0;
    if (!parse_int64(t.text, v)) throw DiagnosticError(t.pos, what + " must be an integer");
    if (v > 1'000'000'000) throw DiagnosticError(t.pos, what + " is too large");
    return static_cast<int>(v);
  }

  double expect_signed_number() {
    bool neg = accept("-");
    if (peek().kind != Token::Kind::Number) fail_expected("number");
    double v = take().number;
    return neg ? -v : v;
  }

  Declaration parse_decl(std::set<std::string>& names) {
    Token kw = take();
    Declaration d;
    d.kind = *decl_kind(kw.text);
    d.pos = kw.pos;
    Token name = expect_ident();
    d.name = name.text;
    if (decl_kind(d.name) || d.name == "algo")
      throw DiagnosticError(name.pos, "'" + d.name + "' is a reserved word");
    while (accept("[")) {
      SourcePos p = peek().pos;
      int n = expect_int("dimension");
      if (n < 1) throw DiagnosticError(p, "dimension must be >= 1");
      d.dims.push_back(n);
      expect("]");
    }
    if (accept("=")) {
      if (accept("{")) {
        d.init.push_back(expect_signed_number());
        while (accept(",")) d.init.push_back(expect_signed_number());
        expect("}");
      } else {
        d.init.push_back(expect_signed_number());
      }
    }
    expect(";");
    if (!names.insert(d.name).second)
      throw DiagnosticError(name.pos, "duplicate declaration of '" + d.name + "'");
    return d;
  }

  void parse_algo(SourceUnit& unit, std::set<std::string>& names) {
    take();
    unit.algo = expect_ident().text;
    expect("{");
    std::set<BlockKind> seen;
    while (!accept("}")) {
      if (peek().kind != Token::Kind::Ident) fail_expected("block or declaration");
      if (decl_kind(peek().text)) {
        unit.declarations.push_back(parse_decl(names));
        continue;
      }
      Token kw = take();
      Block b;
      b.pos = kw.pos;
      if (kw.text == "update") b.kind = BlockKind::Update;
      else if (kw.text == "merge") b.kind = BlockKind::Merge;
      else if (kw.text == "terminator") b.kind = BlockKind::Terminator;
      else throw DiagnosticError(kw.pos, "unknown construct '" + kw.text + "'");
      if (!seen.insert(b.kind).second)
        throw DiagnosticError(kw.pos, std::string("duplicate ") + to_string(b.kind) + " block");
      expect("{");
      while (!accept("}")) b.statements.push_back(parse_statement());
      unit.blocks.push_back(std::move(b));
    }
  }

  Statement parse_statement() {
    Token name = expect_ident();
    Statement s;
    s.pos = name.pos;
    s.target = name.text;
    if (accept("=")) {
      s.kind = Statement::Kind::Assign;
      s.expr = parse_expr();
    } else if (peek().kind == Token::Kind::Punct && peek().text == "(") {
      if (!is_builtin(name.text))
        throw DiagnosticError(name.pos, "unknown construct '" + name.text + "'");
      take();
      s.kind = Statement::Kind::Call;
      if (!accept(")")) {
        do {
          CallArg a;
          a.pos = peek().pos;
          if (peek().kind == Token::Kind::Ident) {
            a.kind = CallArg::Kind::Ident;
            a.text = take().text;
          } else if (peek().kind == Token::Kind::String) {
            a.kind = CallArg::Kind::String;
            a.text = take().text;
          } else if (peek().kind == Token::Kind::Number) {
            a.kind = CallArg::Kind::Number;
            a.number = take().number;
          } else {
            fail_expected("argument");
          }
          s.args.push_back(std::move(a));
        } while (accept(","));
        expect(")");
      }
    } else {
      fail_expected("'=' or '('");
    }
    expect(";");
    return s;
  }

  ExprPtr parse_expr() {
    ExprPtr lhs = parse_additive();
    SourcePos p = peek().pos;
    if (accept("<")) return Expr::make_binary(BinaryOp::Lt, lhs, parse_additive(), p);
    if (accept(">")) return Expr::make_binary(BinaryOp::Gt, lhs, parse_additive(), p);
    if (accept("==")) return Expr::make_binary(BinaryOp::Eq, lhs, parse_additive(), p);
    return lhs;
  }

  ExprPtr parse_additive() {
    ExprPtr lhs = parse_term();
    for (;;) {
      SourcePos p = peek().pos;
      if (accept("+")) lhs = Expr::make_binary(BinaryOp::Add, lhs, parse_term(), p);
      else if (accept("-")) lhs = Expr::make_binary(BinaryOp::Sub, lhs, parse_term(), p);
      else return lhs;
    }
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_unary();
    for (;;) {
      SourcePos p = peek().pos;
      if (accept("*")) lhs = Expr::make_binary(BinaryOp::Mul, lhs, parse_unary(), p);
      else if (accept("/")) lhs = Expr::make_binary(BinaryOp::Div, lhs, parse_unary(), p);
      else return lhs;
    }
  }

  ExprPtr parse_unary() {
    SourcePos p = peek().pos;
    if (accept("-")) return Expr::make_negate(parse_unary(), p);
    return parse_primary();
  }

  ExprPtr parse_primary() {
    const Token& t = peek();
    if (t.kind == Token::Kind::Number) {
      Token n = take();
      return Expr::make_literal(n.number, n.pos);
    }
    if (accept("(")) {
      ExprPtr e = parse_expr();
      expect(")");
      return e;
    }
    if (t.kind != Token::Kind::Ident) fail_expected("expression");
    Token name = take();
    if (!(peek().kind == Token::Kind::Punct && peek().text == "("))
      return Expr::make_var(name.text, name.pos);
    take();
    if (auto op = nonlinear_op(name.text)) {
      ExprPtr a = parse_expr();
      expect(")");
      return Expr::make_nonlinear(*op, a, name.pos);
    }
    if (auto op = group_op(name.text)) {
      ExprPtr a = parse_expr();
      expect(",");
      SourcePos ap = peek().pos;
      int axis = expect_int("axis constant");
      if (axis < 1) throw DiagnosticError(ap, "axis must be >= 1");
      expect(")");
      return Expr::make_group(*op, a, axis, name.pos);
    }
    throw DiagnosticError(name.pos, "unknown function '" + name.text + "'");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

inline std::string print_expr(const Expr& e, bool nested) {
  using K = Expr::Kind;
  switch (e.kind) {
    case K::Literal:
      return format_double(e.value);
    case K::VarRef:
      return e.name;
    case K::Negate: {
      const Expr& a = *e.args[0];
      bool wrap = a.kind == K::Binary || a.kind == K::Negate;
      return "-" + (wrap ? "(" + print_expr(a, false) + ")" : print_expr(a, false));
    }
    case K::Nonlinear:
      return std::string(to_string(e.nonlinear)) + "(" + print_expr(*e.args[0], false) + ")";
    case K::Group:
      return std::string(to_string(e.group)) + "(" + print_expr(*e.args[0], false) + ", " +
             std::to_string(e.axis) + ")";
    case K::Binary: {
      std::string s = print_expr(*e.args[0], true) + " " + to_string(e.binary) + " " +
                      print_expr(*e.args[1], true);
      return nested ? "(" + s + ")" : s;
    }
  }
  return "";
}

}  // namespace detail

/// Parses `.dana` source text. Throws DiagnosticError with positions.
inline SourceUnit parse(std::string_view source) {
  detail::Parser p(detail::lex(source));
  return p.parse_unit();
}

inline std::string print_declaration(const Declaration& d) {
  std::string s = std::string(to_string(d.kind)) + " " + d.name;
  for (int n : d.dims) s += "[" + std::to_string(n) + "]";
  if (d.init.size() == 1) {
    s += " = " + format_double(d.init[0]);
  } else if (!d.init.empty()) {
    s += " = {";
    for (std::size_t i = 0; i < d.init.size(); ++i)
      s += (i ? ", " : "") + format_double(d.init[i]);
    s += "}";
  }
  return s + ";";
}

inline std::string print_expr(const Expr& e) { return detail::print_expr(e, false); }

/// Canonical source text; parse(print(u)) is structurally identical to u.
inline std::string print(const SourceUnit& unit) {
  std::string out;
  for (const auto& d : unit.declarations)
    if (!d.implicit) out += print_declaration(d) + "\n";
  out += "algo " + unit.algo + " {\n";
  for (const auto& b : unit.blocks) {
    out += std::string("  ") + to_string(b.kind) + " {\n";
    for (const auto& s : b.statements) {
      out += "    ";
      if (s.kind == Statement::Kind::Assign) {
        out += s.target + " = " + print_expr(*s.expr) + ";\n";
      } else {
        out += s.target + "(";
        for (std::size_t i = 0; i < s.args.size(); ++i) {
          const auto& a = s.args[i];
          if (i) out += ", ";
          if (a.kind == CallArg::Kind::Ident) out += a.text;
          else if (a.kind == CallArg::Kind::String) out += "\"" + a.text + "\"";
          else out += format_double(a.number);
        }
        out += ");\n";
      }
    }
    out += "  }\n";
  }
  out += "}\n";
  return out;
}

namespace detail {

inline void collect_refs(const Expr& e, std::vector<const Expr*>& out) {
  if (e.kind == Expr::Kind::VarRef) out.push_back(&e);
  for (const auto& a : e.args) collect_refs(*a, out);
}

inline int require_int_arg(const Statement& s, std::size_t i, const std::string& what) {
  if (i >= s.args.size() || s.args[i].kind != CallArg::Kind::Number)
    throw DiagnosticError(s.pos, s.target + ": expected " + what);
  double v = s.args[i].number;
  if (v != static_cast<double>(static_cast<std::int64_t>(v)) || std::abs(v) > 1e9)
    throw DiagnosticError(s.args[i].pos, s.target + ": " + what + " must be an integer");
  return static_cast<int>(v);
}

inline std::string require_ident_arg(const Statement& s, std::size_t i) {
  if (i >= s.args.size() || s.args[i].kind != CallArg::Kind::Ident)
    throw DiagnosticError(s.pos, s.target + ": expected a variable name");
  return s.args[i].text;
}

}  // namespace detail

/// Classifies every assigned variable: per-tuple, per-batch (reads the
/// merged value) or constant. Throws when a value mixes tuple and batch data.
inline std::map<std::string, ValueClass> classify(const TypedProgram& p) {
  std::map<std::string, ValueClass> cls;
  auto leaf_class = [&](const std::string& name, const std::string& reader) {
    if (name == p.merge.var && reader != p.merge.var) return ValueClass::Batch;
    if (auto it = cls.find(name); it != cls.end()) return it->second;
    const Declaration* d = p.find(name);
    if (d && (d->kind == DeclKind::Input || d->kind == DeclKind::Output)) return ValueClass::Tuple;
    return ValueClass::Constant;
  };
  for (const auto& a : p.assignments) {
    std::vector<const Expr*> refs;
    detail::collect_refs(*a.expr, refs);
    bool tuple = false;
    bool batch = false;
    for (const Expr* r : refs) {
      ValueClass c = leaf_class(r->name, a.target);
      tuple |= c == ValueClass::Tuple;
      batch |= c == ValueClass::Batch;
    }
    if (tuple && batch)
      throw DiagnosticError(a.pos, "'" + a.target +
                                       "' mixes per-tuple values with the merged value of '" +
                                       p.merge.var + "'");
    cls[a.target] = tuple ? ValueClass::Tuple : batch ? ValueClass::Batch : ValueClass::Constant;
  }
  return cls;
}

/// Resolves names, infers dims of intermediates, and checks built-ins.
inline TypedProgram validate(const SourceUnit& unit) {
  TypedProgram p;
  p.name = unit.algo;
  p.declarations = unit.declarations;

  for (auto& d : p.declarations) {
    std::size_t n = element_count(d.dims);
    switch (d.kind) {
      case DeclKind::Inter:
        if (!d.init.empty()) throw DiagnosticError(d.pos, "inter '" + d.name + "' cannot have an initializer");
        break;
      case DeclKind::Input:
      case DeclKind::Output:
        if (!d.init.empty())
          throw DiagnosticError(d.pos, std::string(to_string(d.kind)) + " '" + d.name +
                                           "' cannot have an initializer");
        break;
      case DeclKind::Meta:
        if (d.init.empty()) throw DiagnosticError(d.pos, "meta '" + d.name + "' needs a constant value");
        [[fallthrough]];
      case DeclKind::Model:
        if (!d.init.empty() && d.init.size() != 1 && d.init.size() != n)
          throw DiagnosticError(d.pos, "initializer of '" + d.name + "' has " +
                                           std::to_string(d.init.size()) + " values, expected 1 or " +
                                           std::to_string(n));
        for (double v : d.init)
          if (!std::isfinite(v)) throw DiagnosticError(d.pos, "initializer values must be finite");
        break;
    }
  }

  const Block* update = nullptr;
  for (const auto& b : unit.blocks)
    if (b.kind == BlockKind::Update) update = &b;
  if (!update) throw DiagnosticError(SourcePos{1, 1}, "algo '" + unit.algo + "' has no update block");

  std::map<std::string, Dims> assigned;
  std::set<std::string> later_targets;
  for (const auto& b : unit.blocks)
    for (const auto& s : b.statements)
      if (s.kind == Statement::Kind::Assign) later_targets.insert(s.target);

  auto lookup = [&](const std::string& name) -> std::optional<Dims> {
    if (auto it = assigned.find(name); it != assigned.end()) return it->second;
    if (const Declaration* d = p.find(name); d && d->kind != DeclKind::Inter) return d->dims;
    return std::nullopt;
  };

  std::optional<Statement> set_model, merge_call, set_epochs, set_conv;
  for (const auto& b : unit.blocks) {
    for (const auto& s : b.statements) {
      if (s.kind == Statement::Kind::Call) {
        auto& slot = s.target == "setModel" ? set_model
                     : s.target == "merge"  ? merge_call
                     : s.target == "setEpochs" ? set_epochs
                                               : set_conv;
        if (slot) throw DiagnosticError(s.pos, s.target + " given more than once");
        slot = s;
        continue;
      }
      const Declaration* d = p.find(s.target);
      if (d && d->kind != DeclKind::Inter)
        throw DiagnosticError(s.pos, std::string("cannot assign to ") + to_string(d->kind) + " '" +
                                         s.target + "'");
      if (assigned.count(s.target))
        throw DiagnosticError(s.pos, "'" + s.target + "' is assigned more than once");
      std::vector<const Expr*> refs;
      detail::collect_refs(*s.expr, refs);
      for (const Expr* r : refs) {
        if (lookup(r->name)) continue;
        if (r->name == s.target || later_targets.count(r->name))
          throw DiagnosticError(r->pos, "'" + r->name + "' used before assignment");
        throw DiagnosticError(r->pos, "unknown variable '" + r->name + "'");
      }
      Dims dims = shape::infer(*s.expr, lookup);
      if (d) {
        if (d->dims != dims)
          throw DiagnosticError(s.pos, "inter '" + s.target + "' declared " + dims_to_string(d->dims) +
                                           " but expression is " + dims_to_string(dims));
      } else {
        Declaration inter;
        inter.name = s.target;
        inter.kind = DeclKind::Inter;
        inter.dims = dims;
        inter.pos = s.pos;
        inter.implicit = true;
        p.declarations.push_back(inter);
      }
      assigned[s.target] = dims;
      p.assignments.push_back({s.target, s.expr, b.kind, s.pos});
    }
  }

  // setModel
  if (!set_model) throw DiagnosticError(SourcePos{1, 1}, "setModel missing");
  std::string updated = detail::require_ident_arg(*set_model, 0);
  if (set_model->args.size() != 1) throw DiagnosticError(set_model->pos, "setModel takes one argument");
  {
    const Declaration* d = p.find(updated);
    if (!d) throw DiagnosticError(set_model->pos, "setModel: unknown variable '" + updated + "'");
    if (d->kind != DeclKind::Inter)
      throw DiagnosticError(set_model->pos, "setModel target '" + updated + "' is a " +
                                                to_string(d->kind) +
                                                " variable, expected the updated model");
    if (!assigned.count(updated))
      throw DiagnosticError(set_model->pos, "setModel target '" + updated + "' is never assigned");
    std::vector<const Declaration*> models;
    for (const auto& m : p.declarations)
      if (m.kind == DeclKind::Model && m.dims == d->dims) models.push_back(&m);
    if (models.empty())
      throw DiagnosticError(set_model->pos, "setModel target '" + updated + "' (" +
                                                dims_to_string(d->dims) + ") matches no model variable");
    if (models.size() > 1)
      throw DiagnosticError(set_model->pos, "setModel target '" + updated +
                                                "' matches several model variables");
    p.model_var = models.front()->name;
    p.updated_var = updated;
  }

  // merge
  if (merge_call) {
    const Statement& m = *merge_call;
    if (m.args.size() != 3) throw DiagnosticError(m.pos, "merge takes (variable, coefficient, \"op\")");
    p.merge.var = detail::require_ident_arg(m, 0);
    p.merge.coefficient = detail::require_int_arg(m, 1, "coefficient");
    if (p.merge.coefficient < 1) throw DiagnosticError(m.args[1].pos, "merge coefficient must be >= 1");
    if (m.args[2].kind != CallArg::Kind::String) throw DiagnosticError(m.args[2].pos, "merge op must be a string");
    const std::string& op = m.args[2].text;
    if (op == "+") p.merge.op = MergeOp::Add;
    else if (op == "*") p.merge.op = MergeOp::Mul;
    else if (op == "min") p.merge.op = MergeOp::Min;
    else if (op == "max") p.merge.op = MergeOp::Max;
    else throw DiagnosticError(m.args[2].pos, "unknown merge op \"" + op + "\"");
    if (!assigned.count(p.merge.var))
      throw DiagnosticError(m.args[0].pos, "merge variable '" + p.merge.var + "' is never assigned");
    p.merge.explicit_merge = true;
  } else {
    p.merge = {p.updated_var, 1, MergeOp::Add, false};
  }

  // termination
  if (set_epochs && set_conv)
    throw DiagnosticError(set_conv->pos, "setEpochs and setConvergence are mutually exclusive");
  if (set_epochs) {
    p.termination.mode = TerminationSpec::Mode::Epochs;
    p.termination.epochs = detail::require_int_arg(*set_epochs, 0, "epoch count");
    if (p.termination.epochs < 1) throw DiagnosticError(set_epochs->pos, "epoch count must be >= 1");
  } else if (set_conv) {
    p.termination.mode = TerminationSpec::Mode::Condition;
    p.termination.condition_var = detail::require_ident_arg(*set_conv, 0);
    auto it = assigned.find(p.termination.condition_var);
    if (it == assigned.end())
      throw DiagnosticError(set_conv->pos, "convergence variable '" + p.termination.condition_var +
                                               "' is never assigned");
    if (!it->second.empty())
      throw DiagnosticError(set_conv->pos, "convergence variable '" + p.termination.condition_var +
                                               "' must be scalar, is " + dims_to_string(it->second));
  } else {
    throw DiagnosticError(SourcePos{1, 1}, "no termination: use setEpochs or setConvergence");
  }

  // per-tuple / merged separation
  auto cls = classify(p);
  if (p.updated_var != p.merge.var && cls.at(p.updated_var) == ValueClass::Tuple)
    throw DiagnosticError(set_model->pos, "model update '" + p.updated_var +
                                              "' depends on per-tuple values that are not merged");
  if (p.termination.mode == TerminationSpec::Mode::Condition &&
      p.termination.condition_var != p.merge.var &&
      cls.at(p.termination.condition_var) == ValueClass::Tuple)
    throw DiagnosticError(set_conv->pos, "convergence '" + p.termination.condition_var +
                                             "' depends on per-tuple values");
  return p;
}

/// parse + validate.
inline TypedProgram compile_source(std::string_view source) { return validate(parse(source)); }

/// Flattened offset of every input/output element inside a tuple: inputs
/// first, then outputs, both in declaration order.
struct TupleLayout {
  std::map<std::string, std::size_t> offset;
  std::size_t feature_count = 0;
  std::size_t label_count = 0;
};

inline TupleLayout tuple_layout(const TypedProgram& p) {
  TupleLayout t;
  std::size_t off = 0;
  for (const auto& d : p.declarations)
    if (d.kind == DeclKind::Input) {
      t.offset[d.name] = off;
      off += element_count(d.dims);
    }
  t.feature_count = off;
  for (const auto& d : p.declarations)
    if (d.kind == DeclKind::Output) {
      t.offset[d.name] = off;
      off += element_count(d.dims);
    }
  t.label_count = off - t.feature_count;
  return t;
}

/// Flattened offsets of model variables inside the model vector.
inline std::map<std::string, std::size_t> model_offsets(const TypedProgram& p, std::size_t* total = nullptr) {
  std::map<std::string, std::size_t> m;
  std::size_t off = 0;
  for (const auto& d : p.declarations)
    if (d.kind == DeclKind::Model) {
      m[d.name] = off;
      off += element_count(d.dims);
    }
  if (total) *total = off;
  return m;
}

inline std::vector<double> expand_init(const Declaration& d) {
  std::size_t n = element_count(d.dims);
  if (d.init.empty()) return std::vector<double>(n, 0.0);
  if (d.init.size() == 1) return std::vector<double>(n, d.init[0]);
  return d.init;
}

inline std::vector<double> initial_model(const TypedProgram& p) {
  std::vector<double> out;
  for (const auto& d : p.declarations)
    if (d.kind == DeclKind::Model) {
      auto v = expand_init(d);
      out.insert(out.end(), v.begin(), v.end());
    }
  return out;
}

}  // namespace dana::dsl
