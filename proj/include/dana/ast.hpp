#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dana/common.hpp"

namespace dana::dsl {

struct SourcePos {
  int line = 0;
  int col = 0;
};

enum class DeclKind { Input, Output, Model, Meta, Inter };

inline const char* to_string(DeclKind k) {
  switch (k) {
    case DeclKind::Input: return "input";
    case DeclKind::Output: return "output";
    case DeclKind::Model: return "model";
    case DeclKind::Meta: return "meta";
    case DeclKind::Inter: return "inter";
  }
  return "?";
}

struct Declaration {
  std::string name;
  DeclKind kind = DeclKind::Inter;
  Dims dims;
  /// One value per element, or a single value filling every element.
  std::vector<double> init;
  SourcePos pos;
  /// Created by validation for an undeclared assignment target.
  bool implicit = false;

  bool operator==(const Declaration& o) const {
    return name == o.name && kind == o.kind && dims == o.dims && init == o.init &&
           implicit == o.implicit;
  }
};

enum class BinaryOp { Add, Sub, Mul, Div, Gt, Lt, Eq };
enum class NonlinearOp { Sigmoid, Gaussian, Sqrt, Exp, Log, Abs };
enum class GroupOp { Sigma, Pi, Norm };

inline const char* to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Eq: return "==";
  }
  return "?";
}

inline const char* to_string(NonlinearOp op) {
  switch (op) {
    case NonlinearOp::Sigmoid: return "sigmoid";
    case NonlinearOp::Gaussian: return "gaussian";
    case NonlinearOp::Sqrt: return "sqrt";
    case NonlinearOp::Exp: return "exp";
    case NonlinearOp::Log: return "log";
    case NonlinearOp::Abs: return "abs";
  }
  return "?";
}

inline const char* to_string(GroupOp op) {
  switch (op) {
    case GroupOp::Sigma: return "sigma";
    case GroupOp::Pi: return "pi";
    case GroupOp::Norm: return "norm";
  }
  return "?";
}

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Binary, Nonlinear, Group, VarRef, Literal, Negate };

  Kind kind = Kind::Literal;
  BinaryOp binary = BinaryOp::Add;
  NonlinearOp nonlinear = NonlinearOp::Abs;
  GroupOp group = GroupOp::Sigma;
  int axis = 0;  // 1-based, group ops only
  std::string name;
  double value = 0.0;
  std::vector<ExprPtr> args;
  SourcePos pos;

  static ExprPtr make_binary(BinaryOp op, ExprPtr a, ExprPtr b, SourcePos pos) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Binary;
    e->binary = op;
    e->args = {std::move(a), std::move(b)};
    e->pos = pos;
    return e;
  }
  static ExprPtr make_nonlinear(NonlinearOp op, ExprPtr a, SourcePos pos) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Nonlinear;
    e->nonlinear = op;
    e->args = {std::move(a)};
    e->pos = pos;
    return e;
  }
  static ExprPtr make_group(GroupOp op, ExprPtr a, int axis, SourcePos pos) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Group;
    e->group = op;
    e->axis = axis;
    e->args = {std::move(a)};
    e->pos = pos;
    return e;
  }
  static ExprPtr make_var(std::string name, SourcePos pos) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::VarRef;
    e->name = std::move(name);
    e->pos = pos;
    return e;
  }
  static ExprPtr make_literal(double v, SourcePos pos) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Literal;
    e->value = v;
    e->pos = pos;
    return e;
  }
  static ExprPtr make_negate(ExprPtr a, SourcePos pos) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Negate;
    e->args = {std::move(a)};
    e->pos = pos;
    return e;
  }
};

/// Structural equality; source positions are ignored.
inline bool same_structure(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case Expr::Kind::Binary:
      if (a.binary != b.binary) return false;
      break;
    case Expr::Kind::Nonlinear:
      if (a.nonlinear != b.nonlinear) return false;
      break;
    case Expr::Kind::Group:
      if (a.group != b.group || a.axis != b.axis) return false;
      break;
    case Expr::Kind::VarRef:
      if (a.name != b.name) return false;
      break;
    case Expr::Kind::Literal:
      if (a.value != b.value) return false;
      break;
    case Expr::Kind::Negate:
      break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!same_structure(*a.args[i], *b.args[i])) return false;
  return true;
}

/// Argument of a built-in call: identifier, number or string literal.
struct CallArg {
  enum class Kind { Ident, Number, String };
  Kind kind = Kind::Ident;
  std::string text;
  double number = 0.0;
  SourcePos pos;

  bool operator==(const CallArg& o) const {
    return kind == o.kind && text == o.text && number == o.number;
  }
};

struct Statement {
  enum class Kind { Assign, Call };
  Kind kind = Kind::Assign;
  std::string target;  // assignment target or built-in name
  ExprPtr expr;
  std::vector<CallArg> args;
  SourcePos pos;
};

enum class BlockKind { Update, Merge, Terminator };

inline const char* to_string(BlockKind b) {
  switch (b) {
    case BlockKind::Update: return "update";
    case BlockKind::Merge: return "merge";
    case BlockKind::Terminator: return "terminator";
  }
  return "?";
}

struct Block {
  BlockKind kind = BlockKind::Update;
  std::vector<Statement> statements;
  SourcePos pos;
};

/// Parsed but unvalidated UDF.
struct SourceUnit {
  std::vector<Declaration> declarations;
  std::string algo;
  std::vector<Block> blocks;
};

inline bool same_structure(const SourceUnit& a, const SourceUnit& b) {
  if (a.algo != b.algo || a.declarations != b.declarations || a.blocks.size() != b.blocks.size())
    return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto& x = a.blocks[i];
    const auto& y = b.blocks[i];
    if (x.kind != y.kind || x.statements.size() != y.statements.size()) return false;
    for (std::size_t j = 0; j < x.statements.size(); ++j) {
      const auto& s = x.statements[j];
      const auto& t = y.statements[j];
      if (s.kind != t.kind || s.target != t.target || s.args != t.args) return false;
      if ((s.expr == nullptr) != (t.expr == nullptr)) return false;
      if (s.expr && !same_structure(*s.expr, *t.expr)) return false;
    }
  }
  return true;
}

enum class MergeOp { Add, Mul, Min, Max };

inline const char* to_string(MergeOp op) {
  switch (op) {
    case MergeOp::Add: return "+";
    case MergeOp::Mul: return "*";
    case MergeOp::Min: return "min";
    case MergeOp::Max: return "max";
  }
  return "?";
}

struct MergeSpec {
  std::string var;
  int coefficient = 1;
  MergeOp op = MergeOp::Add;
  /// False when the UDF has no merge call and the default applies.
  bool explicit_merge = false;
};

struct TerminationSpec {
  enum class Mode { Epochs, Condition };
  Mode mode = Mode::Epochs;
  int epochs = 1;
  std::string condition_var;
};

struct Assignment {
  std::string target;
  ExprPtr expr;
  BlockKind block = BlockKind::Update;
  SourcePos pos;
};

/// Value class of a variable with respect to the training loop.
enum class ValueClass { Constant, Batch, Tuple };

/// Validated UDF.
struct TypedProgram {
  std::string name;
  std::vector<Declaration> declarations;
  std::vector<Assignment> assignments;  // program order, single assignment per target
  MergeSpec merge;
  TerminationSpec termination;
  std::string model_var;    // the declared model variable being trained
  std::string updated_var;  // the variable named by setModel

  const Declaration* find(const std::string& name) const {
    for (const auto& d : declarations)
      if (d.name == name) return &d;
    return nullptr;
  }
  const Assignment* assignment(const std::string& name) const {
    for (const auto& a : assignments)
      if (a.target == name) return &a;
    return nullptr;
  }
};

}  // namespace dana::dsl
