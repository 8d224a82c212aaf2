#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dana/ast.hpp"

namespace dana::dsl {

struct Diagnostic {
  SourcePos pos;
  std::string message;
};

/// Carries one or more positioned diagnostics; what() holds the first.
class DiagnosticError : public Error {
 public:
  explicit DiagnosticError(std::vector<Diagnostic> diags)
      : Error("dsl", diags.empty() ? std::string("error") : diags.front().message),
        diags_(std::move(diags)) {}
  DiagnosticError(SourcePos pos, const std::string& message)
      : DiagnosticError(std::vector<Diagnostic>{{pos, message}}) {}

  const std::vector<Diagnostic>& diagnostics() const noexcept { return diags_; }

  /// `file:line:col: message`, one per line.
  std::string format(const std::string& file) const {
    std::string out;
    for (const auto& d : diags_)
      out += file + ":" + std::to_string(d.pos.line) + ":" + std::to_string(d.pos.col) + ": " +
             d.message + "\n";
    return out;
  }

 private:
  std::vector<Diagnostic> diags_;
};

}  // namespace dana::dsl

namespace dana::shape {

/// How a binary node lines up its operands.
enum class Rule {
  Same,          // identical dims, elementwise
  ScalarLeft,    // left operand scalar, replicated
  ScalarRight,
  SuffixLeft,    // left dims are a trailing suffix of the right dims
  SuffixRight,
  PrefixLeft,    // left dims are a leading prefix of the right dims
  PrefixRight,
  Contraction,   // [m,k] x [n,k] -> [m,n,k], reduced over k by the consuming group op
};

struct BinaryShape {
  Dims out;
  Rule rule = Rule::Same;
};

inline bool is_suffix(const Dims& small, const Dims& large) {
  if (small.size() >= large.size()) return false;
  return std::equal(small.begin(), small.end(), large.end() - static_cast<long>(small.size()));
}

inline bool is_prefix(const Dims& small, const Dims& large) {
  if (small.size() >= large.size()) return false;
  return std::equal(small.begin(), small.end(), large.begin());
}

/// Elementwise rules tried in order: identical dims, scalar replication,
/// trailing-suffix replication, leading-prefix replication.
inline std::optional<BinaryShape> elementwise_shape(const Dims& a, const Dims& b) {
  if (a == b) return BinaryShape{a, Rule::Same};
  if (a.empty()) return BinaryShape{b, Rule::ScalarLeft};
  if (b.empty()) return BinaryShape{a, Rule::ScalarRight};
  if (is_suffix(a, b)) return BinaryShape{b, Rule::SuffixLeft};
  if (is_suffix(b, a)) return BinaryShape{a, Rule::SuffixRight};
  if (is_prefix(a, b)) return BinaryShape{b, Rule::PrefixLeft};
  if (is_prefix(b, a)) return BinaryShape{a, Rule::PrefixRight};
  return std::nullopt;
}

/// [m,k] and [n,k] with m != n: the pairwise product grid [m,n,k].
inline std::optional<BinaryShape> contraction_shape(const Dims& a, const Dims& b) {
  if (a.size() != 2 || b.size() != 2 || a[1] != b[1] || a[0] == b[0]) return std::nullopt;
  return BinaryShape{{a[0], b[0], a[1]}, Rule::Contraction};
}

/// Index of the operand element feeding output element `e`.
inline std::size_t operand_index(Rule rule, bool left, std::size_t e, const Dims& a,
                                 const Dims& b, const Dims& out) {
  const Dims& self = left ? a : b;
  std::size_t self_count = element_count(self);
  switch (rule) {
    case Rule::Same:
      return e;
    case Rule::ScalarLeft:
      return left ? 0 : e;
    case Rule::ScalarRight:
      return left ? e : 0;
    case Rule::SuffixLeft:
      return left ? e % self_count : e;
    case Rule::SuffixRight:
      return left ? e : e % self_count;
    case Rule::PrefixLeft:
      return left ? e / (element_count(out) / self_count) : e;
    case Rule::PrefixRight:
      return left ? e : e / (element_count(out) / self_count);
    case Rule::Contraction: {
      auto n = static_cast<std::size_t>(out[1]);
      auto k = static_cast<std::size_t>(out[2]);
      std::size_t l = e % k;
      std::size_t ij = e / k;
      return left ? (ij / n) * k + l : (ij % n) * k + l;
    }
  }
  return e;
}

/// Output dims of a group op removing 0-based `axis` from `operand`.
inline Dims remove_axis(const Dims& operand, int axis) {
  Dims out;
  for (int i = 0; i < static_cast<int>(operand.size()); ++i)
    if (i != axis) out.push_back(operand[static_cast<std::size_t>(i)]);
  return out;
}

/// Operand element indices reduced into each output element, in axis order.
inline std::vector<std::vector<std::size_t>> reduction_groups(const Dims& operand, int axis) {
  std::size_t inner = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < operand.size(); ++i)
    inner *= static_cast<std::size_t>(operand[i]);
  auto len = static_cast<std::size_t>(operand[static_cast<std::size_t>(axis)]);
  std::size_t outer = element_count(operand) / (inner * len);
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      std::vector<std::size_t> g(len);
      for (std::size_t r = 0; r < len; ++r) g[r] = (o * len + r) * inner + i;
      groups.push_back(std::move(g));
    }
  return groups;
}

using DimsLookup = std::function<std::optional<Dims>(const std::string&)>;

/// Dims of a group argument: the contraction grid when the argument is a
/// binary product matching the contraction pattern, else the plain dims.
struct GroupOperand {
  Dims dims;
  int reduce_axis = 0;  // 0-based into dims
  bool contraction = false;
};

inline Dims infer(const dsl::Expr& e, const DimsLookup& lookup);

inline GroupOperand group_operand(const dsl::Expr& g, const DimsLookup& lookup) {
  const dsl::Expr& arg = *g.args[0];
  if (arg.kind == dsl::Expr::Kind::Binary) {
    Dims a = infer(*arg.args[0], lookup);
    Dims b = infer(*arg.args[1], lookup);
    if (!elementwise_shape(a, b)) {
      auto c = contraction_shape(a, b);
      if (c && g.axis == 2) return {c->out, 2, true};
      if (c)
        throw dsl::DiagnosticError(g.pos, "contraction of " + dims_to_string(a) + " and " +
                                              dims_to_string(b) + " requires axis 2");
    }
  }
  Dims d = infer(arg, lookup);
  if (g.axis < 1 || g.axis > static_cast<int>(d.size()))
    throw dsl::DiagnosticError(g.pos, "axis " + std::to_string(g.axis) + " exceeds operand rank " +
                                          std::to_string(d.size()));
  return {d, g.axis - 1, false};
}

inline Dims infer(const dsl::Expr& e, const DimsLookup& lookup) {
  using K = dsl::Expr::Kind;
  switch (e.kind) {
    case K::Literal:
      return {};
    case K::VarRef: {
      auto d = lookup(e.name);
      if (!d) throw dsl::DiagnosticError(e.pos, "unknown variable '" + e.name + "'");
      return *d;
    }
    case K::Negate:
    case K::Nonlinear:
      return infer(*e.args[0], lookup);
    case K::Binary: {
      Dims a = infer(*e.args[0], lookup);
      Dims b = infer(*e.args[1], lookup);
      auto s = elementwise_shape(a, b);
      if (!s)
        throw dsl::DiagnosticError(e.pos, std::string("irreconcilable dims for '") +
                                              dsl::to_string(e.binary) + "': " +
                                              dims_to_string(a) + " and " + dims_to_string(b));
      return s->out;
    }
    case K::Group: {
      auto g = group_operand(e, lookup);
      return remove_axis(g.dims, g.reduce_axis);
    }
  }
  return {};
}

}  // namespace dana::shape
