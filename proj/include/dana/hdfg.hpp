#pragma once

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dana/dsl.hpp"
#include "dana/shape.hpp"

namespace dana::hdfg {

enum class ScalarOp { Add, Sub, Mul, Div, Gt, Lt, Eq, Min, Max, Sigmoid, Gaussian, Sqrt, Exp, Log, Abs, Copy, Mov };

inline constexpr int kScalarOpCount = 17;

inline const char* to_string(ScalarOp op) {
  static const char* names[] = {"add", "sub", "mul", "div", "gt", "lt", "eq", "min", "max",
                                "sigmoid", "gaussian", "sqrt", "exp", "log", "abs", "copy", "mov"};
  return names[static_cast<int>(op)];
}

inline ScalarOp parse_scalar_op(std::string_view s) {
  for (int k = 0; k < kScalarOpCount; ++k)
    if (s == to_string(static_cast<ScalarOp>(k))) return static_cast<ScalarOp>(k);
  throw Error("translator", "unknown scalar op '" + std::string(s) + "'");
}

inline int arity(ScalarOp op) {
  switch (op) {
    case ScalarOp::Add:
    case ScalarOp::Sub:
    case ScalarOp::Mul:
    case ScalarOp::Div:
    case ScalarOp::Gt:
    case ScalarOp::Lt:
    case ScalarOp::Eq:
    case ScalarOp::Min:
    case ScalarOp::Max:
      return 2;
    default:
      return 1;
  }
}

/// Exact double-precision semantics of each scalar op.
inline double apply(ScalarOp op, double a, double b) {
  switch (op) {
    case ScalarOp::Add: return a + b;
    case ScalarOp::Sub: return a - b;
    case ScalarOp::Mul: return a * b;
    case ScalarOp::Div: return a / b;
    case ScalarOp::Gt: return a > b ? 1.0 : 0.0;
    case ScalarOp::Lt: return a < b ? 1.0 : 0.0;
    case ScalarOp::Eq: return a == b ? 1.0 : 0.0;
    case ScalarOp::Min: return std::min(a, b);
    case ScalarOp::Max: return std::max(a, b);
    case ScalarOp::Sigmoid: return 1.0 / (1.0 + std::exp(-a));
    case ScalarOp::Gaussian: return std::exp(-a * a);
    case ScalarOp::Sqrt: return std::sqrt(a);
    case ScalarOp::Exp: return std::exp(a);
    case ScalarOp::Log: return std::log(a);
    case ScalarOp::Abs: return std::fabs(a);
    case ScalarOp::Copy:
    case ScalarOp::Mov: return a;
  }
  return a;
}

/// ALU semantics at a datapath width: compute in double, round once.
inline double apply(ScalarOp op, double a, double b, int width) {
  return round_to_width(apply(op, a, b), width);
}

inline ScalarOp to_scalar(dsl::BinaryOp op) {
  switch (op) {
    case dsl::BinaryOp::Add: return ScalarOp::Add;
    case dsl::BinaryOp::Sub: return ScalarOp::Sub;
    case dsl::BinaryOp::Mul: return ScalarOp::Mul;
    case dsl::BinaryOp::Div: return ScalarOp::Div;
    case dsl::BinaryOp::Gt: return ScalarOp::Gt;
    case dsl::BinaryOp::Lt: return ScalarOp::Lt;
    case dsl::BinaryOp::Eq: return ScalarOp::Eq;
  }
  return ScalarOp::Add;
}

inline ScalarOp to_scalar(dsl::NonlinearOp op) {
  switch (op) {
    case dsl::NonlinearOp::Sigmoid: return ScalarOp::Sigmoid;
    case dsl::NonlinearOp::Gaussian: return ScalarOp::Gaussian;
    case dsl::NonlinearOp::Sqrt: return ScalarOp::Sqrt;
    case dsl::NonlinearOp::Exp: return ScalarOp::Exp;
    case dsl::NonlinearOp::Log: return ScalarOp::Log;
    case dsl::NonlinearOp::Abs: return ScalarOp::Abs;
  }
  return ScalarOp::Copy;
}

inline ScalarOp to_scalar(dsl::MergeOp op) {
  switch (op) {
    case dsl::MergeOp::Add: return ScalarOp::Add;
    case dsl::MergeOp::Mul: return ScalarOp::Mul;
    case dsl::MergeOp::Min: return ScalarOp::Min;
    case dsl::MergeOp::Max: return ScalarOp::Max;
  }
  return ScalarOp::Add;
}

/// Where a leaf value lives at run time.
enum class Space { Tuple, Model, Merged, Const, Acc, Partial };

inline const char* to_string(Space s) {
  static const char* names[] = {"tuple", "model", "merged", "const", "acc", "partial"};
  return names[static_cast<int>(s)];
}

struct Operand {
  enum class Kind { Sub, Leaf };
  Kind kind = Kind::Leaf;
  int sub = -1;
  Space space = Space::Const;
  int index = 0;

  static Operand of_sub(int id) { return {Kind::Sub, id, Space::Const, 0}; }
  static Operand leaf(Space s, int index) { return {Kind::Leaf, -1, s, index}; }
  bool is_sub() const { return kind == Kind::Sub; }
  bool operator==(const Operand&) const = default;
};

inline std::string to_string(const Operand& o) {
  if (o.is_sub()) return "s" + std::to_string(o.sub);
  return std::string(to_string(o.space)) + "[" + std::to_string(o.index) + "]";
}

struct SubNode {
  int id = 0;
  ScalarOp op = ScalarOp::Copy;
  Operand a;
  Operand b;  // unused for unary ops
  int node = -1;
  // placement hint: preferred cluster (mod cluster count) and unit (mod 8)
  int lane = -1;
  int unit = -1;
};

/// One schedulable unit: scalar sub-nodes in topological order.
struct ScalarProgram {
  std::vector<SubNode> subs;
  std::vector<double> constants;
  std::vector<Operand> outputs;

  int add(ScalarOp op, Operand a, Operand b, int node, int lane = -1, int unit = -1) {
    int id = static_cast<int>(subs.size());
    subs.push_back({id, op, a, b, node, lane, unit});
    return id;
  }
};

/// Leaf values for one evaluation.
struct Leaves {
  std::vector<double> tuple;
  std::vector<double> model;
  std::vector<double> merged;
  std::vector<double> acc;
  std::vector<double> partial;

  const std::vector<double>& space(Space s) const {
    switch (s) {
      case Space::Tuple: return tuple;
      case Space::Model: return model;
      case Space::Merged: return merged;
      case Space::Acc: return acc;
      case Space::Partial: return partial;
      case Space::Const: break;
    }
    throw Error("translator", "constants are not a leaf vector");
  }
};

inline double leaf_value(const ScalarProgram& p, const Leaves& l, const Operand& o, int width) {
  if (o.space == Space::Const) return round_to_width(p.constants.at(static_cast<std::size_t>(o.index)), width);
  return round_to_width(l.space(o.space).at(static_cast<std::size_t>(o.index)), width);
}

/// Sequential evaluation of the sub-nodes at a width (8 = plain double).
inline std::vector<double> evaluate(const ScalarProgram& p, const Leaves& leaves, int width) {
  std::vector<double> v(p.subs.size());
  auto get = [&](const Operand& o) {
    return o.is_sub() ? v[static_cast<std::size_t>(o.sub)] : leaf_value(p, leaves, o, width);
  };
  for (const auto& s : p.subs)
    v[static_cast<std::size_t>(s.id)] = apply(s.op, get(s.a), arity(s.op) == 2 ? get(s.b) : 0.0, width);
  std::vector<double> out;
  out.reserve(p.outputs.size());
  for (const auto& o : p.outputs) out.push_back(get(o));
  return out;
}

enum class Region { Update, Merge, Convergence };

inline const char* to_string(Region r) {
  static const char* names[] = {"update", "merge", "convergence"};
  return names[static_cast<int>(r)];
}

struct HNode {
  enum class Kind { Binary, Nonlinear, Group, Copy, Merge };
  int id = 0;
  Kind kind = Kind::Copy;
  ScalarOp op = ScalarOp::Copy;
  shape::Rule rule = shape::Rule::Same;
  Dims dims;
  Region region = Region::Update;
  std::string var;  // assignment target when this node produces a named value
  std::vector<int> preds;
  std::vector<int> succs;
  std::vector<int> subs;           // ids in the region's ScalarProgram
  std::vector<Operand> elements;   // source of each output element
};

inline const char* to_string(HNode::Kind k) {
  static const char* names[] = {"binary", "nonlinear", "group", "copy", "merge"};
  return names[static_cast<int>(k)];
}

struct HDfg {
  std::string name;
  std::vector<HNode> nodes;
  ScalarProgram update;       // per tuple: produces the merge variable
  ScalarProgram accumulate;   // per tuple: acc = op(acc, partial)
  ScalarProgram merge;        // per batch: produces the updated model
  ScalarProgram convergence;  // per epoch: produces the condition scalar
  dsl::MergeSpec merge_spec;
  Dims merge_dims;
  int merge_node = -1;
  std::string updated_var;
  std::string model_var;
  std::size_t model_offset = 0;
  std::size_t model_size = 0;  // all model variables, flattened
  bool has_convergence = false;
  int epochs = 1;

  ScalarProgram& program(Region r) {
    return r == Region::Update ? update : r == Region::Merge ? merge : convergence;
  }
  const ScalarProgram& program(Region r) const {
    return r == Region::Update ? update : r == Region::Merge ? merge : convergence;
  }
  std::size_t merge_width() const { return element_count(merge_dims); }
};

namespace detail {

struct Value {
  Dims dims;
  std::vector<Operand> elems;
  std::vector<int> nodes;  // producing nodes feeding this value
};

class Builder {
 public:
  Builder(const dsl::TypedProgram& p, HDfg& g) : prog_(p), g_(g), layout_(dsl::tuple_layout(p)) {
    models_ = dsl::model_offsets(p, &g.model_size);
  }

  Value build_var(const std::string& name, Region r) {
    if (name == prog_.merge.var && r != Region::Update) {
      Value v;
      v.dims = g_.merge_dims;
      for (std::size_t e = 0; e < g_.merge_width(); ++e)
        v.elems.push_back(Operand::leaf(Space::Merged, static_cast<int>(e)));
      v.nodes = {g_.merge_node};
      return v;
    }
    const dsl::Declaration* d = prog_.find(name);
    if (!d) throw Error("translator", "unknown variable '" + name + "'");
    Value v;
    v.dims = d->dims;
    std::size_t n = element_count(d->dims);
    switch (d->kind) {
      case dsl::DeclKind::Input:
      case dsl::DeclKind::Output:
        for (std::size_t e = 0; e < n; ++e)
          v.elems.push_back(Operand::leaf(Space::Tuple, static_cast<int>(layout_.offset.at(name) + e)));
        return v;
      case dsl::DeclKind::Model:
        for (std::size_t e = 0; e < n; ++e)
          v.elems.push_back(Operand::leaf(Space::Model, static_cast<int>(models_.at(name) + e)));
        return v;
      case dsl::DeclKind::Meta: {
        auto vals = dsl::expand_init(*d);
        for (double x : vals) v.elems.push_back(constant(r, x));
        return v;
      }
      case dsl::DeclKind::Inter:
        break;
    }
    auto key = std::make_pair(name, r);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const dsl::Assignment* a = prog_.assignment(name);
    if (!a) throw Error("translator", "'" + name + "' is never assigned");
    Value val = build_expr(*a->expr, r);
    if (val.nodes.size() != 1 || g_.nodes[static_cast<std::size_t>(val.nodes[0])].var.size() ||
        a->expr->kind == dsl::Expr::Kind::VarRef || a->expr->kind == dsl::Expr::Kind::Literal) {
      // Plain references become an explicit copy node.
      val = copy_node(val, r);
    }
    g_.nodes[static_cast<std::size_t>(val.nodes[0])].var = name;
    memo_[key] = val;
    return val;
  }

 private:
  Operand constant(Region r, double x) {
    auto& prog = g_.program(r);
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    auto& table = consts_[static_cast<int>(r)];
    if (auto it = table.find(bits); it != table.end()) return Operand::leaf(Space::Const, it->second);
    int idx = static_cast<int>(prog.constants.size());
    prog.constants.push_back(x);
    table[bits] = idx;
    return Operand::leaf(Space::Const, idx);
  }

  int new_node(HNode::Kind kind, ScalarOp op, Dims dims, Region r, const std::vector<int>& preds) {
    HNode n;
    n.id = static_cast<int>(g_.nodes.size());
    n.kind = kind;
    n.op = op;
    n.dims = std::move(dims);
    n.region = r;
    for (int p : preds)
      if (std::find(n.preds.begin(), n.preds.end(), p) == n.preds.end()) n.preds.push_back(p);
    for (int p : n.preds) g_.nodes[static_cast<std::size_t>(p)].succs.push_back(n.id);
    g_.nodes.push_back(std::move(n));
    return g_.nodes.back().id;
  }

  struct Home {
    int lane = 0;
    int unit = 0;
  };

  // Rows of a matrix share a cluster; vectors pack eight to a cluster.
  static Home home_of(const Dims& dims, std::size_t e) {
    if (dims.size() >= 2) {
      std::size_t row = element_count(dims) / static_cast<std::size_t>(dims[0]);
      return {static_cast<int>(e / row), static_cast<int>(e % row)};
    }
    return {static_cast<int>(e / 8), static_cast<int>(e % 8)};
  }

  Operand emit(int node, ScalarOp op, Operand a, Operand b, Region r, Home h) {
    int id = g_.program(r).add(op, a, b, node, h.lane, h.unit);
    g_.nodes[static_cast<std::size_t>(node)].subs.push_back(id);
    return Operand::of_sub(id);
  }

  static std::vector<int> merged_nodes(const Value& a, const Value& b) {
    std::vector<int> out = a.nodes;
    out.insert(out.end(), b.nodes.begin(), b.nodes.end());
    return out;
  }

  Value copy_node(const Value& v, Region r) {
    int id = new_node(HNode::Kind::Copy, ScalarOp::Copy, v.dims, r, v.nodes);
    Value out;
    out.dims = v.dims;
    for (std::size_t e = 0; e < v.elems.size(); ++e)
      out.elems.push_back(emit(id, ScalarOp::Copy, v.elems[e], {}, r, home_of(v.dims, e)));
    finish(id, out);
    return out;
  }

  void finish(int id, Value& v) {
    g_.nodes[static_cast<std::size_t>(id)].elements = v.elems;
    v.nodes = {id};
  }

  Value binary(ScalarOp op, const Value& a, const Value& b, const shape::BinaryShape& s, Region r) {
    int id = new_node(HNode::Kind::Binary, op, s.out, r, merged_nodes(a, b));
    g_.nodes[static_cast<std::size_t>(id)].rule = s.rule;
    Value out;
    out.dims = s.out;
    std::size_t n = element_count(s.out);
    for (std::size_t e = 0; e < n; ++e) {
      const Operand& x = a.elems[shape::operand_index(s.rule, true, e, a.dims, b.dims, s.out)];
      const Operand& y = b.elems[shape::operand_index(s.rule, false, e, a.dims, b.dims, s.out)];
      out.elems.push_back(emit(id, op, x, y, r, home_of(s.out, e)));
    }
    finish(id, out);
    return out;
  }

  Value unary(ScalarOp op, const Value& a, Region r) {
    int id = new_node(HNode::Kind::Nonlinear, op, a.dims, r, a.nodes);
    Value out;
    out.dims = a.dims;
    for (std::size_t e = 0; e < a.elems.size(); ++e)
      out.elems.push_back(emit(id, op, a.elems[e], {}, r, home_of(a.dims, e)));
    finish(id, out);
    return out;
  }

  // homes[i]: home of xs[i]; each partial sits where its leftmost input does
  Operand reduce(int node, ScalarOp op, const std::vector<Operand>& xs, const std::vector<Home>& homes,
                 std::size_t lo, std::size_t hi, Region r) {
    if (hi - lo == 1) return xs[lo];
    std::size_t mid = lo + (hi - lo + 1) / 2;
    Operand left = reduce(node, op, xs, homes, lo, mid, r);
    Operand right = reduce(node, op, xs, homes, mid, hi, r);
    return emit(node, op, left, right, r, homes[lo]);
  }

  Value group(ScalarOp op, const Value& a, int axis, Region r) {
    Dims out_dims = shape::remove_axis(a.dims, axis);
    int id = new_node(HNode::Kind::Group, op, out_dims, r, a.nodes);
    Value out;
    out.dims = out_dims;
    for (const auto& idx : shape::reduction_groups(a.dims, axis)) {
      std::vector<Operand> xs;
      std::vector<Home> homes;
      for (std::size_t i : idx) {
        xs.push_back(a.elems[i]);
        homes.push_back(home_of(a.dims, i));
      }
      out.elems.push_back(reduce(id, op, xs, homes, 0, xs.size(), r));
    }
    finish(id, out);
    return out;
  }

  Value build_expr(const dsl::Expr& e, Region r) {
    using K = dsl::Expr::Kind;
    switch (e.kind) {
      case K::Literal: {
        Value v;
        v.elems.push_back(constant(r, e.value));
        return v;
      }
      case K::VarRef:
        return build_var(e.name, r);
      case K::Negate: {
        Value zero;
        zero.elems.push_back(constant(r, 0.0));
        Value a = build_expr(*e.args[0], r);
        return binary(ScalarOp::Sub, zero, a, *shape::elementwise_shape({}, a.dims), r);
      }
      case K::Nonlinear:
        return unary(to_scalar(e.nonlinear), build_expr(*e.args[0], r), r);
      case K::Binary: {
        Value a = build_expr(*e.args[0], r);
        Value b = build_expr(*e.args[1], r);
        auto s = shape::elementwise_shape(a.dims, b.dims);
        if (!s) throw Error("translator", "irreconcilable dims " + dims_to_string(a.dims) + " and " + dims_to_string(b.dims));
        return binary(to_scalar(e.binary), a, b, *s, r);
      }
      case K::Group: {
        auto lookup = [&](const std::string& n) -> std::optional<Dims> {
          if (const auto* d = prog_.find(n)) return d->dims;
          return std::nullopt;
        };
        shape::GroupOperand go = shape::group_operand(e, lookup);
        Value arg;
        if (go.contraction) {
          const dsl::Expr& bin = *e.args[0];
          Value a = build_expr(*bin.args[0], r);
          Value b = build_expr(*bin.args[1], r);
          arg = binary(to_scalar(bin.binary), a, b, *shape::contraction_shape(a.dims, b.dims), r);
        } else {
          arg = build_expr(*e.args[0], r);
        }
        if (e.group == dsl::GroupOp::Norm) {
          Value sq = binary(ScalarOp::Mul, arg, arg, {arg.dims, shape::Rule::Same}, r);
          return unary(ScalarOp::Sqrt, group(ScalarOp::Add, sq, go.reduce_axis, r), r);
        }
        return group(e.group == dsl::GroupOp::Sigma ? ScalarOp::Add : ScalarOp::Mul, arg, go.reduce_axis, r);
      }
    }
    return {};
  }

  const dsl::TypedProgram& prog_;
  HDfg& g_;
  dsl::TupleLayout layout_;
  std::map<std::string, std::size_t> models_;
  std::map<std::pair<std::string, Region>, Value> memo_;
  std::map<std::uint64_t, int> consts_[3];
};

}  // namespace detail

/// Dims of every assigned variable (inferDims).
inline std::map<std::string, Dims> infer_dims(const dsl::TypedProgram& p) {
  std::map<std::string, Dims> out;
  for (const auto& d : p.declarations) out[d.name] = d.dims;
  return out;
}

/// Builds the decomposed hDFG: update region, merge node, model update and
/// (when present) the convergence test.
inline HDfg build(const dsl::TypedProgram& p) {
  HDfg g;
  g.name = p.name;
  g.merge_spec = p.merge;
  g.updated_var = p.updated_var;
  g.model_var = p.model_var;
  g.merge_dims = p.find(p.merge.var)->dims;
  g.has_convergence = p.termination.mode == dsl::TerminationSpec::Mode::Condition;
  g.epochs = p.termination.epochs;
  detail::Builder b(p, g);
  g.model_offset = dsl::model_offsets(p).at(p.model_var);

  detail::Value m = b.build_var(p.merge.var, Region::Update);
  g.update.outputs = m.elems;

  HNode merge;
  merge.id = static_cast<int>(g.nodes.size());
  merge.kind = HNode::Kind::Merge;
  merge.op = to_scalar(p.merge.op);
  merge.dims = g.merge_dims;
  merge.region = Region::Merge;
  merge.var = p.merge.var;
  merge.preds = m.nodes;
  for (std::size_t e = 0; e < g.merge_width(); ++e)
    merge.elements.push_back(Operand::leaf(Space::Merged, static_cast<int>(e)));
  for (int pr : merge.preds) g.nodes[static_cast<std::size_t>(pr)].succs.push_back(merge.id);
  g.merge_node = merge.id;
  g.nodes.push_back(merge);

  for (std::size_t e = 0; e < g.merge_width(); ++e)
    g.accumulate.add(to_scalar(p.merge.op), Operand::leaf(Space::Acc, static_cast<int>(e)),
                     Operand::leaf(Space::Partial, static_cast<int>(e)), -1, static_cast<int>(e / 8),
                     static_cast<int>(e % 8));
  for (std::size_t e = 0; e < g.merge_width(); ++e) g.accumulate.outputs.push_back(Operand::of_sub(static_cast<int>(e)));

  g.merge.outputs = b.build_var(p.updated_var, Region::Merge).elems;
  if (g.has_convergence) g.convergence.outputs = b.build_var(p.termination.condition_var, Region::Convergence).elems;
  return g;
}

/// Node ids in topological order; throws on a cycle.
inline std::vector<int> topo_order(const HDfg& g) {
  std::vector<int> indeg(g.nodes.size(), 0);
  for (const auto& n : g.nodes)
    for (int s : n.succs) ++indeg[static_cast<std::size_t>(s)];
  std::vector<int> ready;
  for (const auto& n : g.nodes)
    if (indeg[static_cast<std::size_t>(n.id)] == 0) ready.push_back(n.id);
  std::vector<int> order;
  for (std::size_t k = 0; k < ready.size(); ++k) {
    int id = ready[k];
    order.push_back(id);
    for (int s : g.nodes[static_cast<std::size_t>(id)].succs)
      if (--indeg[static_cast<std::size_t>(s)] == 0) ready.push_back(s);
  }
  if (order.size() != g.nodes.size()) throw Error("translator", "cycle detected in hDFG");
  return order;
}

inline nlohmann::json to_json(const ScalarProgram& p) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : p.subs) {
    nlohmann::json j = {{"id", s.id}, {"op", to_string(s.op)}, {"a", to_string(s.a)}, {"node", s.node}};
    if (arity(s.op) == 2) j["b"] = to_string(s.b);
    subs.push_back(j);
  }
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& o : p.outputs) outs.push_back(to_string(o));
  return {{"subs", subs}, {"constants", p.constants}, {"outputs", outs}};
}

/// JSON view of the graph used by `inspect` and golden tests.
inline nlohmann::json to_json(const HDfg& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"id", n.id},
                     {"kind", to_string(n.kind)},
                     {"op", to_string(n.op)},
                     {"dims", n.dims},
                     {"region", to_string(n.region)},
                     {"var", n.var},
                     {"preds", n.preds},
                     {"succs", n.succs},
                     {"sub_nodes", n.kind == HNode::Kind::Merge ? element_count(n.dims) : n.subs.size()}});
  }
  return {{"name", g.name},
          {"merge", {{"var", g.merge_spec.var},
                     {"coefficient", g.merge_spec.coefficient},
                     {"op", dsl::to_string(g.merge_spec.op)},
                     {"dims", g.merge_dims}}},
          {"model", {{"var", g.model_var}, {"updated", g.updated_var}, {"offset", g.model_offset}}},
          {"nodes", nodes},
          {"programs", {{"update", to_json(g.update)},
                        {"accumulate", to_json(g.accumulate)},
                        {"merge", to_json(g.merge)},
                        {"convergence", to_json(g.convergence)}}}};
}

}  // namespace dana::hdfg
