#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dana/dsl.hpp"
#include "dana/hdfg.hpp"
#include "dana/pageio.hpp"
#include "dana/shape.hpp"

// Software trainer evaluating the DSL expressions directly. Used as the
// oracle for the simulated accelerator.

namespace dana::reference {

struct Tensor {
  Dims dims;
  std::vector<double> v;
};

enum class Context { Update, Merge, Convergence };

/// Variable bindings for one evaluation context.
class Env {
 public:
  Env(const dsl::TypedProgram& p, Context ctx, int width) : p_(p), ctx_(ctx), width_(width) {
    layout_ = dsl::tuple_layout(p);
    offsets_ = dsl::model_offsets(p);
  }

  const std::vector<double>* tuple = nullptr;
  const std::vector<double>* model = nullptr;
  const std::vector<double>* merged = nullptr;

  Tensor get(const std::string& name);

  int width() const { return width_; }

 private:
  const dsl::TypedProgram& p_;
  Context ctx_;
  int width_;
  dsl::TupleLayout layout_;
  std::map<std::string, std::size_t> offsets_;
  std::map<std::string, Tensor> memo_;
};

inline double rnd(double x, int w) { return round_to_width(x, w); }

inline double reduce_range(const std::vector<double>& xs, std::size_t lo, std::size_t hi, hdfg::ScalarOp op, int w) {
  if (hi - lo == 1) return xs[lo];
  std::size_t mid = lo + (hi - lo + 1) / 2;
  return hdfg::apply(op, reduce_range(xs, lo, mid, op, w), reduce_range(xs, mid, hi, op, w), w);
}

inline Tensor eval(const dsl::Expr& e, Env& env);

inline Tensor binary(hdfg::ScalarOp op, const Tensor& a, const Tensor& b, const shape::BinaryShape& s, int w) {
  Tensor out;
  out.dims = s.out;
  std::size_t n = element_count(s.out);
  out.v.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    out.v[k] = hdfg::apply(op, a.v[shape::operand_index(s.rule, true, k, a.dims, b.dims, s.out)],
                           b.v[shape::operand_index(s.rule, false, k, a.dims, b.dims, s.out)], w);
  return out;
}

inline Tensor group(hdfg::ScalarOp op, const Tensor& a, int axis, int w) {
  Tensor out;
  out.dims = shape::remove_axis(a.dims, axis);
  for (const auto& idx : shape::reduction_groups(a.dims, axis)) {
    std::vector<double> xs;
    for (std::size_t i : idx) xs.push_back(a.v[i]);
    out.v.push_back(reduce_range(xs, 0, xs.size(), op, w));
  }
  return out;
}

inline Tensor eval(const dsl::Expr& e, Env& env) {
  using K = dsl::Expr::Kind;
  const int w = env.width();
  switch (e.kind) {
    case K::Literal:
      return {{}, {rnd(e.value, w)}};
    case K::VarRef:
      return env.get(e.name);
    case K::Negate: {
      Tensor a = eval(*e.args[0], env);
      for (double& x : a.v) x = hdfg::apply(hdfg::ScalarOp::Sub, 0.0, x, w);
      return a;
    }
    case K::Nonlinear: {
      Tensor a = eval(*e.args[0], env);
      for (double& x : a.v) x = hdfg::apply(hdfg::to_scalar(e.nonlinear), x, 0.0, w);
      return a;
    }
    case K::Binary: {
      Tensor a = eval(*e.args[0], env);
      Tensor b = eval(*e.args[1], env);
      auto s = shape::elementwise_shape(a.dims, b.dims);
      if (!s) throw Error("runtime", "irreconcilable dims in reference evaluation");
      return binary(hdfg::to_scalar(e.binary), a, b, *s, w);
    }
    case K::Group: {
      const dsl::Expr& arg = *e.args[0];
      Tensor x;
      int axis = e.axis - 1;
      std::optional<shape::BinaryShape> contraction;
      if (arg.kind == K::Binary) {
        Tensor a = eval(*arg.args[0], env);
        Tensor b = eval(*arg.args[1], env);
        if (auto s = shape::elementwise_shape(a.dims, b.dims)) {
          x = binary(hdfg::to_scalar(arg.binary), a, b, *s, w);
        } else if (auto c = shape::contraction_shape(a.dims, b.dims)) {
          x = binary(hdfg::to_scalar(arg.binary), a, b, *c, w);
        } else {
          throw Error("runtime", "irreconcilable dims in reference evaluation");
        }
      } else {
        x = eval(arg, env);
      }
      if (e.group == dsl::GroupOp::Norm) {
        for (double& v : x.v) v = hdfg::apply(hdfg::ScalarOp::Mul, v, v, w);
        Tensor s = group(hdfg::ScalarOp::Add, x, axis, w);
        for (double& v : s.v) v = hdfg::apply(hdfg::ScalarOp::Sqrt, v, 0.0, w);
        return s;
      }
      return group(e.group == dsl::GroupOp::Sigma ? hdfg::ScalarOp::Add : hdfg::ScalarOp::Mul, x, axis, w);
    }
  }
  return {};
}

inline Tensor Env::get(const std::string& name) {
  if (auto it = memo_.find(name); it != memo_.end()) return it->second;
  const dsl::Declaration* d = p_.find(name);
  if (!d) throw Error("runtime", "unknown variable '" + name + "'");
  Tensor t;
  t.dims = d->dims;
  std::size_t n = element_count(d->dims);
  if (name == p_.merge.var && ctx_ != Context::Update) {
    t.v.assign(merged->begin(), merged->end());
  } else {
    switch (d->kind) {
      case dsl::DeclKind::Input:
      case dsl::DeclKind::Output: {
        std::size_t off = layout_.offset.at(name);
        for (std::size_t k = 0; k < n; ++k) t.v.push_back(rnd(tuple->at(off + k), width_));
        break;
      }
      case dsl::DeclKind::Model: {
        std::size_t off = offsets_.at(name);
        for (std::size_t k = 0; k < n; ++k) t.v.push_back(rnd(model->at(off + k), width_));
        break;
      }
      case dsl::DeclKind::Meta:
        for (double x : dsl::expand_init(*d)) t.v.push_back(rnd(x, width_));
        break;
      case dsl::DeclKind::Inter: {
        const dsl::Assignment* a = p_.assignment(name);
        if (!a) throw Error("runtime", "'" + name + "' is never assigned");
        t = eval(*a->expr, *this);
        break;
      }
    }
  }
  memo_[name] = t;
  return t;
}

enum class Mode { Lockstep, Float64 };

struct Options {
  Mode mode = Mode::Lockstep;
  int width = 4;     // lockstep only
  int threads = 1;   // lockstep only
  int max_epochs = 1000;
};

struct Result {
  std::vector<double> model;  // every model variable, flattened
  int epochs = 0;
  std::vector<double> last_merged;
};

/// One merged batch: per-thread sequential accumulation, level-wise tree,
/// mean for "+".
inline std::vector<double> merge_batch(const dsl::TypedProgram& p, const std::vector<std::vector<double>>& batch,
                                       const std::vector<double>& model, int threads, int width) {
  int t = std::min<int>(threads, static_cast<int>(batch.size()));
  hdfg::ScalarOp op = hdfg::to_scalar(p.merge.op);
  std::vector<std::vector<double>> acc(static_cast<std::size_t>(t));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Env env(p, Context::Update, width);
    env.tuple = &batch[j];
    env.model = &model;
    std::vector<double> m = env.get(p.merge.var).v;
    auto& a = acc[j % static_cast<std::size_t>(t)];
    if (a.empty()) {
      a = std::move(m);
    } else {
      for (std::size_t k = 0; k < a.size(); ++k) a[k] = hdfg::apply(op, a[k], m[k], width);
    }
  }
  while (acc.size() > 1) {
    std::vector<std::vector<double>> next;
    for (std::size_t i = 0; i + 1 < acc.size(); i += 2) {
      std::vector<double> v(acc[i].size());
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = hdfg::apply(op, acc[i][k], acc[i + 1][k], width);
      next.push_back(std::move(v));
    }
    if (acc.size() % 2) next.push_back(std::move(acc.back()));
    acc = std::move(next);
  }
  std::vector<double> merged = std::move(acc.front());
  if (p.merge.op == dsl::MergeOp::Add)
    for (double& v : merged) v = hdfg::apply(hdfg::ScalarOp::Div, v, static_cast<double>(batch.size()), width);
  return merged;
}

/// Trains on `rows` (features then labels per tuple) in storage order.
inline Result train(const dsl::TypedProgram& p, const std::vector<pageio::TupleRecord>& rows, const Options& opt) {
  if (rows.empty()) throw Error("runtime", "empty dataset");
  const int width = opt.mode == Mode::Float64 ? 8 : opt.width;
  const int threads = opt.mode == Mode::Float64 ? 1 : opt.threads;
  std::vector<std::vector<double>> tuples;
  for (const auto& r : rows) {
    std::vector<double> t = r.features;
    t.insert(t.end(), r.labels.begin(), r.labels.end());
    tuples.push_back(std::move(t));
  }
  Result res;
  res.model = dsl::initial_model(p);
  for (double& v : res.model) v = round_to_width(v, width);
  const std::size_t model_off = dsl::model_offsets(p).at(p.model_var);
  const auto c = static_cast<std::size_t>(p.merge.coefficient);
  const bool cond = p.termination.mode == dsl::TerminationSpec::Mode::Condition;
  const int limit = cond ? opt.max_epochs : p.termination.epochs;
  for (int epoch = 0; epoch < limit; ++epoch) {
    std::vector<double> pre_update;
    for (std::size_t start = 0; start < tuples.size(); start += c) {
      std::vector<std::vector<double>> batch(tuples.begin() + static_cast<long>(start),
                                             tuples.begin() + static_cast<long>(std::min(tuples.size(), start + c)));
      std::vector<double> merged = merge_batch(p, batch, res.model, threads, width);
      Env env(p, Context::Merge, width);
      env.model = &res.model;
      env.merged = &merged;
      std::vector<double> updated = env.get(p.updated_var).v;
      pre_update = res.model;
      for (std::size_t k = 0; k < updated.size(); ++k) {
        if (!std::isfinite(updated[k]))
          throw Error("runtime", "non-finite model value in epoch " + std::to_string(epoch + 1));
        res.model[model_off + k] = updated[k];
      }
      res.last_merged = std::move(merged);
    }
    res.epochs = epoch + 1;
    if (cond) {
      Env env(p, Context::Convergence, 8);
      env.model = &pre_update;
      env.merged = &res.last_merged;
      if (env.get(p.termination.condition_var).v.at(0) != 0.0) break;
    }
  }
  return res;
}

}  // namespace dana::reference
