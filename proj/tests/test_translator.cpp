#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dana/hdfg.hpp"
#include "dana/reference.hpp"

using namespace dana;
using hdfg::HNode;
using hdfg::Region;

namespace {

std::string udf(const std::string& decls, const std::string& update, const std::string& merge_var,
                const std::string& tail = "w_up = w - g;") {
  return "algo t {\n" + decls + "\nupdate {\n" + update + "\n}\nmerge {\nmerge(" + merge_var +
         ", 4, \"+\");\n" + tail + "\nsetModel(w_up);\n}\nterminator { setEpochs(1); }\n}\n";
}

const HNode& node_of(const hdfg::HDfg& g, const std::string& var) {
  for (const auto& n : g.nodes)
    if (n.var == var) return n;
  throw std::runtime_error("no node for " + var);
}

// Longest chain of sub-nodes within `subs` (1 for independent ops).
int depth(const hdfg::ScalarProgram& p, const std::vector<int>& subs) {
  std::map<int, int> d;
  int best = 0;
  for (int id : subs) {
    const auto& s = p.subs[static_cast<std::size_t>(id)];
    int in = 0;
    for (const auto* o : {&s.a, &s.b})
      if (o->is_sub() && d.count(o->sub)) in = std::max(in, d[o->sub]);
    d[id] = in + 1;
    best = std::max(best, d[id]);
  }
  return best;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(InferDims, ContractionExample) {
  auto p = dsl::compile_source(udf("model w[5][2]; meta mo[5][10] = 1; input in[2][10]; output y;",
                                   "r = sigma(mo * in, 2);\ng = r - w;", "g"));
  EXPECT_EQ(hdfg::infer_dims(p).at("r"), (Dims{5, 2}));
  auto g = hdfg::build(p);
  const HNode& r = node_of(g, "r");
  EXPECT_EQ(r.kind, HNode::Kind::Group);
  EXPECT_EQ(r.dims, (Dims{5, 2}));
  // contraction node: 5*2*10 products, then 9 adds per output
  ASSERT_EQ(r.preds.size(), 1u);
  EXPECT_EQ(g.nodes[static_cast<std::size_t>(r.preds[0])].subs.size(), 100u);
  EXPECT_EQ(r.subs.size(), 10u * 9u);
}

TEST(InferDims, IdentityAndScalarReplication) {
  auto p = dsl::compile_source(udf("model w[10]; input x[8]; output y; meta lr = 0.5;",
                                   "s = x + x;\nq = sigma(s, 1);\ng = lr * w * q;", "g"));
  auto d = hdfg::infer_dims(p);
  EXPECT_EQ(d.at("s"), Dims{8});
  EXPECT_EQ(d.at("g"), Dims{10});
}

TEST(InferDims, IrreconcilableAndBadAxis) {
  EXPECT_THROW(dsl::compile_source(udf("model w[3]; input x[4]; output y;", "g = w + x;", "g")),
               dsl::DiagnosticError);
  EXPECT_THROW(dsl::compile_source(udf("model w[3]; input x[3]; output y;", "s = sigma(x, 2);\ng = w * s;", "g")),
               dsl::DiagnosticError);
}

TEST(Decompose, ElementwiseVectorsAreIndependent) {
  auto g = hdfg::build(dsl::compile_source(udf("model w[16]; input x[16]; output y;", "g = w * x;", "g")));
  const HNode& n = node_of(g, "g");
  EXPECT_EQ(n.subs.size(), 16u);
  EXPECT_EQ(depth(g.update, n.subs), 1);
}

TEST(Decompose, SigmaOverEightIsDepthThreeTree) {
  auto g = hdfg::build(dsl::compile_source(
      udf("model w[8]; input x[8]; output y;", "s = sigma(x, 1);\ng = s * w;", "g")));
  const HNode& n = node_of(g, "s");
  EXPECT_EQ(n.subs.size(), 7u);
  EXPECT_EQ(depth(g.update, n.subs), 3);
}

TEST(Decompose, SigmaOverOneIsPassThrough) {
  auto g = hdfg::build(dsl::compile_source(
      udf("model w[1]; input x[1]; output y;", "s = sigma(x, 1);\ng = s * w;", "g")));
  const HNode& n = node_of(g, "s");
  EXPECT_EQ(n.kind, HNode::Kind::Group);
  EXPECT_EQ(n.subs.size(), 0u);
}

TEST(Decompose, GroupSubCountIsElementsMinusGroups) {
  auto g = hdfg::build(dsl::compile_source(
      udf("model w[4]; input x[4][6]; output y;", "s = sigma(x, 2);\ng = s * w;", "g")));
  EXPECT_EQ(node_of(g, "s").subs.size(), 4u * 5u);
}

TEST(BuildHdfg, SingleCopyUpdate) {
  auto g = hdfg::build(dsl::compile_source(udf("model w[3]; input x[3]; output y;", "g = x;", "g")));
  int update_nodes = 0;
  for (const auto& n : g.nodes) update_nodes += n.region == Region::Update;
  EXPECT_EQ(update_nodes, 1);
  EXPECT_EQ(node_of(g, "g").kind, HNode::Kind::Copy);
}

TEST(BuildHdfg, LinearRegressionShape) {
  const char* src = R"(
algo linearR {
  model w[10]; input x[10]; output y; meta lr = 0.01; meta eps = 0.001;
  update { s = sigma(w * x, 1); er = s - y; grad = er * x; }
  merge { merge(grad, 16, "+"); w_up = w - lr * grad; setModel(w_up); }
  terminator { done = norm(grad, 1) < eps; setConvergence(done); }
})";
  auto g = hdfg::build(dsl::compile_source(src));
  auto order = hdfg::topo_order(g);
  EXPECT_EQ(order.size(), g.nodes.size());
  EXPECT_EQ(node_of(g, "s").kind, HNode::Kind::Group);
  EXPECT_EQ(node_of(g, "er").op, hdfg::ScalarOp::Sub);
  EXPECT_EQ(node_of(g, "grad").op, hdfg::ScalarOp::Mul);
  EXPECT_EQ(g.nodes[static_cast<std::size_t>(g.merge_node)].kind, HNode::Kind::Merge);
  EXPECT_EQ(node_of(g, "w_up").region, Region::Merge);
  EXPECT_EQ(node_of(g, "done").region, Region::Convergence);
  EXPECT_EQ(node_of(g, "done").op, hdfg::ScalarOp::Lt);
  EXPECT_TRUE(g.has_convergence);
  EXPECT_EQ(g.update.outputs.size(), 10u);
  EXPECT_EQ(g.merge.outputs.size(), 10u);
  EXPECT_EQ(g.convergence.outputs.size(), 1u);
}

TEST(BuildHdfg, MergeNodesFormACut) {
  for (const char* file : {"linear", "logistic", "svm", "lrmf", "linear_converge"}) {
    auto g = hdfg::build(dsl::compile_source(read_file(std::string(DANA_SAMPLES) + "/" + file + ".dana", "t")));
    EXPECT_EQ(hdfg::topo_order(g).size(), g.nodes.size()) << file;
    for (const auto& n : g.nodes) {
      if (n.region == Region::Update || n.kind == HNode::Kind::Merge) continue;
      for (int p : n.preds) {
        const auto& pn = g.nodes[static_cast<std::size_t>(p)];
        EXPECT_TRUE(pn.region != Region::Update) << file << ": node " << n.id << " reads update node " << p;
      }
    }
    // merge-side programs only read model, merged values and constants
    for (const auto* prog : {&g.merge, &g.convergence})
      for (const auto& s : prog->subs)
        for (const auto* o : {&s.a, &s.b})
          if (!o->is_sub()) EXPECT_NE(o->space, hdfg::Space::Tuple) << file;
  }
}

TEST(BuildHdfg, EvaluationMatchesDirectExpressions) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (const char* file : {"linear", "logistic", "svm", "lrmf", "linear_converge"}) {
    auto p = dsl::compile_source(read_file(std::string(DANA_SAMPLES) + "/" + file + ".dana", "t"));
    auto g = hdfg::build(p);
    auto lay = dsl::tuple_layout(p);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> tuple(lay.feature_count + lay.label_count), model(g.model_size);
      for (double& v : tuple) v = u(rng);
      for (double& v : model) v = u(rng);
      hdfg::Leaves leaves;
      leaves.tuple = tuple;
      leaves.model = model;
      auto got = hdfg::evaluate(g.update, leaves, 8);
      reference::Env env(p, reference::Context::Update, 8);
      env.tuple = &tuple;
      env.model = &model;
      auto want = env.get(p.merge.var).v;
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t k = 0; k < got.size(); ++k) EXPECT_LE(rel(got[k], want[k]), 1e-12) << file;

      leaves.merged = want;
      auto upd = hdfg::evaluate(g.merge, leaves, 8);
      reference::Env menv(p, reference::Context::Merge, 8);
      menv.model = &model;
      menv.merged = &want;
      auto upd_want = menv.get(p.updated_var).v;
      ASSERT_EQ(upd.size(), upd_want.size());
      for (std::size_t k = 0; k < upd.size(); ++k) EXPECT_LE(rel(upd[k], upd_want[k]), 1e-12) << file;
    }
  }
}

TEST(BuildHdfg, JsonListsEveryNode) {
  auto g = hdfg::build(dsl::compile_source(udf("model w[3]; input x[3]; output y;", "g = w * x;", "g")));
  auto j = hdfg::to_json(g);
  EXPECT_EQ(j["nodes"].size(), g.nodes.size());
  EXPECT_EQ(j["merge"]["coefficient"], 4);
}
