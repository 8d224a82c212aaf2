#include <gtest/gtest.h>

#include <bit>
#include <random>

#include "dana/planner.hpp"
#include "dana/reference.hpp"

using namespace dana;
using hdfg::Operand;
using hdfg::ScalarOp;
using hdfg::Space;

namespace {

hdfg::ScalarProgram elementwise(ScalarOp op, int n) {
  hdfg::ScalarProgram p;
  for (int i = 0; i < n; ++i) {
    int s = p.add(op, Operand::leaf(Space::Tuple, i), Operand::leaf(Space::Model, i), 0);
    p.outputs.push_back(Operand::of_sub(s));
  }
  return p;
}

hdfg::ScalarProgram random_dag(int n, unsigned seed) {
  std::mt19937 rng(seed);
  const ScalarOp ops[] = {ScalarOp::Add, ScalarOp::Mul, ScalarOp::Sub, ScalarOp::Sigmoid, ScalarOp::Max};
  hdfg::ScalarProgram p;
  for (int i = 0; i < n; ++i) {
    auto pick = [&]() {
      if (i == 0 || rng() % 3 == 0) return Operand::leaf(Space::Tuple, static_cast<int>(rng() % 4));
      return Operand::of_sub(static_cast<int>(rng() % static_cast<unsigned>(i)));
    };
    ScalarOp op = ops[rng() % 5];
    Operand a = pick();
    Operand b = hdfg::arity(op) == 2 ? pick() : Operand{};
    p.add(op, a, b, i);
  }
  for (int i = std::max(0, n - 3); i < n; ++i) p.outputs.push_back(Operand::of_sub(i));
  return p;
}

std::vector<double> replay(const hdfg::ScalarProgram& p, int acs, const hdfg::Leaves& l, std::int64_t* cycles = nullptr) {
  engine::EngineConfig cfg;
  auto sch = scheduler::schedule(p, acs, cfg);
  auto m = scheduler::emit(sch, p);
  engine::Machine mc(m, cfg);
  auto r = mc.run(l);
  if (cycles) *cycles = r.cycles;
  EXPECT_EQ(r.cycles, sch.makespan);
  EXPECT_EQ(r.stalls, 0);
  return r.outputs;
}

hdfg::Leaves leaves(unsigned seed, std::size_t n = 16) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  hdfg::Leaves l;
  for (std::size_t i = 0; i < n; ++i) {
    l.tuple.push_back(round_to_width(u(rng), 4));
    l.model.push_back(round_to_width(u(rng), 4));
  }
  return l;
}

}  // namespace

TEST(Schedule, SixteenMultipliesOneWaveOnTwoAcs) {
  auto p = elementwise(ScalarOp::Mul, 16);
  engine::EngineConfig cfg;
  auto s = scheduler::schedule(p, 2, cfg);
  std::set<std::pair<int, int>> slots;
  for (const auto& pl : s.placements) {
    EXPECT_EQ(pl.cycle, 0);
    slots.insert({pl.ac, pl.au});
  }
  EXPECT_EQ(slots.size(), 16u);
  EXPECT_EQ(s.makespan, cfg.lat(ScalarOp::Mul));
  // one AC issues 8 in a row, the other takes the rest
  auto one = scheduler::schedule(p, 1, cfg);
  EXPECT_EQ(one.makespan, 1 + cfg.lat(ScalarOp::Mul));
}

TEST(Schedule, ChainOfThree) {
  hdfg::ScalarProgram p;
  int a = p.add(ScalarOp::Add, Operand::leaf(Space::Tuple, 0), Operand::leaf(Space::Tuple, 1), 0);
  int b = p.add(ScalarOp::Add, Operand::of_sub(a), Operand::leaf(Space::Tuple, 0), 1);
  int c = p.add(ScalarOp::Add, Operand::of_sub(b), Operand::leaf(Space::Tuple, 1), 2);
  p.outputs.push_back(Operand::of_sub(c));
  engine::EngineConfig cfg;
  auto s = scheduler::schedule(p, 1, cfg);
  EXPECT_EQ(s.makespan, 3);
  EXPECT_TRUE(s.sends.empty());
  hdfg::Leaves l;
  l.tuple = {1.0, 2.0};
  EXPECT_EQ(replay(p, 1, l), std::vector<double>{6.0});
}

TEST(Schedule, SingleAddIsOneMaskedInstruction) {
  auto p = elementwise(ScalarOp::Add, 1);
  auto m = scheduler::emit(scheduler::schedule(p, 1, {}), p);
  ASSERT_EQ(m.ac_streams[0].size(), 1u);
  EXPECT_FALSE(m.ac_streams[0][0].nop);
  EXPECT_EQ(std::popcount(static_cast<unsigned>(m.ac_streams[0][0].mask)), 1);
  EXPECT_EQ(m.makespan, 1);
}

TEST(Schedule, RandomDagsRespectBoundsAndReplay) {
  engine::EngineConfig cfg;
  for (unsigned seed = 0; seed < 60; ++seed) {
    int n = 12 + static_cast<int>(seed % 5) * 10;
    auto p = random_dag(n, seed);
    for (int acs : {1, 2, 3}) {
      auto s = scheduler::schedule(p, acs, cfg);
      EXPECT_GE(s.makespan, scheduler::critical_path(p, cfg)) << seed;
      EXPECT_GE(s.makespan, (n + 8 * acs - 1) / (8 * acs)) << seed;
      // one op per AU per cycle, one op per AC per cycle
      std::set<std::tuple<int, int, int>> au_cycle;
      std::map<std::pair<int, int>, ScalarOp> ac_op;
      for (const auto& pl : s.placements) {
        EXPECT_TRUE(au_cycle.insert({pl.ac, pl.au, pl.cycle}).second);
        auto [it, fresh] = ac_op.insert({{pl.ac, pl.cycle}, pl.op});
        if (!fresh) EXPECT_EQ(it->second, pl.op);
      }
      auto l = leaves(seed);
      EXPECT_EQ(replay(p, acs, l), hdfg::evaluate(p, l, 4)) << "seed " << seed << " acs " << acs;
    }
  }
}

TEST(Schedule, Deterministic) {
  auto p = random_dag(40, 99);
  engine::EngineConfig cfg;
  EXPECT_EQ(scheduler::to_csv(scheduler::schedule(p, 2, cfg)), scheduler::to_csv(scheduler::schedule(p, 2, cfg)));
  EXPECT_EQ(engine::listing(scheduler::emit(scheduler::schedule(p, 2, cfg), p)),
            engine::listing(scheduler::emit(scheduler::schedule(p, 2, cfg), p)));
}

TEST(Schedule, WiderElementwiseNeverFaster) {
  engine::EngineConfig cfg;
  int prev = 0;
  for (int n = 1; n <= 64; ++n) {
    int ms = scheduler::schedule(elementwise(ScalarOp::Mul, n), 2, cfg).makespan;
    EXPECT_GE(ms, prev) << n;
    prev = ms;
  }
}

TEST(Schedule, DisabledOpIsRejected) {
  engine::EngineConfig cfg;
  cfg.enabled[static_cast<std::size_t>(ScalarOp::Sigmoid)] = false;
  hdfg::ScalarProgram p;
  p.add(ScalarOp::Sigmoid, Operand::leaf(Space::Tuple, 0), {}, 0);
  try {
    scheduler::schedule(p, 1, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.module(), "scheduler");
    EXPECT_NE(std::string(e.what()).find("unschedulable op 'sigmoid'"), std::string::npos);
  }
  EXPECT_THROW(scheduler::schedule(p, 0, {}), Error);
}

TEST(Schedule, SampleProgramsReplayBitExact) {
  for (const char* name : {"linear", "logistic", "svm", "lrmf", "linear_converge"}) {
    auto prog = dsl::compile_source(read_file(std::string(DANA_SAMPLES) + "/" + name + ".dana", "test"));
    auto g = hdfg::build(prog);
    auto tl = dsl::tuple_layout(prog);
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    hdfg::Leaves l;
    for (std::size_t i = 0; i < tl.feature_count + tl.label_count; ++i) l.tuple.push_back(round_to_width(u(rng), 4));
    for (std::size_t i = 0; i < g.model_size; ++i) l.model.push_back(round_to_width(u(rng), 4));
    for (int acs : {1, 2, 4}) EXPECT_EQ(replay(g.update, acs, l), hdfg::evaluate(g.update, l, 4)) << name << acs;
  }
}

TEST(Schedule, FourThreadMergeTreeDepth) {
  auto prog = dsl::compile_source(read_file(std::string(DANA_SAMPLES) + "/linear.dana", "test"));
  auto g = hdfg::build(prog);
  engine::EngineConfig cfg;
  cfg.threads = 4;
  auto pi = planner::build_point(g, {4, 1}, cfg);
  EXPECT_EQ(pi.image.tree.fan_in, 4);
  EXPECT_EQ(pi.image.tree.depth(), 2);
  EXPECT_EQ(pi.image.tree.elements, 16u);
}
