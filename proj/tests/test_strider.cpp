#include <gtest/gtest.h>

#include <random>
#include <set>

#include "dana/strider.hpp"

using namespace dana;
using strider::Opcode;

namespace {

pageio::PageLayout layout(int features, int width = 4, int header = 8, int page = 32768) {
  pageio::PageLayout l;
  l.feature_count = features;
  l.value_width = width;
  l.tuple_header_len = header;
  l.page_size = page;
  return l;
}

std::vector<pageio::TupleRecord> rows(const pageio::PageLayout& l, int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-100, 100);
  std::vector<pageio::TupleRecord> out;
  for (int i = 0; i < n; ++i) {
    pageio::TupleRecord t;
    for (int k = 0; k < l.feature_count; ++k) t.features.push_back(u(rng));
    for (int k = 0; k < l.label_count; ++k) t.labels.push_back(u(rng));
    out.push_back(pageio::quantize(t, l));
  }
  return out;
}

std::vector<std::string> reference_payloads(const pageio::Page& p, const pageio::PageLayout& l) {
  std::vector<std::string> out;
  for (const auto& r : pageio::read_reference(p, l)) out.push_back(pageio::encode_payload(r, l));
  return out;
}

}  // namespace

TEST(StriderCodec, ReadHeaderWord) {
  strider::Program p = strider::assemble("readB 0, 8, %cr1");
  ASSERT_EQ(p.instrs.size(), 1u);
  const auto& i = p.instrs[0];
  EXPECT_EQ(i.op, Opcode::ReadB);
  EXPECT_FALSE(i.mode_a);
  EXPECT_FALSE(i.mode_b);
  EXPECT_EQ(i.a, 0);
  EXPECT_EQ(i.b, 8);
  EXPECT_EQ(i.dst, 1);
  std::uint32_t w = strider::encode(i);
  EXPECT_EQ(w >> 18, 0u);
  EXPECT_EQ(w & ~strider::kWordMask, 0u);
  EXPECT_EQ(w, (8u << 4) | 1u);
}

TEST(StriderCodec, OpcodesAreUnique) {
  std::set<std::uint32_t> seen;
  for (int op = 0; op < strider::kOpcodeCount; ++op) {
    strider::Instr i;
    i.op = static_cast<Opcode>(op);
    if (i.op == Opcode::ExtrBit) i.b = 1;
    seen.insert(strider::encode(i) >> 18);
  }
  EXPECT_EQ(seen.size(), 11u);
}

TEST(StriderCodec, GeneratedProgramRoundTrips) {
  for (int hdr : {0, 8, 23}) {
    strider::Program p = strider::generate(layout(16, 4, hdr));
    std::string text = strider::disassemble(p);
    strider::Program q = strider::assemble(text);
    EXPECT_EQ(q.instrs, p.instrs);
    EXPECT_EQ(strider::disassemble(q), text);
    EXPECT_EQ(strider::from_binary(strider::to_binary(p)).instrs, p.instrs);
    // annotated listing still assembles: annotations are comments
    EXPECT_EQ(strider::assemble(strider::annotated_listing(p, layout(16, 4, hdr))).instrs, p.instrs);
  }
}

TEST(StriderCodec, AssemblerRejects) {
  EXPECT_THROW(strider::assemble("extrB %t0, 40, 3, %t1"), Error);
  EXPECT_THROW(strider::assemble("fetch 0, 8, %cr1"), Error);
  EXPECT_THROW(strider::assemble("bexit lt, %t2, %cr4"), Error);
  EXPECT_THROW(strider::assemble("readB 0, 8"), Error);
  EXPECT_THROW(strider::assemble("readB 300, 8, %cr1"), Error);
}

TEST(StriderCodec, EveryValidWordDecodes) {
  std::size_t n = 0;
  for (std::uint32_t w = 0; w < (11u << 18); ++w) {
    strider::Instr i = strider::decode(w);
    ASSERT_EQ(strider::encode(i), w);
    ++n;
  }
  EXPECT_EQ(n, 11u << 18);
  EXPECT_THROW(strider::decode(11u << 18), Error);
  EXPECT_THROW(strider::decode(1u << 22), Error);
}

TEST(StriderGenerate, DefaultLayoutStructure) {
  strider::Program p = strider::generate(layout(16));
  std::vector<Opcode> ops;
  for (const auto& i : p.instrs) ops.push_back(i.op);
  std::vector<Opcode> want = {Opcode::ReadB, Opcode::ReadB, Opcode::ReadB, Opcode::ExtrB,
                              Opcode::ReadB, Opcode::ExtrBit, Opcode::ExtrBit,
                              Opcode::Bentr, Opcode::ReadB, Opcode::Cln, Opcode::Sub, Opcode::Bexit};
  EXPECT_EQ(ops, want);
  EXPECT_EQ(p.instrs[0].a, 0);
  EXPECT_EQ(p.instrs[0].b, 8);
  EXPECT_EQ(p.instrs[1].a, 8);
  EXPECT_EQ(p.instrs[1].b, 2);
  EXPECT_EQ(p.instrs[2].a, 10);
  EXPECT_EQ(p.instrs[2].b, 4);
  EXPECT_EQ(p.instrs[4].a, 24);
  EXPECT_EQ(p.instrs[11].cond, static_cast<int>(strider::Cond::Lt));
}

TEST(StriderGenerate, ZeroHeaderClean) {
  strider::Program p = strider::generate(layout(4, 4, 0));
  EXPECT_EQ(p.instrs[9].op, Opcode::Cln);
  EXPECT_EQ(p.instrs[9].b, 0);
  auto l = layout(4, 4, 0);
  auto pg = pageio::build_page(l, rows(l, 20, 1));
  EXPECT_EQ(strider::execute(p, pg, l).payloads, reference_payloads(pg, l));
}

TEST(StriderExecute, TenTuplesInLinePointerOrder) {
  auto l = layout(3);
  auto data = rows(l, 10, 2);
  auto pg = pageio::build_page(l, data);
  auto r = strider::execute(strider::generate(l), pg, l);
  ASSERT_EQ(r.payloads.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(r.payloads[k], pageio::encode_payload(data[k], l));
}

TEST(StriderExecute, EmptyPage) {
  auto l = layout(3);
  auto pg = pageio::build_page(l, {});
  EXPECT_TRUE(strider::execute(strider::generate(l), pg, l).payloads.empty());
}

TEST(StriderExecute, DifferentialAgainstReference) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    int f = std::uniform_int_distribution<int>(1, 256)(rng);
    int w = rng() % 2 ? 4 : 8;
    int hdr = std::uniform_int_distribution<int>(0, 40)(rng);
    auto l = layout(f, w, hdr);
    int n = std::uniform_int_distribution<int>(0, l.capacity())(rng);
    auto pg = pageio::build_page(l, rows(l, n, static_cast<unsigned>(trial)));
    auto r = strider::execute(strider::generate(l), pg, l);
    ASSERT_EQ(r.payloads, reference_payloads(pg, l)) << "trial " << trial;
    EXPECT_EQ(r.cycles, strider::static_cycles(l, n)) << "trial " << trial;
  }
}

TEST(StriderExecute, CyclesDeterministicAndBounded) {
  auto l = layout(16);
  auto pg = pageio::build_page(l, rows(l, l.capacity(), 3));
  auto prog = strider::generate(l);
  auto a = strider::execute(prog, pg, l);
  auto b = strider::execute(prog, pg, l);
  EXPECT_EQ(a.cycles, b.cycles);
  std::int64_t body = (l.tuple_len() + 7) / 8 + 3;
  EXPECT_LE(a.cycles, 16 + l.capacity() * body);
}

TEST(StriderExecute, Faults) {
  auto l = layout(2);
  auto pg = pageio::build_page(l, rows(l, 5, 4));
  // read past the end of the page
  EXPECT_THROW(strider::execute(strider::assemble("ad %zero, 255, %t0\nmul %t0, 255, %t0\nreadB %t0, 8, %t1"), pg,
                                64, 100),
               Error);
  // loop never exits
  EXPECT_THROW(strider::execute(strider::assemble("bentr\nbexit ne, %zero, %cr1"), pg, 64, 1000), Error);
  // staging overflow
  EXPECT_THROW(strider::execute(strider::assemble("readB 0, 8, %out\nreadB 0, 8, %out"), pg, 12, 100), Error);
  // maxCycles must be positive
  EXPECT_THROW(strider::execute(strider::generate(l), pg, 64, 0), Error);
}

TEST(StriderExecute, NestedLoopLimit) {
  auto l = layout(2);
  auto pg = pageio::build_page(l, rows(l, 1, 5));
  std::string nine;
  for (int i = 0; i < 9; ++i) nine += "bentr\n";
  EXPECT_THROW(strider::execute(strider::assemble(nine), pg, 64, 100), Error);
}
