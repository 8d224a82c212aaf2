#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "dana/common.hpp"

using namespace dana;
namespace fs = std::filesystem;

namespace {

const std::string kSamples = DANA_SAMPLES;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dana_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  Result dana(const std::string& args) const {
    std::string cmd = std::string(DANA_BIN) + " " + args + " >" + at("stdout") + " 2>" + at("stderr");
    int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(at("stdout"), "test");
    r.err = read_file(at("stderr"), "test");
    return r;
  }

  // gen-data + compile for one sample
  void prepare(const std::string& udf, const std::string& csv, const std::string& layout) {
    ASSERT_EQ(dana("gen-data --csv " + kSamples + "/" + csv + " --layout " + kSamples + "/" + layout + " --out " +
                   at("data"))
                  .code,
              0);
    ASSERT_EQ(dana("compile --udf " + kSamples + "/" + udf + " --layout " + kSamples + "/" + layout + " --out " +
                   at("plan"))
                  .code,
              0);
  }

  fs::path dir_;
};

std::int64_t value_of(const std::string& kv, const std::string& key) {
  return KeyValueFile::parse(kv, "test").get_int(key, -1);
}

}  // namespace

TEST_F(Cli, GenDataOnSampleCsvs) {
  for (auto [csv, layout, tuples] : {std::tuple{"linear.csv", "layout16.conf", 2048},
                                     {"logistic.csv", "layout8.conf", 925},
                                     {"lrmf.csv", "layout32.conf", 1024}}) {
    fs::remove_all(at("data"));
    Result r = dana(std::string("gen-data --csv ") + kSamples + "/" + csv + " --layout " + kSamples + "/" + layout +
                    " --out " + at("data"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(value_of(r.out, "tuple_count"), tuples) << csv;
    EXPECT_TRUE(fs::exists(at("data") + "/page_000000.bin"));
  }
}

TEST_F(Cli, GenDataEmptyCsv) {
  write_file(at("e.csv"), "", "test");
  Result r = dana("gen-data --csv " + at("e.csv") + " --layout " + kSamples + "/layout2.conf --out " + at("data"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dana: pageio: empty dataset"), std::string::npos) << r.err;
}

TEST_F(Cli, CompileIsReproducible) {
  prepare("logistic.dana", "logistic.csv", "layout8.conf");
  std::string first = read_file(at("plan") + "/micro.txt", "test");
  std::string strider = read_file(at("plan") + "/strider.bin", "test");
  ASSERT_EQ(dana("compile --udf " + kSamples + "/logistic.dana --layout " + kSamples + "/layout8.conf --out " +
                 at("plan2"))
                .code,
            0);
  for (const auto& e : fs::directory_iterator(at("plan")))
    EXPECT_EQ(read_file(e.path(), "test"), read_file(at("plan2") + "/" + e.path().filename().string(), "test"))
        << e.path().filename();
  EXPECT_FALSE(first.empty());
  EXPECT_FALSE(strider.empty());
}

TEST_F(Cli, CompileSyntaxError) {
  write_file(at("bad.dana"), "algo a {\n  model w[3]\n}\n", "test");
  Result r = dana("compile --udf " + at("bad.dana") + " --layout " + kSamples + "/layout2.conf --out " + at("plan"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dana: dsl:"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(at("plan") + "/plan.txt"));
}

TEST_F(Cli, CompileArityMismatch) {
  Result r = dana("compile --udf " + kSamples + "/linear.dana --layout " + kSamples + "/layout8.conf --out " +
                  at("plan"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("tuple arity mismatch"), std::string::npos) << r.err;
}

TEST_F(Cli, RunMissingPlan) {
  Result r = dana("run --plan " + at("nothing") + " --data " + at("nothing"));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("dana: ", 0), 0u) << r.err;
}

TEST_F(Cli, RunWritesReportAndModel) {
  prepare("linear_converge.dana", "linear_converge.csv", "layout2.conf");
  Result r = dana("run --plan " + at("plan") + " --data " + at("data") + " --report " + at("report.txt") +
                  " --model " + at("model.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(at("report.txt"), "test"), r.out);
  EXPECT_NE(r.out.find("converged = true"), std::string::npos);
  EXPECT_EQ(read_file(at("model.csv"), "test").rfind("name,index,value\nw,0,", 0), 0u);
  EXPECT_TRUE(fs::exists(at("report.txt.epochs.csv")));
}

TEST_F(Cli, NoStriderCostsMoreCycles) {
  prepare("svm.dana", "svm.csv", "layout8.conf");
  Result fast = dana("run --plan " + at("plan") + " --data " + at("data"));
  Result slow = dana("run --plan " + at("plan") + " --data " + at("data") + " --no-strider");
  ASSERT_EQ(fast.code, 0) << fast.err;
  ASSERT_EQ(slow.code, 0) << slow.err;
  EXPECT_GT(value_of(slow.out, "total_cycles"), value_of(fast.out, "total_cycles"));
}

TEST_F(Cli, EstimateWithinFivePercent) {
  prepare("linear.dana", "linear.csv", "layout16.conf");
  Result est = dana("estimate --plan " + at("plan") + " --data " + at("data"));
  Result run = dana("run --plan " + at("plan") + " --data " + at("data"));
  ASSERT_EQ(est.code, 0) << est.err;
  ASSERT_EQ(run.code, 0) << run.err;
  double e = static_cast<double>(value_of(est.out, "total_cycles"));
  double m = static_cast<double>(value_of(run.out, "total_cycles"));
  EXPECT_LE(std::abs(e - m) / m, 0.05);
}

TEST_F(Cli, InspectViews) {
  prepare("linear.dana", "linear.csv", "layout16.conf");
  Result s = dana("inspect --plan " + at("plan") + " --strider");
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("readB"), std::string::npos);
  EXPECT_NE(s.out.find("page total:"), std::string::npos);
  Result sum = dana("inspect --plan " + at("plan"));
  EXPECT_EQ(value_of(sum.out, "strider_instructions"), 12);
  Result sch = dana("inspect --plan " + at("plan") + " --schedule");
  EXPECT_EQ(sch.out.rfind("cycle,ac,au,subNode,op\n", 0), 0u);
  Result empty = dana("inspect --plan " + dir_.string());
  EXPECT_EQ(empty.code, 1);
  EXPECT_EQ(empty.err.rfind("dana: ", 0), 0u);
}
