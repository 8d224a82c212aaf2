// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>

#include "dana/plan.hpp"
#include "dana/reference.hpp"
#include "dana/runtime.hpp"

using namespace dana;
namespace fs = std::filesystem;

namespace {

// pinned tolerances
constexpr double kEstimateTolerance = 0.05;
constexpr double kPlantedL2 = 1e-2;
constexpr double kThreadInvariance = 1e-5;
constexpr double kStriderSeconds = 30.0;
constexpr double kLockstepSeconds = 120.0;
constexpr int kFuzzPages = 1000;

const std::string kSamples = DANA_SAMPLES;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Workload {
  std::string name;
  plan::Plan plan;
  std::vector<pageio::TupleRecord> rows;
  fs::path data;
};

fs::path scratch() {
  static fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "dana_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

Workload make(const std::string& name, const std::string& udf_source, const pageio::PageLayout& layout,
              std::vector<pageio::TupleRecord> rows) {
  Workload w;
  w.name = name;
  w.plan = plan::compile(udf_source, layout, planner::FpgaSpec{});
  w.rows = std::move(rows);
  w.data = scratch() / name;
  fs::remove_all(w.data);
  pageio::write_dataset(w.rows, layout, w.data);
  return w;
}

Workload sample(const std::string& name, const std::string& layout_file) {
  auto layout = pageio::PageLayout::load(kSamples + "/" + layout_file);
  auto rows = pageio::parse_csv(read_file(kSamples + "/" + name + ".csv", "acceptance"), layout, false);
  return make(name, read_file(kSamples + "/" + name + ".dana", "acceptance"), layout, std::move(rows));
}

std::vector<Workload>& corpus() {
  static std::vector<Workload> ws = [] {
    std::vector<Workload> v;
    v.push_back(sample("linear", "layout16.conf"));
    v.push_back(sample("logistic", "layout8.conf"));
    v.push_back(sample("svm", "layout8.conf"));
    v.push_back(sample("lrmf", "layout32.conf"));
    v.push_back(sample("linear_converge", "layout2.conf"));
    return v;
  }();
  return ws;
}

std::vector<std::vector<double>> flat(const std::vector<pageio::TupleRecord>& rows, std::size_t n) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < std::min(n, rows.size()); ++i) {
    auto t = rows[i].features;
    t.insert(t.end(), rows[i].labels.begin(), rows[i].labels.end());
    out.push_back(std::move(t));
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1
Outcome strider_equivalence() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  int mismatches = 0, tuples = 0;
  for (int trial = 0; trial < kFuzzPages; ++trial) {
    pageio::PageLayout l;
    l.feature_count = std::uniform_int_distribution<int>(1, 256)(rng);
    l.value_width = trial % 2 ? 8 : 4;
    l.tuple_header_len = std::uniform_int_distribution<int>(0, 32)(rng);
    l.label_count = static_cast<int>(rng() % 2);
    int n = std::uniform_int_distribution<int>(0, l.capacity())(rng);
    std::vector<pageio::TupleRecord> rows;
    for (int i = 0; i < n; ++i) {
      pageio::TupleRecord t;
      for (int k = 0; k < l.feature_count; ++k) t.features.push_back(u(rng));
      for (int k = 0; k < l.label_count; ++k) t.labels.push_back(u(rng));
      rows.push_back(pageio::quantize(t, l));
    }
    auto page = pageio::build_page(l, rows);
    auto got = strider::execute(strider::generate(l), page, l).payloads;
    std::vector<std::string> want;
    for (const auto& r : pageio::read_reference(page, l)) want.push_back(pageio::encode_payload(r, l));
    mismatches += got != want;
    tuples += n;
  }
  double s = seconds_since(t0);
  return {mismatches == 0 && s < kStriderSeconds, std::to_string(kFuzzPages) + " pages, " + std::to_string(tuples) +
                                                      " tuples, " + std::to_string(mismatches) + " mismatches, " +
                                                      format_double(std::round(s * 100) / 100) + " s"};
}

// 2
Outcome dimension_example() {
  auto p = dsl::compile_source(
      "algo d { model w[5][2]; meta mo[5][10] = 1; input in[2][10]; output y;"
      " update { r = sigma(mo * in, 2); g = r - w; }"
      " merge { merge(g, 1, \"+\"); u = w - g; setModel(u); } terminator { setEpochs(1); } }");
  Dims d = hdfg::infer_dims(p).at("r");
  return {d == Dims{5, 2}, "r: " + dims_to_string(d)};
}

// 3
Outcome scheduling_example() {
  hdfg::ScalarProgram p;
  for (int i = 0; i < 16; ++i)
    p.outputs.push_back(hdfg::Operand::of_sub(p.add(hdfg::ScalarOp::Mul, hdfg::Operand::leaf(hdfg::Space::Tuple, i),
                                                    hdfg::Operand::leaf(hdfg::Space::Model, i), 0)));
  auto s = scheduler::schedule(p, 2, {});
  std::set<int> acs, cycles;
  std::set<std::pair<int, int>> units;
  for (const auto& pl : s.placements) {
    acs.insert(pl.ac);
    cycles.insert(pl.cycle);
    units.insert({pl.ac, pl.au});
  }
  bool ok = acs.size() == 2 && cycles.size() == 1 && units.size() == 16;
  return {ok, std::to_string(acs.size()) + " ACs, " + std::to_string(cycles.size()) + " issue cycle(s), makespan " +
                  std::to_string(s.makespan)};
}

// 4
Outcome lockstep_equality() {
  auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  for (const auto& w : corpus()) {
    auto got = runtime::train(w.plan, w.data);
    reference::Options o;
    o.width = w.plan.layout.value_width;
    o.threads = w.plan.config.threads;
    auto want = reference::train(w.plan.program, w.rows, o);
    bool same = got.model == want.model && got.report.epochs == want.epochs;
    ok = ok && same;
    detail += w.name + (same ? " equal" : " DIFFERS") + ", ";
  }
  double s = seconds_since(t0);
  ok = ok && s < kLockstepSeconds;
  return {ok, detail + format_double(std::round(s * 10) / 10) + " s"};
}

// 5
Outcome convergence() {
  // planted weights, noise-free labels
  const std::vector<double> planted = {0.5, -0.25, 0.75, -1.0};
  pageio::PageLayout l4;
  l4.feature_count = 4;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<pageio::TupleRecord> rows;
  for (int i = 0; i < 512; ++i) {
    pageio::TupleRecord t;
    double y = 0;
    for (double w : planted) {
      t.features.push_back(u(rng));
      y += w * t.features.back();
    }
    t.labels.push_back(y);
    rows.push_back(pageio::quantize(t, l4));
  }
  Workload lin = make("planted",
                      "algo planted { model w[4]; input x[4]; output y; meta lr = 0.2;"
                      " update { e = sigma(w * x, 1) - y; g = e * x; }"
                      " merge { merge(g, 8, \"+\"); u = w - lr * g; setModel(u); }"
                      " terminator { setEpochs(50); } }",
                      l4, rows);
  auto model = runtime::train(lin.plan, lin.data).model;
  double l2 = 0;
  for (std::size_t k = 0; k < planted.size(); ++k) l2 += (model[k] - planted[k]) * (model[k] - planted[k]);
  l2 = std::sqrt(l2);

  // separable 2-D toy set with a margin
  pageio::PageLayout l2d;
  l2d.feature_count = 2;
  std::vector<pageio::TupleRecord> pts;
  while (pts.size() < 200) {
    double a = u(rng), b = u(rng);
    double s = a + 0.5 * b;
    if (std::abs(s) < 0.1) continue;
    pts.push_back(pageio::quantize({{a, b}, {s > 0 ? 1.0 : 0.0}}, l2d));
  }
  Workload logi = make("toy_logistic",
                       "algo toy { model w[2]; input x[2]; output y; meta lr = 1.0;"
                       " update { p = sigmoid(sigma(w * x, 1)); g = (p - y) * x; }"
                       " merge { merge(g, 8, \"+\"); u = w - lr * g; setModel(u); }"
                       " terminator { setEpochs(200); } }",
                       l2d, pts);
  auto w = runtime::train(logi.plan, logi.data).model;
  reference::Options f64;
  f64.mode = reference::Mode::Float64;
  auto wf = reference::train(logi.plan.program, pts, f64).model;
  int correct = 0, correct64 = 0;
  for (const auto& p : pts) {
    bool pos = p.labels[0] > 0.5;
    correct += (w[0] * p.features[0] + w[1] * p.features[1] > 0) == pos;
    correct64 += (wf[0] * p.features[0] + wf[1] * p.features[1] > 0) == pos;
  }
  bool ok = l2 <= kPlantedL2 && correct == static_cast<int>(pts.size()) && correct64 == static_cast<int>(pts.size());
  return {ok, "planted L2 " + format_double(l2) + ", logistic accuracy " + std::to_string(correct) + "/" +
                  std::to_string(pts.size()) + " (float64 " + std::to_string(correct64) + ")"};
}

// 6
Outcome thread_invariance() {
  bool exact = true;
  double worst = 0;
  int points = 0;
  for (const auto& w : corpus()) {
    const int c = w.plan.program.merge.coefficient;
    auto batch = flat(w.rows, static_cast<std::size_t>(c));
    auto model = dsl::initial_model(w.plan.program);
    for (double& v : model) v = round_to_width(v, 4);
    std::vector<double> base;
    for (int t : planner::candidate_threads(c, w.plan.selection.allocation.ac_count)) {
      if (c % t) continue;
      engine::EngineConfig cfg = w.plan.config;
      cfg.threads = t;
      cfg.acs_per_thread = 1;
      auto pi = planner::build_point(w.plan.graph, {t, 1}, cfg);
      engine::Engine eng(pi.image, cfg);
      auto merged = eng.run_batch(batch, model).merged;
      exact = exact && merged == reference::merge_batch(w.plan.program, batch, model, t, 4);
      if (t == 1) {
        base = merged;
        continue;
      }
      double num = 0, den = 0;
      for (std::size_t k = 0; k < merged.size(); ++k) {
        num += (merged[k] - base[k]) * (merged[k] - base[k]);
        den += base[k] * base[k];
      }
      double rel = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
      worst = std::max(worst, rel);
      ++points;
    }
  }
  return {exact && worst <= kThreadInvariance, std::to_string(points) + " thread counts, worst relative " +
                                                   format_double(worst) + ", bit-exact vs lockstep " +
                                                   (exact ? "yes" : "no")};
}

// 7 and 9 share runs
struct Runs {
  std::vector<runtime::Report> strider, host;
};

Runs& runs() {
  static Runs r = [] {
    Runs out;
    for (const auto& w : corpus()) {
      out.strider.push_back(runtime::train(w.plan, w.data).report);
      runtime::Options o;
      o.no_strider = true;
      out.host.push_back(runtime::train(w.plan, w.data, o).report);
    }
    return out;
  }();
  return r;
}

Outcome estimator_accuracy() {
  double worst = 0;
  for (std::size_t k = 0; k < corpus().size(); ++k)
    worst = std::max({worst, runs().strider[k].estimate_error(), runs().host[k].estimate_error()});
  return {worst <= kEstimateTolerance, "worst relative error " + format_double(worst) + " over " +
                                           std::to_string(2 * corpus().size()) + " runs"};
}

// 8
Outcome design_selection() {
  bool ok = true;
  std::string detail;
  for (const auto& w : corpus()) {
    const auto& sel = w.plan.selection;
    const int c = w.plan.program.merge.coefficient;
    auto nominal = planner::DatasetShape::nominal(w.plan.layout, planner::kNominalPages);
    int best_t = -1;
    std::int64_t best = 0;
    for (int t : planner::candidate_threads(c, sel.allocation.ac_count)) {
      engine::EngineConfig cfg = w.plan.config;
      cfg.threads = t;
      cfg.acs_per_thread = sel.allocation.ac_count / t;
      auto pi = planner::build_point(w.plan.graph, {t, cfg.acs_per_thread}, cfg);
      auto e = planner::estimate(pi.costs, pi.point, w.plan.layout, w.plan.fpga, sel.allocation, nominal, c, 1, cfg);
      if (best_t < 0 || e.total_cycles < best) {
        best = e.total_cycles;
        best_t = t;
      }
    }
    bool same = w.plan.chosen().point.threads == best_t && w.plan.chosen().estimate.total_cycles == best;
    ok = ok && same;
    detail += w.name + " t=" + std::to_string(w.plan.chosen().point.threads) + (same ? "" : " (argmin differs)") + ", ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// 9
Outcome ablation() {
  bool ok = true;
  double least = 1e300;
  for (std::size_t k = 0; k < corpus().size(); ++k) {
    auto a = runs().strider[k].total_cycles, b = runs().host[k].total_cycles;
    ok = ok && b > a;
    least = std::min(least, static_cast<double>(b) / static_cast<double>(a));
  }
  return {ok, "smallest host/strider cycle ratio " + format_double(std::round(least * 100) / 100)};
}

// 10
Outcome thread_curves() {
  bool ok = true;
  std::string detail;
  for (const auto& w : corpus()) {
    const auto& menu = w.plan.selection.menu;
    if (w.name == "lrmf") {
      int max_t = menu.back().point.threads;
      bool fewer = w.plan.chosen().point.threads < max_t;
      ok = ok && fewer;
      detail += "lrmf picks " + std::to_string(w.plan.chosen().point.threads) + " of " + std::to_string(max_t) + ", ";
      continue;
    }
    bool mono = true;
    for (std::size_t k = 1; k < menu.size(); ++k)
      mono = mono && menu[k].estimate.total_cycles <= menu[k - 1].estimate.total_cycles;
    ok = ok && mono;
    detail += w.name + (mono ? " non-increasing" : " NOT monotone") + ", ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// 11
Outcome isa_codec() {
  int programs = 0;
  bool ok = true;
  for (int f : {1, 2, 3, 7, 16, 64, 255, 256})
    for (int wdt : {4, 8})
      for (int hdr : {0, 1, 8, 23, 40}) {
        pageio::PageLayout l;
        l.feature_count = f;
        l.value_width = wdt;
        l.tuple_header_len = hdr;
        auto p = strider::generate(l);
        std::string text = strider::disassemble(p);
        auto q = strider::assemble(text);
        ok = ok && q.instrs == p.instrs && strider::disassemble(q) == text &&
             strider::from_binary(strider::to_binary(p)).instrs == p.instrs;
        ++programs;
      }
  std::uint32_t words = 0;
  const std::uint32_t valid = static_cast<std::uint32_t>(strider::kOpcodeCount) << 18;
  for (std::uint32_t w = 0; w < valid; ++w) {
    if (strider::encode(strider::decode(w)) != w) ok = false;
    ++words;
  }
  return {ok, std::to_string(programs) + " programs round-trip, " + std::to_string(words) + " words decode"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"strider matches reference page reader", strider_equivalence},
      {"contraction infers [5][2]", dimension_example},
      {"16-wide multiply fills two ACs in one wave", scheduling_example},
      {"simulated training equals lockstep reference", lockstep_equality},
      {"planted weights and separable logistic", convergence},
      {"merged gradient invariant to thread count", thread_invariance},
      {"estimate within 5% of simulated cycles", estimator_accuracy},
      {"selection is the argmin of its menu", design_selection},
      {"host extraction costs more cycles", ablation},
      {"thread-scaling trends", thread_curves},
      {"strider ISA codec", isa_codec},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu: %s  %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch());
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed;
}
