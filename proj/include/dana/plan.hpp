#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dana/dsl.hpp"
#include "dana/engine.hpp"
#include "dana/hdfg.hpp"
#include "dana/pageio.hpp"
#include "dana/planner.hpp"
#include "dana/scheduler.hpp"
#include "dana/strider.hpp"

// Accelerator plan: everything `compile` decides, stored as a directory.

namespace dana::plan {

struct Plan {
  std::string udf_source;
  dsl::TypedProgram program;
  hdfg::HDfg graph;
  pageio::PageLayout layout;
  planner::FpgaSpec fpga;
  engine::EngineConfig config;  // threads/acs of the chosen point
  planner::Selection selection;
  planner::PointImage point;
  strider::Program strider;

  const planner::Candidate& chosen() const { return selection.menu.at(selection.chosen); }
};

inline void check_arity(const dsl::TypedProgram& p, const pageio::PageLayout& layout) {
  auto t = dsl::tuple_layout(p);
  if (static_cast<int>(t.feature_count) != layout.feature_count ||
      static_cast<int>(t.label_count) != layout.label_count)
    throw Error("planner", "tuple arity mismatch: UDF reads " + std::to_string(t.feature_count) + " features and " +
                               std::to_string(t.label_count) + " labels, layout has " +
                               std::to_string(layout.feature_count) + " and " + std::to_string(layout.label_count));
}

inline Plan compile(const std::string& udf_source, const pageio::PageLayout& layout, const planner::FpgaSpec& fpga,
                    const engine::EngineConfig& base = {}) {
  Plan p;
  p.udf_source = udf_source;
  p.program = dsl::compile_source(udf_source);
  layout.validate();
  check_arity(p.program, layout);
  p.layout = layout;
  p.fpga = fpga;
  p.graph = hdfg::build(p.program);
  engine::EngineConfig cfg = base;
  cfg.width = layout.value_width;
  p.selection = planner::select_design(p.graph, fpga, layout, cfg);
  const auto& pt = p.chosen().point;
  cfg.threads = pt.threads;
  cfg.acs_per_thread = pt.acs_per_thread;
  p.config = cfg;
  p.point = planner::build_point(p.graph, pt, cfg);
  p.strider = strider::generate(layout);
  return p;
}

inline std::string micro_listing(const Plan& p) {
  std::string out;
  auto section = [&](const char* name, const engine::MicroProgram& m) {
    out += std::string("# ") + name + " makespan=" + std::to_string(m.makespan) + "\n" + engine::listing(m);
  };
  section("tuple", p.point.image.tuple);
  section("accumulate", p.point.image.accumulate);
  section("merge", p.point.image.merge);
  section("convergence", p.point.image.convergence);
  return out;
}

inline nlohmann::json to_json(const planner::Estimate& e) {
  return {{"transfer_cycles_per_page", e.transfer_per_page},
          {"strider_cycles_per_page", e.strider_per_page},
          {"compute_cycles_per_page", e.compute_per_page},
          {"epoch_cycles", e.epoch_cycles},
          {"total_cycles", e.total_cycles},
          {"epochs", e.epochs},
          {"seconds", e.seconds}};
}

inline nlohmann::json estimate_report(const Plan& p) {
  nlohmann::json menu = nlohmann::json::array();
  for (const auto& c : p.selection.menu)
    menu.push_back({{"threads", c.point.threads},
                    {"acs_per_thread", c.point.acs_per_thread},
                    {"tuple_makespan", c.costs.tuple},
                    {"merge_makespan", c.costs.merge},
                    {"estimate", to_json(c.estimate)}});
  const auto& a = p.selection.allocation;
  return {{"nominal_pages", planner::kNominalPages},
          {"allocation", {{"au_count", a.au_count}, {"ac_count", a.ac_count}, {"page_buffers", a.page_buffers},
                          {"bram_bytes", a.bram_bytes}, {"reserved_bytes", a.reserved_bytes}}},
          {"chosen", p.selection.chosen},
          {"menu", menu}};
}

inline KeyValueFile summary(const Plan& p) {
  KeyValueFile kv("plan");
  kv.set("algo", p.program.name);
  kv.set("threads", std::int64_t{p.config.threads});
  kv.set("acs_per_thread", std::int64_t{p.config.acs_per_thread});
  kv.set("au_count", std::int64_t{p.selection.allocation.au_count});
  kv.set("ac_count", std::int64_t{p.selection.allocation.ac_count});
  kv.set("page_buffers", std::int64_t{p.selection.allocation.page_buffers});
  kv.set("merge_coefficient", std::int64_t{p.program.merge.coefficient});
  kv.set("layout_fingerprint", p.layout.fingerprint());
  kv.set("strider_instructions", static_cast<std::int64_t>(p.strider.instrs.size()));
  kv.set("tuple_makespan", std::int64_t{p.point.costs.tuple});
  kv.set("micro_fingerprint", hex64(fnv1a(micro_listing(p))));
  return kv;
}

/// Writes the plan directory. Output is byte-identical for identical inputs.
inline void save(const Plan& p, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("plan", "cannot create '" + dir.string() + "'");
  const char* m = "plan";
  write_file(dir / "udf.dana", p.udf_source, m);
  write_file(dir / "layout.conf", p.layout.to_kv().to_string(), m);
  write_file(dir / "fpga.conf", p.fpga.to_kv().to_string(), m);
  write_file(dir / "engine.conf", p.config.to_kv().to_string(), m);
  write_file(dir / "strider.bin", strider::to_binary(p.strider), m);
  write_file(dir / "strider.s", strider::disassemble(p.strider), m);
  write_file(dir / "schedule.csv", scheduler::to_csv(p.point.tuple), m);
  write_file(dir / "schedule_accumulate.csv", scheduler::to_csv(p.point.accumulate), m);
  write_file(dir / "schedule_merge.csv", scheduler::to_csv(p.point.merge), m);
  write_file(dir / "schedule_convergence.csv", scheduler::to_csv(p.point.convergence), m);
  write_file(dir / "micro.txt", micro_listing(p), m);
  write_file(dir / "plan.txt", summary(p).to_string(), m);
  write_file(dir / "estimate.json", estimate_report(p).dump(2) + "\n", m);
  write_file(dir / "hdfg.json", hdfg::to_json(p.graph).dump(2) + "\n", m);
}

/// Reloads a plan directory, rebuilding the chosen point and checking the
/// stored strider binary and micro-programs against it.
inline Plan load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("plan", "no plan directory '" + dir.string() + "'");
  if (!std::filesystem::exists(dir / "plan.txt")) throw Error("plan", "'" + dir.string() + "' holds no plan.txt");
  Plan p;
  p.udf_source = read_file(dir / "udf.dana", "plan");
  p.layout = pageio::PageLayout::load(dir / "layout.conf");
  p.fpga = planner::FpgaSpec::from_kv(KeyValueFile::load(dir / "fpga.conf", "plan"));
  engine::EngineConfig cfg = engine::EngineConfig::from_kv(KeyValueFile::load(dir / "engine.conf", "plan"));
  KeyValueFile kv = KeyValueFile::load(dir / "plan.txt", "plan");

  p.program = dsl::compile_source(p.udf_source);
  check_arity(p.program, p.layout);
  p.graph = hdfg::build(p.program);
  engine::EngineConfig base = cfg;
  p.selection = planner::select_design(p.graph, p.fpga, p.layout, base);
  planner::DesignPoint pt{static_cast<int>(kv.get_int("threads")), static_cast<int>(kv.get_int("acs_per_thread"))};
  if (!(pt == planner::DesignPoint{cfg.threads, cfg.acs_per_thread}))
    throw Error("plan", "plan.txt and engine.conf disagree on the design point");
  bool found = false;
  for (std::size_t k = 0; k < p.selection.menu.size(); ++k)
    if (p.selection.menu[k].point == pt) {
      p.selection.chosen = k;
      found = true;
    }
  if (!found) throw Error("plan", "stored design point is not on the planner's menu");
  p.config = cfg;
  p.point = planner::build_point(p.graph, pt, cfg);
  p.strider = strider::from_binary(read_file(dir / "strider.bin", "plan"));
  strider::check_structure(p.strider);
  p.strider.layout_fingerprint = p.layout.fingerprint();
  if (kv.get("layout_fingerprint") != p.layout.fingerprint())
    throw Error("plan", "layout fingerprint does not match layout.conf");
  if (kv.get("micro_fingerprint") != hex64(fnv1a(micro_listing(p))))
    throw Error("plan", "stored micro-programs do not match the rebuilt schedule");
  return p;
}

}  // namespace dana::plan
