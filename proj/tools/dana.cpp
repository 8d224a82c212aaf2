// dana: command-line driver for gen-data, compile, run, estimate, inspect.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dana.hpp"

namespace {

using namespace dana;

std::string must_exist(const std::string& path, const char* module) {
  if (!std::filesystem::exists(path)) throw Error(module, "no such file '" + path + "'");
  return path;
}

int gen_data(const std::string& csv, const std::string& layout_file, const std::string& out, int width,
             int page_size, bool header) {
  pageio::PageLayout layout = pageio::PageLayout::load(must_exist(layout_file, "pageio"));
  if (width) layout.value_width = width;
  if (page_size) layout.page_size = page_size;
  layout.validate();
  pageio::Manifest m = pageio::ingest_csv(must_exist(csv, "pageio"), layout, out, header);
  std::cout << m.to_kv().to_string();
  return 0;
}

int compile(const std::string& udf, const std::string& layout_file, const std::string& fpga_file,
            const std::string& engine_file, const std::string& out) {
  std::string src = read_file(must_exist(udf, "dsl"), "dsl");
  pageio::PageLayout layout = pageio::PageLayout::load(must_exist(layout_file, "pageio"));
  planner::FpgaSpec fpga;
  if (!fpga_file.empty()) fpga = planner::FpgaSpec::from_kv(KeyValueFile::load(must_exist(fpga_file, "planner"), "planner"));
  engine::EngineConfig cfg;
  if (!engine_file.empty())
    cfg = engine::EngineConfig::from_kv(KeyValueFile::load(must_exist(engine_file, "engine"), "engine"));
  plan::Plan p = plan::compile(src, layout, fpga, cfg);
  plan::save(p, out);
  std::cout << plan::summary(p).to_string();
  return 0;
}

int run(const std::string& plan_dir, const std::string& data, bool no_strider, int handoff, int max_epochs,
        const std::string& report, const std::string& model) {
  plan::Plan p = plan::load(plan_dir);
  runtime::Options opt;
  opt.no_strider = no_strider;
  opt.handoff_cycles = handoff;
  opt.max_epochs = max_epochs;
  runtime::Outcome o = runtime::train(p, data, opt);
  std::string kv = o.report.to_kv().to_string();
  if (!report.empty()) {
    write_file(report, kv, "runtime");
    write_file(report + ".epochs.csv", o.report.epochs_csv(), "runtime");
  }
  if (!model.empty()) write_file(model, runtime::model_csv(p.program, o.model), "runtime");
  std::cout << kv;
  return 0;
}

int estimate(const std::string& plan_dir, const std::string& data, bool no_strider, int handoff) {
  plan::Plan p = plan::load(plan_dir);
  pageio::Manifest man = pageio::Manifest::load(data);
  if (man.layout.fingerprint() != p.layout.fingerprint())
    throw Error("planner", "layout fingerprint mismatch between plan and dataset");
  int epochs = p.graph.has_convergence ? 1 : p.graph.epochs;
  planner::EstimateOptions eo{no_strider, handoff};
  planner::Estimate e = planner::estimate(p.point.costs, p.point.point, p.layout, p.fpga, p.selection.allocation,
                                          planner::DatasetShape::of(man), p.program.merge.coefficient, epochs,
                                          p.config, eo);
  KeyValueFile kv("planner");
  kv.set("threads", std::int64_t{p.config.threads});
  kv.set("acs_per_thread", std::int64_t{p.config.acs_per_thread});
  kv.set("pages", std::int64_t{man.page_count});
  kv.set("tuples", man.tuple_count);
  kv.set("transfer_cycles_per_page", e.transfer_per_page);
  kv.set("strider_cycles_per_page", e.strider_per_page);
  kv.set_double("compute_cycles_per_page", e.compute_per_page);
  kv.set("epoch_cycles", e.epoch_cycles);
  kv.set("epochs", std::int64_t{e.epochs});
  if (p.graph.has_convergence) kv.set("epochs_note", "condition-terminated; totals are for one epoch");
  kv.set("total_cycles", e.total_cycles);
  kv.set_double("seconds", e.seconds);
  std::cout << kv.to_string();
  return 0;
}

int inspect(const std::string& plan_dir, bool strider_view, bool schedule_view, bool micro_view) {
  plan::Plan p = plan::load(plan_dir);
  if (!strider_view && !schedule_view && !micro_view) {
    std::cout << plan::summary(p).to_string();
    return 0;
  }
  if (strider_view) std::cout << strider::annotated_listing(p.strider, p.layout);
  if (schedule_view) std::cout << scheduler::to_csv(p.point.tuple);
  if (micro_view) std::cout << plan::micro_listing(p);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DAnA-style in-database training accelerator toolchain"};
  app.require_subcommand(1);

  std::string csv, layout, out, udf, fpga, engine_cfg, plan_dir, data, report, model;
  int width = 0, page_size = 0, handoff = planner::kDefaultHandoffCycles, max_epochs = 1000;
  bool header = false, no_strider = false, v_strider = false, v_schedule = false, v_micro = false;

  auto* g = app.add_subcommand("gen-data", "pack a CSV into database pages");
  g->add_option("--csv", csv, "input CSV")->required();
  g->add_option("--layout", layout, "page layout file")->required();
  g->add_option("--out", out, "dataset directory")->required();
  g->add_option("--value-width", width, "4 or 8 bytes per value");
  g->add_option("--page-size", page_size, "page size in bytes");
  g->add_flag("--header", header, "skip the first CSV line");

  auto* c = app.add_subcommand("compile", "compile a UDF into a plan directory");
  c->add_option("--udf", udf, "DSL source")->required();
  c->add_option("--layout", layout, "page layout file")->required();
  c->add_option("--fpga", fpga, "FPGA resource file");
  c->add_option("--engine", engine_cfg, "engine config file");
  c->add_option("--out", out, "plan directory")->required();

  auto* r = app.add_subcommand("run", "train with a compiled plan");
  r->add_option("--plan", plan_dir, "plan directory")->required();
  r->add_option("--data", data, "dataset directory")->required();
  r->add_flag("--no-strider", no_strider, "host extraction instead of striders");
  r->add_option("--handoff-cycles", handoff, "per-tuple host handoff penalty");
  r->add_option("--max-epochs", max_epochs, "cap for condition-terminated runs");
  r->add_option("--report", report, "write the report here (plus .epochs.csv)");
  r->add_option("--model", model, "write the trained model CSV here");

  auto* e = app.add_subcommand("estimate", "static cycle estimate for a dataset");
  e->add_option("--plan", plan_dir, "plan directory")->required();
  e->add_option("--data", data, "dataset directory")->required();
  e->add_flag("--no-strider", no_strider, "host extraction instead of striders");
  e->add_option("--handoff-cycles", handoff, "per-tuple host handoff penalty");

  auto* i = app.add_subcommand("inspect", "print plan contents");
  i->add_option("--plan", plan_dir, "plan directory")->required();
  i->add_flag("--strider", v_strider, "strider disassembly with cycle counts");
  i->add_flag("--schedule", v_schedule, "tuple schedule CSV");
  i->add_flag("--micro", v_micro, "engine micro-programs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) return gen_data(csv, layout, out, width, page_size, header);
    if (c->parsed()) return compile(udf, layout, fpga, engine_cfg, out);
    if (r->parsed()) return run(plan_dir, data, no_strider, handoff, max_epochs, report, model);
    if (e->parsed()) return estimate(plan_dir, data, no_strider, handoff);
    if (i->parsed()) return inspect(plan_dir, v_strider, v_schedule, v_micro);
  } catch (const Error& err) {
    std::cerr << "dana: " << err.module() << ": " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "dana: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
