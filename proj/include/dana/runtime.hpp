#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dana/engine.hpp"
#include "dana/pageio.hpp"
#include "dana/plan.hpp"
#include "dana/planner.hpp"
#include "dana/strider.hpp"

// Cycle-level run of a compiled plan over a paged dataset. Pages stream over
// one transfer channel into the page buffers, striders extract tuples, the
// engine consumes batches in storage order.

namespace dana::runtime {

struct Options {
  bool no_strider = false;
  int handoff_cycles = planner::kDefaultHandoffCycles;  // per tuple, host extraction
  int max_epochs = 1000;                                 // cap for condition termination
};

struct EpochRecord {
  int epoch = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::int64_t engine_idle = 0;
  bool converged = false;
};

struct Report {
  int epochs = 0;
  bool converged = false;
  std::int64_t setup_cycles = 0;
  std::int64_t transfer_cycles = 0;  // channel busy, summed
  std::int64_t extract_cycles = 0;   // strider or host, summed
  std::int64_t thread_cycles = 0;
  std::int64_t tree_cycles = 0;
  std::int64_t merge_cycles = 0;
  std::int64_t convergence_cycles = 0;
  std::int64_t engine_idle_cycles = 0;
  std::int64_t total_cycles = 0;
  double seconds = 0;
  planner::Estimate estimate;  // static estimate for this dataset and epoch count
  std::vector<EpochRecord> per_epoch;

  double estimate_error() const {
    return total_cycles ? std::abs(static_cast<double>(estimate.total_cycles - total_cycles)) /
                              static_cast<double>(total_cycles)
                        : 0.0;
  }

  KeyValueFile to_kv() const {
    KeyValueFile kv("runtime");
    kv.set("epochs", std::int64_t{epochs});
    kv.set("converged", converged ? "true" : "false");
    kv.set("setup_cycles", setup_cycles);
    kv.set("transfer_cycles", transfer_cycles);
    kv.set("extract_cycles", extract_cycles);
    kv.set("thread_cycles", thread_cycles);
    kv.set("tree_cycles", tree_cycles);
    kv.set("merge_cycles", merge_cycles);
    kv.set("convergence_cycles", convergence_cycles);
    kv.set("engine_idle_cycles", engine_idle_cycles);
    kv.set("total_cycles", total_cycles);
    kv.set_double("seconds", seconds);
    kv.set("estimated_cycles", estimate.total_cycles);
    kv.set_double("estimate_error", estimate_error());
    return kv;
  }

  std::string epochs_csv() const {
    std::string out = "epoch,start,end,cycles,engine_idle,converged\n";
    for (const auto& e : per_epoch)
      out += std::to_string(e.epoch) + "," + std::to_string(e.start) + "," + std::to_string(e.end) + "," +
             std::to_string(e.end - e.start) + "," + std::to_string(e.engine_idle) + "," +
             (e.converged ? "1" : "0") + "\n";
    return out;
  }
};

struct Outcome {
  std::vector<double> model;  // every model variable, flattened
  Report report;
};

/// name,index,value for every model element.
inline std::string model_csv(const dsl::TypedProgram& p, const std::vector<double>& model) {
  std::string out = "name,index,value\n";
  std::size_t k = 0;
  for (const auto& d : p.declarations) {
    if (d.kind != dsl::DeclKind::Model) continue;
    std::size_t n = element_count(d.dims);
    for (std::size_t i = 0; i < n; ++i, ++k)
      out += d.name + "," + std::to_string(i) + "," + format_double(model.at(k)) + "\n";
  }
  return out;
}

namespace detail {

struct ExtractedPage {
  std::vector<std::vector<double>> tuples;
  std::int64_t cycles = 0;
};

inline ExtractedPage extract(const plan::Plan& pl, const pageio::Page& page, const Options& opt) {
  ExtractedPage out;
  const auto& layout = pl.layout;
  auto flatten = [](const pageio::TupleRecord& r) {
    std::vector<double> t = r.features;
    t.insert(t.end(), r.labels.begin(), r.labels.end());
    return t;
  };
  if (opt.no_strider) {
    for (const auto& r : pageio::read_reference(page, layout)) out.tuples.push_back(flatten(r));
    out.cycles = static_cast<std::int64_t>(out.tuples.size()) * opt.handoff_cycles;
    return out;
  }
  strider::Result r = strider::execute(pl.strider, page, layout);
  for (const auto& bytes : r.payloads) {
    if (static_cast<int>(bytes.size()) != layout.payload_len())
      throw Error("runtime", "tuple arity mismatch: strider emitted " + std::to_string(bytes.size()) +
                                 " bytes, layout expects " + std::to_string(layout.payload_len()));
    out.tuples.push_back(flatten(pageio::decode_payload(bytes, layout)));
  }
  out.cycles = r.cycles;
  return out;
}

}  // namespace detail

/// Trains with the plan on the dataset in `data_dir`.
inline Outcome train(const plan::Plan& pl, const std::filesystem::path& data_dir, const Options& opt = {}) {
  pageio::Manifest man = pageio::Manifest::load(data_dir);
  if (man.layout.fingerprint() != pl.layout.fingerprint())
    throw Error("runtime", "layout fingerprint mismatch: dataset " + man.layout.fingerprint() + ", plan " +
                               pl.layout.fingerprint());
  if (man.layout.value_count() != static_cast<int>(dsl::tuple_layout(pl.program).feature_count +
                                                    dsl::tuple_layout(pl.program).label_count))
    throw Error("runtime", "tuple arity mismatch between dataset and UDF");
  if (man.page_count <= 0 || man.tuple_count <= 0) throw Error("runtime", "empty dataset");
  if (opt.max_epochs < 1) throw Error("runtime", "max epochs must be >= 1");

  // Extraction is deterministic, so each page is extracted once and replayed.
  std::vector<detail::ExtractedPage> pages;
  std::vector<std::vector<double>> tuples;
  std::vector<int> page_of;
  for (int i = 0; i < man.page_count; ++i) {
    pages.push_back(detail::extract(pl, pageio::load_page(data_dir, i), opt));
    if (static_cast<int>(pages.back().tuples.size()) != man.tuples_per_page[static_cast<std::size_t>(i)])
      throw Error("runtime", "page " + std::to_string(i) + " yielded " + std::to_string(pages.back().tuples.size()) +
                                 " tuples, manifest says " + std::to_string(man.tuples_per_page[static_cast<std::size_t>(i)]));
    for (const auto& t : pages.back().tuples) {
      tuples.push_back(t);
      page_of.push_back(i);
    }
  }

  const auto& g = pl.graph;
  const auto& costs = pl.point.costs;
  const std::int64_t X = static_cast<std::int64_t>(std::ceil(pl.layout.page_size / pl.fpga.bytes_per_cycle()));
  const std::int64_t buffers = opt.no_strider ? 1 : pl.selection.allocation.page_buffers;
  const auto c = static_cast<std::size_t>(pl.program.merge.coefficient);
  const bool cond = g.has_convergence;
  const int limit = cond ? opt.max_epochs : g.epochs;

  engine::Engine eng(pl.point.image, pl.config);
  Outcome out;
  Report& rep = out.report;
  out.model = dsl::initial_model(pl.program);
  for (double& v : out.model) v = round_to_width(v, pl.layout.value_width);

  rep.setup_cycles = costs.setup;
  std::int64_t now = costs.setup;
  for (int epoch = 1; epoch <= limit; ++epoch) {
    EpochRecord er;
    er.epoch = epoch;
    er.start = now;
    // page pipeline
    std::vector<std::int64_t> ready(pages.size());
    std::vector<std::int64_t> buffer_free(static_cast<std::size_t>(buffers), now);
    std::int64_t channel = now;
    for (std::size_t p = 0; p < pages.size(); ++p) {
      auto& bf = buffer_free[p % static_cast<std::size_t>(buffers)];
      std::int64_t start = std::max(channel, bf);
      channel = start + X;
      ready[p] = channel + pages[p].cycles;
      bf = ready[p];
      rep.transfer_cycles += X;
      rep.extract_cycles += pages[p].cycles;
    }
    // engine
    std::int64_t engine_free = now;
    std::vector<double> pre_update, merged;
    for (std::size_t s = 0; s < tuples.size(); s += c) {
      std::size_t e = std::min(tuples.size(), s + c);
      std::vector<std::vector<double>> batch(tuples.begin() + static_cast<long>(s),
                                             tuples.begin() + static_cast<long>(e));
      std::int64_t avail = ready[static_cast<std::size_t>(page_of[e - 1])];
      if (avail > engine_free) er.engine_idle += avail - engine_free;
      std::int64_t begin = std::max(engine_free, avail);
      engine::BatchResult b = eng.run_batch(batch, out.model);
      engine_free = begin + b.cycles();
      rep.thread_cycles += b.thread_cycles;
      rep.tree_cycles += b.tree_cycles;
      rep.merge_cycles += b.merge_cycles;
      pre_update = out.model;
      for (std::size_t k = 0; k < b.updated.size(); ++k) {
        if (!std::isfinite(b.updated[k]))
          throw Error("runtime", "non-finite model value in epoch " + std::to_string(epoch));
        out.model[g.model_offset + k] = b.updated[k];
      }
      merged = std::move(b.merged);
    }
    now = engine_free;
    if (cond) {
      auto [done, cyc] = eng.converged(pre_update, merged);
      now += cyc;
      rep.convergence_cycles += cyc;
      er.converged = done;
    }
    er.end = now;
    rep.engine_idle_cycles += er.engine_idle;
    rep.per_epoch.push_back(er);
    rep.epochs = epoch;
    if (er.converged) {
      rep.converged = true;
      break;
    }
  }
  rep.total_cycles = now;
  rep.seconds = static_cast<double>(now) / pl.fpga.clock_hz();
  planner::EstimateOptions eo{opt.no_strider, opt.handoff_cycles};
  rep.estimate = planner::estimate(costs, pl.point.point, pl.layout, pl.fpga, pl.selection.allocation,
                                   planner::DatasetShape::of(man), pl.program.merge.coefficient, rep.epochs,
                                   pl.config, eo);
  return out;
}

}  // namespace dana::runtime
