#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dana/engine.hpp"
#include "dana/hdfg.hpp"
#include "dana/pageio.hpp"
#include "dana/scheduler.hpp"
#include "dana/strider.hpp"

namespace dana::planner {

struct FpgaSpec {
  std::int64_t dsp_count = 6840;
  std::int64_t bram_blocks = 2160;
  std::int64_t bram_kbits_per_block = 36;
  std::int64_t bram_ports = 2;
  double bandwidth_gbps = 100.0;  // gigabits per second
  double clock_mhz = 150.0;
  std::int64_t dsp_per_au = 6;
  std::int64_t max_aus = 1024;

  std::int64_t bram_bytes() const { return bram_blocks * bram_kbits_per_block * 1024 / 8; }
  double bytes_per_cycle() const { return bandwidth_gbps * 1e9 / 8.0 / (clock_mhz * 1e6); }
  double clock_hz() const { return clock_mhz * 1e6; }

  void validate() const {
    if (dsp_count <= 0 || bram_blocks <= 0 || bram_kbits_per_block <= 0 || bram_ports <= 0 || dsp_per_au <= 0 ||
        max_aus <= 0 || !(bandwidth_gbps > 0) || !(clock_mhz > 0))
      throw Error("planner", "FPGA spec values must be positive");
  }

  KeyValueFile to_kv() const {
    KeyValueFile kv("planner");
    kv.set("dsp_count", dsp_count);
    kv.set("bram_blocks", bram_blocks);
    kv.set("bram_kbits_per_block", bram_kbits_per_block);
    kv.set("bram_ports", bram_ports);
    kv.set_double("bandwidth_gbps", bandwidth_gbps);
    kv.set_double("clock_mhz", clock_mhz);
    kv.set("dsp_per_au", dsp_per_au);
    kv.set("max_aus", max_aus);
    return kv;
  }

  static FpgaSpec from_kv(const KeyValueFile& kv) {
    FpgaSpec f;
    f.dsp_count = kv.get_int("dsp_count", f.dsp_count);
    f.bram_blocks = kv.get_int("bram_blocks", f.bram_blocks);
    f.bram_kbits_per_block = kv.get_int("bram_kbits_per_block", f.bram_kbits_per_block);
    f.bram_ports = kv.get_int("bram_ports", f.bram_ports);
    f.bandwidth_gbps = kv.get_double("bandwidth_gbps", f.bandwidth_gbps);
    f.clock_mhz = kv.get_double("clock_mhz", f.clock_mhz);
    f.dsp_per_au = kv.get_int("dsp_per_au", f.dsp_per_au);
    f.max_aus = kv.get_int("max_aus", f.max_aus);
    f.validate();
    return f;
  }
};

struct Allocation {
  std::int64_t bram_bytes = 0;
  std::int64_t reserved_bytes = 0;  // model replicas + tuple buffers
  int page_buffers = 0;
  int au_count = 0;
  int ac_count = 0;
};

/// Compute first (DSP bound, capped, multiple of 8), then model and tuple
/// storage for `max_threads` threads, then page buffers from what is left.
inline Allocation allocate(const FpgaSpec& f, const pageio::PageLayout& layout, std::int64_t model_bytes,
                           std::int64_t tuple_bytes, int max_threads) {
  f.validate();
  Allocation a;
  std::int64_t aus = std::min(f.dsp_count / f.dsp_per_au, f.max_aus);
  aus -= aus % engine::kAusPerAc;
  if (aus < engine::kAusPerAc) throw Error("planner", "FPGA has too few DSP slices for one analytic cluster");
  a.au_count = static_cast<int>(aus);
  a.ac_count = a.au_count / engine::kAusPerAc;
  a.bram_bytes = f.bram_bytes();
  a.reserved_bytes = static_cast<std::int64_t>(std::max(max_threads, 1)) * (model_bytes + tuple_bytes);
  std::int64_t rest = a.bram_bytes - a.reserved_bytes;
  if (rest < layout.page_size)
    throw Error("planner", "insufficient BRAM for one page buffer (" + std::to_string(a.bram_bytes) +
                               " bytes, " + std::to_string(a.reserved_bytes) + " reserved)");
  a.page_buffers = static_cast<int>(rest / layout.page_size);
  return a;
}

struct DesignPoint {
  int threads = 1;
  int acs_per_thread = 1;
  bool operator==(const DesignPoint&) const = default;
};

/// Thread counts worth evaluating: divisors of c and powers of two, bounded
/// by c and by the number of ACs.
inline std::vector<int> candidate_threads(int coefficient, int ac_count) {
  int bound = std::min(coefficient, ac_count);
  std::set<int> s;
  for (int t = 1; t <= bound; ++t)
    if (coefficient % t == 0) s.insert(t);
  for (int t = 1; t <= bound; t *= 2) s.insert(t);
  return {s.begin(), s.end()};
}

/// Makespans and sizes the estimator needs for one design point.
struct StaticCosts {
  int tuple = 0;        // Mt
  int accumulate = 0;   // Ma
  int merge = 0;        // model update program
  int convergence = 0;
  std::size_t merge_elements = 0;
  bool post_scale = true;
  bool has_convergence = false;
  hdfg::ScalarOp merge_op = hdfg::ScalarOp::Add;
  std::int64_t setup = 0;  // constant and model preload
};

inline engine::TreeBusProgram tree_program(const StaticCosts& c, int threads) {
  return {c.merge_op, threads, c.post_scale, c.merge_elements};
}

/// Engine cycles for one batch of `b` tuples.
inline std::int64_t batch_cycles(const StaticCosts& c, int threads, std::int64_t b, const engine::EngineConfig& cfg) {
  int active = static_cast<int>(std::min<std::int64_t>(threads, b));
  std::int64_t q = ceil_div(b, threads);
  return q * c.tuple + (q - 1) * c.accumulate + engine::tree_cycles(tree_program(c, threads), active, cfg) + c.merge;
}

/// Page-level view of a dataset.
struct DatasetShape {
  std::int64_t tuples = 0;
  std::vector<int> per_page;

  static DatasetShape of(const pageio::Manifest& m) { return {m.tuple_count, m.tuples_per_page}; }
  /// `pages` full pages.
  static DatasetShape nominal(const pageio::PageLayout& layout, int pages) {
    DatasetShape d;
    d.per_page.assign(static_cast<std::size_t>(pages), layout.capacity());
    d.tuples = static_cast<std::int64_t>(pages) * layout.capacity();
    return d;
  }
};

inline constexpr int kNominalPages = 64;
inline constexpr int kDefaultHandoffCycles = 150;

struct EstimateOptions {
  bool no_strider = false;
  int handoff_cycles = kDefaultHandoffCycles;
};

struct Estimate {
  std::int64_t transfer_per_page = 0;
  std::int64_t strider_per_page = 0;
  double compute_per_page = 0;
  std::int64_t epoch_cycles = 0;
  std::int64_t total_cycles = 0;
  int epochs = 1;
  double seconds = 0;
};

/// Per-page extraction cycles: strider program, or the host handing tuples over.
inline std::int64_t extract_cycles(const pageio::PageLayout& layout, std::int64_t tuples, const EstimateOptions& o) {
  return o.no_strider ? tuples * o.handoff_cycles : strider::static_cycles(layout, tuples);
}

/// Static performance estimate. Page p is ready once transferred and
/// extracted; an epoch ends when the batches depending on the slowest page
/// are done. Page p starts transferring at max(p*X, (p/B)*(X+S)) with B
/// page buffers, each held from transfer start until extraction ends.
inline Estimate estimate(const StaticCosts& c, const DesignPoint& pt, const pageio::PageLayout& layout,
                         const FpgaSpec& f, const Allocation& alloc, const DatasetShape& data, int coefficient,
                         int epochs, const engine::EngineConfig& cfg, const EstimateOptions& opt = {}) {
  if (data.per_page.empty() || data.tuples <= 0) throw Error("planner", "estimate needs a non-empty dataset");
  Estimate e;
  e.epochs = epochs;
  const auto P = static_cast<std::int64_t>(data.per_page.size());
  const std::int64_t N = data.tuples;
  const std::int64_t X = static_cast<std::int64_t>(std::ceil(layout.page_size / f.bytes_per_cycle()));
  const std::int64_t buffers = std::max<std::int64_t>(1, opt.no_strider ? 1 : alloc.page_buffers);
  const std::int64_t S_first = extract_cycles(layout, data.per_page.front(), opt);

  auto cost = [&](std::int64_t b) { return batch_cycles(c, pt.threads, b, cfg); };
  // suffix[k]: cycles of batches k.. to the end
  const std::int64_t batches = ceil_div(N, coefficient);
  std::vector<std::int64_t> suffix(static_cast<std::size_t>(batches) + 1, 0);
  for (std::int64_t k = batches - 1; k >= 0; --k)
    suffix[static_cast<std::size_t>(k)] =
        suffix[static_cast<std::size_t>(k) + 1] + cost(std::min<std::int64_t>(coefficient, N - k * coefficient));

  std::int64_t span = 0, first = 0;
  for (std::int64_t p = 0; p < P; ++p) {
    const std::int64_t n = data.per_page[static_cast<std::size_t>(p)];
    const std::int64_t start = std::max(p * X, (p / buffers) * (X + S_first));
    const std::int64_t ready = start + X + extract_cycles(layout, n, opt);
    // first batch whose last tuple lies on page p or later
    const std::int64_t k = first / coefficient;
    span = std::max(span, ready + suffix[static_cast<std::size_t>(k)]);
    first += n;
  }

  e.transfer_per_page = X;
  e.strider_per_page = S_first;
  e.compute_per_page = static_cast<double>(suffix[0]) / static_cast<double>(P);
  e.epoch_cycles = span + (c.has_convergence ? c.convergence : 0);
  e.total_cycles = c.setup + static_cast<std::int64_t>(epochs) * e.epoch_cycles;
  e.seconds = static_cast<double>(e.total_cycles) / f.clock_hz();
  return e;
}

/// Schedules of the four thread programs at one design point.
struct PointImage {
  DesignPoint point;
  scheduler::Schedule tuple, accumulate, merge, convergence;
  engine::ThreadImage image;
  StaticCosts costs;
};

inline PointImage build_point(const hdfg::HDfg& g, const DesignPoint& pt, const engine::EngineConfig& cfg) {
  PointImage pi;
  pi.point = pt;
  pi.tuple = scheduler::schedule(g.update, pt.acs_per_thread, cfg);
  pi.accumulate = scheduler::schedule(g.accumulate, pt.acs_per_thread, cfg);
  pi.merge = scheduler::schedule(g.merge, pt.acs_per_thread, cfg);
  pi.convergence = scheduler::schedule(g.convergence, pt.acs_per_thread, cfg);
  pi.image.tuple = scheduler::emit(pi.tuple, g.update);
  pi.image.accumulate = scheduler::emit(pi.accumulate, g.accumulate);
  pi.image.merge = scheduler::emit(pi.merge, g.merge);
  pi.image.convergence = scheduler::emit(pi.convergence, g.convergence);
  auto& c = pi.costs;
  c.tuple = pi.tuple.makespan;
  c.accumulate = pi.accumulate.makespan;
  c.merge = pi.merge.makespan;
  c.convergence = pi.convergence.makespan;
  c.merge_elements = g.merge_width();
  c.merge_op = hdfg::to_scalar(g.merge_spec.op);
  c.post_scale = g.merge_spec.op == dsl::MergeOp::Add;
  c.has_convergence = g.has_convergence;
  c.setup = static_cast<std::int64_t>(g.update.constants.size() + g.merge.constants.size() +
                                      g.convergence.constants.size() + g.model_size);
  pi.image.tree = tree_program(c, pt.threads);
  return pi;
}

struct Candidate {
  DesignPoint point;
  StaticCosts costs;
  Estimate estimate;
};

struct Selection {
  Allocation allocation;
  std::vector<Candidate> menu;
  std::size_t chosen = 0;
};

inline std::int64_t model_bytes(const hdfg::HDfg& g, int width) { return static_cast<std::int64_t>(g.model_size) * width; }

/// Enumerates design points, estimates each on a nominal dataset and picks
/// the cheapest, preferring fewer threads on ties.
inline Selection select_design(const hdfg::HDfg& g, const FpgaSpec& f, const pageio::PageLayout& layout,
                               const engine::EngineConfig& base) {
  const int c = g.merge_spec.coefficient;
  Selection sel;
  {
    std::int64_t aus = std::min(f.dsp_count / f.dsp_per_au, f.max_aus);
    int acs = static_cast<int>(aus / engine::kAusPerAc);
    int t_max = std::max(1, std::min(c, acs));
    sel.allocation = allocate(f, layout, model_bytes(g, layout.value_width), layout.tuple_len(), t_max);
  }
  DatasetShape nominal = DatasetShape::nominal(layout, kNominalPages);
  for (int t : candidate_threads(c, sel.allocation.ac_count)) {
    DesignPoint pt{t, sel.allocation.ac_count / t};
    engine::EngineConfig cfg = base;
    cfg.threads = pt.threads;
    cfg.acs_per_thread = pt.acs_per_thread;
    PointImage pi = build_point(g, pt, cfg);
    Candidate cand{pt, pi.costs, estimate(pi.costs, pt, layout, f, sel.allocation, nominal, c, 1, cfg)};
    sel.menu.push_back(cand);
  }
  for (std::size_t k = 1; k < sel.menu.size(); ++k) {
    const auto& a = sel.menu[k].estimate.total_cycles;
    const auto& b = sel.menu[sel.chosen].estimate.total_cycles;
    if (a < b || (a == b && sel.menu[k].point.threads < sel.menu[sel.chosen].point.threads)) sel.chosen = k;
  }
  return sel;
}

}  // namespace dana::planner
