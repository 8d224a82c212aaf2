#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <memory>
#include <set>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dana/common.hpp"
#include "dana/hdfg.hpp"

// Execution engine: threads of analytic clusters (ACs), each AC driving 8
// analytic units (AUs) in selective-SIMD mode. One AC instruction per cycle
// names an op and an enable mask; every enabled AU pops its next private
// AU instruction, which must carry the same op.

namespace dana::engine {

using hdfg::ScalarOp;
using hdfg::Space;

inline constexpr int kAusPerAc = 8;

enum class Channel { Neighbor, AcBus, InterAcBus };

inline const char* to_string(Channel c) {
  static const char* names[] = {"neighbor", "ac_bus", "inter_ac_bus"};
  return names[static_cast<int>(c)];
}

inline Channel route(int from_ac, int from_au, int to_ac, int to_au) {
  if (from_ac != to_ac) return Channel::InterAcBus;
  return std::abs(from_au - to_au) == 1 ? Channel::Neighbor : Channel::AcBus;
}

struct EngineConfig {
  int threads = 1;
  int acs_per_thread = 1;
  int width = 4;
  int data_mem_words = 4096;
  int bus_fifo_depth = 16;
  std::array<int, hdfg::kScalarOpCount> latency{};
  std::array<bool, hdfg::kScalarOpCount> enabled{};
  int lat_neighbor = 1;
  int lat_ac_bus = 2;
  int lat_inter_ac_bus = 4;
  int lat_tree_level = 2;

  EngineConfig() {
    for (int k = 0; k < hdfg::kScalarOpCount; ++k) {
      latency[static_cast<std::size_t>(k)] = 1;
      enabled[static_cast<std::size_t>(k)] = true;
    }
    set(ScalarOp::Mul, 2);
    set(ScalarOp::Div, 8);
    for (auto op : {ScalarOp::Sqrt, ScalarOp::Sigmoid, ScalarOp::Gaussian, ScalarOp::Exp, ScalarOp::Log}) set(op, 4);
  }

  void set(ScalarOp op, int cycles) { latency[static_cast<std::size_t>(op)] = cycles; }
  int lat(ScalarOp op) const { return latency[static_cast<std::size_t>(op)]; }
  bool is_enabled(ScalarOp op) const { return enabled[static_cast<std::size_t>(op)]; }

  int channel_latency(Channel c) const {
    switch (c) {
      case Channel::Neighbor: return lat_neighbor;
      case Channel::AcBus: return lat_ac_bus;
      case Channel::InterAcBus: return lat_inter_ac_bus;
    }
    return lat_inter_ac_bus;
  }

  KeyValueFile to_kv() const {
    KeyValueFile kv("engine");
    kv.set("threads", std::int64_t{threads});
    kv.set("acs_per_thread", std::int64_t{acs_per_thread});
    kv.set("aus_per_ac", std::int64_t{kAusPerAc});
    kv.set("width", std::int64_t{width});
    kv.set("data_mem_words", std::int64_t{data_mem_words});
    kv.set("bus_fifo_depth", std::int64_t{bus_fifo_depth});
    kv.set("lat_neighbor", std::int64_t{lat_neighbor});
    kv.set("lat_ac_bus", std::int64_t{lat_ac_bus});
    kv.set("lat_inter_ac_bus", std::int64_t{lat_inter_ac_bus});
    kv.set("lat_tree_level", std::int64_t{lat_tree_level});
    std::string ops;
    for (int k = 0; k < hdfg::kScalarOpCount; ++k) {
      auto op = static_cast<ScalarOp>(k);
      if (op == ScalarOp::Mov) continue;
      kv.set(std::string("lat_") + hdfg::to_string(op), std::int64_t{lat(op)});
      if (is_enabled(op)) ops += (ops.empty() ? "" : ",") + std::string(hdfg::to_string(op));
    }
    kv.set("alu_ops", ops);
    return kv;
  }

  static EngineConfig from_kv(const KeyValueFile& kv) {
    EngineConfig c;
    auto geti = [&](const std::string& key, int fallback, int lo) {
      std::int64_t v = kv.get_int(key, fallback);
      if (v < lo || v > 1'000'000) throw Error("engine", "key '" + key + "' out of range");
      return static_cast<int>(v);
    };
    c.threads = geti("threads", c.threads, 1);
    c.acs_per_thread = geti("acs_per_thread", c.acs_per_thread, 1);
    if (geti("aus_per_ac", kAusPerAc, 1) != kAusPerAc) throw Error("engine", "aus_per_ac is fixed to 8");
    c.width = geti("width", c.width, 4);
    if (c.width != 4 && c.width != 8) throw Error("engine", "width must be 4 or 8");
    c.data_mem_words = geti("data_mem_words", c.data_mem_words, 1);
    c.bus_fifo_depth = geti("bus_fifo_depth", c.bus_fifo_depth, 1);
    c.lat_neighbor = geti("lat_neighbor", c.lat_neighbor, 1);
    c.lat_ac_bus = geti("lat_ac_bus", c.lat_ac_bus, 1);
    c.lat_inter_ac_bus = geti("lat_inter_ac_bus", c.lat_inter_ac_bus, 1);
    c.lat_tree_level = geti("lat_tree_level", c.lat_tree_level, 1);
    for (int k = 0; k < hdfg::kScalarOpCount; ++k) {
      auto op = static_cast<ScalarOp>(k);
      if (op == ScalarOp::Mov) continue;
      c.set(op, geti(std::string("lat_") + hdfg::to_string(op), c.lat(op), 1));
    }
    if (kv.has("alu_ops")) {
      c.enabled.fill(false);
      c.enabled[static_cast<std::size_t>(ScalarOp::Mov)] = true;
      std::string_view list = kv.get("alu_ops");
      while (!list.empty()) {
        auto comma = list.find(',');
        std::string_view name = trim(list.substr(0, comma));
        if (!name.empty()) c.enabled[static_cast<std::size_t>(hdfg::parse_scalar_op(name))] = true;
        list = comma == std::string_view::npos ? std::string_view{} : list.substr(comma + 1);
      }
    }
    return c;
  }
};

/// Operand source of an AU instruction.
struct Src {
  enum class Kind { Data, Const, Port };
  Kind kind = Kind::Const;
  int addr = 0;  // data or const memory address
  Space space = Space::Const;
  int index = 0;  // port element

  static Src data(int addr) { return {Kind::Data, addr, Space::Const, 0}; }
  static Src constant(int addr) { return {Kind::Const, addr, Space::Const, 0}; }
  static Src port(Space s, int index) { return {Kind::Port, 0, s, index}; }
  bool operator==(const Src&) const = default;
};

inline std::string to_string(const Src& s) {
  switch (s.kind) {
    case Src::Kind::Data: return "d" + std::to_string(s.addr);
    case Src::Kind::Const: return "c" + std::to_string(s.addr);
    case Src::Kind::Port: return std::string(hdfg::to_string(s.space)) + "[" + std::to_string(s.index) + "]";
  }
  return "?";
}

/// Copy of a result delivered into another AU's data memory.
struct Fwd {
  int ac = 0;
  int au = 0;
  int addr = 0;
  int delay = 0;  // cycles the value waits in the AU's bus queue
  bool operator==(const Fwd&) const = default;
};

/// A computing instruction writes `dst` locally and, at write-back, sends the
/// result to every `fwd` target. A mov has no local write and sends at issue.
/// A bus send may wait up to bus_fifo_depth cycles in the AU's bus queue.
/// Sends ride the neighbor links, the AC bus or the inter-AC bus depending on
/// where the target sits; one bus write reaches any number of targets.
struct AuInstr {
  ScalarOp op = ScalarOp::Copy;
  Src a;
  Src b;
  int dst = -1;
  std::vector<Fwd> fwd;
  int sub = -1;  // sub-node this instruction computes or forwards
};

struct AcInstr {
  bool nop = true;
  ScalarOp op = ScalarOp::Copy;
  std::uint8_t mask = 0;
};

/// Location of one program output after a run.
struct OutLoc {
  Src src;
  int ac = 0;
  int au = 0;
};

struct MicroProgram {
  int acs = 1;
  int makespan = 0;
  std::vector<double> constants;
  std::vector<std::vector<AcInstr>> ac_streams;  // [ac][cycle]
  std::vector<std::vector<AuInstr>> au_mem;      // [ac * 8 + au]
  std::vector<OutLoc> outputs;
  int words_used = 0;  // highest data address + 1 over all AUs
};

inline std::string listing(const MicroProgram& m) {
  std::string out;
  for (int ac = 0; ac < m.acs; ++ac) {
    const auto& stream = m.ac_streams[static_cast<std::size_t>(ac)];
    out += "ac " + std::to_string(ac) + ": " + std::to_string(stream.size()) + " cycles\n";
    std::vector<std::size_t> pc(kAusPerAc, 0);
    for (std::size_t c = 0; c < stream.size(); ++c) {
      const auto& ins = stream[c];
      if (ins.nop) continue;
      char mask[8];
      std::snprintf(mask, sizeof mask, "%02x", ins.mask);
      out += "  " + std::to_string(c) + " " + hdfg::to_string(ins.op) + " mask=" + mask;
      for (int au = 0; au < kAusPerAc; ++au) {
        if (!(ins.mask & (1u << au))) continue;
        const auto& a = m.au_mem[static_cast<std::size_t>(ac * kAusPerAc + au)][pc[static_cast<std::size_t>(au)]++];
        out += " | au" + std::to_string(au) + " " + to_string(a.a);
        if (hdfg::arity(a.op) == 2) out += "," + to_string(a.b);
        if (a.dst >= 0) out += "->d" + std::to_string(a.dst);
        for (const auto& f : a.fwd)
          out += " =>ac" + std::to_string(f.ac) + ".au" + std::to_string(f.au) + ".d" + std::to_string(f.addr) +
                 (f.delay ? "+" + std::to_string(f.delay) : "");
      }
      out += "\n";
    }
  }
  return out;
}

struct RunResult {
  std::vector<double> outputs;
  std::int64_t cycles = 0;
  std::int64_t stalls = 0;
  std::int64_t issued = 0;  // AU instructions executed
};

/// Cycle-stepped state of one thread's ACs. Buffers are reused across runs.
class Machine {
 public:
  Machine(const MicroProgram& prog, const EngineConfig& cfg) : prog_(prog), cfg_(cfg) {
    if (prog.words_used > cfg.data_mem_words)
      throw Error("engine", "program needs " + std::to_string(prog.words_used) + " data words, AU has " +
                                std::to_string(cfg.data_mem_words));
    words_ = std::max(prog.words_used, 1);
    std::size_t aus = static_cast<std::size_t>(prog.acs * kAusPerAc);
    value_.assign(aus * static_cast<std::size_t>(words_), 0.0);
    ready_.assign(value_.size(), kUnwritten);
    for (int ac = 0; ac < prog.acs; ++ac)
      if (!prog.ac_streams[static_cast<std::size_t>(ac)].empty()) active_.push_back(ac);
  }

  RunResult run(const hdfg::Leaves& leaves) {
    const int width = cfg_.width;
    std::fill(ready_.begin(), ready_.end(), kUnwritten);
    std::vector<std::size_t> ac_pc(static_cast<std::size_t>(prog_.acs), 0);
    std::vector<std::size_t> au_pc(static_cast<std::size_t>(prog_.acs * kAusPerAc), 0);
    RunResult r;
    std::int64_t finish = 0;
    std::size_t remaining = active_.size();
    std::vector<char> done(static_cast<std::size_t>(prog_.acs), 0);
    std::set<std::pair<int, std::int64_t>> bus_used;  // (ac or -1 for inter-AC, cycle)
    auto read = [&](int ac, int au, const Src& s, std::int64_t cycle, bool& ok) -> double {
      switch (s.kind) {
        case Src::Kind::Const:
          return round_to_width(prog_.constants.at(static_cast<std::size_t>(s.addr)), width);
        case Src::Kind::Port:
          return round_to_width(leaves.space(s.space).at(static_cast<std::size_t>(s.index)), width);
        case Src::Kind::Data: {
          std::size_t k = slot(ac, au, s.addr);
          if (ready_[k] > cycle) ok = false;
          return value_[k];
        }
      }
      return 0.0;
    };
    for (std::int64_t cycle = 0; remaining > 0; ++cycle) {
      if (cycle > kMaxCycles) throw Error("engine", "run exceeded cycle limit (deadlock)");
      for (int ac : active_) {
        if (done[static_cast<std::size_t>(ac)]) continue;
        const auto& stream = prog_.ac_streams[static_cast<std::size_t>(ac)];
        std::size_t& pc = ac_pc[static_cast<std::size_t>(ac)];
        const AcInstr& ins = stream[pc];
        if (!ins.nop) {
          bool ok = true;
          for (int au = 0; au < kAusPerAc && ok; ++au) {
            if (!(ins.mask & (1u << au))) continue;
            const AuInstr& a = au_instr(ac, au, au_pc);
            read(ac, au, a.a, cycle, ok);
            if (hdfg::arity(a.op) == 2) read(ac, au, a.b, cycle, ok);
          }
          if (!ok) {
            ++r.stalls;
            continue;
          }
          for (int au = 0; au < kAusPerAc; ++au) {
            if (!(ins.mask & (1u << au))) continue;
            const AuInstr& a = au_instr(ac, au, au_pc);
            ++au_pc[static_cast<std::size_t>(ac * kAusPerAc + au)];
            if (a.op != ins.op)
              throw Error("engine", "ac " + std::to_string(ac) + " au " + std::to_string(au) +
                                        ": AU instruction does not match the cluster op");
            bool unused = true;
            double x = read(ac, au, a.a, cycle, unused);
            double y = hdfg::arity(a.op) == 2 ? read(ac, au, a.b, cycle, unused) : 0.0;
            double v = hdfg::apply(a.op, x, y, width);
            ++r.issued;
            std::int64_t send = cycle;
            if (a.op != ScalarOp::Mov) {
              send = cycle + cfg_.lat(a.op);
              write(ac, au, a.dst, v, send);
              finish = std::max(finish, send);
            }
            std::set<std::pair<int, std::int64_t>> writes;
            for (const auto& f : a.fwd) {
              Channel ch = route(ac, au, f.ac, f.au);
              if (f.delay < 0 || f.delay >= cfg_.bus_fifo_depth) throw Error("engine", "bus queue overflow");
              std::int64_t out = send + f.delay;
              if (ch == Channel::AcBus) writes.insert({ac, out});
              if (ch == Channel::InterAcBus) writes.insert({-1, out});
              std::int64_t at = out + cfg_.channel_latency(ch);
              write(f.ac, f.au, f.addr, v, at);
              finish = std::max(finish, at);
            }
            for (const auto& w : writes)
              if (!bus_used.insert(w).second)
                throw Error("engine", (w.first < 0 ? std::string("bus conflict on the inter-AC bus")
                                                   : "bus conflict on ac " + std::to_string(w.first) + " bus") +
                                          " at cycle " + std::to_string(w.second));
          }
        }
        if (++pc == stream.size()) {
          done[static_cast<std::size_t>(ac)] = 1;
          --remaining;
        }
      }
    }
    r.cycles = finish;
    bool ok = true;
    for (const auto& o : prog_.outputs) r.outputs.push_back(read(o.ac, o.au, o.src, finish, ok));
    if (!ok) throw Error("engine", "output read before it was written");
    return r;
  }

 private:
  static constexpr std::int64_t kUnwritten = std::numeric_limits<std::int64_t>::max();
  static constexpr std::int64_t kMaxCycles = 50'000'000;

  std::size_t slot(int ac, int au, int addr) const {
    if (addr < 0 || addr >= words_) throw Error("engine", "data address " + std::to_string(addr) + " out of range");
    return static_cast<std::size_t>((ac * kAusPerAc + au) * words_ + addr);
  }

  const AuInstr& au_instr(int ac, int au, const std::vector<std::size_t>& au_pc) const {
    const auto& mem = prog_.au_mem[static_cast<std::size_t>(ac * kAusPerAc + au)];
    std::size_t pc = au_pc[static_cast<std::size_t>(ac * kAusPerAc + au)];
    if (pc >= mem.size()) throw Error("engine", "AU instruction memory underrun");
    return mem[pc];
  }

  void write(int ac, int au, int addr, double v, std::int64_t at) {
    std::size_t k = slot(ac, au, addr);
    value_[k] = v;
    ready_[k] = at;
  }

  const MicroProgram& prog_;
  const EngineConfig& cfg_;
  int words_ = 1;
  std::vector<double> value_;
  std::vector<std::int64_t> ready_;
  std::vector<int> active_;
};

/// Tree-bus reduction of per-thread accumulators.
struct TreeBusProgram {
  ScalarOp op = ScalarOp::Add;
  int fan_in = 1;
  bool post_scale = true;  // divide by the batch tuple count ("+" merges)
  std::size_t elements = 0;

  int depth() const { return ceil_log2(static_cast<std::size_t>(fan_in)); }
};

inline std::int64_t tree_cycles(const TreeBusProgram& t, int active, const EngineConfig& cfg) {
  auto e = static_cast<std::int64_t>(t.elements);
  int depth = ceil_log2(static_cast<std::size_t>(std::max(active, 1)));
  std::int64_t c = 0;
  if (depth > 0) c += depth * cfg.lat_tree_level + e;
  if (t.post_scale) c += cfg.lat(ScalarOp::Div) + e;
  if (depth > 0) c += depth + e;
  return c;
}

/// Level-wise pairing (0,1),(2,3)...; an odd last value passes through.
inline std::vector<double> tree_reduce(std::vector<std::vector<double>> vals, ScalarOp op, int width) {
  if (vals.empty()) throw Error("engine", "tree reduction of zero threads");
  while (vals.size() > 1) {
    std::vector<std::vector<double>> next;
    for (std::size_t i = 0; i + 1 < vals.size(); i += 2) {
      std::vector<double> v(vals[i].size());
      for (std::size_t e = 0; e < v.size(); ++e) v[e] = hdfg::apply(op, vals[i][e], vals[i + 1][e], width);
      next.push_back(std::move(v));
    }
    if (vals.size() % 2) next.push_back(std::move(vals.back()));
    vals = std::move(next);
  }
  return std::move(vals.front());
}

/// Micro-programs every thread carries.
struct ThreadImage {
  MicroProgram tuple;
  MicroProgram accumulate;
  MicroProgram merge;
  MicroProgram convergence;
  TreeBusProgram tree;
};

struct BatchResult {
  std::vector<double> merged;   // merged (and post-scaled) merge variable
  std::vector<double> updated;  // new value of the trained model variable
  std::int64_t thread_cycles = 0;
  std::int64_t tree_cycles = 0;
  std::int64_t merge_cycles = 0;
  std::int64_t cycles() const { return thread_cycles + tree_cycles + merge_cycles; }
};

/// Runs thread images on tuple batches and merges through the tree bus.
class Engine {
 public:
  Engine(const ThreadImage& img, const EngineConfig& cfg)
      : img_(img), cfg_(cfg), tuple_(img.tuple, cfg), acc_(img.accumulate, cfg), merge_(img.merge, cfg) {
    EngineConfig wide = cfg;
    wide.width = 8;
    conv_cfg_ = wide;
    conv_ = std::make_unique<Machine>(img.convergence, conv_cfg_);
  }

  /// One batch: tuple j goes to thread j % threads.
  BatchResult run_batch(const std::vector<std::vector<double>>& tuples, const std::vector<double>& model) {
    if (tuples.empty()) throw Error("engine", "FIFO underflow: empty batch");
    int t = std::min<int>(cfg_.threads, static_cast<int>(tuples.size()));
    std::vector<std::vector<double>> acc(static_cast<std::size_t>(t));
    std::vector<std::int64_t> busy(static_cast<std::size_t>(t), 0);
    hdfg::Leaves leaves;
    leaves.model = model;
    for (std::size_t j = 0; j < tuples.size(); ++j) {
      auto th = static_cast<std::size_t>(static_cast<int>(j) % t);
      leaves.tuple = tuples[j];
      RunResult pr = tuple_.run(leaves);
      busy[th] += pr.cycles;
      if (acc[th].empty()) {
        acc[th] = std::move(pr.outputs);
      } else {
        hdfg::Leaves al;
        al.acc = std::move(acc[th]);
        al.partial = std::move(pr.outputs);
        RunResult ar = acc_.run(al);
        busy[th] += ar.cycles;
        acc[th] = std::move(ar.outputs);
      }
    }
    BatchResult b;
    b.thread_cycles = *std::max_element(busy.begin(), busy.end());
    b.merged = tree_reduce(std::move(acc), img_.tree.op, cfg_.width);
    if (img_.tree.post_scale)
      for (double& v : b.merged)
        v = hdfg::apply(ScalarOp::Div, v, static_cast<double>(tuples.size()), cfg_.width);
    b.tree_cycles = tree_cycles(img_.tree, t, cfg_);
    hdfg::Leaves ml;
    ml.model = model;
    ml.merged = b.merged;
    RunResult mr = merge_.run(ml);
    b.updated = std::move(mr.outputs);
    b.merge_cycles = mr.cycles;
    return b;
  }

  /// Convergence test at 64-bit on the pre-update model and merged value.
  std::pair<bool, std::int64_t> converged(const std::vector<double>& model, const std::vector<double>& merged) {
    hdfg::Leaves l;
    l.model = model;
    l.merged = merged;
    RunResult r = conv_->run(l);
    return {r.outputs.at(0) != 0.0, r.cycles};
  }

 private:
  const ThreadImage& img_;
  const EngineConfig& cfg_;
  EngineConfig conv_cfg_;
  Machine tuple_;
  Machine acc_;
  Machine merge_;
  std::unique_ptr<Machine> conv_;
};

}  // namespace dana::engine
