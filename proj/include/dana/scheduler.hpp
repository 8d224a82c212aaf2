#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dana/engine.hpp"
#include "dana/hdfg.hpp"

// Static list scheduler: maps every sub-node of a ScalarProgram onto
// (cycle, AC, AU) of one thread, inserting explicit moves for operands
// that live on another AU.

namespace dana::scheduler {

using engine::Channel;
using engine::kAusPerAc;
using hdfg::ScalarOp;

// Placement score penalties for leaving a sub-node's home AU. Leaving the
// home AC costs far more: it drags later consumers onto the shared inter-AC bus.
inline constexpr int kAuAway = 1;
inline constexpr int kAcAway = 100;

struct Placement {
  int sub = -1;
  ScalarOp op = ScalarOp::Copy;
  int cycle = 0;
  int ac = 0;
  int au = 0;
  int addr = 0;
  int ready = 0;
};

struct Receiver {
  int ac = 0;
  int au = 0;
  int addr = 0;
  int ready = 0;
};

/// One transfer of a sub-node's value. Non-mov sends ride the producer's
/// write-back, possibly after waiting in its bus queue; a mov is an extra
/// instruction on the producer's AU.
struct Send {
  int sub = -1;
  int cycle = 0;
  int from_ac = 0;
  int from_au = 0;
  Channel channel = Channel::Neighbor;
  bool mov = false;
  std::vector<Receiver> receivers;
};

struct Schedule {
  int acs = 1;
  int makespan = 0;
  std::vector<Placement> placements;  // indexed by sub id
  std::vector<Send> sends;
  std::vector<engine::OutLoc> outputs;
  int words_used = 0;
};

/// Issue-slot-free lower bound: longest latency chain.
inline int critical_path(const hdfg::ScalarProgram& p, const engine::EngineConfig& cfg) {
  std::vector<int> fin(p.subs.size(), 0);
  int best = 0;
  for (const auto& s : p.subs) {
    int start = 0;
    if (s.a.is_sub()) start = std::max(start, fin[static_cast<std::size_t>(s.a.sub)]);
    if (hdfg::arity(s.op) == 2 && s.b.is_sub()) start = std::max(start, fin[static_cast<std::size_t>(s.b.sub)]);
    fin[static_cast<std::size_t>(s.id)] = start + cfg.lat(s.op);
    best = std::max(best, fin[static_cast<std::size_t>(s.id)]);
  }
  return best;
}

namespace detail {

class Tables {
 public:
  explicit Tables(int acs)
      : acs_(acs),
        au_busy_(static_cast<std::size_t>(acs * kAusPerAc)),
        ac_tag_(static_cast<std::size_t>(acs)),
        ac_bus_(static_cast<std::size_t>(acs)),
        next_addr_(static_cast<std::size_t>(acs * kAusPerAc), 0) {}

  bool au_free(int au_index, int c) const { return !get(au_busy_[static_cast<std::size_t>(au_index)], c); }
  int tag(int ac, int c) const {
    const auto& v = ac_tag_[static_cast<std::size_t>(ac)];
    return c < static_cast<int>(v.size()) ? v[static_cast<std::size_t>(c)] : -1;
  }
  bool tag_ok(int ac, int c, ScalarOp op) const {
    int t = tag(ac, c);
    return t < 0 || t == static_cast<int>(op);
  }
  bool bus_free(Channel ch, int ac, int c) const {
    if (ch == Channel::AcBus) return !get(ac_bus_[static_cast<std::size_t>(ac)], c);
    if (ch == Channel::InterAcBus) return !get(inter_bus_, c);
    return true;
  }

  void reserve_op(int ac, int au, int c, ScalarOp op) {
    set(au_busy_[static_cast<std::size_t>(ac * kAusPerAc + au)], c);
    auto& v = ac_tag_[static_cast<std::size_t>(ac)];
    if (static_cast<int>(v.size()) <= c) v.resize(static_cast<std::size_t>(c) + 1, -1);
    v[static_cast<std::size_t>(c)] = static_cast<int>(op);
  }
  void reserve_bus(Channel ch, int ac, int c) {
    if (ch == Channel::AcBus) set(ac_bus_[static_cast<std::size_t>(ac)], c);
    if (ch == Channel::InterAcBus) set(inter_bus_, c);
  }
  int alloc(int ac, int au) { return next_addr_[static_cast<std::size_t>(ac * kAusPerAc + au)]++; }
  int words_used() const { return next_addr_.empty() ? 0 : *std::max_element(next_addr_.begin(), next_addr_.end()); }

 private:
  static bool get(const std::vector<char>& v, int c) { return c < static_cast<int>(v.size()) && v[static_cast<std::size_t>(c)]; }
  static void set(std::vector<char>& v, int c) {
    if (static_cast<int>(v.size()) <= c) v.resize(static_cast<std::size_t>(c) * 2 + 8, 0);
    v[static_cast<std::size_t>(c)] = 1;
  }

  int acs_;
  std::vector<std::vector<char>> au_busy_;
  std::vector<std::vector<int>> ac_tag_;
  std::vector<std::vector<char>> ac_bus_;
  std::vector<char> inter_bus_;
  std::vector<int> next_addr_;
};

// Reservations made while evaluating one candidate, not yet committed.
struct Tentative {
  struct Entry {
    int au_index;  // -1 for a piggybacked bus write
    int ac;
    int cycle;
    Channel ch;
  };
  std::vector<Entry> entries;

  bool au_taken(int au_index, int c) const {
    for (const auto& e : entries)
      if (e.au_index >= 0 && e.au_index == au_index && e.cycle == c) return true;
    return false;
  }
  bool bus_taken(Channel ch, int ac, int c) const {
    for (const auto& e : entries) {
      if (e.cycle != c || e.ch != ch) continue;
      if (ch == Channel::InterAcBus || (ch == Channel::AcBus && e.ac == ac)) return true;
    }
    return false;
  }
  bool mov_tag_at(int ac, int c) const {
    for (const auto& e : entries)
      if (e.au_index >= 0 && e.ac == ac && e.cycle == c) return true;
    return false;
  }
};

// How one operand reaches the consuming AU.
struct Route {
  enum class Kind { Local, Copy, Join, Neighbor, Piggyback, Mov } kind = Kind::Local;
  int ready = 0;
  int send = -1;  // existing send joined
  int cycle = 0;  // new send cycle
  Channel ch = Channel::Neighbor;
};

inline int route_cost(Route::Kind k) {
  switch (k) {
    case Route::Kind::Local:
    case Route::Kind::Copy: return 0;
    case Route::Kind::Join: return 1;
    case Route::Kind::Neighbor: return 2;
    case Route::Kind::Piggyback: return 3;
    case Route::Kind::Mov: return 4;
  }
  return 5;
}

}  // namespace detail

/// List scheduling: ready sub-nodes in (longest path desc, id asc) order,
/// each placed on the AU giving (earliest start, cheapest routing, lowest
/// index). Operands on another AU arrive through neighbor links or bus
/// broadcasts, preferring transfers that already exist.
inline Schedule schedule(const hdfg::ScalarProgram& p, int acs, const engine::EngineConfig& cfg) {
  using detail::Route;
  if (acs < 1) throw Error("scheduler", "a thread needs at least one AC");
  const std::size_t n = p.subs.size();
  for (const auto& s : p.subs)
    if (!cfg.is_enabled(s.op))
      throw Error("scheduler", std::string("unschedulable op '") + hdfg::to_string(s.op) + "': ALU op not enabled");

  std::vector<std::vector<int>> succs(n);
  std::vector<int> pending(n, 0);
  for (const auto& s : p.subs) {
    std::set<int> deps;
    if (s.a.is_sub()) deps.insert(s.a.sub);
    if (hdfg::arity(s.op) == 2 && s.b.is_sub()) deps.insert(s.b.sub);
    for (int d : deps) succs[static_cast<std::size_t>(d)].push_back(s.id);
    pending[static_cast<std::size_t>(s.id)] = static_cast<int>(deps.size());
  }
  std::vector<int> prio(n, 0);
  for (std::size_t k = n; k-- > 0;) {
    int best = 0;
    for (int s : succs[k]) best = std::max(best, prio[static_cast<std::size_t>(s)]);
    prio[k] = cfg.lat(p.subs[k].op) + best;
  }
  auto cmp = [&](int x, int y) {
    if (prio[static_cast<std::size_t>(x)] != prio[static_cast<std::size_t>(y)])
      return prio[static_cast<std::size_t>(x)] > prio[static_cast<std::size_t>(y)];
    return x < y;
  };
  std::set<int, decltype(cmp)> ready(cmp);
  for (std::size_t k = 0; k < n; ++k)
    if (pending[k] == 0) ready.insert(static_cast<int>(k));

  Schedule sch;
  sch.acs = acs;
  sch.placements.resize(n);
  detail::Tables tab(acs);
  std::map<std::pair<int, int>, std::pair<int, int>> copies;  // (sub, au index) -> (addr, ready)
  std::vector<std::vector<int>> sends_of(n);                  // sub -> indices into sch.sends
  const int total_aus = acs * kAusPerAc;

  // Earliest explicit mov of `src` onto channel ch.
  auto find_mov = [&](const Placement& src, Channel ch, const detail::Tentative& tent) {
    int src_index = src.ac * kAusPerAc + src.au;
    for (int c = src.ready;; ++c) {
      if (!tab.au_free(src_index, c) || tent.au_taken(src_index, c)) continue;
      if (!tab.tag_ok(src.ac, c, ScalarOp::Mov)) continue;
      if (!tab.bus_free(ch, src.ac, c) || tent.bus_taken(ch, src.ac, c)) continue;
      return c;
    }
  };

  // Best way to get sub d onto AU (ac, au).
  auto plan_route = [&](int d, int ac, int au, detail::Tentative& tent) {
    const Placement& src = sch.placements[static_cast<std::size_t>(d)];
    const int t = ac * kAusPerAc + au;
    Route r;
    if (src.ac == ac && src.au == au) {
      r.ready = src.ready;
      return r;
    }
    if (auto it = copies.find({d, t}); it != copies.end()) {
      r.kind = Route::Kind::Copy;
      r.ready = it->second.second;
      return r;
    }
    std::optional<Route> best;
    auto consider = [&](const Route& c) {
      if (!best || c.ready < best->ready ||
          (c.ready == best->ready && detail::route_cost(c.kind) < detail::route_cost(best->kind)))
        best = c;
    };
    const Channel ch = engine::route(src.ac, src.au, ac, au);
    for (int k : sends_of[static_cast<std::size_t>(d)]) {
      const Send& snd = sch.sends[static_cast<std::size_t>(k)];
      bool reaches = snd.channel == Channel::InterAcBus ? src.ac != ac
                     : snd.channel == Channel::AcBus    ? ch == Channel::AcBus
                                                        : ch == Channel::Neighbor;
      if (!reaches) continue;
      Route c;
      c.kind = Route::Kind::Join;
      c.send = k;
      c.ready = snd.cycle + cfg.channel_latency(snd.channel);
      consider(c);
    }
    if (ch == Channel::Neighbor) {
      Route c;
      c.kind = Route::Kind::Neighbor;
      c.cycle = src.ready;
      c.ch = ch;
      c.ready = src.ready + cfg.channel_latency(ch);
      consider(c);
    } else {
      for (int q = src.ready; q < src.ready + cfg.bus_fifo_depth; ++q) {
        if (!tab.bus_free(ch, src.ac, q) || tent.bus_taken(ch, src.ac, q)) continue;
        Route c;
        c.kind = Route::Kind::Piggyback;
        c.cycle = q;
        c.ch = ch;
        c.ready = q + cfg.channel_latency(ch);
        consider(c);
        break;
      }
      if (!best || best->ready > src.ready + cfg.channel_latency(ch)) {
        Route c;
        c.kind = Route::Kind::Mov;
        c.ch = ch;
        c.cycle = find_mov(src, ch, tent);
        c.ready = c.cycle + cfg.channel_latency(ch);
        consider(c);
      }
    }
    if (best->kind == Route::Kind::Piggyback) tent.entries.push_back({-1, src.ac, best->cycle, best->ch});
    if (best->kind == Route::Kind::Mov)
      tent.entries.push_back({src.ac * kAusPerAc + src.au, src.ac, best->cycle, best->ch});
    return *best;
  };

  while (!ready.empty()) {
    int id = *ready.begin();
    ready.erase(ready.begin());
    const auto& s = p.subs[static_cast<std::size_t>(id)];
    std::vector<int> deps;
    if (s.a.is_sub()) deps.push_back(s.a.sub);
    if (hdfg::arity(s.op) == 2 && s.b.is_sub() && !(s.b.sub == s.a.sub && s.a.is_sub())) deps.push_back(s.b.sub);

    struct Choice {
      int start = 0, score = 0, cost = 0, ac = 0, au = 0;
      std::vector<Route> routes;
    };
    std::optional<Choice> best;
    const int home = s.lane >= 0 ? (s.lane % acs) * kAusPerAc + s.unit % kAusPerAc : -1;
    auto distance = [&](int t) {
      if (home < 0 || t == home) return 0;
      return t / kAusPerAc == home / kAusPerAc ? kAuAway : kAcAway;
    };
    for (int t = 0; t < total_aus; ++t) {
      int ac = t / kAusPerAc;
      int au = t % kAusPerAc;
      detail::Tentative tent;
      Choice ch;
      ch.ac = ac;
      ch.au = au;
      int lb = 0;
      for (int d : deps) {
        Route r = plan_route(d, ac, au, tent);
        lb = std::max(lb, r.ready);
        ch.cost += detail::route_cost(r.kind);
        ch.routes.push_back(r);
      }
      const int away = distance(t);
      if (best && lb + away > best->score) continue;
      int c = lb;
      while (!tab.au_free(t, c) || !tab.tag_ok(ac, c, s.op) || tent.mov_tag_at(ac, c)) ++c;
      ch.start = c;
      ch.score = c + away;
      if (!best || ch.score < best->score || (ch.score == best->score && ch.cost < best->cost)) best = std::move(ch);
    }

    // Commit the chosen placement and its transfers.
    const int t = best->ac * kAusPerAc + best->au;
    for (std::size_t k = 0; k < deps.size(); ++k) {
      const int d = deps[k];
      const Route& r = best->routes[k];
      const Placement& src = sch.placements[static_cast<std::size_t>(d)];
      if (r.kind == Route::Kind::Local || r.kind == Route::Kind::Copy) continue;
      int send = r.send;
      if (r.kind == Route::Kind::Neighbor) {
        // one neighbor send per producer carries both neighbors
        for (int j : sends_of[static_cast<std::size_t>(d)])
          if (sch.sends[static_cast<std::size_t>(j)].channel == Channel::Neighbor) send = j;
      }
      if (send < 0) {
        Send snd;
        snd.sub = d;
        snd.cycle = r.cycle;
        snd.from_ac = src.ac;
        snd.from_au = src.au;
        snd.channel = r.ch;
        snd.mov = r.kind == Route::Kind::Mov;
        if (snd.mov) tab.reserve_op(src.ac, src.au, r.cycle, ScalarOp::Mov);
        tab.reserve_bus(r.ch, src.ac, r.cycle);
        send = static_cast<int>(sch.sends.size());
        sch.sends.push_back(snd);
        sends_of[static_cast<std::size_t>(d)].push_back(send);
      }
      Receiver rc;
      rc.ac = best->ac;
      rc.au = best->au;
      rc.addr = tab.alloc(best->ac, best->au);
      rc.ready = r.ready;
      sch.sends[static_cast<std::size_t>(send)].receivers.push_back(rc);
      copies[{d, t}] = {rc.addr, rc.ready};
    }
    Placement pl;
    pl.sub = id;
    pl.op = s.op;
    pl.cycle = best->start;
    pl.ac = best->ac;
    pl.au = best->au;
    pl.addr = tab.alloc(best->ac, best->au);
    pl.ready = best->start + cfg.lat(s.op);
    tab.reserve_op(pl.ac, pl.au, pl.cycle, s.op);
    sch.placements[static_cast<std::size_t>(id)] = pl;
    sch.makespan = std::max(sch.makespan, pl.ready);
    for (int su : succs[static_cast<std::size_t>(id)])
      if (--pending[static_cast<std::size_t>(su)] == 0) ready.insert(su);
  }

  for (const auto& o : p.outputs) {
    engine::OutLoc loc;
    if (o.is_sub()) {
      const auto& pl = sch.placements[static_cast<std::size_t>(o.sub)];
      loc = {engine::Src::data(pl.addr), pl.ac, pl.au};
    } else if (o.space == hdfg::Space::Const) {
      loc.src = engine::Src::constant(o.index);
    } else {
      loc.src = engine::Src::port(o.space, o.index);
    }
    sch.outputs.push_back(loc);
  }
  sch.words_used = tab.words_used();
  return sch;
}

/// AC streams and AU instruction memories replaying a schedule.
inline engine::MicroProgram emit(const Schedule& sch, const hdfg::ScalarProgram& p) {
  engine::MicroProgram m;
  m.acs = sch.acs;
  m.makespan = sch.makespan;
  m.constants = p.constants;
  m.outputs = sch.outputs;
  m.words_used = sch.words_used;
  m.ac_streams.resize(static_cast<std::size_t>(sch.acs));
  m.au_mem.resize(static_cast<std::size_t>(sch.acs * kAusPerAc));

  std::map<std::pair<int, int>, int> copy_addr;  // (sub, au index) -> addr
  for (const auto& snd : sch.sends)
    for (const auto& r : snd.receivers) copy_addr[{snd.sub, r.ac * kAusPerAc + r.au}] = r.addr;
  auto src_of = [&](const hdfg::Operand& o, int ac, int au) {
    if (!o.is_sub()) {
      return o.space == hdfg::Space::Const ? engine::Src::constant(o.index) : engine::Src::port(o.space, o.index);
    }
    const auto& pl = sch.placements[static_cast<std::size_t>(o.sub)];
    if (pl.ac == ac && pl.au == au) return engine::Src::data(pl.addr);
    return engine::Src::data(copy_addr.at({o.sub, ac * kAusPerAc + au}));
  };
  auto targets = [&](const Send& snd, std::vector<engine::Fwd>& out) {
    int delay = snd.mov ? 0 : snd.cycle - sch.placements[static_cast<std::size_t>(snd.sub)].ready;
    for (const auto& r : snd.receivers) out.push_back({r.ac, r.au, r.addr, delay});
  };

  // (au index, cycle) -> instruction
  std::map<std::pair<int, int>, engine::AuInstr> slots;
  for (const auto& pl : sch.placements) {
    const auto& s = p.subs[static_cast<std::size_t>(pl.sub)];
    engine::AuInstr a;
    a.op = s.op;
    a.a = src_of(s.a, pl.ac, pl.au);
    if (hdfg::arity(s.op) == 2) a.b = src_of(s.b, pl.ac, pl.au);
    a.dst = pl.addr;
    a.sub = pl.sub;
    slots[{pl.ac * kAusPerAc + pl.au, pl.cycle}] = a;
  }
  for (const auto& snd : sch.sends) {
    const auto& from = sch.placements[static_cast<std::size_t>(snd.sub)];
    if (!snd.mov) {
      targets(snd, slots.at({from.ac * kAusPerAc + from.au, from.cycle}).fwd);
      continue;
    }
    engine::AuInstr a;
    a.op = ScalarOp::Mov;
    a.a = engine::Src::data(from.addr);
    a.sub = snd.sub;
    targets(snd, a.fwd);
    slots[{snd.from_ac * kAusPerAc + snd.from_au, snd.cycle}] = a;
  }
  for (const auto& [key, ins] : slots) {
    int ac = key.first / kAusPerAc;
    int au = key.first % kAusPerAc;
    int c = key.second;
    auto& stream = m.ac_streams[static_cast<std::size_t>(ac)];
    if (static_cast<int>(stream.size()) <= c) stream.resize(static_cast<std::size_t>(c) + 1);
    auto& ai = stream[static_cast<std::size_t>(c)];
    ai.nop = false;
    ai.op = ins.op;
    ai.mask = static_cast<std::uint8_t>(ai.mask | (1u << au));
    m.au_mem[static_cast<std::size_t>(key.first)].push_back(ins);
  }
  return m;
}

/// `cycle,ac,au,subNode,op` rows in (cycle, ac, au) order.
inline std::string to_csv(const Schedule& sch) {
  struct Row {
    int cycle, ac, au, sub;
    std::string op;
  };
  std::vector<Row> rows;
  for (const auto& pl : sch.placements) rows.push_back({pl.cycle, pl.ac, pl.au, pl.sub, hdfg::to_string(pl.op)});
  for (const auto& snd : sch.sends)
    if (snd.mov) rows.push_back({snd.cycle, snd.from_ac, snd.from_au, snd.sub, "mov"});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.cycle, a.ac, a.au) < std::tie(b.cycle, b.ac, b.au);
  });
  std::string out = "cycle,ac,au,subNode,op\n";
  for (const auto& r : rows)
    out += std::to_string(r.cycle) + "," + std::to_string(r.ac) + "," + std::to_string(r.au) + "," +
           std::to_string(r.sub) + "," + r.op + "\n";
  return out;
}

}  // namespace dana::scheduler
