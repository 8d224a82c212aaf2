#pragma once

#include <array>
#include <cstring>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dana/common.hpp"
#include "dana/pageio.hpp"

// DANA-S1: 22-bit strider instructions, opcode in bits[21:18].
//
//   readB/writeB  modeA(1) modeB(1) A(8) B(4) reg(4)
//   extrB         src(4) byteStart(5) byteLen(4) dst(4) pad(1)
//   extrBit       src(4) bitStart(6) bitLen-1(4) dst(4)
//   cln           modeA(1) modeB(1) start(7) len(4) dst(4) pad(1)
//   insrt         modeA(1) pos(7) len(4) src(4) pad(2)
//   ad/sub/mul    modeB(1) srcA(4) B(8) dst(4) pad(1)
//   bentr         pad(18)
//   bexit         cond(3) srcA(4) srcB(4) pad(7)
//
// Fields are listed high to low. mode bit 1 = register operand.

namespace dana::strider {

enum class Opcode : std::uint8_t {
  ReadB = 0, WriteB, ExtrB, ExtrBit, Cln, Insrt, Ad, Sub, Mul, Bentr, Bexit,
};

inline constexpr int kOpcodeCount = 11;
inline constexpr std::uint32_t kWordMask = (1u << 22) - 1;
inline constexpr int kRegOut = 15;
inline constexpr int kMaxLoopDepth = 8;

inline const char* mnemonic(Opcode op) {
  static const char* names[] = {"readB", "writeB", "extrB", "extrBit", "cln", "insrt",
                                "ad", "sub", "mul", "bentr", "bexit"};
  return names[static_cast<int>(op)];
}

enum class Cond : std::uint8_t { Eq = 0, Ne, Lt, Le, Gt, Ge };

inline const char* cond_name(int c) {
  static const char* names[] = {"eq", "ne", "lt", "le", "gt", "ge", "rsv6", "rsv7"};
  return names[c & 7];
}

/// Decoded instruction. Unused fields stay zero; `pad` keeps the raw
/// padding bits so encode(decode(w)) == w for every word.
struct Instr {
  Opcode op = Opcode::Bentr;
  bool mode_a = false;
  bool mode_b = false;
  int a = 0;      // readB/writeB address, cln start, insrt pos, byte/bit start
  int b = 0;      // readB/writeB length, ad/sub/mul B, cln len, byte/bit length (bitLen is 1-based)
  int src = 0;    // extr*/insrt source, ad/sub/mul srcA, bexit srcA
  int src_b = 0;  // bexit srcB
  int dst = 0;    // destination register (readB/writeB register operand)
  int cond = 0;
  int pad = 0;

  bool operator==(const Instr&) const = default;
};

inline std::uint32_t encode(const Instr& i) {
  auto bits = [](std::uint32_t v, int width, int shift) {
    return (v & ((1u << width) - 1)) << shift;
  };
  std::uint32_t w = bits(static_cast<std::uint32_t>(i.op), 4, 18);
  auto u = [](int v) { return static_cast<std::uint32_t>(v); };
  switch (i.op) {
    case Opcode::ReadB:
    case Opcode::WriteB:
      w |= bits(i.mode_a, 1, 17) | bits(i.mode_b, 1, 16) | bits(u(i.a), 8, 8) | bits(u(i.b), 4, 4) |
           bits(u(i.dst), 4, 0);
      break;
    case Opcode::ExtrB:
      w |= bits(u(i.src), 4, 14) | bits(u(i.a), 5, 9) | bits(u(i.b), 4, 5) | bits(u(i.dst), 4, 1) |
           bits(u(i.pad), 1, 0);
      break;
    case Opcode::ExtrBit:
      w |= bits(u(i.src), 4, 14) | bits(u(i.a), 6, 8) | bits(u(i.b - 1), 4, 4) | bits(u(i.dst), 4, 0);
      break;
    case Opcode::Cln:
      w |= bits(i.mode_a, 1, 17) | bits(i.mode_b, 1, 16) | bits(u(i.a), 7, 9) | bits(u(i.b), 4, 5) |
           bits(u(i.dst), 4, 1) | bits(u(i.pad), 1, 0);
      break;
    case Opcode::Insrt:
      w |= bits(i.mode_a, 1, 17) | bits(u(i.a), 7, 10) | bits(u(i.b), 4, 6) | bits(u(i.src), 4, 2) |
           bits(u(i.pad), 2, 0);
      break;
    case Opcode::Ad:
    case Opcode::Sub:
    case Opcode::Mul:
      w |= bits(i.mode_b, 1, 17) | bits(u(i.src), 4, 13) | bits(u(i.b), 8, 5) | bits(u(i.dst), 4, 1) |
           bits(u(i.pad), 1, 0);
      break;
    case Opcode::Bentr:
      w |= bits(u(i.pad), 18, 0);
      break;
    case Opcode::Bexit:
      w |= bits(u(i.cond), 3, 15) | bits(u(i.src), 4, 11) | bits(u(i.src_b), 4, 7) | bits(u(i.pad), 7, 0);
      break;
  }
  return w;
}

/// Total over every word whose opcode is <= 10.
inline Instr decode(std::uint32_t w) {
  if (w & ~kWordMask) throw Error("strider", "word " + hex64(w) + " exceeds 22 bits");
  int opc = static_cast<int>(w >> 18);
  if (opc >= kOpcodeCount) throw Error("strider", "unknown opcode " + std::to_string(opc));
  auto f = [w](int width, int shift) { return static_cast<int>((w >> shift) & ((1u << width) - 1)); };
  Instr i;
  i.op = static_cast<Opcode>(opc);
  switch (i.op) {
    case Opcode::ReadB:
    case Opcode::WriteB:
      i.mode_a = f(1, 17);
      i.mode_b = f(1, 16);
      i.a = f(8, 8);
      i.b = f(4, 4);
      i.dst = f(4, 0);
      break;
    case Opcode::ExtrB:
      i.src = f(4, 14);
      i.a = f(5, 9);
      i.b = f(4, 5);
      i.dst = f(4, 1);
      i.pad = f(1, 0);
      break;
    case Opcode::ExtrBit:
      i.src = f(4, 14);
      i.a = f(6, 8);
      i.b = f(4, 4) + 1;
      i.dst = f(4, 0);
      break;
    case Opcode::Cln:
      i.mode_a = f(1, 17);
      i.mode_b = f(1, 16);
      i.a = f(7, 9);
      i.b = f(4, 5);
      i.dst = f(4, 1);
      i.pad = f(1, 0);
      break;
    case Opcode::Insrt:
      i.mode_a = f(1, 17);
      i.a = f(7, 10);
      i.b = f(4, 6);
      i.src = f(4, 2);
      i.pad = f(2, 0);
      break;
    case Opcode::Ad:
    case Opcode::Sub:
    case Opcode::Mul:
      i.mode_b = f(1, 17);
      i.src = f(4, 13);
      i.b = f(8, 5);
      i.dst = f(4, 1);
      i.pad = f(1, 0);
      break;
    case Opcode::Bentr:
      i.pad = f(18, 0);
      break;
    case Opcode::Bexit:
      i.cond = f(3, 15);
      i.src = f(4, 11);
      i.src_b = f(4, 7);
      i.pad = f(7, 0);
      break;
  }
  return i;
}

inline std::string reg_name(int r) {
  if (r == 0) return "%zero";
  if (r >= 1 && r <= 7) return "%cr" + std::to_string(r);
  if (r >= 8 && r <= 14) return "%t" + std::to_string(r - 8);
  if (r == kRegOut) return "%out";
  return "%r" + std::to_string(r);
}

inline std::optional<int> parse_reg(std::string_view s) {
  auto num = [](std::string_view d) -> std::optional<int> {
    std::int64_t v = 0;
    if (d.empty() || !parse_int64(d, v)) return std::nullopt;
    return static_cast<int>(v);
  };
  if (s == "%zero" || s == "%r0") return 0;
  if (s == "%out") return kRegOut;
  if (s.rfind("%cr", 0) == 0) {
    auto v = num(s.substr(3));
    if (v && *v >= 1 && *v <= 7) return *v;
  } else if (s.rfind("%t", 0) == 0) {
    auto v = num(s.substr(2));
    if (v && *v >= 0 && *v <= 6) return *v + 8;
  } else if (s.rfind("%r", 0) == 0) {
    auto v = num(s.substr(2));
    if (v && *v >= 0 && *v <= 15) return *v;
  }
  return std::nullopt;
}

inline std::string disassemble(const Instr& i) {
  auto ab = [](bool reg, int v) { return reg ? reg_name(v) : std::to_string(v); };
  std::string m = mnemonic(i.op);
  switch (i.op) {
    case Opcode::ReadB:
    case Opcode::WriteB:
      return m + " " + ab(i.mode_a, i.a) + ", " + ab(i.mode_b, i.b) + ", " + reg_name(i.dst);
    case Opcode::ExtrB:
    case Opcode::ExtrBit:
      return m + " " + reg_name(i.src) + ", " + std::to_string(i.a) + ", " + std::to_string(i.b) + ", " +
             reg_name(i.dst);
    case Opcode::Cln:
      return m + " " + ab(i.mode_a, i.a) + ", " + ab(i.mode_b, i.b) + ", " + reg_name(i.dst);
    case Opcode::Insrt:
      return m + " " + ab(i.mode_a, i.a) + ", " + std::to_string(i.b) + ", " + reg_name(i.src);
    case Opcode::Ad:
    case Opcode::Sub:
    case Opcode::Mul:
      return m + " " + reg_name(i.src) + ", " + ab(i.mode_b, i.b) + ", " + reg_name(i.dst);
    case Opcode::Bentr:
      return m;
    case Opcode::Bexit:
      return m + " " + cond_name(i.cond) + ", " + reg_name(i.src) + ", " + reg_name(i.src_b);
  }
  return m;
}

struct Program {
  std::vector<Instr> instrs;
  std::string layout_fingerprint;
};

inline std::string disassemble(const Program& p) {
  std::string out;
  for (const auto& i : p.instrs) out += disassemble(i) + "\n";
  return out;
}

inline std::vector<std::uint32_t> encode(const Program& p) {
  std::vector<std::uint32_t> words;
  for (const auto& i : p.instrs) words.push_back(encode(i));
  return words;
}

/// Binary program file: 32-bit little-endian words, high 10 bits zero.
inline std::string to_binary(const Program& p) {
  std::string out;
  for (std::uint32_t w : encode(p)) {
    char b[4];
    pageio::store_le(reinterpret_cast<std::uint8_t*>(b), w, 4);
    out.append(b, 4);
  }
  return out;
}

inline void check_structure(const Program& p) {
  int depth = 0;
  for (std::size_t k = 0; k < p.instrs.size(); ++k) {
    if (p.instrs[k].op == Opcode::Bentr) ++depth;
    if (p.instrs[k].op == Opcode::Bexit && depth-- == 0)
      throw Error("strider", "instruction " + std::to_string(k) + ": bexit without bentr");
  }
}

inline Program from_binary(std::string_view bytes) {
  if (bytes.size() % 4 != 0) throw Error("strider", "binary program length is not a multiple of 4");
  Program p;
  for (std::size_t k = 0; k < bytes.size(); k += 4)
    p.instrs.push_back(decode(static_cast<std::uint32_t>(
        pageio::load_le(reinterpret_cast<const std::uint8_t*>(bytes.data() + k), 4))));
  return p;
}

namespace detail {

inline std::vector<std::string> split_operands(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    std::string_view tok = trim(s.substr(start, comma - start));
    if (!tok.empty() || comma < s.size()) out.emplace_back(tok);
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Parses assembly text: one instruction per line, `\\` starts a comment.
inline Program assemble(std::string_view text) {
  Program p;
  int line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto c = line.find("\\\\"); c != std::string_view::npos) line = line.substr(0, c);
    line = trim(line);
    if (line.empty()) continue;
    auto where = [&](const std::string& msg) {
      return Error("strider", "line " + std::to_string(line_no) + ": " + msg);
    };
    auto sp = line.find_first_of(" \t");
    std::string m(line.substr(0, sp));
    auto ops = detail::split_operands(sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1));
    Instr ins;
    int opc = -1;
    for (int k = 0; k < kOpcodeCount; ++k)
      if (m == mnemonic(static_cast<Opcode>(k))) opc = k;
    if (opc < 0) throw where("unknown mnemonic '" + m + "'");
    ins.op = static_cast<Opcode>(opc);
    auto want = [&](std::size_t n) {
      if (ops.size() != n)
        throw where(m + " takes " + std::to_string(n) + " operands, got " + std::to_string(ops.size()));
    };
    auto reg = [&](const std::string& s) {
      auto r = parse_reg(s);
      if (!r) throw where("bad register '" + s + "'");
      return *r;
    };
    auto imm = [&](const std::string& s, int lo, int hi, const char* what) {
      std::int64_t v = 0;
      if (!parse_int64(s, v)) throw where(std::string("bad ") + what + " '" + s + "'");
      if (v < lo || v > hi)
        throw where(std::string(what) + " " + s + " out of range [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
      return static_cast<int>(v);
    };
    auto imm_or_reg = [&](const std::string& s, int bits, bool& mode, const char* what) {
      if (!s.empty() && s[0] == '%') {
        mode = true;
        return reg(s);
      }
      mode = false;
      return imm(s, 0, (1 << bits) - 1, what);
    };
    switch (ins.op) {
      case Opcode::ReadB:
      case Opcode::WriteB:
        want(3);
        ins.a = imm_or_reg(ops[0], 8, ins.mode_a, "address");
        ins.b = imm_or_reg(ops[1], 4, ins.mode_b, "length");
        ins.dst = reg(ops[2]);
        break;
      case Opcode::ExtrB:
        want(4);
        ins.src = reg(ops[0]);
        ins.a = imm(ops[1], 0, 31, "byteStart");
        ins.b = imm(ops[2], 0, 15, "byteLen");
        ins.dst = reg(ops[3]);
        break;
      case Opcode::ExtrBit:
        want(4);
        ins.src = reg(ops[0]);
        ins.a = imm(ops[1], 0, 63, "bitStart");
        ins.b = imm(ops[2], 1, 16, "bitLen");
        ins.dst = reg(ops[3]);
        break;
      case Opcode::Cln:
        want(3);
        ins.a = imm_or_reg(ops[0], 7, ins.mode_a, "start");
        ins.b = imm_or_reg(ops[1], 4, ins.mode_b, "length");
        ins.dst = reg(ops[2]);
        break;
      case Opcode::Insrt:
        want(3);
        ins.a = imm_or_reg(ops[0], 7, ins.mode_a, "position");
        ins.b = imm(ops[1], 0, 15, "length");
        ins.src = reg(ops[2]);
        break;
      case Opcode::Ad:
      case Opcode::Sub:
      case Opcode::Mul:
        want(3);
        ins.src = reg(ops[0]);
        ins.b = imm_or_reg(ops[1], 8, ins.mode_b, "operand");
        ins.dst = reg(ops[2]);
        break;
      case Opcode::Bentr:
        want(0);
        break;
      case Opcode::Bexit: {
        want(3);
        int c = -1;
        for (int k = 0; k < 6; ++k)
          if (ops[0] == cond_name(k)) c = k;
        if (c < 0) throw where("unknown condition '" + ops[0] + "'");
        ins.cond = c;
        ins.src = reg(ops[1]);
        ins.src_b = reg(ops[2]);
        break;
      }
    }
    p.instrs.push_back(ins);
  }
  check_structure(p);
  return p;
}

namespace detail {

inline Instr rb(int addr, bool areg, int len, bool lreg, int dst) {
  Instr i;
  i.op = Opcode::ReadB;
  i.a = addr;
  i.mode_a = areg;
  i.b = len;
  i.mode_b = lreg;
  i.dst = dst;
  return i;
}

inline Instr ex(Opcode op, int src, int start, int len, int dst) {
  Instr i;
  i.op = op;
  i.src = src;
  i.a = start;
  i.b = len;
  i.dst = dst;
  return i;
}

}  // namespace detail

// Register assignment used by generated programs.
inline constexpr int kCrSizeVersion = 1, kCrCount = 2, kCrUpper = 4, kCrTupleLen = 5, kCrHeaderLen = 6;
inline constexpr int kT0 = 8, kT1 = 9, kT2 = 10;

/// Page-walk program for a layout: header, first line pointer, tuple loop.
inline Program generate(const pageio::PageLayout& layout) {
  layout.validate();
  using detail::ex;
  using detail::rb;
  Program p;
  p.layout_fingerprint = layout.fingerprint();
  auto& v = p.instrs;
  v.push_back(rb(0, false, 8, false, kCrSizeVersion));
  v.push_back(rb(8, false, 2, false, kCrCount));
  v.push_back(rb(10, false, 4, false, kT0));
  v.push_back(ex(Opcode::ExtrB, kT0, 2, 2, kCrUpper));
  v.push_back(rb(pageio::kHeaderLen, false, 4, false, kT1));
  v.push_back(ex(Opcode::ExtrBit, kT1, 0, 15, kT2));
  v.push_back(ex(Opcode::ExtrBit, kT1, 17, 15, kCrTupleLen));
  bool hdr_in_reg = layout.tuple_header_len > 15;
  if (hdr_in_reg) {
    Instr ad;
    ad.op = Opcode::Ad;
    ad.src = 0;
    ad.b = layout.tuple_header_len;
    ad.dst = kCrHeaderLen;
    v.push_back(ad);
  }
  Instr bentr;
  bentr.op = Opcode::Bentr;
  v.push_back(bentr);
  v.push_back(rb(kT2, true, kCrTupleLen, true, kRegOut));
  Instr cln;
  cln.op = Opcode::Cln;
  cln.a = 0;
  cln.b = hdr_in_reg ? kCrHeaderLen : layout.tuple_header_len;
  cln.mode_b = hdr_in_reg;
  cln.dst = kRegOut;
  v.push_back(cln);
  Instr sub;
  sub.op = Opcode::Sub;
  sub.src = kT2;
  sub.b = kCrTupleLen;
  sub.mode_b = true;
  sub.dst = kT2;
  v.push_back(sub);
  Instr bexit;
  bexit.op = Opcode::Bexit;
  bexit.cond = static_cast<int>(Cond::Lt);
  bexit.src = kT2;
  bexit.src_b = kCrUpper;
  v.push_back(bexit);
  return p;
}

/// Cycles the generated program spends on a page holding `tuples` tuples.
inline std::int64_t static_cycles(const pageio::PageLayout& layout, std::int64_t tuples) {
  std::int64_t setup = 8 + (layout.tuple_header_len > 15 ? 1 : 0);
  std::int64_t body = std::max<std::int64_t>(1, ceil_div(layout.tuple_len(), 8)) + 3;
  if (tuples == 0) return setup + 4;  // one pass over a zero-length pointer
  return setup + tuples * body;
}

/// Disassembly with a cycle count per instruction. Register lengths are
/// resolved against the layout; loop bodies are marked per tuple.
inline std::string annotated_listing(const Program& p, const pageio::PageLayout& layout) {
  std::string out;
  bool in_loop = false;
  for (const auto& i : p.instrs) {
    std::int64_t cost = 1;
    if (i.op == Opcode::ReadB && i.dst == kRegOut) {
      std::int64_t len = i.mode_b ? (i.b == kCrTupleLen ? layout.tuple_len() : 8) : i.b;
      cost = std::max<std::int64_t>(1, ceil_div(len, 8));
    }
    std::string text = disassemble(i);
    text.resize(std::max<std::size_t>(text.size(), 32), ' ');
    out += text + " \\\\ " + std::to_string(cost) + (in_loop ? " cycles/tuple" : " cycles") + "\n";
    if (i.op == Opcode::Bentr) in_loop = true;
    if (i.op == Opcode::Bexit) in_loop = false;
  }
  out += "\\\\ page total: " + std::to_string(static_cycles(layout, layout.capacity())) + " cycles at " +
         std::to_string(layout.capacity()) + " tuples\n";
  return out;
}

struct Result {
  std::vector<std::string> payloads;
  std::int64_t cycles = 0;
};

/// Runs a strider program against one page buffer.
inline Result execute(const Program& prog, const pageio::Page& page, std::size_t staging_capacity,
                      std::int64_t max_cycles) {
  // writeB lands in the strider's own copy of the page buffer.
  pageio::Page buf = page;
  if (max_cycles <= 0) throw Error("strider", "maxCycles must be positive");
  std::array<std::uint64_t, 16> reg{};
  std::vector<std::size_t> loop;
  std::string staging;
  Result res;
  std::size_t pc = 0;
  auto fault = [&](const std::string& msg) {
    return Error("strider", "pc " + std::to_string(pc) + " (" + disassemble(prog.instrs[pc]) + "): " + msg);
  };
  auto val = [&](bool is_reg, int v) -> std::uint64_t {
    if (!is_reg) return static_cast<std::uint64_t>(v);
    if (v > 15) throw fault("register id " + std::to_string(v) + " out of range");
    return reg[static_cast<std::size_t>(v)];
  };
  auto set = [&](int r, std::uint64_t v) {
    if (r != 0 && r != kRegOut) reg[static_cast<std::size_t>(r)] = v;
  };
  auto check_range = [&](std::uint64_t addr, std::uint64_t len) {
    if (addr > buf.size() || len > buf.size() - addr)
      throw fault("access [" + std::to_string(addr) + ", +" + std::to_string(len) + ") outside the page");
  };
  while (pc < prog.instrs.size()) {
    const Instr& i = prog.instrs[pc];
    std::int64_t cost = 1;
    std::size_t next = pc + 1;
    switch (i.op) {
      case Opcode::ReadB: {
        std::uint64_t addr = val(i.mode_a, i.a);
        std::uint64_t len = val(i.mode_b, i.b);
        check_range(addr, len);
        if (i.dst == kRegOut) {
          if (staging.size() + len > staging_capacity) throw fault("staging overflow");
          staging.append(reinterpret_cast<const char*>(buf.data() + addr), len);
          cost = std::max<std::int64_t>(1, ceil_div(static_cast<std::int64_t>(len), 8));
        } else {
          if (len > 8) throw fault("register read longer than 8 bytes");
          set(i.dst, len ? pageio::load_le(buf.data() + addr, static_cast<int>(len)) : 0);
        }
        break;
      }
      case Opcode::WriteB: {
        std::uint64_t addr = val(i.mode_a, i.a);
        std::uint64_t len = val(i.mode_b, i.b);
        check_range(addr, len);
        if (i.dst == kRegOut) {
          if (len > staging.size()) throw fault("writeB longer than staged bytes");
          std::memcpy(buf.data() + addr, staging.data(), len);
          staging.erase(0, len);
        } else {
          if (len > 8) throw fault("register write longer than 8 bytes");
          pageio::store_le(buf.data() + addr, reg[static_cast<std::size_t>(i.dst)], static_cast<int>(len));
        }
        break;
      }
      case Opcode::ExtrB: {
        if (i.b > 8 || i.a + i.b > 8) throw fault("byte field outside the 64-bit register");
        std::uint64_t v = reg[static_cast<std::size_t>(i.src)] >> (8 * i.a);
        if (i.b < 8) v &= (std::uint64_t{1} << (8 * i.b)) - 1;
        set(i.dst, v);
        break;
      }
      case Opcode::ExtrBit: {
        if (i.a + i.b > 64) throw fault("bit field outside the 64-bit register");
        std::uint64_t v = reg[static_cast<std::size_t>(i.src)] >> i.a;
        v &= (std::uint64_t{1} << i.b) - 1;
        set(i.dst, v);
        break;
      }
      case Opcode::Cln: {
        if (staging.empty()) break;
        std::uint64_t start = val(i.mode_a, i.a);
        std::uint64_t len = val(i.mode_b, i.b);
        if (start > staging.size() || len > staging.size() - start)
          throw fault("cln range outside staged bytes");
        staging.erase(start, len);
        if (i.dst == kRegOut) {
          res.payloads.push_back(std::move(staging));
          staging.clear();
        }
        break;
      }
      case Opcode::Insrt: {
        std::uint64_t pos = val(i.mode_a, i.a);
        if (pos > staging.size()) throw fault("insert position past staged bytes");
        if (i.b > 8) throw fault("insert longer than 8 bytes");
        if (staging.size() + static_cast<std::size_t>(i.b) > staging_capacity) throw fault("staging overflow");
        char b[8];
        pageio::store_le(reinterpret_cast<std::uint8_t*>(b), reg[static_cast<std::size_t>(i.src)], 8);
        staging.insert(pos, b, static_cast<std::size_t>(i.b));
        break;
      }
      case Opcode::Ad:
        set(i.dst, reg[static_cast<std::size_t>(i.src)] + val(i.mode_b, i.b));
        break;
      case Opcode::Sub:
        set(i.dst, reg[static_cast<std::size_t>(i.src)] - val(i.mode_b, i.b));
        break;
      case Opcode::Mul:
        set(i.dst, reg[static_cast<std::size_t>(i.src)] * val(i.mode_b, i.b));
        break;
      case Opcode::Bentr:
        if (loop.size() >= kMaxLoopDepth) throw fault("loop stack deeper than 8");
        loop.push_back(pc + 1);
        break;
      case Opcode::Bexit: {
        if (loop.empty()) throw fault("loop stack underflow");
        auto a = static_cast<std::int64_t>(reg[static_cast<std::size_t>(i.src)]);
        auto b = static_cast<std::int64_t>(reg[static_cast<std::size_t>(i.src_b)]);
        bool taken = false;
        switch (i.cond) {
          case 0: taken = a == b; break;
          case 1: taken = a != b; break;
          case 2: taken = a < b; break;
          case 3: taken = a <= b; break;
          case 4: taken = a > b; break;
          case 5: taken = a >= b; break;
          default: throw fault("reserved condition code");
        }
        if (taken) loop.pop_back();
        else next = loop.back();
        break;
      }
    }
    res.cycles += cost;
    if (res.cycles > max_cycles) throw fault("exceeded " + std::to_string(max_cycles) + " cycles");
    pc = next;
  }
  return res;
}

inline Result execute(const Program& prog, const pageio::Page& page, const pageio::PageLayout& layout) {
  if (static_cast<int>(page.size()) != layout.page_size)
    throw Error("strider", "page size does not match the layout");
  std::int64_t budget = static_cycles(layout, layout.capacity()) * 4 + 1024;
  return execute(prog, page, static_cast<std::size_t>(layout.tuple_len()), budget);
}

}  // namespace dana::strider
