#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dana/common.hpp"

// DANA-P1 heap pages.
//
//   [0,8)    u64: bits[15:0] page size, bits[31:16] layout version
//   [8,10)   u16 tuple count
//   [10,12)  u16 lower  (one past the line-pointer array)
//   [12,14)  u16 upper  (lowest tuple byte)
//   [14,16)  u16 special (= page size)
//   [16,24)  reserved, zero
//   [24,..)  u32 line pointers: bits[14:0] offset, [16:15] flags, [31:17] length
//   tuples grow downward from special; tuple k sits at special - (k+1)*len.
//
// Tuple = header (u16 attribute count, rest zero) + little-endian values.

namespace dana::pageio {

inline constexpr int kHeaderLen = 24;
inline constexpr int kLinePointerLen = 4;
inline constexpr int kLayoutVersion = 1;
inline constexpr int kMaxPageSize = 32768;
inline constexpr std::uint32_t kFlagNormal = 1;

using Page = std::vector<std::uint8_t>;

inline std::uint64_t load_le(const std::uint8_t* p, int n) {
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void store_le(std::uint8_t* p, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) {
    p[i] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
}

struct PageLayout {
  int page_size = 32768;
  int tuple_header_len = 8;
  int value_width = 4;
  int feature_count = 0;
  int label_count = 1;

  int value_count() const { return feature_count + label_count; }
  int payload_len() const { return value_width * value_count(); }
  int tuple_len() const { return tuple_header_len + payload_len(); }

  /// Tuples per page: one line pointer plus the tuple body each.
  int capacity() const { return (page_size - kHeaderLen) / (tuple_len() + kLinePointerLen); }

  void validate() const {
    if (value_width != 4 && value_width != 8) throw Error("pageio", "value_width must be 4 or 8");
    if (feature_count < 0 || label_count < 0 || value_count() < 1)
      throw Error("pageio", "layout needs at least one value per tuple");
    if (tuple_header_len < 0 || tuple_header_len > 255)
      throw Error("pageio", "tuple_header_len must be in [0, 255]");
    if (page_size > kMaxPageSize) throw Error("pageio", "page_size exceeds 32768");
    if (tuple_len() > 32767) throw Error("pageio", "tuple length exceeds 32767 bytes");
    if (page_size < kHeaderLen + kLinePointerLen + tuple_len())
      throw Error("pageio", "tuple of " + std::to_string(tuple_len()) +
                                " bytes does not fit a " + std::to_string(page_size) + "-byte page");
  }

  KeyValueFile to_kv() const {
    KeyValueFile kv("pageio");
    kv.set("page_size", std::int64_t{page_size});
    kv.set("tuple_header_len", std::int64_t{tuple_header_len});
    kv.set("value_width", std::int64_t{value_width});
    kv.set("feature_count", std::int64_t{feature_count});
    kv.set("label_count", std::int64_t{label_count});
    return kv;
  }

  static PageLayout from_kv(const KeyValueFile& kv) {
    PageLayout l;
    auto get = [&](const char* key, int fallback) {
      std::int64_t v = kv.get_int(key, fallback);
      if (v < -1'000'000 || v > 1'000'000) throw Error("pageio", std::string("key '") + key + "' out of range");
      return static_cast<int>(v);
    };
    l.page_size = get("page_size", l.page_size);
    l.tuple_header_len = get("tuple_header_len", l.tuple_header_len);
    l.value_width = get("value_width", l.value_width);
    l.feature_count = get("feature_count", -1);
    if (l.feature_count < 0) throw Error("pageio", "layout needs feature_count");
    l.label_count = get("label_count", l.label_count);
    l.validate();
    return l;
  }

  static PageLayout load(const std::filesystem::path& path) {
    return from_kv(KeyValueFile::load(path, "pageio"));
  }

  std::string fingerprint() const { return hex64(fnv1a(to_kv().to_string())); }

  bool operator==(const PageLayout&) const = default;
};

struct TupleRecord {
  std::vector<double> features;
  std::vector<double> labels;

  bool operator==(const TupleRecord&) const = default;
};

/// Rounds every value to the layout's value width.
inline TupleRecord quantize(TupleRecord t, const PageLayout& layout) {
  for (double& v : t.features) v = round_to_width(v, layout.value_width);
  for (double& v : t.labels) v = round_to_width(v, layout.value_width);
  return t;
}

inline void encode_value(std::uint8_t* p, double v, int width) {
  if (width == 4) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    store_le(p, bits, 4);
  } else {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    store_le(p, bits, 8);
  }
}

inline double decode_value(const std::uint8_t* p, int width) {
  if (width == 4) {
    auto bits = static_cast<std::uint32_t>(load_le(p, 4));
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::uint64_t bits = load_le(p, 8);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

/// Payload bytes of one tuple (values only, no tuple header).
inline std::string encode_payload(const TupleRecord& t, const PageLayout& layout) {
  std::string out(static_cast<std::size_t>(layout.payload_len()), '\0');
  auto* p = reinterpret_cast<std::uint8_t*>(out.data());
  int k = 0;
  for (double v : t.features) encode_value(p + layout.value_width * k++, v, layout.value_width);
  for (double v : t.labels) encode_value(p + layout.value_width * k++, v, layout.value_width);
  return out;
}

inline TupleRecord decode_payload(std::string_view bytes, const PageLayout& layout) {
  if (bytes.size() != static_cast<std::size_t>(layout.payload_len()))
    throw Error("pageio", "payload of " + std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(layout.payload_len()));
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
  TupleRecord t;
  for (int i = 0; i < layout.value_count(); ++i) {
    double v = decode_value(p + layout.value_width * i, layout.value_width);
    (i < layout.feature_count ? t.features : t.labels).push_back(v);
  }
  return t;
}

/// Builds one page holding `tuples` (at most capacity()).
inline Page build_page(const PageLayout& layout, const std::vector<TupleRecord>& tuples) {
  layout.validate();
  if (static_cast<int>(tuples.size()) > layout.capacity())
    throw Error("pageio", "too many tuples for one page");
  Page page(static_cast<std::size_t>(layout.page_size), 0);
  const int len = layout.tuple_len();
  const int special = layout.page_size;
  const int n = static_cast<int>(tuples.size());
  const int lower = kHeaderLen + kLinePointerLen * n;
  const int upper = special - n * len;
  std::uint64_t word0 = static_cast<std::uint64_t>(layout.page_size & 0xffff) |
                        (static_cast<std::uint64_t>(kLayoutVersion) << 16);
  store_le(&page[0], word0, 8);
  store_le(&page[8], static_cast<std::uint64_t>(n), 2);
  store_le(&page[10], static_cast<std::uint64_t>(lower), 2);
  store_le(&page[12], static_cast<std::uint64_t>(upper), 2);
  store_le(&page[14], static_cast<std::uint64_t>(special & 0xffff), 2);
  for (int k = 0; k < n; ++k) {
    const auto& t = tuples[static_cast<std::size_t>(k)];
    if (static_cast<int>(t.features.size()) != layout.feature_count ||
        static_cast<int>(t.labels.size()) != layout.label_count)
      throw Error("pageio", "tuple arity does not match layout");
    const int off = special - (k + 1) * len;
    std::uint32_t lp = static_cast<std::uint32_t>(off) | (kFlagNormal << 15) |
                       (static_cast<std::uint32_t>(len) << 17);
    store_le(&page[static_cast<std::size_t>(kHeaderLen + kLinePointerLen * k)], lp, 4);
    std::uint8_t* tp = &page[static_cast<std::size_t>(off)];
    if (layout.tuple_header_len >= 2) store_le(tp, static_cast<std::uint64_t>(layout.value_count()), 2);
    std::string payload = encode_payload(t, layout);
    std::memcpy(tp + layout.tuple_header_len, payload.data(), payload.size());
  }
  return page;
}

struct PageHeader {
  int page_size = 0;
  int version = 0;
  int count = 0;
  int lower = 0;
  int upper = 0;
  int special = 0;
};

inline PageHeader read_header(const Page& page) {
  if (page.size() < static_cast<std::size_t>(kHeaderLen)) throw Error("pageio", "page shorter than its header");
  PageHeader h;
  std::uint64_t w = load_le(&page[0], 8);
  h.page_size = static_cast<int>(w & 0xffff);
  if (h.page_size == 0) h.page_size = 65536;
  h.version = static_cast<int>((w >> 16) & 0xffff);
  h.count = static_cast<int>(load_le(&page[8], 2));
  h.lower = static_cast<int>(load_le(&page[10], 2));
  h.upper = static_cast<int>(load_le(&page[12], 2));
  h.special = static_cast<int>(load_le(&page[14], 2));
  if (h.special == 0) h.special = 65536;
  return h;
}

/// Decodes every tuple through its line pointer.
inline std::vector<TupleRecord> read_reference(const Page& page, const PageLayout& layout) {
  PageHeader h = read_header(page);
  if (h.version != kLayoutVersion)
    throw Error("pageio", "corrupt header: layout version " + std::to_string(h.version));
  if (h.page_size != layout.page_size || static_cast<int>(page.size()) != layout.page_size)
    throw Error("pageio", "corrupt header: page size " + std::to_string(h.page_size) +
                              " does not match layout " + std::to_string(layout.page_size));
  if (h.lower > h.upper) throw Error("pageio", "corrupt header: lower > upper");
  if (h.upper > h.special || h.special > layout.page_size)
    throw Error("pageio", "corrupt header: upper/special out of range");
  if (h.lower != kHeaderLen + kLinePointerLen * h.count)
    throw Error("pageio", "corrupt header: lower does not match tuple count");
  std::vector<TupleRecord> out;
  out.reserve(static_cast<std::size_t>(h.count));
  for (int k = 0; k < h.count; ++k) {
    auto lp = static_cast<std::uint32_t>(load_le(&page[static_cast<std::size_t>(kHeaderLen + kLinePointerLen * k)], 4));
    int off = static_cast<int>(lp & 0x7fff);
    int flags = static_cast<int>((lp >> 15) & 0x3);
    int len = static_cast<int>(lp >> 17);
    if (flags != static_cast<int>(kFlagNormal))
      throw Error("pageio", "line pointer " + std::to_string(k) + " has flags " + std::to_string(flags));
    if (off < h.upper || off + len > h.special)
      throw Error("pageio", "line pointer " + std::to_string(k) + " outside [upper, special)");
    if (len != layout.tuple_len())
      throw Error("pageio", "line pointer " + std::to_string(k) + " length " + std::to_string(len) +
                                " does not match layout");
    const char* body = reinterpret_cast<const char*>(&page[static_cast<std::size_t>(off)]);
    out.push_back(decode_payload(std::string_view(body + layout.tuple_header_len,
                                                  static_cast<std::size_t>(layout.payload_len())),
                                 layout));
  }
  return out;
}

/// Dataset description written next to the page files.
struct Manifest {
  PageLayout layout;
  int page_count = 0;
  std::int64_t tuple_count = 0;
  std::vector<int> tuples_per_page;

  KeyValueFile to_kv() const {
    KeyValueFile kv = layout.to_kv();
    kv.set("page_count", std::int64_t{page_count});
    kv.set("tuple_count", tuple_count);
    kv.set("layout_fingerprint", layout.fingerprint());
    std::string per;
    for (std::size_t i = 0; i < tuples_per_page.size(); ++i)
      per += (i ? "," : "") + std::to_string(tuples_per_page[i]);
    kv.set("tuples_per_page", per);
    return kv;
  }

  static Manifest load(const std::filesystem::path& dir) {
    KeyValueFile kv = KeyValueFile::load(dir / "manifest.txt", "pageio");
    Manifest m;
    m.layout = PageLayout::from_kv(kv);
    m.page_count = static_cast<int>(kv.get_int("page_count"));
    m.tuple_count = kv.get_int("tuple_count");
    std::string per = kv.get("tuples_per_page");
    std::size_t start = 0;
    while (start < per.size()) {
      std::size_t comma = per.find(',', start);
      if (comma == std::string::npos) comma = per.size();
      std::int64_t v = 0;
      if (!parse_int64(std::string_view(per).substr(start, comma - start), v))
        throw Error("pageio", "manifest tuples_per_page is malformed");
      m.tuples_per_page.push_back(static_cast<int>(v));
      start = comma + 1;
    }
    if (static_cast<int>(m.tuples_per_page.size()) != m.page_count)
      throw Error("pageio", "manifest page count does not match tuples_per_page");
    return m;
  }
};

inline std::string page_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "page_%06d.bin", index);
  return buf;
}

inline Page load_page(const std::filesystem::path& dir, int index) {
  std::string bytes = read_file(dir / page_file_name(index), "pageio");
  return Page(bytes.begin(), bytes.end());
}

/// Packs rows into pages and writes page files plus manifest.txt.
inline Manifest write_dataset(const std::vector<TupleRecord>& rows, const PageLayout& layout,
                              const std::filesystem::path& out_dir) {
  layout.validate();
  if (rows.empty()) throw Error("pageio", "empty dataset");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("pageio", "cannot create '" + out_dir.string() + "'");
  Manifest m;
  m.layout = layout;
  const auto cap = static_cast<std::size_t>(layout.capacity());
  for (std::size_t start = 0; start < rows.size(); start += cap) {
    std::vector<TupleRecord> chunk(rows.begin() + static_cast<long>(start),
                                   rows.begin() + static_cast<long>(std::min(rows.size(), start + cap)));
    Page p = build_page(layout, chunk);
    write_file(out_dir / page_file_name(m.page_count),
               std::string_view(reinterpret_cast<const char*>(p.data()), p.size()), "pageio");
    m.tuples_per_page.push_back(static_cast<int>(chunk.size()));
    ++m.page_count;
  }
  m.tuple_count = static_cast<std::int64_t>(rows.size());
  write_file(out_dir / "manifest.txt", m.to_kv().to_string(), "pageio");
  return m;
}

/// Parses CSV rows of feature_count + label_count finite numbers.
inline std::vector<TupleRecord> parse_csv(std::string_view text, const PageLayout& layout, bool skip_header) {
  std::vector<TupleRecord> rows;
  std::size_t line_no = 0;
  bool first = true;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (trim(line).empty()) continue;
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    TupleRecord t;
    int field = 0;
    std::size_t start = 0;
    for (;;) {
      std::size_t comma = line.find(',', start);
      std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      double v = 0;
      if (!parse_double(cell, v))
        throw Error("pageio", "line " + std::to_string(line_no) + ": non-numeric field '" +
                                  std::string(trim(cell)) + "'");
      if (!std::isfinite(v))
        throw Error("pageio", "line " + std::to_string(line_no) + ": non-finite value");
      (field < layout.feature_count ? t.features : t.labels).push_back(v);
      ++field;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (field != layout.value_count())
      throw Error("pageio", "line " + std::to_string(line_no) + ": ragged row with " + std::to_string(field) +
                                " fields, expected " + std::to_string(layout.value_count()));
    rows.push_back(std::move(t));
  }
  return rows;
}

inline Manifest ingest_csv(const std::filesystem::path& csv, const PageLayout& layout,
                           const std::filesystem::path& out_dir, bool skip_header = false) {
  layout.validate();
  return write_dataset(parse_csv(read_file(csv, "pageio"), layout, skip_header), layout, out_dir);
}

/// Every tuple of a dataset directory via the reference reader.
inline std::vector<TupleRecord> read_dataset(const std::filesystem::path& dir, const Manifest& m) {
  std::vector<TupleRecord> out;
  for (int i = 0; i < m.page_count; ++i) {
    auto page = read_reference(load_page(dir, i), m.layout);
    out.insert(out.end(), page.begin(), page.end());
  }
  return out;
}

}  // namespace dana::pageio
