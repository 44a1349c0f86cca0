#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "weakstil/baseline.hpp"
#include "weakstil/core.hpp"
#include "weakstil/model.hpp"

namespace weakstil {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kBagVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kBagHeaderBytes = 16;
inline constexpr std::size_t kCheckpointHeaderBytes = 17;
inline constexpr std::string_view kBagExtension = ".wksb";

namespace detail {

class ByteWriter {
public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
  std::vector<std::uint8_t> buf_;
};

// Little-endian reads at explicit offsets; callers bounds-check first.
inline std::uint32_t load_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

inline std::uint64_t load_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

inline float load_f32(std::span<const std::uint8_t> b, std::size_t at) { return std::bit_cast<float>(load_u32(b, at)); }
inline double load_f64(std::span<const std::uint8_t> b, std::size_t at) { return std::bit_cast<double>(load_u64(b, at)); }

inline bool has_magic(std::span<const std::uint8_t> b, std::string_view magic) {
  if (b.size() < magic.size()) return false;
  for (std::size_t i = 0; i < magic.size(); ++i)
    if (b[i] != static_cast<std::uint8_t>(magic[i])) return false;
  return true;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// Reads a header-checked CSV with a fixed column count; blank lines are skipped.
inline std::vector<CsvRow> read_csv(std::istream& is, const std::vector<std::string>& header,
                                    const std::string& what) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError(what + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split_csv_line(line) != header) throw ValidationError(what + ": unexpected header '" + line + "'");
  std::vector<CsvRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError(what + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    rows.push_back({line_no, std::move(fields)});
  }
  return rows;
}

inline bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Files

inline std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

/// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename into '" + path.string() + "': " + ec.message());
}

inline void write_file_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Bag files: "WKSB", u32 version, u32 h_dim, u32 n_tiles, then per tile
// (u32 col, u32 row, h_dim x f32). Little-endian throughout.

inline std::vector<std::uint8_t> encode_bag(const FeatureBag& bag) {
  if (bag.h_dim == 0 || bag.h_dim > std::numeric_limits<std::uint32_t>::max())
    throw ValidationError("bag '" + bag.slide_id + "': h_dim not encodable");
  if (bag.tiles.empty() || bag.tiles.size() > std::numeric_limits<std::uint32_t>::max())
    throw ValidationError("bag '" + bag.slide_id + "': tile count not encodable");
  detail::ByteWriter w;
  w.bytes("WKSB");
  w.u32(kBagVersion);
  w.u32(static_cast<std::uint32_t>(bag.h_dim));
  w.u32(static_cast<std::uint32_t>(bag.tiles.size()));
  for (std::size_t n = 0; n < bag.tiles.size(); ++n) {
    const TileFeature& t = bag.tiles[n];
    if (t.features.size() != bag.h_dim)
      throw ValidationError("bag '" + bag.slide_id + "': dimension mismatch at tile " + std::to_string(n));
    w.u32(t.col);
    w.u32(t.row);
    for (double x : t.features) {
      const auto f = static_cast<float>(x);
      if (std::isnan(x)) throw ValidationError("bag '" + bag.slide_id + "': NaN feature at tile " + std::to_string(n));
      if (!std::isfinite(f))
        throw ValidationError("bag '" + bag.slide_id + "': feature not representable as f32 at tile " +
                              std::to_string(n));
      w.f32(f);
    }
  }
  return w.take();
}

/// Parses a bag file image. Identity fields and label are left empty; the
/// dataset loader fills them from the manifest.
inline FeatureBag decode_bag(std::span<const std::uint8_t> b) {
  if (b.size() < 4 || !detail::has_magic(b, "WKSB")) throw ValidationError("bad magic at offset 0");
  if (b.size() < kBagHeaderBytes) throw ValidationError("truncated header at offset " + std::to_string(b.size()));
  const std::uint32_t version = detail::load_u32(b, 4);
  if (version != kBagVersion)
    throw ValidationError("unsupported version " + std::to_string(version) + " at offset 4");
  const std::uint32_t h_dim = detail::load_u32(b, 8);
  if (h_dim == 0) throw ValidationError("h_dim must be positive at offset 8");
  const std::uint32_t n_tiles = detail::load_u32(b, 12);
  if (n_tiles == 0) throw ValidationError("empty bag at offset 12");

  const std::uint64_t record = 8 + 4 * static_cast<std::uint64_t>(h_dim);
  const std::uint64_t body = b.size() - kBagHeaderBytes;
  const std::uint64_t complete = body / record;
  if (complete < n_tiles) throw ValidationError("truncated at record " + std::to_string(complete));
  const std::uint64_t expected = kBagHeaderBytes + record * n_tiles;
  if (b.size() != expected) throw ValidationError("trailing bytes at offset " + std::to_string(expected));

  FeatureBag bag;
  bag.h_dim = h_dim;
  bag.tiles.resize(n_tiles);
  std::size_t at = kBagHeaderBytes;
  for (std::uint32_t n = 0; n < n_tiles; ++n) {
    TileFeature& t = bag.tiles[n];
    t.col = detail::load_u32(b, at);
    t.row = detail::load_u32(b, at + 4);
    at += 8;
    t.features.resize(h_dim);
    for (std::uint32_t i = 0; i < h_dim; ++i, at += 4) {
      const float f = detail::load_f32(b, at);
      if (!std::isfinite(f))
        throw ValidationError("non-finite feature at record " + std::to_string(n) + " (offset " + std::to_string(at) + ")");
      t.features[i] = f;
    }
  }
  if (auto v = validate_bag(bag); !v) throw ValidationError(v.problem);
  return bag;
}

inline void write_bag(const FeatureBag& bag, const fs::path& path) { write_file_atomic(path, encode_bag(bag)); }

inline FeatureBag read_bag(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    FeatureBag bag = decode_bag(bytes);
    bag.slide_id = path.stem().string();
    return bag;
  } catch (const ValidationError& e) {
    throw ValidationError("'" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: "WKSM", u32 version, u8 kind, u32 H, u32 hidden (0 for Linear),
// then every parameter as f64 in ModelHead order.

inline std::vector<std::uint8_t> encode_checkpoint(const ModelHead& head) {
  if (!head.well_formed()) throw ValidationError("malformed model head");
  detail::ByteWriter w;
  w.bytes("WKSM");
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(head.kind));
  w.u32(static_cast<std::uint32_t>(head.h_dim));
  w.u32(static_cast<std::uint32_t>(head.hidden));
  for (double p : head.params) w.f64(p);
  return w.take();
}

inline ModelHead decode_checkpoint(std::span<const std::uint8_t> b) {
  if (b.size() < 4 || !detail::has_magic(b, "WKSM")) throw ValidationError("bad magic at offset 0");
  if (b.size() < kCheckpointHeaderBytes)
    throw ValidationError("truncated header at offset " + std::to_string(b.size()));
  const std::uint32_t version = detail::load_u32(b, 4);
  if (version != kCheckpointVersion)
    throw ValidationError("unsupported version " + std::to_string(version) + " at offset 4");
  const std::uint8_t kind = b[8];
  if (kind > 2) throw ValidationError("unknown head kind " + std::to_string(kind) + " at offset 8");
  const std::uint32_t h_dim = detail::load_u32(b, 9);
  const std::uint32_t hidden = detail::load_u32(b, 13);
  const auto head_kind = static_cast<HeadKind>(kind);
  if (h_dim == 0) throw ValidationError("h_dim must be positive at offset 9");
  if ((head_kind == HeadKind::Linear) != (hidden == 0))
    throw ValidationError("hidden width inconsistent with head kind at offset 13");
  const std::uint64_t count = head_kind == HeadKind::Linear
                                  ? std::uint64_t{h_dim} + 1
                                  : std::uint64_t{h_dim} * hidden + 2 * std::uint64_t{hidden} + 1;
  const std::uint64_t body = b.size() - kCheckpointHeaderBytes;
  if (body / 8 < count) throw ValidationError("truncated at parameter " + std::to_string(body / 8));
  if (body != count * 8)
    throw ValidationError("trailing bytes at offset " + std::to_string(kCheckpointHeaderBytes + count * 8));

  ModelHead head = ModelHead::zeros(head_kind, h_dim, hidden);
  for (std::size_t i = 0; i < count; ++i) {
    head.params[i] = detail::load_f64(b, kCheckpointHeaderBytes + 8 * i);
    if (!std::isfinite(head.params[i])) throw ValidationError("non-finite parameter " + std::to_string(i));
  }
  return head;
}

inline void write_checkpoint(const ModelHead& head, const fs::path& path) {
  write_file_atomic(path, encode_checkpoint(head));
}

inline ModelHead read_checkpoint(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError("'" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Label manifest: patient_id,slide_id,stil_fraction,stratum

struct ManifestRow {
  std::string patient_id;
  std::string slide_id;
  double label = 0.0;
  std::string stratum;
};

inline const std::vector<std::string>& manifest_header() {
  static const std::vector<std::string> h{"patient_id", "slide_id", "stil_fraction", "stratum"};
  return h;
}

/// Parses every row, collecting all problems before failing.
inline std::vector<ManifestRow> read_manifest(std::istream& is) {
  const auto rows = detail::read_csv(is, manifest_header(), "manifest");
  std::vector<ManifestRow> out;
  std::vector<std::string> problems;
  std::map<std::string, std::size_t> seen;
  for (const auto& row : rows) {
    const std::string where = "manifest line " + std::to_string(row.line) + ": ";
    ManifestRow m{row.fields[0], row.fields[1], 0.0, row.fields[3]};
    if (m.patient_id.empty() || m.slide_id.empty()) problems.push_back(where + "empty identifier");
    if (!detail::parse_double(row.fields[2], m.label))
      problems.push_back(where + "cannot parse stil_fraction '" + row.fields[2] + "'");
    else if (m.label < 0.0 || m.label > 1.0)
      problems.push_back(where + "label out of range (expected fraction, got " + row.fields[2] + ")");
    if (auto [it, inserted] = seen.emplace(m.slide_id, row.line); !inserted)
      problems.push_back(where + "duplicate slide_id '" + m.slide_id + "' (first on line " +
                         std::to_string(it->second) + ")");
    out.push_back(std::move(m));
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "\n") + p;
    throw ValidationError(msg);
  }
  if (out.empty()) throw ValidationError("no samples");
  return out;
}

inline std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return read_manifest(in);
}

inline std::string format_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_manifest(std::ostream& os, std::span<const FeatureBag> bags) {
  os << "patient_id,slide_id,stil_fraction,stratum\n";
  for (const auto& b : bags)
    os << b.patient_id << ',' << b.slide_id << ',' << format_label(b.label) << ',' << b.stratum << '\n';
}

inline fs::path bag_path(const fs::path& bag_dir, const std::string& slide_id) {
  return bag_dir / (slide_id + std::string(kBagExtension));
}

/// Joins manifest rows with `<bag_dir>/<slide_id>.wksb`. Fails only after
/// listing every missing or invalid bag; bags come back in manifest order
/// with a uniform H.
inline std::vector<FeatureBag> load_dataset(const fs::path& manifest_path, const fs::path& bag_dir) {
  const auto rows = read_manifest(manifest_path);
  std::vector<FeatureBag> bags;
  std::vector<std::string> problems;
  for (const auto& row : rows) {
    const fs::path p = bag_path(bag_dir, row.slide_id);
    if (!fs::exists(p)) {
      problems.push_back("missing bag file '" + p.string() + "'");
      continue;
    }
    try {
      FeatureBag bag = read_bag(p);
      bag.patient_id = row.patient_id;
      bag.slide_id = row.slide_id;
      bag.label = row.label;
      bag.stratum = row.stratum;
      bags.push_back(std::move(bag));
    } catch (const ValidationError& e) {
      problems.push_back(e.what());
    }
  }
  if (!bags.empty()) {
    const std::size_t h = bags.front().h_dim;
    for (const auto& b : bags)
      if (b.h_dim != h)
        problems.push_back("bag '" + b.slide_id + "' has H=" + std::to_string(b.h_dim) + ", expected " +
                           std::to_string(h));
  }
  if (!problems.empty()) {
    std::string msg = "dataset load failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return bags;
}

/// Writes `<dir>/manifest.csv` and `<dir>/bags/<slide_id>.wksb`.
inline void write_dataset(std::span<const FeatureBag> bags, const fs::path& dir) {
  for (const auto& b : bags) write_bag(b, bag_path(dir / "bags", b.slide_id));
  std::ostringstream manifest;
  write_manifest(manifest, bags);
  write_file_atomic(dir / "manifest.csv", manifest.str());
}

// ---------------------------------------------------------------------------
// Detection summaries: slide_id,num_tils,num_tb_tiles

inline std::vector<DetectionSummary> read_detections(std::istream& is, const TileGeometry& geometry = {}) {
  const auto rows = detail::read_csv(is, {"slide_id", "num_tils", "num_tb_tiles"}, "detections");
  std::vector<DetectionSummary> out;
  for (const auto& row : rows) {
    DetectionSummary d;
    d.slide_id = row.fields[0];
    d.geometry = geometry;
    const std::string where = "detections line " + std::to_string(row.line) + ": ";
    if (!detail::parse_u64(row.fields[1], d.num_tils))
      throw ValidationError(where + "bad num_tils '" + row.fields[1] + "'");
    if (!detail::parse_u64(row.fields[2], d.num_tb_tiles) || d.num_tb_tiles < 1)
      throw ValidationError(where + "num_tb_tiles must be an integer >= 1, got '" + row.fields[2] + "'");
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<DetectionSummary> read_detections(const fs::path& path, const TileGeometry& geometry = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return read_detections(in, geometry);
}

}  // namespace weakstil
