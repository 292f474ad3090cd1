#include "smorm/records.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smorm/error.hpp"

namespace smorm {

namespace {

constexpr const char* kMagic = "#smorm-lab/v1";

void append_double(std::string& out, double x) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
  out.append(buf, static_cast<std::size_t>(n));
}

void append_csv(std::string& out, const Vec& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    append_double(out, v[i]);
  }
}

std::string header_line(const char* kind, std::size_t d_z, std::size_t K) {
  return std::string(kMagic) + " " + kind + " d_z=" + std::to_string(d_z) + " K=" + std::to_string(K) + "\n";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

Vec parse_csv(const std::string& field, std::size_t expected, std::size_t line, const char* what) {
  Vec out;
  if (expected == 0 && field.empty()) return out;
  for (const auto& tok : split(field, ',')) {
    double x = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, x);
    if (ec != std::errc() || ptr != last || tok.empty())
      throw ParseError(line, std::string("bad number '") + tok + "' in " + what);
    out.push_back(x);
  }
  if (out.size() != expected)
    throw ParseError(line, std::string(what) + " has " + std::to_string(out.size()) + " entries, expected " +
                               std::to_string(expected));
  return out;
}

std::uint64_t parse_u64(const std::string& tok, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
    throw ParseError(line, "bad record id '" + tok + "'");
  return v;
}

DatasetHeader parse_header(const std::string& line, const std::string& kind) {
  std::istringstream in(line);
  std::string magic, k, dz, kk;
  in >> magic >> k >> dz >> kk;
  if (magic != kMagic) throw ParseError(1, "missing '#smorm-lab/v1' header");
  if (k != kind) throw ParseError(1, "expected " + kind + " file, found '" + k + "'");
  DatasetHeader h{k, 0, 0};
  auto field = [&](const std::string& tok, const std::string& key) -> std::size_t {
    if (tok.rfind(key + "=", 0) != 0) throw ParseError(1, "expected " + key + "=<int>");
    const std::string v = tok.substr(key.size() + 1);
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
      throw ParseError(1, "bad value for " + key);
    return out;
  };
  h.d_z = field(dz, "d_z");
  h.K = field(kk, "K");
  return h;
}

// Returns false for a zero-byte file.
bool read_lines(const std::string& path, std::vector<std::string>& lines) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return !lines.empty();
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path + "': " + ec.message());
}

void write_records(const std::string& path, const std::vector<PairwiseRecord>& records, std::size_t d_z,
                   std::size_t K) {
  std::string out = header_line("pairs", d_z, K);
  for (const auto& r : records) {
    if (r.input_chosen.size() != d_z || r.input_rejected.size() != d_z)
      throw DimensionMismatch("write_records: pair input dim differs from d_z");
    out += std::to_string(r.id);
    out += '\t';
    out += r.tag;
    out += '\t';
    out += std::to_string(r.label);
    out += '\t';
    append_csv(out, r.input_chosen);
    out += '\t';
    append_csv(out, r.input_rejected);
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_records(const std::string& path, const std::vector<AttributeRecord>& records, std::size_t d_z,
                   std::size_t K) {
  std::string out = header_line("attrs", d_z, K);
  for (const auto& r : records) {
    if (r.input.size() != d_z || r.scores.size() != K)
      throw DimensionMismatch("write_records: attribute record dims differ from header");
    out += std::to_string(r.id);
    out += '\t';
    out += r.tag;
    out += '\t';
    append_csv(out, r.input);
    out += '\t';
    append_csv(out, r.scores);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<PairwiseRecord> read_pairs(const std::string& path, DatasetHeader* header) {
  std::vector<std::string> lines;
  std::vector<PairwiseRecord> out;
  if (!read_lines(path, lines)) return out;
  const DatasetHeader h = parse_header(lines[0], "pairs");
  if (header) *header = h;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    if (f.size() != 5) throw ParseError(ln, "expected 5 tab-separated fields, found " + std::to_string(f.size()));
    PairwiseRecord r;
    r.id = parse_u64(f[0], ln);
    r.tag = f[1];
    if (f[2] != "0" && f[2] != "1") throw ParseError(ln, "label must be 0 or 1");
    r.label = f[2] == "1" ? 1 : 0;
    r.input_chosen = parse_csv(f[3], h.d_z, ln, "chosen input");
    r.input_rejected = parse_csv(f[4], h.d_z, ln, "rejected input");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<AttributeRecord> read_attrs(const std::string& path, DatasetHeader* header) {
  std::vector<std::string> lines;
  std::vector<AttributeRecord> out;
  if (!read_lines(path, lines)) return out;
  const DatasetHeader h = parse_header(lines[0], "attrs");
  if (header) *header = h;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t ln = i + 1;
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    if (f.size() != 4) throw ParseError(ln, "expected 4 tab-separated fields, found " + std::to_string(f.size()));
    AttributeRecord r;
    r.id = parse_u64(f[0], ln);
    r.tag = f[1];
    r.input = parse_csv(f[2], h.d_z, ln, "input");
    r.scores = parse_csv(f[3], h.K, ln, "scores");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace smorm
