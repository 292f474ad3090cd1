#pragma once

// Dataset records and their tab-separated file format.
//
//   #smorm-lab/v1 pairs d_z=<int> K=<int>
//   <id>\t<tag>\t<label>\t<chosen csv>\t<rejected csv>
//
//   #smorm-lab/v1 attrs d_z=<int> K=<int>
//   <id>\t<tag>\t<input csv>\t<scores csv>
//
// Floats are written with 17 significant digits, so a round trip is bit-exact.

#include <cstdint>
#include <string>
#include <vector>

#include "smorm/tensor.hpp"

namespace smorm {

struct PairwiseRecord {
  Vec input_chosen;
  Vec input_rejected;
  int label = 0;  // which of the two draws (A = 0, B = 1) was preferred
  std::uint64_t id = 0;
  std::string tag;
  friend bool operator==(const PairwiseRecord&, const PairwiseRecord&) = default;
};

struct AttributeRecord {
  Vec input;
  Vec scores;
  std::uint64_t id = 0;
  std::string tag;
  friend bool operator==(const AttributeRecord&, const AttributeRecord&) = default;
};

struct DatasetHeader {
  std::string kind;  // "pairs" or "attrs"
  std::size_t d_z = 0;
  std::size_t K = 0;
};

void write_records(const std::string& path, const std::vector<PairwiseRecord>& records,
                   std::size_t d_z, std::size_t K);
void write_records(const std::string& path, const std::vector<AttributeRecord>& records,
                   std::size_t d_z, std::size_t K);

// A zero-byte file reads as an empty list. Malformed content raises
// ParseError with the 1-based line number.
std::vector<PairwiseRecord> read_pairs(const std::string& path, DatasetHeader* header = nullptr);
std::vector<AttributeRecord> read_attrs(const std::string& path, DatasetHeader* header = nullptr);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace smorm
