#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgam/tensor.hpp"

namespace cgam {

// On-disk layout (all integers little-endian), see docs/weights_format.md:
//
//   magic      8 bytes   "CGAMWTS\n"
//   version    u32       kWeightsFormatVersion
//   hdr_len    u32       byte length of the JSON header
//   header     hdr_len   UTF-8 JSON: {"metadata": {...}, "entries": [
//                          {"name", "dtype": "f64le", "shape": [...],
//                           "offset": <byte offset into payload>}]}
//   payload    raw little-endian IEEE-754 doubles, entries back to back
//   checksum   u64       FNV-1a over the payload bytes
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct WeightContainer {
  std::string metadata_json = "{}";
  std::vector<NamedTensor> entries;
};

void write_weights(const std::filesystem::path& path, const WeightContainer& container);
WeightContainer read_weights(const std::filesystem::path& path);

}  // namespace cgam
