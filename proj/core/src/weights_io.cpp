#include "cgam/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace cgam {
namespace {

constexpr char kMagic[8] = {'C', 'G', 'A', 'M', 'W', 'T', 'S', '\n'};
constexpr const char* kDtype = "f64le";

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
  return value;
}

std::uint64_t fnv1a(const unsigned char* data, std::size_t size) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

void put_double(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

}  // namespace

void write_weights(const std::filesystem::path& path, const WeightContainer& container) {
  nlohmann::json header;
  header["metadata"] = nlohmann::json::parse(container.metadata_json);
  header["entries"] = nlohmann::json::array();
  std::string payload;
  for (const auto& e : container.entries) {
    header["entries"].push_back({{"name", e.name},
                                 {"dtype", kDtype},
                                 {"shape", e.tensor.shape()},
                                 {"offset", payload.size()}});
    for (double v : e.tensor.data()) put_double(payload, v);
  }
  const std::string header_text = header.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(bytes, kWeightsFormatVersion);
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(header_text.size()));
  bytes += header_text;
  bytes += payload;
  put_le<std::uint64_t>(bytes, fnv1a(reinterpret_cast<const unsigned char*>(payload.data()),
                                     payload.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

WeightContainer read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = path.string() + ": ";

  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CorruptFileError(where + "missing weights magic or truncated header");
  }
  const auto version = get_le<std::uint32_t>(p + 8);
  if (version != kWeightsFormatVersion) {
    throw FormatVersionError(where + "format version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kWeightsFormatVersion) + ")");
  }
  const auto header_len = get_le<std::uint32_t>(p + 12);
  if (bytes.size() < 16ull + header_len + 8) {
    throw CorruptFileError(where + "file truncated inside header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(where + "header is not valid JSON: " + e.what());
  }

  const std::size_t payload_begin = 16 + header_len;
  const std::size_t payload_size = bytes.size() - payload_begin - 8;
  const auto stored_sum = get_le<std::uint64_t>(p + bytes.size() - 8);

  WeightContainer container;
  container.metadata_json = header.value("metadata", nlohmann::json::object()).dump();
  std::size_t expected_end = 0;
  try {
    for (const auto& e : header.at("entries")) {
      if (e.at("dtype").get<std::string>() != kDtype) {
        throw CorruptFileError(where + "unsupported dtype " + e.at("dtype").dump());
      }
      Shape shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t count = numel(shape);
      if (offset + count * 8 > payload_size) {
        throw CorruptFileError(where + "payload truncated at entry " +
                               e.at("name").get<std::string>());
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<double>(get_le<std::uint64_t>(p + payload_begin + offset + 8 * i));
      }
      container.entries.push_back({e.at("name").get<std::string>(),
                                   Tensor::from(std::move(shape), std::move(values))});
      expected_end = std::max(expected_end, offset + count * 8);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(where + "malformed header entry: " + e.what());
  }
  if (expected_end != payload_size) {
    throw CorruptFileError(where + "payload size " + std::to_string(payload_size) +
                           " does not match header (" + std::to_string(expected_end) + ")");
  }
  if (fnv1a(p + payload_begin, payload_size) != stored_sum) {
    throw CorruptFileError(where + "payload checksum mismatch");
  }
  return container;
}

}  // namespace cgam
