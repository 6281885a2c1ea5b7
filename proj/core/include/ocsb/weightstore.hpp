#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocsb/error.hpp"

namespace ocsb {

struct NetworkGraph;

// OCWB container, version 1. All integers and floats little-endian;
// strings are a u32 byte length followed by UTF-8 bytes.
//
//   "OCWB"  u32 version  str arch_id  str provenance  f32 bn_epsilon
//   str channel_order  f32 pixel_scale  u8 has_mean_std  f32[3] mean  f32[3] std
//   str init_scheme
//   u32 record_count  u64 record_bytes
//   record_count x { str name  u32 rank  u32[rank] dims  f32[prod(dims)] }
//   u32 section_count
//   section_count x { char[4] tag  u64 length  u8[length] }
//
// record_bytes is the encoded size of all records and must match exactly.
inline constexpr std::array<char, 4> kOcwbMagic = {'O', 'C', 'W', 'B'};
inline constexpr uint32_t kOcwbVersion = 1;

enum class FormatErrc {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kDuplicateName,
  kBadValue,
  kTrailingBytes,
};

class FormatError : public Error {
 public:
  FormatError(FormatErrc code, const std::string& what) : Error(what), code_(code) {}
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

/// Pretraining chain of a weight set.
inline constexpr std::string_view kProvenanceTags[] = {
    "scratch", "random-init", "imagenet", "imagenet+ms1m", "imagenet+ms1m+vggface2",
    "ms1m",    "ms1m+vggface2"};

bool is_valid_provenance(std::string_view tag);

/// How 8-bit RGB pixels become network input: value = (p * pixel_scale - mean) / std,
/// channels fed in channel_order ("RGB" or "BGR").
struct InputNormalization {
  std::string channel_order = "RGB";
  float pixel_scale = 1.0f / 255.0f;
  bool has_mean_std = false;
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
  std::array<float, 3> stddev{1.0f, 1.0f, 1.0f};
};

struct WeightHeader {
  uint32_t version = kOcwbVersion;
  std::string arch_id;
  std::string provenance = "random-init";
  float bn_epsilon = 1e-5f;
  InputNormalization normalization;
  std::string init_scheme;
};

struct TensorRecord {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<float> data;

  int64_t count() const;
};

/// Opaque tagged section (the SVM head uses "SVMH").
struct Section {
  std::array<char, 4> tag{};
  std::vector<uint8_t> payload;
};

class WeightStore {
 public:
  WeightHeader header;

  /// Appends a record; duplicate names throw FormatError(kDuplicateName).
  void add(TensorRecord record);

  const TensorRecord* find(std::string_view name) const;
  /// Throws ValidationError naming the missing tensor.
  const TensorRecord& at(std::string_view name) const;

  const std::vector<TensorRecord>& records() const { return records_; }
  int64_t total_values() const;

  std::vector<Section> sections;
  const Section* find_section(std::string_view tag) const;

 private:
  std::vector<TensorRecord> records_;
  std::map<std::string, size_t, std::less<>> index_;
};

std::vector<uint8_t> encode_weights(const WeightStore& store);
WeightStore decode_weights(std::span<const uint8_t> bytes);

void write_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore read_weights(const std::filesystem::path& path);

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
  std::string summary() const;
};

/// Every parameter the graph declares must be present with matching dims.
/// Extra records are warnings.
ValidationReport validate(const WeightStore& store, const NetworkGraph& g);

/// validate() and throw ValidationError with the first error on failure.
void require_valid(const WeightStore& store, const NetworkGraph& g);

/// Deterministic weights for testing without converted checkpoints.
/// Weights ~ U(-b, b) with b = sqrt(6 / fan_in); biases 0; PReLU slopes 0.25;
/// batch norm identity. Draws come from std::mt19937_64 in parameter order.
WeightStore random_init(const NetworkGraph& g, uint64_t seed);

}  // namespace ocsb
