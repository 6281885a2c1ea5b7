#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ocsb/roi.hpp"

namespace ocsb {

inline constexpr std::array<std::string_view, 2> kGenderClasses = {"female", "male"};
/// Age groups in chronological order; the index is the ordinal label.
inline constexpr std::array<std::string_view, 8> kAgeGroups = {
    "0-2", "4-6", "8-13", "15-20", "25-32", "38-43", "48-53", "60-99"};
inline constexpr int kFoldCount = 5;

/// Dataset manifest columns, in order. A header row with exactly these names is required.
inline constexpr std::array<std::string_view, 16> kManifestColumns = {
    "path",         "subject_id",   "album_id",    "fold",         "gender",
    "age_group",    "left_eye_x",   "left_eye_y",  "right_eye_x",  "right_eye_y",
    "nose_x",       "nose_y",       "mouth_left_x", "mouth_left_y", "mouth_right_x",
    "mouth_right_y"};

struct SampleRecord {
  std::string path;  // as written in the manifest; relative paths resolve against the manifest dir
  std::string subject_id;
  std::string album_id;
  int fold = 0;
  std::optional<int> gender;     // index into kGenderClasses; absent when unlabeled
  std::optional<int> age_group;  // index into kAgeGroups; absent when unlabeled
  Landmarks landmarks;
};

struct DatasetManifest {
  std::vector<SampleRecord> samples;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const SampleRecord& s) const;
};

/// "f"/"female"/"m"/"male" (any case); "" or "u" is unlabeled.
std::optional<int> parse_gender(std::string_view text);
/// "25-32", "(25, 32)" or an index "0".."7"; "" is unlabeled.
std::optional<int> parse_age_group(std::string_view text);

DatasetManifest parse_manifest(std::string_view csv_text, std::filesystem::path base_dir = {});
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_csv(const DatasetManifest& m);

/// Albums that appear in more than one fold.
std::vector<std::string> album_overlaps(const DatasetManifest& m);

namespace csv {

/// RFC 4180 style: comma separated, double-quoted fields may hold commas,
/// quotes ("") and newlines.
std::vector<std::vector<std::string>> parse(std::string_view text);
std::string escape(std::string_view field);
/// Shortest decimal form that reads back to the same float.
std::string format_float(float v);
std::string format_double(double v);

}  // namespace csv

}  // namespace ocsb
