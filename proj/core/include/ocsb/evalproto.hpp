#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocsb/svm.hpp"

namespace ocsb {

enum class Task { kGender, kAge };
/// Which descriptor feeds the SVM: the face crop, each eye as an independent
/// sample, or the mean of both eye descriptors.
enum class RoiProtocol { kFace, kOcular, kOcularLr };

std::string_view to_string(Task t);
std::string_view to_string(RoiProtocol r);
Task parse_task(std::string_view text);
RoiProtocol parse_roi_protocol(std::string_view text);
int class_count(Task t);
std::vector<std::string> class_names(Task t);

double exact_accuracy(std::span<const int> preds, std::span<const int> truths);
/// Counted correct when ordinal indices differ by at most one.
double one_off_accuracy(std::span<const int> preds, std::span<const int> truths);

struct FoldStats {
  double mean = 0.0;
  std::optional<double> stddev;          // sample standard deviation (n - 1)
  std::optional<double> standard_error;  // stddev / sqrt(n)
};
FoldStats fold_stats(std::span<const double> values);

struct FoldResult {
  int fold = 0;
  int64_t train_rows = 0;
  int64_t test_rows = 0;
  double exact = 0.0;
  std::optional<double> one_off;
};

struct ClassStats {
  std::string name;
  int64_t count = 0;
  int64_t correct = 0;
  double accuracy = 0.0;  // 0 when count is 0
};

struct MetricsReport {
  Task task = Task::kGender;
  RoiProtocol roi = RoiProtocol::kFace;
  std::string arch_id;
  std::vector<FoldResult> folds;
  FoldStats exact;
  std::optional<FoldStats> one_off;  // age only
  std::vector<std::string> class_names;
  std::vector<ClassStats> per_class;                // pooled over folds
  std::vector<std::vector<int64_t>> confusion;      // [truth][prediction], pooled
  std::vector<std::string> warnings;

  std::string to_json() const;
  /// Mean +- dispersion per cell, then the per-class table and confusion matrix.
  std::string to_table() const;
};

inline constexpr int kRoiFace = 0;
inline constexpr int kRoiLeft = 1;
inline constexpr int kRoiRight = 2;
inline constexpr std::array<std::string_view, 3> kRoiNames = {"face", "left", "right"};

/// Descriptors of one image. rois[r] holds either the six augmented variants
/// (kAugmentVariants order) or only the untouched image; empty when that ROI
/// was not extracted.
struct FeatureSample {
  std::string id;
  std::string album_id;
  int fold = 0;
  std::optional<int> gender;
  std::optional<int> age_group;
  std::array<std::vector<std::vector<float>>, 3> rois;

  /// Untouched-image descriptor of an ROI.
  const std::vector<float>& identity(int roi) const;
  std::optional<int> label(Task t) const { return t == Task::kGender ? gender : age_group; }
};

struct FeatureBank {
  std::string arch_id;
  int64_t feature_dim = 0;
  std::vector<FeatureSample> samples;
  std::vector<std::string> warnings;
};

struct CvConfig {
  Task task = Task::kGender;
  RoiProtocol roi = RoiProtocol::kFace;
  SvmOptions svm;
  /// Train on every augmented variant when present.
  bool augment = true;
  int jobs = 1;
};

/// Source sample ids that entered training and testing, per fold.
struct CvTrace {
  std::vector<std::vector<std::string>> train_ids;
  std::vector<std::vector<std::string>> test_ids;
};

/// Five-fold protocol: fold f is tested with a head trained on the others.
/// Test descriptors are always the untouched images.
MetricsReport cross_validate(const FeatureBank& bank, const CvConfig& config,
                             CvTrace* trace = nullptr);

/// SVM rows for the listed samples; unlabeled samples are skipped.
struct LabeledRows {
  FeatureMatrix x;
  std::vector<int> y;
  std::vector<std::string> ids;
};
LabeledRows training_rows(const FeatureBank& bank, std::span<const size_t> samples, Task task,
                          RoiProtocol roi, bool augment);
/// Test rows use only the untouched descriptors.
LabeledRows test_rows(const FeatureBank& bank, std::span<const size_t> samples, Task task,
                      RoiProtocol roi);

}  // namespace ocsb
