#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ocsb {

/// Dense row-major float matrix, one sample per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(int64_t rows, int64_t cols);

  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }

  std::span<float> row(int64_t i) {
    return {data_.data() + i * cols_, static_cast<size_t>(cols_)};
  }
  std::span<const float> row(int64_t i) const {
    return {data_.data() + i * cols_, static_cast<size_t>(cols_)};
  }

  /// Appends a row; the first row fixes the column count.
  void push_back(std::span<const float> values);

 private:
  int64_t rows_ = 0;
  int64_t cols_ = 0;
  std::vector<float> data_;
};

struct SvmOptions {
  double C = 1.0;
  /// Stop when the spread of projected gradients falls below this.
  double tolerance = 1e-4;
  int max_epochs = 1000;
  uint64_t seed = 0;
  /// Scale each feature vector to unit L2 norm before training and prediction.
  bool l2_normalize = false;
};

/// Linear classifier sign(w.x + b). Positive means class_pos.
struct BinarySvm {
  std::vector<double> weights;
  double bias = 0.0;
  double C = 1.0;
  int class_pos = 0;
  int class_neg = 1;
  int epochs = 0;
  bool converged = false;

  double decision(std::span<const float> x) const;
};

/// One-vs-one ensemble over K classes: machines for pairs (i, j), i < j,
/// ordered (0,1), (0,2), ..., (K-2,K-1).
struct SvmModel {
  int num_classes = 0;
  std::vector<std::string> class_names;
  int64_t feature_dim = 0;
  std::vector<BinarySvm> machines;
  SvmOptions options;
};

/// L2-regularized hinge-loss SVM trained by dual coordinate descent with the
/// bias as an extra constant feature. Labels are +1 / -1.
BinarySvm train_binary(const FeatureMatrix& x, std::span<const int> labels,
                       const SvmOptions& options);

/// Labels in [0, num_classes). Machines train independently on `jobs` threads.
SvmModel train_ovo(const FeatureMatrix& x, std::span<const int> labels, int num_classes,
                   const SvmOptions& options, int jobs = 1,
                   std::vector<std::string> class_names = {});

struct SvmPrediction {
  int label = -1;
  std::vector<int> votes;               // per class
  std::vector<double> decision_values;  // per machine, model order
};

/// Majority vote. Ties go to the tied class with the highest sum of decision
/// values (oriented toward that class) over all machines it takes part in,
/// then to the lowest class index.
SvmPrediction predict(const SvmModel& model, std::span<const float> feature);

/// Elementwise mean of left and right eye descriptors.
std::vector<float> fuse_lr(std::span<const float> left, std::span<const float> right);

void l2_normalize(std::span<float> v);

/// Payload of the "SVMH" OCWB section.
std::vector<uint8_t> encode_svm(const SvmModel& model);
SvmModel decode_svm(std::span<const uint8_t> bytes);

/// Writes an OCWB container holding only the SVM head section.
/// `arch_id` names the network whose features the head consumes.
void save_svm_model(const SvmModel& model, const std::string& arch_id,
                    const std::filesystem::path& path);
SvmModel load_svm_model(const std::filesystem::path& path);

}  // namespace ocsb
