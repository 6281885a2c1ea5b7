#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>

#include "ocsb/dataset.hpp"
#include "ocsb/evalproto.hpp"
#include "ocsb/image.hpp"
#include "ocsb/netdefs.hpp"
#include "ocsb/tensor.hpp"
#include "ocsb/weightstore.hpp"

namespace ocsb {

enum class RoiSelection { kFace, kOcular, kBoth };
RoiSelection parse_roi_selection(std::string_view text);
bool selects(RoiSelection sel, int roi);

/// (1, 3, H, W) tensor: channels reordered, scaled, then mean/std normalized.
Tensor image_to_tensor(const Image& img, const InputNormalization& norm);

/// Aligned crops indexed by kRoiFace / kRoiLeft / kRoiRight. Unselected
/// entries stay empty. The face crop is 224x224, the eye crops 113x113.
std::array<Image, 3> prepare_rois(const Image& img, const Landmarks& lm, RoiSelection sel);

struct ExtractOptions {
  RoiSelection rois = RoiSelection::kFace;
  /// Extract all six augmented variants instead of only the untouched crop.
  bool augment = false;
  int jobs = 1;
};

/// Decodes, aligns, crops and runs every manifest image through the network.
/// Crops are resized to the network input. Sample ids are manifest paths.
FeatureBank build_feature_bank(const DatasetManifest& manifest, const Network& net,
                               const InputNormalization& norm, const ExtractOptions& options);

/// Feature table columns:
///   sample_id,album_id,fold,gender,age_group,roi,variant,f0,...,f{D-1}
/// One row per sample, ROI and stored variant. Labels are class names (empty
/// when unlabeled); variant indexes kAugmentVariants; floats use the shortest
/// form that reads back exactly.
std::string feature_csv(const FeatureBank& bank);
FeatureBank parse_feature_csv(std::string_view text);
FeatureBank read_feature_csv(const std::filesystem::path& path);

/// build_feature_bank followed by writing the table to `out`.
FeatureBank export_features(const DatasetManifest& manifest, const Network& net,
                            const InputNormalization& norm, const ExtractOptions& options,
                            const std::filesystem::path& out);

struct PreprocessSummary {
  size_t images = 0;
  size_t crops = 0;
  std::vector<std::string> warnings;
};

/// Writes PNG crops under out_dir/crops and an enriched manifest
/// out_dir/crops.csv with columns
///   sample_id,album_id,fold,gender,age_group,roi,variant,crop_path
/// Reruns over unchanged inputs leave every file byte-identical.
PreprocessSummary preprocess(const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                             RoiSelection rois, bool augment, int jobs);

}  // namespace ocsb
