#include "ocsb/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ocsb/error.hpp"
#include "ocsb/parallel.hpp"
#include "ocsb/roi.hpp"

namespace ocsb {

RoiSelection parse_roi_selection(std::string_view text) {
  if (text == "face") return RoiSelection::kFace;
  if (text == "ocular") return RoiSelection::kOcular;
  if (text == "both") return RoiSelection::kBoth;
  throw ValidationError("unknown roi selection '" + std::string(text) +
                        "' (expected face, ocular or both)");
}

bool selects(RoiSelection sel, int roi) {
  if (roi == kRoiFace) return sel != RoiSelection::kOcular;
  return sel != RoiSelection::kFace;
}

Tensor image_to_tensor(const Image& img, const InputNormalization& norm) {
  int src[3];
  if (norm.channel_order == "RGB") {
    src[0] = 0, src[1] = 1, src[2] = 2;
  } else if (norm.channel_order == "BGR") {
    src[0] = 2, src[1] = 1, src[2] = 0;
  } else {
    throw ValidationError("unsupported channel order '" + norm.channel_order + "'");
  }
  Tensor t(Shape4{1, 3, img.height, img.width});
  for (int c = 0; c < 3; ++c) {
    float* p = t.plane(0, c);
    const float mean = norm.has_mean_std ? norm.mean[static_cast<size_t>(c)] : 0.0f;
    const float sd = norm.has_mean_std ? norm.stddev[static_cast<size_t>(c)] : 1.0f;
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const float v = static_cast<float>(img.at(x, y, src[c])) * norm.pixel_scale;
        *p++ = norm.has_mean_std ? (v - mean) / sd : v;
      }
    }
  }
  return t;
}

std::array<Image, 3> prepare_rois(const Image& img, const Landmarks& lm, RoiSelection sel) {
  const AlignedFace a = align(img, lm);
  std::array<Image, 3> out;
  if (selects(sel, kRoiFace)) out[kRoiFace] = crop_face(a.image, a.landmarks);
  if (selects(sel, kRoiLeft)) {
    out[kRoiLeft] = crop_ocular(a.image, a.landmarks.left_eye);
    out[kRoiRight] = crop_ocular(a.image, a.landmarks.right_eye);
  }
  return out;
}

namespace {

std::string label_name(std::optional<int> v, Task t) {
  if (!v) return "";
  return t == Task::kGender ? std::string(kGenderClasses[static_cast<size_t>(*v)])
                            : std::string(kAgeGroups[static_cast<size_t>(*v)]);
}

void check_unique_ids(const DatasetManifest& m) {
  std::set<std::string> seen;
  for (const auto& s : m.samples) {
    if (!seen.insert(s.path).second) throw ValidationError("manifest lists '" + s.path + "' twice");
  }
}

std::vector<Image> variants(const Image& crop, bool all) {
  if (all) return augment(crop);
  return {crop};
}

}  // namespace

FeatureBank build_feature_bank(const DatasetManifest& manifest, const Network& net,
                               const InputNormalization& norm, const ExtractOptions& options) {
  check_unique_ids(manifest);
  const NetworkGraph& g = net.graph();
  FeatureBank bank;
  bank.arch_id = g.arch_id;
  bank.feature_dim = g.feature_dim;
  bank.samples.resize(manifest.samples.size());
  std::vector<std::vector<std::string>> issues(manifest.samples.size());

  parallel_for(static_cast<int64_t>(manifest.samples.size()), options.jobs, [&](int64_t i) {
    const SampleRecord& rec = manifest.samples[static_cast<size_t>(i)];
    const Image img = read_image(manifest.resolve(rec));
    for (const auto& issue : landmark_issues(img, rec.landmarks)) {
      issues[static_cast<size_t>(i)].push_back(rec.path + ": " + issue);
    }
    FeatureSample& s = bank.samples[static_cast<size_t>(i)];
    s.id = rec.path;
    s.album_id = rec.album_id;
    s.fold = rec.fold;
    s.gender = rec.gender;
    s.age_group = rec.age_group;
    const auto crops = prepare_rois(img, rec.landmarks, options.rois);
    for (int r = 0; r < 3; ++r) {
      if (crops[static_cast<size_t>(r)].empty()) continue;
      for (const Image& v : variants(crops[static_cast<size_t>(r)], options.augment)) {
        const Image in = resize_bilinear(v, static_cast<int>(g.input_width),
                                         static_cast<int>(g.input_height));
        s.rois[static_cast<size_t>(r)].push_back(net.features(image_to_tensor(in, norm)));
      }
    }
  });
  for (auto& v : issues) bank.warnings.insert(bank.warnings.end(), v.begin(), v.end());
  return bank;
}

std::string feature_csv(const FeatureBank& bank) {
  std::string out = "sample_id,album_id,fold,gender,age_group,roi,variant";
  for (int64_t k = 0; k < bank.feature_dim; ++k) out += ",f" + std::to_string(k);
  out += "\n";
  for (const FeatureSample& s : bank.samples) {
    for (int r = 0; r < 3; ++r) {
      const auto& vs = s.rois[static_cast<size_t>(r)];
      for (size_t v = 0; v < vs.size(); ++v) {
        if (static_cast<int64_t>(vs[v].size()) != bank.feature_dim) {
          throw ShapeError("sample '" + s.id + "' descriptor has " + std::to_string(vs[v].size()) +
                           " values, bank declares " + std::to_string(bank.feature_dim));
        }
        const size_t variant = vs.size() == kAugmentVariants.size() ? v : kIdentityVariant;
        out += csv::escape(s.id);
        out += ',';
        out += csv::escape(s.album_id);
        out += ',' + std::to_string(s.fold);
        out += ',' + label_name(s.gender, Task::kGender);
        out += ',' + label_name(s.age_group, Task::kAge);
        out += ',';
        out += kRoiNames[static_cast<size_t>(r)];
        out += ',' + std::to_string(variant);
        for (float f : vs[v]) {
          out += ',';
          out += csv::format_float(f);
        }
        out += '\n';
      }
    }
  }
  return out;
}

namespace {

int parse_int(const std::string& text, size_t row, const char* what) {
  int v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ValidationError("feature table row " + std::to_string(row) + ": bad " + what + " '" + text + "'");
  }
  return v;
}

float parse_float(const std::string& text, size_t row) {
  float v = 0.0f;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw ValidationError("feature table row " + std::to_string(row) + ": bad value '" + text + "'");
  }
  return v;
}

}  // namespace

FeatureBank parse_feature_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw ValidationError("feature table is empty");
  const auto& head = rows.front();
  static const char* kFixed[] = {"sample_id", "album_id", "fold", "gender", "age_group", "roi", "variant"};
  constexpr size_t kFixedCount = std::size(kFixed);
  if (head.size() < kFixedCount + 1) throw ValidationError("feature table header is too short");
  for (size_t i = 0; i < kFixedCount; ++i) {
    if (head[i] != kFixed[i]) {
      throw ValidationError("feature table column " + std::to_string(i) + " is '" + head[i] +
                            "', expected '" + kFixed[i] + "'");
    }
  }
  FeatureBank bank;
  bank.feature_dim = static_cast<int64_t>(head.size() - kFixedCount);

  std::map<std::string, size_t> index;
  // Collected per sample and ROI as variant -> descriptor, assembled afterwards.
  std::vector<std::array<std::map<int, std::vector<float>>, 3>> parts;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != head.size()) {
      throw ValidationError("feature table row " + std::to_string(r) + " has " +
                            std::to_string(row.size()) + " fields, header has " +
                            std::to_string(head.size()));
    }
    auto [it, fresh] = index.try_emplace(row[0], bank.samples.size());
    if (fresh) {
      FeatureSample s;
      s.id = row[0];
      s.album_id = row[1];
      s.fold = parse_int(row[2], r, "fold");
      s.gender = parse_gender(row[3]);
      s.age_group = parse_age_group(row[4]);
      bank.samples.push_back(std::move(s));
      parts.emplace_back();
    }
    int roi = -1;
    for (int k = 0; k < 3; ++k) {
      if (row[5] == kRoiNames[static_cast<size_t>(k)]) roi = k;
    }
    if (roi < 0) throw ValidationError("feature table row " + std::to_string(r) + ": bad roi '" + row[5] + "'");
    const int variant = parse_int(row[6], r, "variant");
    if (variant < 0 || variant >= static_cast<int>(kAugmentVariants.size())) {
      throw ValidationError("feature table row " + std::to_string(r) + ": variant out of range");
    }
    std::vector<float> d;
    d.reserve(static_cast<size_t>(bank.feature_dim));
    for (size_t c = kFixedCount; c < row.size(); ++c) d.push_back(parse_float(row[c], r));
    if (!parts[it->second][static_cast<size_t>(roi)].emplace(variant, std::move(d)).second) {
      throw ValidationError("feature table row " + std::to_string(r) + " repeats sample '" + row[0] +
                            "' " + row[5] + " variant " + row[6]);
    }
  }
  for (size_t i = 0; i < bank.samples.size(); ++i) {
    for (int r = 0; r < 3; ++r) {
      auto& m = parts[i][static_cast<size_t>(r)];
      if (m.empty()) continue;
      const bool full = m.size() == kAugmentVariants.size();
      if (!full && !(m.size() == 1 && m.count(kIdentityVariant))) {
        throw ValidationError("sample '" + bank.samples[i].id + "' " +
                              std::string(kRoiNames[static_cast<size_t>(r)]) +
                              ": expected all six variants or only the untouched one");
      }
      for (auto& [v, d] : m) bank.samples[i].rois[static_cast<size_t>(r)].push_back(std::move(d));
    }
  }
  return bank;
}

FeatureBank read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature table '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feature_csv(ss.str());
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

}  // namespace

FeatureBank export_features(const DatasetManifest& manifest, const Network& net,
                            const InputNormalization& norm, const ExtractOptions& options,
                            const std::filesystem::path& out) {
  FeatureBank bank = build_feature_bank(manifest, net, norm, options);
  write_text(out, feature_csv(bank));
  return bank;
}

PreprocessSummary preprocess(const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                             RoiSelection rois, bool augment_crops, int jobs) {
  check_unique_ids(manifest);
  const auto crop_dir = out_dir / "crops";
  std::filesystem::create_directories(crop_dir);
  struct Written {
    int roi;
    int variant;
    std::string rel;
  };
  std::vector<std::vector<Written>> written(manifest.samples.size());
  std::vector<std::vector<std::string>> issues(manifest.samples.size());

  parallel_for(static_cast<int64_t>(manifest.samples.size()), jobs, [&](int64_t i) {
    const SampleRecord& rec = manifest.samples[static_cast<size_t>(i)];
    const Image img = read_image(manifest.resolve(rec));
    for (const auto& issue : landmark_issues(img, rec.landmarks)) {
      issues[static_cast<size_t>(i)].push_back(rec.path + ": " + issue);
    }
    const auto crops = prepare_rois(img, rec.landmarks, rois);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06lld", static_cast<long long>(i));
    for (int r = 0; r < 3; ++r) {
      if (crops[static_cast<size_t>(r)].empty()) continue;
      const auto vs = variants(crops[static_cast<size_t>(r)], augment_crops);
      for (size_t v = 0; v < vs.size(); ++v) {
        const int variant = augment_crops ? static_cast<int>(v) : kIdentityVariant;
        const std::string rel = std::string("crops/") + stem + "_" +
                                std::string(kRoiNames[static_cast<size_t>(r)]) + "_v" +
                                std::to_string(variant) + ".png";
        write_image(vs[v], out_dir / rel);
        written[static_cast<size_t>(i)].push_back({r, variant, rel});
      }
    }
  });

  PreprocessSummary summary;
  std::string table = "sample_id,album_id,fold,gender,age_group,roi,variant,crop_path\n";
  for (size_t i = 0; i < manifest.samples.size(); ++i) {
    const SampleRecord& rec = manifest.samples[i];
    for (const Written& w : written[i]) {
      table += csv::escape(rec.path) + ',' + csv::escape(rec.album_id) + ',' + std::to_string(rec.fold) +
               ',' + label_name(rec.gender, Task::kGender) + ',' + label_name(rec.age_group, Task::kAge) +
               ',' + std::string(kRoiNames[static_cast<size_t>(w.roi)]) + ',' + std::to_string(w.variant) +
               ',' + csv::escape(w.rel) + '\n';
      ++summary.crops;
    }
    summary.warnings.insert(summary.warnings.end(), issues[i].begin(), issues[i].end());
  }
  summary.images = manifest.samples.size();
  write_text(out_dir / "crops.csv", table);
  return summary;
}

}  // namespace ocsb
