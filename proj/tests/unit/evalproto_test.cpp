#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "ocsb/error.hpp"
#include "ocsb/evalproto.hpp"
#include "ocsb/roi.hpp"
#include "test_support.hpp"

using namespace ocsb;
using namespace ocsbtest;

namespace {

// Descriptor = scaled one-hot of the label plus small noise: linearly separable.
std::vector<float> planted(Gen& gen, int label, int dim, bool separable) {
  std::vector<float> v = gen.floats(static_cast<size_t>(dim), -0.1f, 0.1f);
  if (separable) v[static_cast<size_t>(label)] += 3.0f;
  return v;
}

FeatureBank planted_bank(uint64_t seed, int count, Task task, bool separable, int variants = 6) {
  Gen gen(seed);
  FeatureBank bank;
  bank.arch_id = "planted";
  bank.feature_dim = 12;
  for (int i = 0; i < count; ++i) {
    FeatureSample s;
    s.id = "img" + std::to_string(i);
    s.fold = i % kFoldCount;
    s.album_id = "album" + std::to_string(s.fold) + "_" + std::to_string(i / 20);
    s.gender = (i / kFoldCount) % 2;
    s.age_group = (i / kFoldCount) % 8;
    if (!separable) {
      s.gender = gen.integer(0, 1);
      s.age_group = gen.integer(0, 7);
    }
    const int label = task == Task::kGender ? *s.gender : *s.age_group;
    for (auto& roi : s.rois) {
      for (int v = 0; v < variants; ++v) roi.push_back(planted(gen, label, 12, separable));
    }
    bank.samples.push_back(std::move(s));
  }
  return bank;
}

}  // namespace

TEST(Accuracy, ExactExamples) {
  EXPECT_EQ(exact_accuracy(std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3}), 1.0);
  EXPECT_EQ(exact_accuracy(std::vector<int>{0, 0}, std::vector<int>{1, 1}), 0.0);
  EXPECT_EQ(exact_accuracy(std::vector<int>{1, 1, 1, 0}, std::vector<int>{1, 1, 1, 1}), 0.75);
  EXPECT_THROW(exact_accuracy(std::vector<int>{1}, std::vector<int>{1, 2}), ShapeError);
  EXPECT_THROW(exact_accuracy(std::vector<int>{}, std::vector<int>{}), ValidationError);
}

TEST(Accuracy, OneOffExamples) {
  EXPECT_EQ(one_off_accuracy(std::vector<int>{3}, std::vector<int>{4}), 1.0);
  EXPECT_EQ(one_off_accuracy(std::vector<int>{3}, std::vector<int>{5}), 0.0);
  EXPECT_EQ(one_off_accuracy(std::vector<int>{0, 7, 4}, std::vector<int>{0, 7, 4}), 1.0);
}

TEST(Accuracy, OneOffNeverBelowExact) {
  Gen gen(1);
  for (int t = 0; t < 500; ++t) {
    const int n = gen.integer(1, 60);
    std::vector<int> p, y;
    for (int i = 0; i < n; ++i) {
      p.push_back(gen.integer(0, 7));
      y.push_back(gen.integer(0, 7));
    }
    EXPECT_GE(one_off_accuracy(p, y), exact_accuracy(p, y));
  }
}

TEST(FoldStats, Examples) {
  const FoldStats c = fold_stats(std::vector<double>{0.8, 0.8, 0.8, 0.8, 0.8});
  EXPECT_NEAR(c.mean, 0.8, 1e-15);
  EXPECT_NEAR(*c.stddev, 0.0, 1e-15);
  EXPECT_NEAR(*c.standard_error, 0.0, 1e-15);
  const FoldStats two = fold_stats(std::vector<double>{0.7, 0.9});
  EXPECT_NEAR(two.mean, 0.8, 1e-12);
  EXPECT_NEAR(*two.stddev, std::sqrt(0.02), 1e-12);
  EXPECT_NEAR(*two.stddev, 0.1414, 1e-4);
  EXPECT_NEAR(*two.standard_error, 0.1, 1e-12);
  const FoldStats one = fold_stats(std::vector<double>{0.6});
  EXPECT_EQ(one.mean, 0.6);
  EXPECT_FALSE(one.stddev.has_value());
  EXPECT_FALSE(one.standard_error.has_value());
  EXPECT_THROW(fold_stats(std::vector<double>{}), ValidationError);
}

TEST(Protocol, ParseNames) {
  EXPECT_EQ(parse_task("age"), Task::kAge);
  EXPECT_EQ(parse_roi_protocol("ocular-lr"), RoiProtocol::kOcularLr);
  EXPECT_EQ(to_string(RoiProtocol::kOcular), "ocular");
  EXPECT_THROW(parse_task("ethnicity"), ValidationError);
  EXPECT_THROW(parse_roi_protocol("nose"), ValidationError);
  EXPECT_EQ(class_count(Task::kAge), 8);
  EXPECT_EQ(class_names(Task::kGender), (std::vector<std::string>{"female", "male"}));
}

TEST(CrossValidate, SeparableFeaturesGiveFullAccuracy) {
  for (Task task : {Task::kGender, Task::kAge}) {
    for (RoiProtocol roi : {RoiProtocol::kFace, RoiProtocol::kOcular, RoiProtocol::kOcularLr}) {
      const FeatureBank bank = planted_bank(2, 100, task, true);
      CvConfig cfg;
      cfg.task = task;
      cfg.roi = roi;
      const MetricsReport r = cross_validate(bank, cfg);
      ASSERT_EQ(r.folds.size(), 5u);
      for (const FoldResult& f : r.folds) {
        EXPECT_EQ(f.exact, 1.0) << to_string(task) << "/" << to_string(roi) << " fold " << f.fold;
        if (task == Task::kAge) EXPECT_EQ(*f.one_off, 1.0);
        else EXPECT_FALSE(f.one_off.has_value());
      }
      EXPECT_EQ(r.one_off.has_value(), task == Task::kAge);
    }
  }
}

TEST(CrossValidate, RowCountsFollowProtocol) {
  const FeatureBank bank = planted_bank(3, 100, Task::kGender, true);
  CvConfig cfg;
  cfg.roi = RoiProtocol::kOcular;
  const MetricsReport r = cross_validate(bank, cfg);
  for (const FoldResult& f : r.folds) {
    EXPECT_EQ(f.test_rows, 20 * 2);       // both eyes, untouched only
    EXPECT_EQ(f.train_rows, 80 * 2 * 6);  // both eyes, all variants
  }
  cfg.roi = RoiProtocol::kOcularLr;
  cfg.augment = false;
  for (const FoldResult& f : cross_validate(bank, cfg).folds) {
    EXPECT_EQ(f.test_rows, 20);
    EXPECT_EQ(f.train_rows, 80);
  }
}

TEST(CrossValidate, RandomLabelsNearChance) {
  const FeatureBank bank = planted_bank(4, 200, Task::kGender, false);
  const MetricsReport r = cross_validate(bank, CvConfig{});
  EXPECT_GE(r.exact.mean, 0.35);
  EXPECT_LE(r.exact.mean, 0.65);
}

TEST(CrossValidate, NoTestSampleLeaksIntoTraining) {
  const FeatureBank bank = planted_bank(5, 100, Task::kAge, true);
  CvConfig cfg;
  cfg.task = Task::kAge;
  cfg.roi = RoiProtocol::kOcular;
  CvTrace trace;
  cross_validate(bank, cfg, &trace);
  ASSERT_EQ(trace.train_ids.size(), 5u);
  for (int f = 0; f < 5; ++f) {
    const std::set<std::string> train(trace.train_ids[f].begin(), trace.train_ids[f].end());
    EXPECT_FALSE(trace.test_ids[f].empty());
    for (const auto& id : trace.test_ids[f]) EXPECT_EQ(train.count(id), 0u) << id;
    for (const auto& s : bank.samples) {
      if (s.fold == f) EXPECT_EQ(train.count(s.id), 0u);
      else EXPECT_EQ(train.count(s.id), 1u);
    }
  }
}

TEST(CrossValidate, PerClassRecomposesOverallAccuracy) {
  const FeatureBank bank = planted_bank(6, 160, Task::kAge, false);
  CvConfig cfg;
  cfg.task = Task::kAge;
  const MetricsReport r = cross_validate(bank, cfg);
  int64_t total = 0, correct = 0;
  double weighted = 0.0;
  for (const ClassStats& c : r.per_class) {
    weighted += c.accuracy * static_cast<double>(c.count);
    total += c.count;
  }
  for (size_t k = 0; k < r.confusion.size(); ++k) {
    correct += r.confusion[k][k];
    int64_t row = 0;
    for (int64_t v : r.confusion[k]) row += v;
    EXPECT_EQ(row, r.per_class[k].count);
  }
  int64_t rows = 0;
  for (const FoldResult& f : r.folds) rows += f.test_rows;
  EXPECT_EQ(total, rows);
  EXPECT_NEAR(weighted / static_cast<double>(total), static_cast<double>(correct) / total, 1e-9);
  for (const FoldResult& f : r.folds) EXPECT_GE(*f.one_off, f.exact);
}

TEST(CrossValidate, MissingClassIsProtocolError) {
  FeatureBank bank = planted_bank(7, 100, Task::kAge, true);
  // Age group 7 survives only in fold 2: training for fold 2 lacks it.
  for (auto& s : bank.samples)
    if (s.age_group == 7 && s.fold != 2) s.age_group = 6;
  CvConfig cfg;
  cfg.task = Task::kAge;
  try {
    cross_validate(bank, cfg);
    FAIL();
  } catch (const ProtocolError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("fold 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("60-99"), std::string::npos) << msg;
  }
}

TEST(CrossValidate, EmptyTestFoldIsProtocolError) {
  FeatureBank bank = planted_bank(8, 100, Task::kGender, true);
  for (auto& s : bank.samples)
    if (s.fold == 4) s.gender.reset();
  EXPECT_THROW(cross_validate(bank, CvConfig{}), ProtocolError);
}

TEST(CrossValidate, AlbumOverlapWarns) {
  FeatureBank bank = planted_bank(9, 100, Task::kGender, true);
  bank.samples[1].album_id = bank.samples[0].album_id;
  const MetricsReport r = cross_validate(bank, CvConfig{});
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find(bank.samples[0].album_id), std::string::npos);
}

TEST(CrossValidate, MissingDescriptorIsValidationError) {
  FeatureBank bank = planted_bank(10, 100, Task::kGender, true);
  bank.samples[3].rois[kRoiLeft].clear();
  CvConfig cfg;
  cfg.roi = RoiProtocol::kOcular;
  EXPECT_THROW(cross_validate(bank, cfg), ValidationError);
}

TEST(CrossValidate, IdenticalAcrossJobCounts) {
  const FeatureBank bank = planted_bank(11, 120, Task::kAge, false);
  CvConfig cfg;
  cfg.task = Task::kAge;
  cfg.roi = RoiProtocol::kOcularLr;
  cfg.jobs = 1;
  const std::string ref = cross_validate(bank, cfg).to_json();
  for (int jobs : {2, 8}) {
    cfg.jobs = jobs;
    EXPECT_EQ(cross_validate(bank, cfg).to_json(), ref);
  }
}

TEST(MetricsReport, JsonSchema) {
  const FeatureBank bank = planted_bank(12, 100, Task::kAge, true);
  CvConfig cfg;
  cfg.task = Task::kAge;
  const auto age = nlohmann::json::parse(cross_validate(bank, cfg).to_json());
  EXPECT_EQ(age["task"], "age");
  EXPECT_EQ(age["roi"], "face");
  EXPECT_EQ(age["arch"], "planted");
  EXPECT_EQ(age["folds"].size(), 5u);
  EXPECT_TRUE(age["exact"].contains("mean"));
  EXPECT_TRUE(age["exact"].contains("std"));
  EXPECT_TRUE(age["exact"].contains("standard_error"));
  EXPECT_TRUE(age.contains("one_off"));
  EXPECT_EQ(age["per_class"].size(), 8u);
  EXPECT_EQ(age["confusion"].size(), 8u);

  const FeatureBank g = planted_bank(12, 100, Task::kGender, true);
  const auto gender = nlohmann::json::parse(cross_validate(g, CvConfig{}).to_json());
  EXPECT_FALSE(gender.contains("one_off"));
  for (const auto& f : gender["folds"]) EXPECT_FALSE(f.contains("one_off"));
}

TEST(MetricsReport, TableMentionsBothDispersions) {
  const FeatureBank bank = planted_bank(13, 100, Task::kAge, true);
  CvConfig cfg;
  cfg.task = Task::kAge;
  const std::string t = cross_validate(bank, cfg).to_table();
  EXPECT_NE(t.find("exact"), std::string::npos);
  EXPECT_NE(t.find("1-off"), std::string::npos);
  EXPECT_NE(t.find("std"), std::string::npos);
  EXPECT_NE(t.find("standard error"), std::string::npos);
  EXPECT_NE(t.find("60-99"), std::string::npos);
}

TEST(Rows, TrainingAndTestSelection) {
  const FeatureBank bank = planted_bank(14, 10, Task::kGender, true);
  const std::vector<size_t> idx{0, 1, 2};
  const auto train = training_rows(bank, idx, Task::kGender, RoiProtocol::kFace, true);
  EXPECT_EQ(train.x.rows(), 18);
  const auto plain = training_rows(bank, idx, Task::kGender, RoiProtocol::kFace, false);
  EXPECT_EQ(plain.x.rows(), 3);
  const auto test = test_rows(bank, idx, Task::kGender, RoiProtocol::kFace);
  ASSERT_EQ(test.x.rows(), 3);
  for (int64_t r = 0; r < 3; ++r) {
    const auto& want = bank.samples[static_cast<size_t>(r)].identity(kRoiFace);
    EXPECT_TRUE(std::equal(want.begin(), want.end(), test.x.row(r).begin()));
  }
  const auto lr = test_rows(bank, idx, Task::kGender, RoiProtocol::kOcularLr);
  const auto& s = bank.samples[0];
  const auto fused = fuse_lr(s.identity(kRoiLeft), s.identity(kRoiRight));
  EXPECT_TRUE(std::equal(fused.begin(), fused.end(), lr.x.row(0).begin()));
}
