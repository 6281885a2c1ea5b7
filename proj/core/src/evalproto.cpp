#include "ocsb/evalproto.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "json.hpp"

#include "ocsb/dataset.hpp"
#include "ocsb/error.hpp"
#include "ocsb/parallel.hpp"
#include "ocsb/roi.hpp"

namespace ocsb {

std::string_view to_string(Task t) { return t == Task::kGender ? "gender" : "age"; }

std::string_view to_string(RoiProtocol r) {
  switch (r) {
    case RoiProtocol::kFace: return "face";
    case RoiProtocol::kOcular: return "ocular";
    case RoiProtocol::kOcularLr: return "ocular-lr";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  if (text == "gender") return Task::kGender;
  if (text == "age") return Task::kAge;
  throw ValidationError("unknown task '" + std::string(text) + "' (expected gender or age)");
}

RoiProtocol parse_roi_protocol(std::string_view text) {
  if (text == "face") return RoiProtocol::kFace;
  if (text == "ocular") return RoiProtocol::kOcular;
  if (text == "ocular-lr") return RoiProtocol::kOcularLr;
  throw ValidationError("unknown roi protocol '" + std::string(text) +
                        "' (expected face, ocular or ocular-lr)");
}

int class_count(Task t) {
  return t == Task::kGender ? static_cast<int>(kGenderClasses.size())
                            : static_cast<int>(kAgeGroups.size());
}

std::vector<std::string> class_names(Task t) {
  std::vector<std::string> out;
  if (t == Task::kGender) {
    for (auto n : kGenderClasses) out.emplace_back(n);
  } else {
    for (auto n : kAgeGroups) out.emplace_back(n);
  }
  return out;
}

namespace {

void check_lengths(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw ShapeError("accuracy: " + std::to_string(a.size()) + " predictions for " +
                     std::to_string(b.size()) + " truths");
  }
  if (a.empty()) throw ValidationError("accuracy of an empty prediction set");
}

}  // namespace

double exact_accuracy(std::span<const int> preds, std::span<const int> truths) {
  check_lengths(preds, truths);
  size_t hit = 0;
  for (size_t i = 0; i < preds.size(); ++i) hit += preds[i] == truths[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double one_off_accuracy(std::span<const int> preds, std::span<const int> truths) {
  check_lengths(preds, truths);
  size_t hit = 0;
  for (size_t i = 0; i < preds.size(); ++i) hit += std::abs(preds[i] - truths[i]) <= 1;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

FoldStats fold_stats(std::span<const double> values) {
  if (values.empty()) throw ValidationError("fold_stats of no folds");
  FoldStats s;
  double sum = 0.0;
  for (double v : values) sum += v;
  const auto n = static_cast<double>(values.size());
  s.mean = sum / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
    s.standard_error = *s.stddev / std::sqrt(n);
  }
  return s;
}

const std::vector<float>& FeatureSample::identity(int roi) const {
  const auto& v = rois[static_cast<size_t>(roi)];
  if (v.empty()) {
    throw ValidationError("sample '" + id + "' has no " + std::string(kRoiNames[static_cast<size_t>(roi)]) +
                          " descriptor");
  }
  return v.size() == kAugmentVariants.size() ? v[kIdentityVariant] : v.front();
}

namespace {

const std::vector<std::vector<float>>& variants_of(const FeatureSample& s, int roi) {
  const auto& v = s.rois[static_cast<size_t>(roi)];
  if (v.empty()) {
    throw ValidationError("sample '" + s.id + "' has no " +
                          std::string(kRoiNames[static_cast<size_t>(roi)]) + " descriptor");
  }
  return v;
}

void append(LabeledRows& rows, std::span<const float> x, int y, const std::string& id) {
  rows.x.push_back(x);
  rows.y.push_back(y);
  rows.ids.push_back(id);
}

void add_rows(LabeledRows& rows, const FeatureSample& s, int y, RoiProtocol roi, bool all_variants) {
  auto pick = [&](int r) {
    const auto& v = variants_of(s, r);
    std::vector<const std::vector<float>*> out;
    if (all_variants) {
      for (const auto& d : v) out.push_back(&d);
    } else {
      out.push_back(&s.identity(r));
    }
    return out;
  };
  switch (roi) {
    case RoiProtocol::kFace:
      for (const auto* d : pick(kRoiFace)) append(rows, *d, y, s.id);
      break;
    case RoiProtocol::kOcular:
      for (const auto* d : pick(kRoiLeft)) append(rows, *d, y, s.id);
      for (const auto* d : pick(kRoiRight)) append(rows, *d, y, s.id);
      break;
    case RoiProtocol::kOcularLr: {
      const auto left = pick(kRoiLeft);
      const auto right = pick(kRoiRight);
      if (left.size() != right.size()) {
        throw ValidationError("sample '" + s.id + "' has unequal left/right variant counts");
      }
      for (size_t i = 0; i < left.size(); ++i) append(rows, fuse_lr(*left[i], *right[i]), y, s.id);
      break;
    }
  }
}

}  // namespace

LabeledRows training_rows(const FeatureBank& bank, std::span<const size_t> samples, Task task,
                          RoiProtocol roi, bool augment) {
  LabeledRows rows;
  for (size_t i : samples) {
    const FeatureSample& s = bank.samples[i];
    if (const auto y = s.label(task)) add_rows(rows, s, *y, roi, augment);
  }
  return rows;
}

LabeledRows test_rows(const FeatureBank& bank, std::span<const size_t> samples, Task task,
                      RoiProtocol roi) {
  LabeledRows rows;
  for (size_t i : samples) {
    const FeatureSample& s = bank.samples[i];
    if (const auto y = s.label(task)) add_rows(rows, s, *y, roi, false);
  }
  return rows;
}

namespace {

struct FoldOutcome {
  FoldResult result;
  std::vector<int> preds;
  std::vector<int> truths;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

uint64_t fold_seed(uint64_t seed, int fold) {
  return seed + 0x632BE59BD9B4E019ull * static_cast<uint64_t>(fold + 1);
}

}  // namespace

MetricsReport cross_validate(const FeatureBank& bank, const CvConfig& config, CvTrace* trace) {
  const int K = class_count(config.task);
  const auto names = class_names(config.task);

  MetricsReport report;
  report.task = config.task;
  report.roi = config.roi;
  report.arch_id = bank.arch_id;
  report.class_names = names;

  std::vector<std::vector<size_t>> by_fold(kFoldCount);
  for (size_t i = 0; i < bank.samples.size(); ++i) {
    const int f = bank.samples[i].fold;
    if (f < 0 || f >= kFoldCount) {
      throw ValidationError("sample '" + bank.samples[i].id + "' has fold " + std::to_string(f));
    }
    by_fold[static_cast<size_t>(f)].push_back(i);
  }

  std::map<std::string, std::set<int>> album_folds;
  for (const auto& s : bank.samples) {
    if (!s.album_id.empty()) album_folds[s.album_id].insert(s.fold);
  }
  for (const auto& [album, folds] : album_folds) {
    if (folds.size() > 1) {
      report.warnings.push_back("album '" + album + "' appears in " + std::to_string(folds.size()) +
                                " folds");
    }
  }

  std::vector<FoldOutcome> outcomes(kFoldCount);
  parallel_for(kFoldCount, config.jobs, [&](int64_t fi) {
    const int f = static_cast<int>(fi);
    std::vector<size_t> train;
    for (int g = 0; g < kFoldCount; ++g) {
      if (g != f) {
        train.insert(train.end(), by_fold[static_cast<size_t>(g)].begin(),
                     by_fold[static_cast<size_t>(g)].end());
      }
    }
    std::sort(train.begin(), train.end());
    LabeledRows tr = training_rows(bank, train, config.task, config.roi, config.augment);
    LabeledRows te = test_rows(bank, by_fold[static_cast<size_t>(f)], config.task, config.roi);

    std::vector<bool> seen(static_cast<size_t>(K), false);
    for (int y : tr.y) seen[static_cast<size_t>(y)] = true;
    for (int k = 0; k < K; ++k) {
      if (!seen[static_cast<size_t>(k)]) {
        throw ProtocolError("fold " + std::to_string(f) + ": class '" + names[static_cast<size_t>(k)] +
                            "' is absent from the training split");
      }
    }
    if (te.y.empty()) {
      throw ProtocolError("fold " + std::to_string(f) + " has no labeled test samples");
    }

    SvmOptions opt = config.svm;
    opt.seed = fold_seed(config.svm.seed, f);
    const SvmModel model = train_ovo(tr.x, tr.y, K, opt, 1, names);

    FoldOutcome& out = outcomes[static_cast<size_t>(f)];
    out.truths = te.y;
    for (int64_t r = 0; r < te.x.rows(); ++r) out.preds.push_back(predict(model, te.x.row(r)).label);
    out.result.fold = f;
    out.result.train_rows = tr.x.rows();
    out.result.test_rows = te.x.rows();
    out.result.exact = exact_accuracy(out.preds, out.truths);
    if (config.task == Task::kAge) out.result.one_off = one_off_accuracy(out.preds, out.truths);
    if (trace != nullptr) {
      out.train_ids = std::move(tr.ids);
      out.test_ids = std::move(te.ids);
    }
  });

  report.confusion.assign(static_cast<size_t>(K), std::vector<int64_t>(static_cast<size_t>(K), 0));
  std::vector<double> exact, one_off;
  for (const FoldOutcome& o : outcomes) {
    report.folds.push_back(o.result);
    exact.push_back(o.result.exact);
    if (o.result.one_off) one_off.push_back(*o.result.one_off);
    for (size_t i = 0; i < o.preds.size(); ++i) {
      ++report.confusion[static_cast<size_t>(o.truths[i])][static_cast<size_t>(o.preds[i])];
    }
  }
  report.exact = fold_stats(exact);
  if (config.task == Task::kAge) report.one_off = fold_stats(one_off);
  for (int k = 0; k < K; ++k) {
    ClassStats c;
    c.name = names[static_cast<size_t>(k)];
    for (int64_t v : report.confusion[static_cast<size_t>(k)]) c.count += v;
    c.correct = report.confusion[static_cast<size_t>(k)][static_cast<size_t>(k)];
    c.accuracy = c.count > 0 ? static_cast<double>(c.correct) / static_cast<double>(c.count) : 0.0;
    report.per_class.push_back(std::move(c));
  }
  if (trace != nullptr) {
    trace->train_ids.clear();
    trace->test_ids.clear();
    for (FoldOutcome& o : outcomes) {
      trace->train_ids.push_back(std::move(o.train_ids));
      trace->test_ids.push_back(std::move(o.test_ids));
    }
  }
  return report;
}

namespace {

nlohmann::json stats_json(const FoldStats& s) {
  nlohmann::json j;
  j["mean"] = s.mean;
  j["std"] = s.stddev ? nlohmann::json(*s.stddev) : nlohmann::json(nullptr);
  j["standard_error"] = s.standard_error ? nlohmann::json(*s.standard_error) : nlohmann::json(nullptr);
  return j;
}

std::string cell(const FoldStats& s) {
  char buf[96];
  if (s.stddev) {
    std::snprintf(buf, sizeof buf, "%5.1f +- %.1f (se %.1f)", 100.0 * s.mean, 100.0 * *s.stddev,
                  100.0 * *s.standard_error);
  } else {
    std::snprintf(buf, sizeof buf, "%5.1f", 100.0 * s.mean);
  }
  return buf;
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["task"] = std::string(to_string(task));
  j["roi"] = std::string(to_string(roi));
  j["arch"] = arch_id;
  j["classes"] = class_names;
  auto& folds_j = j["folds"] = nlohmann::json::array();
  for (const FoldResult& f : folds) {
    nlohmann::json fj;
    fj["fold"] = f.fold;
    fj["train_rows"] = f.train_rows;
    fj["test_rows"] = f.test_rows;
    fj["exact"] = f.exact;
    if (f.one_off) fj["one_off"] = *f.one_off;
    folds_j.push_back(std::move(fj));
  }
  j["exact"] = stats_json(exact);
  if (one_off) j["one_off"] = stats_json(*one_off);
  auto& pc = j["per_class"] = nlohmann::json::array();
  for (const ClassStats& c : per_class) {
    pc.push_back({{"class", c.name}, {"count", c.count}, {"correct", c.correct}, {"accuracy", c.accuracy}});
  }
  j["confusion"] = confusion;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "task %s | roi %s | arch %s\n", std::string(to_string(task)).c_str(),
                std::string(to_string(roi)).c_str(), arch_id.c_str());
  out += buf;
  out += "accuracy in %, mean +- sample std over folds (standard error)\n";
  out += "  exact   " + cell(exact) + "\n";
  if (one_off) out += "  1-off   " + cell(*one_off) + "\n";
  out += "\nfold  train  test   exact";
  out += one_off ? "   1-off\n" : "\n";
  for (const FoldResult& f : folds) {
    std::snprintf(buf, sizeof buf, "%4d %6lld %5lld  %6.1f", f.fold, static_cast<long long>(f.train_rows),
                  static_cast<long long>(f.test_rows), 100.0 * f.exact);
    out += buf;
    if (f.one_off) {
      std::snprintf(buf, sizeof buf, "  %6.1f", 100.0 * *f.one_off);
      out += buf;
    }
    out += "\n";
  }
  out += "\nclass        count  correct  accuracy\n";
  for (const ClassStats& c : per_class) {
    std::snprintf(buf, sizeof buf, "%-10s %7lld  %7lld  %7.1f\n", c.name.c_str(),
                  static_cast<long long>(c.count), static_cast<long long>(c.correct), 100.0 * c.accuracy);
    out += buf;
  }
  out += "\nconfusion (rows truth, columns prediction)\n";
  out += "          ";
  for (const auto& n : class_names) {
    std::snprintf(buf, sizeof buf, "%7s", n.c_str());
    out += buf;
  }
  out += "\n";
  for (size_t r = 0; r < confusion.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-10s", class_names[r].c_str());
    out += buf;
    for (int64_t v : confusion[r]) {
      std::snprintf(buf, sizeof buf, "%7lld", static_cast<long long>(v));
      out += buf;
    }
    out += "\n";
  }
  for (const auto& w : warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace ocsb
