#include "ocsb/svm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include "ocsb/error.hpp"
#include "ocsb/parallel.hpp"
#include "ocsb/weightstore.hpp"

namespace ocsb {

FeatureMatrix::FeatureMatrix(int64_t rows, int64_t cols)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows * cols), 0.0f) {}

void FeatureMatrix::push_back(std::span<const float> values) {
  if (rows_ == 0 && data_.empty()) cols_ = static_cast<int64_t>(values.size());
  if (static_cast<int64_t>(values.size()) != cols_) {
    throw ShapeError("feature row has " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

double BinarySvm::decision(std::span<const float> x) const {
  if (x.size() != weights.size()) {
    throw ShapeError("svm: feature has " + std::to_string(x.size()) + " values, model expects " +
                     std::to_string(weights.size()));
  }
  double s = bias;
  for (size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
  return s;
}

namespace {

std::vector<float> prepared(std::span<const float> x, bool normalize) {
  std::vector<float> v(x.begin(), x.end());
  if (normalize) l2_normalize(v);
  return v;
}

}  // namespace

BinarySvm train_binary(const FeatureMatrix& x, std::span<const int> labels,
                       const SvmOptions& options) {
  const int64_t n = x.rows();
  const int64_t d = x.cols();
  if (d == 0) throw ShapeError("svm: zero-dimensional features");
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ShapeError("svm: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  if (!(options.C > 0.0)) throw TrainingError("svm: C must be positive");
  bool has_pos = false, has_neg = false;
  for (int y : labels) {
    if (y == 1) has_pos = true;
    else if (y == -1) has_neg = true;
    else throw TrainingError("svm: binary labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw TrainingError("svm: training data holds a single class");

  std::vector<std::vector<double>> rows(static_cast<size_t>(n));
  std::vector<double> qdiag(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const auto src = prepared(x.row(i), options.l2_normalize);
    auto& r = rows[static_cast<size_t>(i)];
    r.assign(src.begin(), src.end());
    double q = 1.0;  // bias feature
    for (double v : r) q += v * v;
    qdiag[static_cast<size_t>(i)] = q;
  }

  BinarySvm m;
  m.C = options.C;
  m.weights.assign(static_cast<size_t>(d), 0.0);
  std::vector<double> alpha(static_cast<size_t>(n), 0.0);
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  const double upper = options.C;

  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    // Fisher-Yates with raw engine output: identical on every platform.
    for (int64_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<int64_t>(rng() % static_cast<uint64_t>(i + 1));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    double pg_max = -1e300, pg_min = 1e300;
    for (int64_t idx : order) {
      const auto i = static_cast<size_t>(idx);
      const double y = labels[i];
      const auto& r = rows[i];
      double wx = m.bias;
      for (size_t k = 0; k < r.size(); ++k) wx += m.weights[k] * r[k];
      const double g = y * wx - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] >= upper) pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (std::abs(pg) > 1e-12) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qdiag[i], 0.0, upper);
        const double step = (alpha[i] - old) * y;
        for (size_t k = 0; k < r.size(); ++k) m.weights[k] += step * r[k];
        m.bias += step;
      }
    }
    m.epochs = epoch + 1;
    if (pg_max - pg_min <= options.tolerance) {
      m.converged = true;
      break;
    }
  }
  return m;
}

SvmModel train_ovo(const FeatureMatrix& x, std::span<const int> labels, int num_classes,
                   const SvmOptions& options, int jobs, std::vector<std::string> class_names) {
  if (num_classes < 2) throw TrainingError("svm: need at least two classes");
  if (static_cast<int64_t>(labels.size()) != x.rows()) {
    throw ShapeError("svm: label count does not match feature rows");
  }
  if (x.cols() == 0) throw ShapeError("svm: zero-dimensional features");
  std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(num_classes));
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) {
      throw TrainingError("svm: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    by_class[static_cast<size_t>(y)].push_back(static_cast<int64_t>(i));
  }
  if (class_names.empty()) {
    for (int k = 0; k < num_classes; ++k) class_names.push_back(std::to_string(k));
  }
  for (int k = 0; k < num_classes; ++k) {
    if (by_class[static_cast<size_t>(k)].empty()) {
      throw TrainingError("svm: class '" + class_names[static_cast<size_t>(k)] +
                          "' has no training samples");
    }
  }

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < num_classes; ++i)
    for (int j = i + 1; j < num_classes; ++j) pairs.emplace_back(i, j);

  SvmModel model;
  model.num_classes = num_classes;
  model.class_names = std::move(class_names);
  model.feature_dim = x.cols();
  model.options = options;
  model.machines.resize(pairs.size());

  parallel_for(static_cast<int64_t>(pairs.size()), jobs, [&](int64_t p) {
    const auto [ci, cj] = pairs[static_cast<size_t>(p)];
    FeatureMatrix sub;
    std::vector<int> y;
    // Rows in original order so the subproblem does not depend on class ids.
    std::vector<int64_t> idx = by_class[static_cast<size_t>(ci)];
    idx.insert(idx.end(), by_class[static_cast<size_t>(cj)].begin(),
               by_class[static_cast<size_t>(cj)].end());
    std::sort(idx.begin(), idx.end());
    for (int64_t r : idx) {
      sub.push_back(x.row(r));
      y.push_back(labels[static_cast<size_t>(r)] == ci ? 1 : -1);
    }
    SvmOptions o = options;
    o.seed = options.seed ^ (0x9E3779B97F4A7C15ull * static_cast<uint64_t>(p + 1));
    BinarySvm m = train_binary(sub, y, o);
    m.class_pos = ci;
    m.class_neg = cj;
    m.C = options.C;
    model.machines[static_cast<size_t>(p)] = std::move(m);
  });
  return model;
}

SvmPrediction predict(const SvmModel& model, std::span<const float> feature) {
  if (static_cast<int64_t>(feature.size()) != model.feature_dim) {
    throw ShapeError("svm: feature has " + std::to_string(feature.size()) +
                     " values, model expects " + std::to_string(model.feature_dim));
  }
  const auto x = prepared(feature, model.options.l2_normalize);
  const auto K = static_cast<size_t>(model.num_classes);
  SvmPrediction out;
  out.votes.assign(K, 0);
  out.decision_values.reserve(model.machines.size());
  // margin[i][j]: decision value of machine (i, j) oriented toward i.
  std::vector<std::vector<double>> margin(K, std::vector<double>(K, 0.0));
  for (const BinarySvm& m : model.machines) {
    const double v = m.decision(x);
    out.decision_values.push_back(v);
    const int winner = v > 0.0 ? m.class_pos : m.class_neg;
    ++out.votes[static_cast<size_t>(winner)];
    margin[static_cast<size_t>(m.class_pos)][static_cast<size_t>(m.class_neg)] = v;
    margin[static_cast<size_t>(m.class_neg)][static_cast<size_t>(m.class_pos)] = -v;
  }
  const int best = *std::max_element(out.votes.begin(), out.votes.end());
  std::vector<int> tied;
  for (size_t k = 0; k < K; ++k) {
    if (out.votes[k] == best) tied.push_back(static_cast<int>(k));
  }
  if (tied.size() == 1) {
    out.label = tied.front();
    return out;
  }
  // Sums in class-index order, independent of how machines are stored.
  double best_sum = -1e300;
  for (int k : tied) {
    double s = 0.0;
    for (size_t j = 0; j < K; ++j) s += margin[static_cast<size_t>(k)][j];
    if (s > best_sum) {
      best_sum = s;
      out.label = k;
    }
  }
  return out;
}

std::vector<float> fuse_lr(std::span<const float> left, std::span<const float> right) {
  if (left.size() != right.size()) {
    throw ShapeError("fuse_lr: descriptor lengths differ (" + std::to_string(left.size()) +
                     " vs " + std::to_string(right.size()) + ")");
  }
  std::vector<float> out(left.size());
  for (size_t i = 0; i < left.size(); ++i) out[i] = (left[i] + right[i]) * 0.5f;
  return out;
}

void l2_normalize(std::span<float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  if (s <= 0.0) return;
  const double inv = 1.0 / std::sqrt(s);
  for (float& x : v) x = static_cast<float>(x * inv);
}

// SVMH payload, little-endian:
//   u32 num_classes  u64 feature_dim  f64 C  f64 tolerance  u32 max_epochs
//   u64 seed  u8 l2_normalize  num_classes x str class_name
//   u32 machine_count  machine_count x { u32 pos  u32 neg  u32 epochs  u8 converged
//                                         f64 bias  f64[feature_dim] weights }
namespace {

struct Out {
  std::vector<uint8_t> b;
  void u8(uint8_t v) { b.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    b.insert(b.end(), s.begin(), s.end());
  }
};

struct In {
  std::span<const uint8_t> b;
  size_t pos = 0;
  void need(size_t n) {
    if (n > b.size() - pos) throw FormatError(FormatErrc::kTruncated, "SVM section truncated");
  }
  uint8_t u8() {
    need(1);
    return b[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{b[pos + i]} << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{b[pos + i]} << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<uint8_t> encode_svm(const SvmModel& model) {
  Out o;
  o.u32(static_cast<uint32_t>(model.num_classes));
  o.u64(static_cast<uint64_t>(model.feature_dim));
  o.f64(model.options.C);
  o.f64(model.options.tolerance);
  o.u32(static_cast<uint32_t>(model.options.max_epochs));
  o.u64(model.options.seed);
  o.u8(model.options.l2_normalize ? 1 : 0);
  for (int k = 0; k < model.num_classes; ++k) {
    o.str(static_cast<size_t>(k) < model.class_names.size() ? model.class_names[static_cast<size_t>(k)]
                                                            : std::to_string(k));
  }
  o.u32(static_cast<uint32_t>(model.machines.size()));
  for (const BinarySvm& m : model.machines) {
    o.u32(static_cast<uint32_t>(m.class_pos));
    o.u32(static_cast<uint32_t>(m.class_neg));
    o.u32(static_cast<uint32_t>(m.epochs));
    o.u8(m.converged ? 1 : 0);
    o.f64(m.bias);
    for (double w : m.weights) o.f64(w);
  }
  return std::move(o.b);
}

SvmModel decode_svm(std::span<const uint8_t> bytes) {
  In in{bytes};
  SvmModel model;
  model.num_classes = static_cast<int>(in.u32());
  model.feature_dim = static_cast<int64_t>(in.u64());
  model.options.C = in.f64();
  model.options.tolerance = in.f64();
  model.options.max_epochs = static_cast<int>(in.u32());
  model.options.seed = in.u64();
  model.options.l2_normalize = in.u8() != 0;
  for (int k = 0; k < model.num_classes; ++k) model.class_names.push_back(in.str());
  const uint32_t count = in.u32();
  const auto expected = static_cast<uint32_t>(model.num_classes * (model.num_classes - 1) / 2);
  if (model.num_classes < 2 || count != expected) {
    throw FormatError(FormatErrc::kBadValue, "SVM section holds " + std::to_string(count) +
                                                 " machines for " +
                                                 std::to_string(model.num_classes) + " classes");
  }
  for (uint32_t i = 0; i < count; ++i) {
    BinarySvm m;
    m.class_pos = static_cast<int>(in.u32());
    m.class_neg = static_cast<int>(in.u32());
    m.epochs = static_cast<int>(in.u32());
    m.converged = in.u8() != 0;
    m.bias = in.f64();
    m.C = model.options.C;
    in.need(static_cast<size_t>(model.feature_dim) * 8);
    m.weights.resize(static_cast<size_t>(model.feature_dim));
    for (double& w : m.weights) w = in.f64();
    model.machines.push_back(std::move(m));
  }
  if (in.pos != bytes.size()) {
    throw FormatError(FormatErrc::kTrailingBytes, "trailing bytes in SVM section");
  }
  return model;
}

void save_svm_model(const SvmModel& model, const std::string& arch_id,
                    const std::filesystem::path& path) {
  WeightStore store;
  store.header.arch_id = arch_id;
  store.header.provenance = "scratch";
  Section s;
  s.tag = {'S', 'V', 'M', 'H'};
  s.payload = encode_svm(model);
  store.sections.push_back(std::move(s));
  write_weights(store, path);
}

SvmModel load_svm_model(const std::filesystem::path& path) {
  const WeightStore store = read_weights(path);
  const Section* s = store.find_section("SVMH");
  if (s == nullptr) throw ValidationError("'" + path.string() + "' holds no SVM head section");
  return decode_svm(s->payload);
}

}  // namespace ocsb
