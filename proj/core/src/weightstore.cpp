#include "ocsb/weightstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "ocsb/netdefs.hpp"

namespace ocsb {
namespace {

class Writer {
 public:
  void u8(uint8_t v) { out_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(std::span<const char> s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void bytes(std::span<const uint8_t> s) { out_.insert(out_.end(), s.begin(), s.end()); }
  size_t size() const { return out_.size(); }
  std::vector<uint8_t> take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}

  void need(uint64_t n, const char* what) {
    if (n > in_.size() - pos_) {
      throw FormatError(FormatErrc::kTruncated, std::string("OCWB truncated while reading ") +
                                                    what + " at byte " + std::to_string(pos_));
    }
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{in_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const uint8_t> bytes(uint64_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, static_cast<size_t>(n));
    pos_ += static_cast<size_t>(n);
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

void write_record(Writer& w, const TensorRecord& r) {
  w.str(r.name);
  w.u32(static_cast<uint32_t>(r.dims.size()));
  for (int64_t d : r.dims) w.u32(static_cast<uint32_t>(d));
  for (float v : r.data) w.f32(v);
}

std::string dims_text(const std::vector<int64_t>& dims) {
  std::string s = "(";
  for (size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + ")";
}

}  // namespace

bool is_valid_provenance(std::string_view tag) {
  return std::find(std::begin(kProvenanceTags), std::end(kProvenanceTags), tag) !=
         std::end(kProvenanceTags);
}

int64_t TensorRecord::count() const {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

void WeightStore::add(TensorRecord record) {
  if (record.count() != static_cast<int64_t>(record.data.size())) {
    throw FormatError(FormatErrc::kBadValue, "tensor '" + record.name + "' declares " +
                                                 dims_text(record.dims) + " but holds " +
                                                 std::to_string(record.data.size()) + " values");
  }
  if (index_.contains(record.name)) {
    throw FormatError(FormatErrc::kDuplicateName, "duplicate tensor name '" + record.name + "'");
  }
  index_.emplace(record.name, records_.size());
  records_.push_back(std::move(record));
}

const TensorRecord* WeightStore::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &records_[it->second];
}

const TensorRecord& WeightStore::at(std::string_view name) const {
  if (const TensorRecord* r = find(name)) return *r;
  throw ValidationError("weight store has no tensor '" + std::string(name) + "'");
}

int64_t WeightStore::total_values() const {
  int64_t n = 0;
  for (const auto& r : records_) n += r.count();
  return n;
}

const Section* WeightStore::find_section(std::string_view tag) const {
  for (const Section& s : sections) {
    if (std::string_view(s.tag.data(), 4) == tag) return &s;
  }
  return nullptr;
}

std::vector<uint8_t> encode_weights(const WeightStore& store) {
  const WeightHeader& h = store.header;
  if (!is_valid_provenance(h.provenance)) {
    throw FormatError(FormatErrc::kBadValue, "unknown provenance tag '" + h.provenance + "'");
  }
  Writer w;
  w.raw(kOcwbMagic);
  w.u32(h.version);
  w.str(h.arch_id);
  w.str(h.provenance);
  w.f32(h.bn_epsilon);
  w.str(h.normalization.channel_order);
  w.f32(h.normalization.pixel_scale);
  w.u8(h.normalization.has_mean_std ? 1 : 0);
  for (float v : h.normalization.mean) w.f32(v);
  for (float v : h.normalization.stddev) w.f32(v);
  w.str(h.init_scheme);

  Writer records;
  for (const TensorRecord& r : store.records()) write_record(records, r);
  w.u32(static_cast<uint32_t>(store.records().size()));
  w.u64(records.size());
  w.bytes(records.take());

  w.u32(static_cast<uint32_t>(store.sections.size()));
  for (const Section& s : store.sections) {
    w.raw(s.tag);
    w.u64(s.payload.size());
    w.bytes(s.payload);
  }
  return w.take();
}

WeightStore decode_weights(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  const auto magic = r.bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kOcwbMagic.begin(),
                  [](uint8_t a, char b) { return a == static_cast<uint8_t>(b); })) {
    throw FormatError(FormatErrc::kBadMagic, "not an OCWB file (bad magic)");
  }
  WeightStore store;
  WeightHeader& h = store.header;
  h.version = r.u32("version");
  if (h.version != kOcwbVersion) {
    throw FormatError(FormatErrc::kVersionMismatch,
                      "OCWB version " + std::to_string(h.version) + " is not supported (expected " +
                          std::to_string(kOcwbVersion) + ")");
  }
  h.arch_id = r.str("arch_id");
  h.provenance = r.str("provenance");
  if (!is_valid_provenance(h.provenance)) {
    throw FormatError(FormatErrc::kBadValue, "unknown provenance tag '" + h.provenance + "'");
  }
  h.bn_epsilon = r.f32("bn_epsilon");
  h.normalization.channel_order = r.str("channel_order");
  h.normalization.pixel_scale = r.f32("pixel_scale");
  h.normalization.has_mean_std = r.u8("has_mean_std") != 0;
  for (float& v : h.normalization.mean) v = r.f32("mean");
  for (float& v : h.normalization.stddev) v = r.f32("std");
  h.init_scheme = r.str("init_scheme");

  const uint32_t count = r.u32("record_count");
  const uint64_t declared = r.u64("record_bytes");
  r.need(declared, "records");
  const size_t start = r.pos();
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    rec.name = r.str("tensor name");
    const uint32_t rank = r.u32("rank");
    uint64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32("dims");
      rec.dims.push_back(dim);
      n *= dim;
    }
    if (n > r.remaining() / 4) {
      throw FormatError(FormatErrc::kTruncated,
                        "OCWB truncated inside tensor '" + rec.name + "' payload");
    }
    rec.data.resize(static_cast<size_t>(n));
    for (float& v : rec.data) v = r.f32("tensor data");
    store.add(std::move(rec));
  }
  if (r.pos() - start != declared) {
    throw FormatError(FormatErrc::kBadValue, "record payload is " +
                                                 std::to_string(r.pos() - start) +
                                                 " bytes, header declares " +
                                                 std::to_string(declared));
  }
  const uint32_t sections = r.u32("section_count");
  for (uint32_t i = 0; i < sections; ++i) {
    Section s;
    const auto tag = r.bytes(4, "section tag");
    std::copy(tag.begin(), tag.end(), s.tag.begin());
    const uint64_t len = r.u64("section length");
    const auto payload = r.bytes(len, "section payload");
    s.payload.assign(payload.begin(), payload.end());
    store.sections.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrc::kTrailingBytes,
                      std::to_string(r.remaining()) + " trailing bytes after OCWB content");
  }
  return store;
}

void write_weights(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = encode_weights(store);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

WeightStore read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& e : errors) os << "error: " << e << "\n";
  for (const auto& w : warnings) os << "warning: " << w << "\n";
  return os.str();
}

ValidationReport validate(const WeightStore& store, const NetworkGraph& g) {
  ValidationReport report;
  if (store.header.arch_id != g.arch_id) {
    report.errors.push_back("weights are for arch '" + store.header.arch_id + "', graph is '" +
                            g.arch_id + "'");
  }
  std::vector<bool> used(store.records().size(), false);
  for (const ParamSpec& p : g.parameters()) {
    const TensorRecord* r = store.find(p.name);
    if (r == nullptr) {
      report.errors.push_back("missing tensor '" + p.name + "' " + dims_text(p.dims));
      continue;
    }
    used[static_cast<size_t>(r - store.records().data())] = true;
    if (r->dims != p.dims) {
      report.errors.push_back("tensor '" + p.name + "' has dims " + dims_text(r->dims) +
                              ", layer expects " + dims_text(p.dims));
    }
  }
  for (size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) report.warnings.push_back("unused tensor '" + store.records()[i].name + "'");
  }
  return report;
}

void require_valid(const WeightStore& store, const NetworkGraph& g) {
  const ValidationReport report = validate(store, g);
  if (!report.ok()) {
    std::string msg = g.arch_id + ": " + report.errors.front();
    if (report.errors.size() > 1) {
      msg += " (+" + std::to_string(report.errors.size() - 1) + " more)";
    }
    throw ValidationError(msg);
  }
}

WeightStore random_init(const NetworkGraph& g, uint64_t seed) {
  WeightStore store;
  store.header.arch_id = g.arch_id;
  store.header.provenance = "random-init";
  store.header.init_scheme = "he-uniform;bias=0;prelu=0.25;bn=identity;mt19937_64;seed=" +
                             std::to_string(seed);
  std::mt19937_64 rng(seed);
  // 24 high bits -> [0, 1), identical on every platform.
  auto uniform01 = [&rng] { return static_cast<float>(rng() >> 40) * 0x1.0p-24f; };
  using Role = ParamSpec::Role;
  for (const ParamSpec& p : g.parameters()) {
    TensorRecord r{p.name, p.dims, std::vector<float>(static_cast<size_t>(p.count()))};
    switch (p.role) {
      case Role::kWeight: {
        const float bound = std::sqrt(6.0f / static_cast<float>(std::max<int64_t>(p.fan_in, 1)));
        for (float& v : r.data) v = (2.0f * uniform01() - 1.0f) * bound;
        break;
      }
      case Role::kSlope:
        std::fill(r.data.begin(), r.data.end(), 0.25f);
        break;
      case Role::kBnGamma:
      case Role::kBnVar:
        std::fill(r.data.begin(), r.data.end(), 1.0f);
        break;
      case Role::kBias:
      case Role::kBnBeta:
      case Role::kBnMean:
        break;
    }
    store.add(std::move(r));
  }
  return store;
}

}  // namespace ocsb
