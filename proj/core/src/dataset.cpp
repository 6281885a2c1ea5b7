#include "ocsb/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ocsb/error.hpp"

namespace ocsb {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double parse_coord(const std::string& text, size_t row, std::string_view column) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ValidationError("manifest row " + std::to_string(row) + ": " + std::string(column) +
                          " '" + text + "' is not a number");
  }
  return v;
}

}  // namespace

std::filesystem::path DatasetManifest::resolve(const SampleRecord& s) const {
  std::filesystem::path p(s.path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::optional<int> parse_gender(std::string_view text) {
  const std::string t = lower(trim(text));
  if (t.empty() || t == "u") return std::nullopt;
  if (t == "f" || t == "female") return 0;
  if (t == "m" || t == "male") return 1;
  throw ValidationError("unknown gender label '" + std::string(text) + "'");
}

std::optional<int> parse_age_group(std::string_view text) {
  std::string t = trim(text);
  if (t.empty() || lower(t) == "none") return std::nullopt;
  if (t.size() == 1 && t[0] >= '0' && t[0] <= '7') return t[0] - '0';
  // Adience writes groups as "(25, 32)".
  std::string compact;
  for (char c : t) {
    if (c != '(' && c != ')' && c != ' ') compact += c == ',' ? '-' : c;
  }
  for (size_t i = 0; i < kAgeGroups.size(); ++i) {
    if (compact == kAgeGroups[i]) return static_cast<int>(i);
  }
  throw ValidationError("unknown age group '" + std::string(text) + "'");
}

DatasetManifest parse_manifest(std::string_view csv_text, std::filesystem::path base_dir) {
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) throw ValidationError("manifest is empty (header row required)");
  const auto& header = rows.front();
  if (header.size() != kManifestColumns.size() ||
      !std::equal(header.begin(), header.end(), kManifestColumns.begin(),
                  [](const std::string& a, std::string_view b) { return trim(a) == b; })) {
    std::string expect;
    for (auto c : kManifestColumns) expect += (expect.empty() ? "" : ",") + std::string(c);
    throw ValidationError("manifest header must be: " + expect);
  }
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() == 1 && trim(f[0]).empty()) continue;
    if (f.size() != kManifestColumns.size()) {
      throw ValidationError("manifest row " + std::to_string(r) + " has " +
                            std::to_string(f.size()) + " fields, expected " +
                            std::to_string(kManifestColumns.size()));
    }
    SampleRecord s;
    s.path = f[0];
    s.subject_id = f[1];
    s.album_id = f[2];
    const std::string fold = trim(f[3]);
    if (fold.size() != 1 || fold[0] < '0' || fold[0] >= '0' + kFoldCount) {
      throw ValidationError("manifest row " + std::to_string(r) + ": fold '" + f[3] +
                            "' must be 0-4");
    }
    s.fold = fold[0] - '0';
    try {
      s.gender = parse_gender(f[4]);
      s.age_group = parse_age_group(f[5]);
    } catch (const ValidationError& e) {
      throw ValidationError("manifest row " + std::to_string(r) + ": " + e.what());
    }
    std::array<double, 10> c{};
    for (size_t i = 0; i < c.size(); ++i) c[i] = parse_coord(trim(f[6 + i]), r, kManifestColumns[6 + i]);
    s.landmarks = {{c[0], c[1]}, {c[2], c[3]}, {c[4], c[5]}, {c[6], c[7]}, {c[8], c[9]}};
    m.samples.push_back(std::move(s));
  }
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string manifest_to_csv(const DatasetManifest& m) {
  std::ostringstream os;
  for (size_t i = 0; i < kManifestColumns.size(); ++i) os << (i ? "," : "") << kManifestColumns[i];
  os << "\n";
  for (const SampleRecord& s : m.samples) {
    os << csv::escape(s.path) << "," << csv::escape(s.subject_id) << ","
       << csv::escape(s.album_id) << "," << s.fold << ","
       << (s.gender ? kGenderClasses[static_cast<size_t>(*s.gender)] : "") << ","
       << (s.age_group ? kAgeGroups[static_cast<size_t>(*s.age_group)] : "");
    for (const Point& p : s.landmarks.points()) {
      os << "," << csv::format_double(p.x) << "," << csv::format_double(p.y);
    }
    os << "\n";
  }
  return os.str();
}

std::vector<std::string> album_overlaps(const DatasetManifest& m) {
  std::map<std::string, std::set<int>> folds;
  for (const SampleRecord& s : m.samples) {
    if (!s.album_id.empty()) folds[s.album_id].insert(s.fold);
  }
  std::vector<std::string> out;
  for (const auto& [album, set] : folds) {
    if (set.size() > 1) out.push_back(album);
  }
  return out;
}

namespace csv {

std::vector<std::vector<std::string>> parse(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ValidationError("CSV ends inside a quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace csv

}  // namespace ocsb
