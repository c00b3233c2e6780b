#include "balgan/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "balgan/errors.hpp"

namespace balgan {

namespace fs = std::filesystem;

std::string to_string(Origin origin) { return origin == Origin::real ? "real" : "synthetic"; }

Origin origin_from_string(std::string_view s) {
  if (s == "real") return Origin::real;
  if (s == "synthetic") return Origin::synthetic;
  throw DataError("unknown origin '" + std::string(s) + "' (expected real or synthetic)");
}

std::vector<std::string> DatasetManifest::class_names() const {
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.label);
  return {names.begin(), names.end()};
}

std::map<std::string, int> DatasetManifest::real_counts() const {
  std::map<std::string, int> counts;
  for (const auto& r : records) {
    if (r.origin == Origin::real) ++counts[r.label];
  }
  return counts;
}

fs::path DatasetManifest::resolve(const ManifestRecord& record) const {
  const fs::path p(record.path);
  return p.is_absolute() ? p : root / p;
}

void DatasetManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.path.empty()) throw DataError("manifest record with empty path");
    if (r.label.empty()) throw DataError("manifest record '" + r.path + "' has an empty label");
    if (!seen.insert(r.path).second) throw DataError("duplicate manifest path '" + r.path + "'");
  }
}

DatasetManifest DatasetManifest::filter(Origin origin) const {
  DatasetManifest out;
  out.root = root;
  for (const auto& r : records) {
    if (r.origin == origin) out.records.push_back(r);
  }
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!cur.empty() || was_quoted) throw DataError("stray quote in CSV field");
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      if (was_quoted) throw DataError("text after closing quote in CSV field");
      cur += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return fields;
}

DatasetManifest parse_manifest_csv(std::string_view text, const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != "path,label,origin") {
        throw DataError("manifest line 1: header must be 'path,label,origin', got '" + std::string(line) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    try {
      f = csv_split(line);
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (f.size() != 3) {
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 3 fields, got " +
                      std::to_string(f.size()));
    }
    if (f[0].empty() || f[1].empty()) {
      throw DataError("manifest line " + std::to_string(line_no) + ": empty path or label");
    }
    Origin origin;
    try {
      origin = origin_from_string(f[2]);
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    m.records.push_back({std::move(f[0]), std::move(f[1]), origin});
  }
  if (!header_seen) throw DataError("manifest is empty (missing header)");
  m.validate();
  return m;
}

std::string manifest_to_csv(const DatasetManifest& manifest) {
  std::string out = "path,label,origin\n";
  for (const auto& r : manifest.records) {
    out += csv_escape(r.path) + ',' + csv_escape(r.label) + ',' + to_string(r.origin) + '\n';
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest_csv(ss.str(), path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  manifest.validate();
  const fs::path dest_dir = fs::absolute(path).parent_path();
  DatasetManifest rebased;
  rebased.root = dest_dir;
  for (const auto& r : manifest.records) {
    const fs::path abs = fs::absolute(manifest.resolve(r)).lexically_normal();
    fs::path rel = abs.lexically_relative(dest_dir.lexically_normal());
    rebased.records.push_back({rel.empty() ? abs.generic_string() : rel.generic_string(), r.label, r.origin});
  }
  std::error_code ec;
  fs::create_directories(dest_dir, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << manifest_to_csv(rebased);
}

}  // namespace balgan
