#pragma once

// Dataset manifest: the ordered (image path, class label, origin) ledger that
// every pipeline stage reads and writes. On disk it is a UTF-8 CSV with header
// `path,label,origin` and LF line endings; paths are relative to the
// manifest's own directory.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace balgan {

enum class Origin { real, synthetic };

std::string to_string(Origin origin);
Origin origin_from_string(std::string_view s);

struct ManifestRecord {
  std::string path;
  std::string label;
  Origin origin = Origin::real;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  // Directory that relative record paths resolve against.
  std::filesystem::path root;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  // Distinct labels, sorted.
  std::vector<std::string> class_names() const;
  std::map<std::string, int> real_counts() const;
  std::filesystem::path resolve(const ManifestRecord& record) const;
  // Throws DataError naming the first duplicate path.
  void validate() const;
  // Records with the given origin, same root.
  DatasetManifest filter(Origin origin) const;
};

DatasetManifest parse_manifest_csv(std::string_view text, const std::filesystem::path& root);
std::string manifest_to_csv(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
// Writes the manifest with every path rewritten relative to the destination
// file's directory.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Minimal RFC 4180 helpers shared by the CSV writers in this project.
std::string csv_escape(std::string_view field);
std::vector<std::string> csv_split(std::string_view line);

}  // namespace balgan
