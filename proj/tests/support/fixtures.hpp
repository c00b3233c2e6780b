#pragma once

// Shared test fixtures: scratch directories, synthetic image corpora written
// as PNG datasets, and the sliced-Wasserstein distance.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "balgan/dataset_io.hpp"
#include "balgan/manifest.hpp"
#include "balgan/rng.hpp"

namespace balgan::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

// S x S image of a Gaussian blob whose centre sits on one of eight equally
// spaced points around the image centre (radius 0.3 S), jittered.
Tensor render_ring_sample(int size, Rng& rng, int* mode = nullptr);
ImageSet ring_image_set(int count, int size, std::uint64_t seed);

struct ShapeStyle {
  double contrast_min = 0.35;
  double contrast_max = 0.8;
  double noise = 0.12;  // per-pixel Gaussian sigma
  bool filled = false;  // solid shapes instead of outlines
};

// Noisy shapes for the two-class corpus. Class 0 draws a circle, class 1 an
// axis-aligned square; position, size, contrast and noise vary.
Tensor render_shape(int size, bool square, Rng& rng, const ShapeStyle& style = {});

// Writes `counts[label]` PNG images per class under dir/<label>/ and a
// manifest.csv in dir; returns the loaded manifest. Deterministic in seed.
DatasetManifest write_shape_dataset(const std::filesystem::path& dir, const std::map<std::string, int>& counts,
                                    int size, std::uint64_t seed, const std::string& square_class = "square",
                                    const ShapeStyle& style = {});

// Arbitrary small images (random gray noise) for I/O tests.
DatasetManifest write_noise_dataset(const std::filesystem::path& dir, const std::map<std::string, int>& counts,
                                    int size, std::uint64_t seed);

// Median over `projections` random unit directions of the 1-d Wasserstein-1
// distance (sorted-sample L1) between the rows of a and b (equal counts).
double sliced_wasserstein(const Tensor& a, const Tensor& b, int projections, std::uint64_t seed);

}  // namespace balgan::testing
