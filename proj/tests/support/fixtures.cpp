#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "balgan/image_codec.hpp"

namespace balgan::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("balgan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

Tensor render_ring_sample(int size, Rng& rng, int* mode) {
  const int k = static_cast<int>(rng.below(8));
  if (mode) *mode = k;
  const double c = (size - 1) / 2.0;
  const double angle = 2.0 * std::numbers::pi * k / 8.0;
  const double cx = c + 0.3 * size * std::cos(angle) + rng.normal(0.0, 0.03 * size);
  const double cy = c + 0.3 * size * std::sin(angle) + rng.normal(0.0, 0.03 * size);
  const double sigma = 0.08 * size;
  Tensor t({1, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      t[static_cast<std::size_t>(y * size + x)] = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
    }
  return t;
}

ImageSet ring_image_set(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  ImageSet set;
  set.images = Tensor({count, 1, size, size});
  const std::size_t per = static_cast<std::size_t>(size) * size;
  for (int i = 0; i < count; ++i) {
    const Tensor img = render_ring_sample(size, rng);
    std::copy(img.data().begin(), img.data().end(), set.images.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    set.labels.push_back(0);
    set.origins.push_back(Origin::real);
    set.paths.push_back("ring_" + std::to_string(i));
  }
  return set;
}

Tensor render_shape(int size, bool square, Rng& rng, const ShapeStyle& style) {
  const double c = (size - 1) / 2.0;
  const double r = rng.uniform(0.22, 0.34) * size;
  const double cx = c + rng.uniform(-0.12, 0.12) * size;
  const double cy = c + rng.uniform(-0.12, 0.12) * size;
  const double contrast = rng.uniform(style.contrast_min, style.contrast_max);
  const double background = rng.uniform(0.05, 0.25);
  Tensor t({1, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      // Signed distance to the boundary, antialiased over one pixel.
      const double dist = square ? std::max(std::abs(dx), std::abs(dy)) - r : std::hypot(dx, dy) - r;
      const double ink = std::clamp(style.filled ? 0.5 - dist : 1.2 - std::abs(dist), 0.0, 1.0);
      const double v = background + contrast * ink + rng.normal(0.0, style.noise);
      t[static_cast<std::size_t>(y * size + x)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return t;
}

namespace {

DatasetManifest write_dataset(const fs::path& dir, const std::map<std::string, int>& counts, std::uint64_t seed,
                              const std::function<Tensor(const std::string&, Rng&)>& render) {
  fs::create_directories(dir);
  DatasetManifest manifest;
  manifest.root = dir;
  std::uint64_t salt = 0;
  for (const auto& [label, count] : counts) {
    Rng rng(mix_seed(seed, ++salt));
    fs::create_directories(dir / label);
    for (int i = 0; i < count; ++i) {
      const std::string rel = label + "/img_" + std::to_string(i) + ".png";
      write_png_gray8(dir / rel, to_gray_image(render(label, rng)));
      manifest.records.push_back({rel, label, Origin::real});
    }
  }
  save_manifest(manifest, dir / "manifest.csv");
  return load_manifest(dir / "manifest.csv");
}

}  // namespace

DatasetManifest write_shape_dataset(const fs::path& dir, const std::map<std::string, int>& counts, int size,
                                    std::uint64_t seed, const std::string& square_class, const ShapeStyle& style) {
  return write_dataset(dir, counts, seed, [&](const std::string& label, Rng& rng) {
    return render_shape(size, label == square_class, rng, style);
  });
}

DatasetManifest write_noise_dataset(const fs::path& dir, const std::map<std::string, int>& counts, int size,
                                    std::uint64_t seed) {
  return write_dataset(dir, counts, seed, [&](const std::string&, Rng& rng) {
    Tensor t({1, size, size});
    for (float& v : t.data()) v = static_cast<float>(rng.uniform());
    return t;
  });
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, int projections, std::uint64_t seed) {
  const int n = a.dim(0);
  if (b.dim(0) != n || a.size() != b.size()) throw std::invalid_argument("sliced_wasserstein: shape mismatch");
  const std::size_t d = a.size() / static_cast<std::size_t>(n);
  Rng rng(seed);
  std::vector<double> per_projection;
  std::vector<double> pa(n), pb(n), dir(d);
  for (int p = 0; p < projections; ++p) {
    double norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int i = 0; i < n; ++i) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        sa += dir[j] * a[i * d + j];
        sb += dir[j] * b[i * d + j];
      }
      pa[i] = sa / norm;
      pb[i] = sb / norm;
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double w = 0.0;
    for (int i = 0; i < n; ++i) w += std::abs(pa[i] - pb[i]);
    per_projection.push_back(w / n);
  }
  std::sort(per_projection.begin(), per_projection.end());
  const std::size_t m = per_projection.size();
  return m % 2 ? per_projection[m / 2] : 0.5 * (per_projection[m / 2 - 1] + per_projection[m / 2]);
}

}  // namespace balgan::testing
