#include "balgan/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "balgan/errors.hpp"
#include "balgan/rng.hpp"

namespace balgan {

Tensor resize_bilinear(const GrayImage& image, int target_size) {
  if (target_size < 1) throw ConfigError("target image size must be >= 1");
  const int w = image.width, h = image.height;
  Tensor out(Shape{1, target_size, target_size});
  if (w == target_size && h == target_size) {
    for (std::size_t i = 0; i < image.pixels.size(); ++i) out[i] = static_cast<float>(image.pixels[i]) / 255.0f;
    return out;
  }
  const double sx = static_cast<double>(w) / target_size;
  const double sy = static_cast<double>(h) / target_size;
  auto px = [&](int x, int y) { return static_cast<double>(image.pixels[static_cast<std::size_t>(y) * w + x]); };
  for (int y = 0; y < target_size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < target_size; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      const double top = px(x0, y0) * (1 - tx) + px(x1, y0) * tx;
      const double bottom = px(x0, y1) * (1 - tx) + px(x1, y1) * tx;
      out[static_cast<std::size_t>(y) * target_size + x] = static_cast<float>((top * (1 - ty) + bottom * ty) / 255.0);
    }
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path, int target_size) {
  return resize_bilinear(read_gray_image(path), target_size);
}

GrayImage to_gray_image(const Tensor& image01) {
  if (image01.rank() < 2) throw ShapeError("to_gray_image needs at least 2 dimensions");
  GrayImage g;
  g.height = image01.dim(-2);
  g.width = image01.dim(-1);
  if (image01.size() != static_cast<std::size_t>(g.width) * g.height) {
    throw ShapeError("to_gray_image expects a single image, got " + shape_to_string(image01.shape()));
  }
  g.pixels.resize(image01.size());
  for (std::size_t i = 0; i < image01.size(); ++i) {
    const float v = std::clamp(image01[i], 0.0f, 1.0f);
    g.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return g;
}

Tensor to_gan_range(const Tensor& image01) {
  Tensor out(image01.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0f * image01[i] - 1.0f;
  return out;
}

Tensor from_gan_range(const Tensor& image_pm1) {
  Tensor out(image_pm1.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (image_pm1[i] + 1.0f) * 0.5f;
  return out;
}

ImageSet ImageSet::subset(std::span<const std::size_t> indices) const {
  ImageSet out;
  const int s = image_size();
  out.images = Tensor(Shape{static_cast<int>(indices.size()), 1, s, s});
  const std::size_t per = static_cast<std::size_t>(s) * s;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw ContractError("ImageSet::subset index out of range");
    std::memcpy(out.images.ptr() + k * per, images.ptr() + i * per, per * sizeof(float));
    out.labels.push_back(labels[i]);
    out.origins.push_back(origins[i]);
    out.paths.push_back(paths[i]);
  }
  return out;
}

Tensor ImageSet::image(std::size_t index) const {
  const int s = image_size();
  const std::size_t per = static_cast<std::size_t>(s) * s;
  return Tensor(Shape{1, s, s}, std::vector<float>(images.ptr() + index * per, images.ptr() + (index + 1) * per));
}

ImageSet load_image_set(const DatasetManifest& manifest, int image_size, const std::map<std::string, int>& label_index) {
  ImageSet set;
  const int n = static_cast<int>(manifest.size());
  set.images = Tensor(Shape{n, 1, image_size, image_size});
  const std::size_t per = static_cast<std::size_t>(image_size) * image_size;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& r = manifest.records[i];
    const Tensor img = load_image(manifest.resolve(r), image_size);
    std::memcpy(set.images.ptr() + i * per, img.ptr(), per * sizeof(float));
    auto it = label_index.find(r.label);
    set.labels.push_back(it == label_index.end() ? -1 : it->second);
    set.origins.push_back(r.origin);
    set.paths.push_back(r.path);
  }
  return set;
}

ImageSet concat(const ImageSet& a, const ImageSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.image_size() != b.image_size()) throw ShapeError("concat: image sizes differ");
  ImageSet out;
  const int s = a.image_size();
  out.images = Tensor(Shape{static_cast<int>(a.size() + b.size()), 1, s, s});
  std::memcpy(out.images.ptr(), a.images.ptr(), a.images.size() * sizeof(float));
  std::memcpy(out.images.ptr() + a.images.size(), b.images.ptr(), b.images.size() * sizeof(float));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.origins = a.origins;
  out.origins.insert(out.origins.end(), b.origins.begin(), b.origins.end());
  out.paths = a.paths;
  out.paths.insert(out.paths.end(), b.paths.begin(), b.paths.end());
  return out;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5eed0000ull + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

BatchStream::BatchStream(std::size_t count, Fetch fetch, std::vector<int> labels, int batch_size, std::uint64_t seed,
                         int epoch, Normalization normalization)
    : fetch_(std::move(fetch)),
      labels_(std::move(labels)),
      order_(epoch_permutation(count, seed, epoch)),
      batch_size_(batch_size),
      normalization_(normalization) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (labels_.size() != count) throw ContractError("BatchStream: label count mismatch");
}

std::size_t BatchStream::batch_count() const {
  return (order_.size() + static_cast<std::size_t>(batch_size_) - 1) / static_cast<std::size_t>(batch_size_);
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  Batch batch;
  std::vector<Tensor> items;
  batch.labels = Tensor(Shape{static_cast<int>(end - cursor_)});
  for (std::size_t k = cursor_; k < end; ++k) {
    const std::size_t i = order_[k];
    items.push_back(fetch_(i));
    batch.labels[k - cursor_] = static_cast<float>(labels_[i]);
    batch.indices.push_back(i);
  }
  cursor_ = end;
  batch.images = stack(items);
  if (normalization_ == Normalization::gan) batch.images = to_gan_range(batch.images);
  return batch;
}

BatchStream make_batches(const ImageSet& set, int batch_size, std::uint64_t seed, int epoch,
                         Normalization normalization) {
  return BatchStream(
      set.size(), [&set](std::size_t i) { return set.image(i); }, set.labels, batch_size, seed, epoch, normalization);
}

BatchStream make_batches(const DatasetManifest& manifest, int image_size, const std::map<std::string, int>& label_index,
                         int batch_size, std::uint64_t seed, int epoch, Normalization normalization) {
  std::vector<int> labels;
  for (const auto& r : manifest.records) {
    auto it = label_index.find(r.label);
    labels.push_back(it == label_index.end() ? -1 : it->second);
  }
  return BatchStream(
      manifest.size(),
      [manifest, image_size](std::size_t i) { return load_image(manifest.resolve(manifest.records[i]), image_size); },
      std::move(labels), batch_size, seed, epoch, normalization);
}

}  // namespace balgan
