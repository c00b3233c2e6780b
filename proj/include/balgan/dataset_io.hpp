#pragma once

// Image ingestion and deterministic batching.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "balgan/image_codec.hpp"
#include "balgan/manifest.hpp"
#include "balgan/tensor.hpp"

namespace balgan {

// Decode, bilinearly resize to target_size x target_size (half-pixel centres)
// and scale to [0, 1]. Result shape 1 x S x S.
Tensor load_image(const std::filesystem::path& path, int target_size);
Tensor resize_bilinear(const GrayImage& image, int target_size);

// [0,1] image tensor (any leading shape) -> 8-bit grayscale, rounding.
GrayImage to_gray_image(const Tensor& image01);

enum class Normalization {
  gan,         // x -> 2x - 1, range [-1, 1]
  classifier,  // unchanged, range [0, 1]
};

Tensor to_gan_range(const Tensor& image01);
Tensor from_gan_range(const Tensor& image_pm1);

// Images decoded into memory, all in [0, 1].
struct ImageSet {
  Tensor images;  // N x 1 x S x S
  std::vector<int> labels;
  std::vector<Origin> origins;
  std::vector<std::string> paths;

  std::size_t size() const { return labels.size(); }
  int image_size() const { return images.rank() == 4 ? images.dim(2) : 0; }
  ImageSet subset(std::span<const std::size_t> indices) const;
  Tensor image(std::size_t index) const;
};

// Loads every record. `label_index` maps class names to integer labels;
// classes absent from the map get label -1.
ImageSet load_image_set(const DatasetManifest& manifest, int image_size,
                        const std::map<std::string, int>& label_index = {});
ImageSet concat(const ImageSet& a, const ImageSet& b);

// Permutation of [0, n) for (seed, epoch); independent of any other stream.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch);

struct Batch {
  Tensor images;  // B x 1 x S x S, normalized
  Tensor labels;  // B, as floats
  std::vector<std::size_t> indices;
};

// Fixed-order batch sequence for one epoch. The shuffle permutation is
// computed up front; the final partial batch is emitted.
class BatchStream {
 public:
  using Fetch = std::function<Tensor(std::size_t index)>;

  BatchStream(std::size_t count, Fetch fetch, std::vector<int> labels, int batch_size, std::uint64_t seed, int epoch,
              Normalization normalization);

  std::optional<Batch> next();
  std::size_t batch_count() const;

 private:
  Fetch fetch_;
  std::vector<int> labels_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int batch_size_;
  Normalization normalization_;
};

BatchStream make_batches(const ImageSet& set, int batch_size, std::uint64_t seed, int epoch,
                         Normalization normalization);
// Lazy variant: images are decoded when their batch is requested, so a
// missing file surfaces then, with its path.
BatchStream make_batches(const DatasetManifest& manifest, int image_size, const std::map<std::string, int>& label_index,
                         int batch_size, std::uint64_t seed, int epoch, Normalization normalization);

}  // namespace balgan
