#pragma once

// Binary container shared by GAN checkpoints and classifier model files.
//
//   "BALGANCK"                      8-byte magic
//   u32 format version              little-endian
//   u64 metadata length             little-endian
//   metadata                        JSON: {"meta": {...}, "tensors": [{name, shape, offset, count}]}
//   payload                         little-endian float32, offsets relative to payload start
//   u64 FNV-1a digest               over every preceding byte

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "balgan/tensor.hpp"
#include "json.hpp"

namespace balgan {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive);
// Throws CheckpointError on truncation, bad magic, version mismatch, digest
// failure or an inconsistent tensor directory.
TensorArchive decode_archive(std::span<const std::uint8_t> bytes);

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace balgan
