#include "balgan/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "balgan/errors.hpp"

namespace balgan {

namespace {

constexpr char kMagic[8] = {'B', 'A', 'L', 'G', 'A', 'N', 'C', 'K'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint8_t> encode_archive(const TensorArchive& archive) {
  nlohmann::json directory = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    directory.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    offset += t.size() * sizeof(float);
  }
  const nlohmann::json header = {{"meta", archive.meta}, {"tensors", directory}};
  const std::string text = header.dump(1);

  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 + 8 + text.size() + offset + 8);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kArchiveVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : archive.tensors) {
    for (float f : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  put_le<std::uint64_t>(out, fnv1a64(out));
  return out;
}

TensorArchive decode_archive(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kFixed = 8 + 4 + 8;
  if (bytes.size() < kFixed + 8) throw CheckpointError("archive truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw CheckpointError("not a balgan archive (bad magic)");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kArchiveVersion) {
    throw CheckpointError("archive format version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kArchiveVersion) + ")");
  }
  const auto meta_len = get_le<std::uint64_t>(bytes, 12);
  if (meta_len > bytes.size() - kFixed - 8) throw CheckpointError("archive truncated inside metadata");
  const std::size_t body = bytes.size() - 8;
  const auto stored = get_le<std::uint64_t>(bytes, body);
  if (fnv1a64(bytes.first(body)) != stored) throw CheckpointError("archive digest mismatch (corrupt or truncated file)");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kFixed, bytes.begin() + kFixed + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("archive metadata unreadable: ") + e.what());
  }
  const std::size_t payload = kFixed + meta_len;
  const std::size_t payload_len = body - payload;

  TensorArchive archive;
  try {
    archive.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (count != numel(shape) || offset + count * sizeof(float) > payload_len) {
        throw CheckpointError("tensor '" + name + "' lies outside the archive payload");
      }
      std::vector<float> data(count);
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, payload + offset + i * sizeof(float)));
      }
      archive.tensors.emplace(name, Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("archive directory malformed: ") + e.what());
  }
  return archive;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  const auto bytes = encode_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open archive '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

}  // namespace balgan
