#include "balgan/rebalance.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "balgan/errors.hpp"
#include "balgan/image_codec.hpp"
#include "balgan/rng.hpp"

namespace balgan {

int RebalancePlan::total_synthesize() const {
  int total = 0;
  for (const auto& [_, c] : classes) total += c.synthesize;
  return total;
}

int RebalancePlan::total_drop() const {
  int total = 0;
  for (const auto& [_, c] : classes) total += c.drop_real;
  return total;
}

RebalancePlan compute_plan(const std::map<std::string, int>& counts, int target) {
  if (target < 1) throw ConfigError("rebalance target must be >= 1");
  if (counts.empty()) throw DataError("cannot plan a rebalance for an empty dataset");
  RebalancePlan plan;
  for (const auto& [label, count] : counts) {
    if (count < 0) throw ContractError("negative class count for '" + label + "'");
    ClassPlan c;
    c.available_real = count;
    c.target = target;
    if (count > target) {
      c.keep_real = target;
      c.drop_real = count - target;
    } else {
      c.keep_real = count;
      c.synthesize = target - count;
    }
    plan.classes.emplace(label, c);
  }
  return plan;
}

int default_target(const std::map<std::string, int>& counts, int cap) {
  int largest = 0;
  for (const auto& [_, c] : counts) largest = std::max(largest, c);
  return std::min(largest, cap);
}

DatasetManifest random_under_sample(const DatasetManifest& manifest, const RebalancePlan& plan, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.origin != Origin::real) {
      throw ContractError("under-sampling expects real records only; found synthetic '" + r.path + "'");
    }
    by_class[r.label].push_back(i);
  }
  for (const auto& [label, indices] : by_class) {
    auto it = plan.classes.find(label);
    if (it == plan.classes.end()) throw ContractError("plan has no entry for class '" + label + "'");
    if (it->second.available_real != static_cast<int>(indices.size()) ||
        it->second.keep_real > static_cast<int>(indices.size())) {
      throw ContractError("plan expects " + std::to_string(it->second.available_real) + " real '" + label +
                          "' records, manifest has " + std::to_string(indices.size()));
    }
  }
  for (const auto& [label, c] : plan.classes) {
    if (!by_class.count(label) && c.available_real != 0) {
      throw ContractError("plan expects real '" + label + "' records, manifest has none");
    }
  }

  std::vector<bool> keep(manifest.records.size(), false);
  for (const auto& [label, indices] : by_class) {
    const int k = plan.classes.at(label).keep_real;
    // Partial Fisher-Yates over positions; each class draws from its own stream.
    std::uint64_t salt = 0;
    for (unsigned char ch : label) salt = salt * 131 + ch;
    Rng rng(mix_seed(seed, salt));
    std::vector<std::size_t> pool = indices;
    for (int j = 0; j < k; ++j) {
      const std::size_t pick = j + rng.below(pool.size() - static_cast<std::size_t>(j));
      std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
      keep[pool[static_cast<std::size_t>(j)]] = true;
    }
  }
  DatasetManifest out;
  out.root = manifest.root;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (keep[i]) out.records.push_back(manifest.records[i]);
  }
  return out;
}

std::string sanitize_label(const std::string& label) {
  std::string out;
  for (unsigned char ch : label) out += std::isalnum(ch) || ch == '-' || ch == '_' ? static_cast<char>(ch) : '_';
  return out.empty() ? "class" : out;
}

DatasetManifest synth_oversample(const DatasetManifest& manifest, const RebalancePlan& plan,
                                 const CheckpointMap& checkpoints, const std::filesystem::path& out_dir,
                                 std::uint64_t seed, int image_size) {
  DatasetManifest out = manifest;
  if (plan.total_synthesize() == 0) return out;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  const auto root = out.root.empty() ? std::filesystem::current_path() : std::filesystem::absolute(out.root);
  for (const auto& [label, c] : plan.classes) {
    if (c.synthesize == 0) continue;
    auto it = checkpoints.find(label);
    if (it == checkpoints.end()) {
      throw DataError("no generator checkpoint for class '" + label + "' (" + std::to_string(c.synthesize) +
                      " samples needed)");
    }
    const Checkpoint& ck = it->second;
    if (ck.spec.image_size != image_size || ck.spec.channels != 1) {
      throw DataError("checkpoint for '" + label + "' produces " + std::to_string(ck.spec.channels) + "x" +
                      std::to_string(ck.spec.image_size) + "x" + std::to_string(ck.spec.image_size) +
                      " images; expected 1x" + std::to_string(image_size) + "x" + std::to_string(image_size));
    }
    std::uint64_t salt = 0;
    for (unsigned char ch : label) salt = salt * 131 + ch;
    const Tensor samples = generate_samples(ck, c.synthesize, mix_seed(seed, salt));
    const std::size_t per = static_cast<std::size_t>(image_size) * image_size;
    const std::string stem = sanitize_label(label);
    for (int i = 0; i < c.synthesize; ++i) {
      Tensor img(Shape{image_size, image_size},
                 std::vector<float>(samples.ptr() + i * per, samples.ptr() + (i + 1) * per));
      const auto file = out_dir / ("synth_" + stem + "_" + std::to_string(i) + ".png");
      write_png_gray8(file, to_gray_image(from_gan_range(img)));
      const auto rel = std::filesystem::absolute(file).lexically_relative(root);
      out.records.push_back({rel.generic_string(), label, Origin::synthetic});
    }
  }
  out.validate();
  return out;
}

std::map<std::string, AuditCounts> audit(const DatasetManifest& manifest) {
  std::map<std::string, AuditCounts> out;
  for (const auto& r : manifest.records) {
    auto& c = out[r.label];
    (r.origin == Origin::real ? c.real : c.synthetic)++;
  }
  return out;
}

std::string format_plan(const RebalancePlan& plan) {
  std::ostringstream os;
  os << "class,available_real,keep_real,drop_real,synthesize,target\n";
  for (const auto& [label, c] : plan.classes) {
    os << csv_escape(label) << ',' << c.available_real << ',' << c.keep_real << ',' << c.drop_real << ','
       << c.synthesize << ',' << c.target << '\n';
  }
  return os.str();
}

std::string format_audit(const std::map<std::string, AuditCounts>& counts) {
  std::ostringstream os;
  os << "class,real,synthetic,total\n";
  for (const auto& [label, c] : counts) {
    os << csv_escape(label) << ',' << c.real << ',' << c.synthetic << ',' << c.total() << '\n';
  }
  return os.str();
}

}  // namespace balgan
