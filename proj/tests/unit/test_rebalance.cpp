#include <set>

#include "balgan/errors.hpp"
#include "balgan/image_codec.hpp"
#include "balgan/rebalance.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace balgan;
using namespace balgan::testing;
namespace fs = std::filesystem;

namespace {

DatasetManifest counts_manifest(const std::map<std::string, int>& counts) {
  DatasetManifest m;
  m.root = "/data";
  for (const auto& [label, n] : counts)
    for (int i = 0; i < n; ++i) m.records.push_back({label + "/" + std::to_string(i) + ".png", label, Origin::real});
  return m;
}

Checkpoint tiny_checkpoint(std::uint64_t seed = 1) {
  GanSpec spec;
  spec.image_size = 16;
  spec.base_feature_maps = 2;
  spec.latent.dim = 4;
  TrainConfig cfg;
  cfg.seed = seed;
  return GanTrainer(spec, cfg).checkpoint();
}

}  // namespace

TEST_SUITE("plan") {
  TEST_CASE("table-shaped counts") {
    const RebalancePlan p = compute_plan({{"No Findings", 63115}, {"Pneumonia", 322}}, 30000);
    const ClassPlan& nf = p.classes.at("No Findings");
    const ClassPlan& pn = p.classes.at("Pneumonia");
    CHECK(nf.drop_real == 33115);
    CHECK(nf.keep_real == 30000);
    CHECK(nf.synthesize == 0);
    CHECK(pn.keep_real == 322);
    CHECK(pn.synthesize == 29678);
    CHECK(pn.drop_real == 0);
    CHECK(p.total_synthesize() == 29678);
    CHECK(p.total_drop() == 33115);
  }

  TEST_CASE("identity and no-drop plans") {
    const RebalancePlan same = compute_plan({{"a", 10}}, 10);
    CHECK(same.classes.at("a") == ClassPlan{10, 10, 0, 0, 10});
    const RebalancePlan up = compute_plan({{"a", 3}, {"b", 7}}, 20);
    CHECK(up.total_drop() == 0);
  }

  TEST_CASE("plan invariants on random counts") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
      std::map<std::string, int> counts;
      const int k = 1 + static_cast<int>(rng.below(4));
      for (int c = 0; c < k; ++c) counts["c" + std::to_string(c)] = static_cast<int>(rng.below(1000));
      const int target = 1 + static_cast<int>(rng.below(1200));
      for (const auto& [label, c] : compute_plan(counts, target).classes) {
        CHECK(c.keep_real + c.synthesize == target);
        CHECK(c.keep_real + c.drop_real == counts[label]);
        CHECK(c.keep_real <= counts[label]);
        CHECK(c.synthesize >= 0);
        CHECK(c.drop_real >= 0);
        CHECK((c.synthesize == 0 || c.drop_real == 0));
      }
    }
  }

  TEST_CASE("invalid inputs") {
    CHECK_THROWS_AS(compute_plan({{"a", 3}}, 0), ConfigError);
    CHECK_THROWS_AS(compute_plan({}, 5), DataError);
  }

  TEST_CASE("default target") {
    CHECK(default_target({{"a", 63115}, {"b", 322}}) == 30000);
    CHECK(default_target({{"a", 500}, {"b", 20}}) == 500);
    CHECK(default_target({{"a", 500}, {"b", 20}}, 100) == 100);
  }

  TEST_CASE("plan csv") {
    const std::string csv = format_plan(compute_plan({{"No Findings", 63115}, {"Pneumonia", 322}}, 30000));
    CHECK(csv ==
          "class,available_real,keep_real,drop_real,synthesize,target\n"
          "No Findings,63115,30000,33115,0,30000\n"
          "Pneumonia,322,322,0,29678,30000\n");
  }
}

TEST_SUITE("under-sampling") {
  TEST_CASE("keeps the planned number without duplicates, order preserved") {
    const DatasetManifest m = counts_manifest({{"a", 50}, {"b", 5}});
    const RebalancePlan plan = compute_plan(m.real_counts(), 20);
    const DatasetManifest out = random_under_sample(m, plan, 3);
    const auto counts = audit(out);
    CHECK(counts.at("a") == AuditCounts{20, 0});
    CHECK(counts.at("b") == AuditCounts{5, 0});
    std::set<std::string> paths;
    std::size_t last = 0;
    for (const auto& r : out.records) {
      CHECK(paths.insert(r.path).second);
      const auto pos = static_cast<std::size_t>(
          std::find(m.records.begin(), m.records.end(), r) - m.records.begin());
      REQUIRE(pos < m.records.size());
      CHECK(pos >= last);
      last = pos;
    }
    CHECK(random_under_sample(m, plan, 3).records == out.records);
    CHECK_FALSE(random_under_sample(m, plan, 4).records == out.records);
  }

  TEST_CASE("keep all leaves the manifest unchanged") {
    const DatasetManifest m = counts_manifest({{"a", 4}, {"b", 2}});
    CHECK(random_under_sample(m, compute_plan(m.real_counts(), 4), 9).records == m.records);
  }

  TEST_CASE("selection is uniform: 1 of 2 over 1000 seeds") {
    const DatasetManifest m = counts_manifest({{"a", 2}});
    const RebalancePlan plan = compute_plan(m.real_counts(), 1);
    int first = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed)
      if (random_under_sample(m, plan, seed).records.front() == m.records.front()) ++first;
    CHECK(first >= 440);
    CHECK(first <= 560);
  }

  TEST_CASE("plan must describe the manifest") {
    const DatasetManifest m = counts_manifest({{"a", 4}});
    CHECK_THROWS_AS(random_under_sample(m, compute_plan({{"a", 5}}, 2), 1), ContractError);
    CHECK_THROWS_AS(random_under_sample(m, compute_plan({{"b", 4}}, 2), 1), ContractError);
    DatasetManifest with_synth = m;
    with_synth.records.push_back({"s.png", "a", Origin::synthetic});
    CHECK_THROWS_AS(random_under_sample(with_synth, compute_plan({{"a", 4}}, 2), 1), ContractError);
  }
}

TEST_SUITE("synthesis") {
  TEST_CASE("writes exactly the planned images") {
    TempDir dir("synth");
    DatasetManifest m = counts_manifest({{"No Findings", 8}, {"Pneumonia", 3}});
    m.root = dir.path();
    const RebalancePlan plan = compute_plan(m.real_counts(), 8);
    const DatasetManifest out =
        synth_oversample(m, plan, {{"Pneumonia", tiny_checkpoint()}}, dir / "synthetic", 5, 16);
    CHECK(out.size() == 16);
    const auto counts = audit(out);
    CHECK(counts.at("Pneumonia") == AuditCounts{3, 5});
    CHECK(counts.at("No Findings") == AuditCounts{8, 0});
    int synthetic = 0;
    for (const auto& r : out.records) {
      if (r.origin != Origin::synthetic) continue;
      ++synthetic;
      CHECK(r.label == "Pneumonia");
      const GrayImage img = read_gray_image(out.resolve(r));
      CHECK(img.width == 16);
      CHECK(img.height == 16);
    }
    CHECK(synthetic == 5);
    CHECK(fs::exists(dir / "synthetic" / "synth_Pneumonia_4.png"));
    CHECK_FALSE(fs::exists(dir / "synthetic" / "synth_Pneumonia_5.png"));
  }

  TEST_CASE("nothing to synthesize writes nothing") {
    TempDir dir("nosynth");
    const DatasetManifest m = counts_manifest({{"a", 4}});
    const DatasetManifest out = synth_oversample(m, compute_plan(m.real_counts(), 4), {}, dir / "s", 1, 16);
    CHECK(out.records == m.records);
    CHECK_FALSE(fs::exists(dir / "s"));
  }

  TEST_CASE("deterministic in seed") {
    TempDir a("det_a"), b("det_b");
    const DatasetManifest m = counts_manifest({{"x", 1}});
    const RebalancePlan plan = compute_plan(m.real_counts(), 4);
    const Checkpoint ck = tiny_checkpoint();
    synth_oversample(m, plan, {{"x", ck}}, a.path(), 7, 16);
    synth_oversample(m, plan, {{"x", ck}}, b.path(), 7, 16);
    for (int i = 0; i < 3; ++i) {
      const std::string name = "synth_x_" + std::to_string(i) + ".png";
      CHECK(read_file(a / name) == read_file(b / name));
    }
  }

  TEST_CASE("missing checkpoint or geometry mismatch") {
    TempDir dir("mismatch");
    const DatasetManifest m = counts_manifest({{"x", 1}});
    const RebalancePlan plan = compute_plan(m.real_counts(), 2);
    CHECK_THROWS_AS(synth_oversample(m, plan, {}, dir.path(), 1, 16), DataError);
    CHECK_THROWS_AS(synth_oversample(m, plan, {{"x", tiny_checkpoint()}}, dir.path(), 1, 32), DataError);
  }

  TEST_CASE("sanitized labels") {
    CHECK(sanitize_label("No Findings") == "No_Findings");
    CHECK(sanitize_label("a/b") == "a_b");
    CHECK(sanitize_label("") == "class");
  }
}

TEST_SUITE("audit") {
  TEST_CASE("counts and csv") {
    CHECK(audit(DatasetManifest{}).empty());
    DatasetManifest m = counts_manifest({{"a", 2}});
    m.records.push_back({"s.png", "a", Origin::synthetic});
    const auto counts = audit(m);
    CHECK(counts.at("a") == AuditCounts{2, 1});
    CHECK(format_audit(counts) == "class,real,synthetic,total\na,2,1,3\n");
  }

  TEST_CASE("full rebalance at table scale ends with exact targets") {
    TempDir dir("table");
    DatasetManifest m = counts_manifest({{"No Findings", 63115}, {"Pneumonia", 322}});
    m.root = dir.path();
    const RebalancePlan plan = compute_plan(m.real_counts(), 30000);
    const DatasetManifest kept = random_under_sample(m, plan, 1);
    const auto kept_counts = audit(kept);
    CHECK(kept_counts.at("No Findings").real == plan.classes.at("No Findings").keep_real);
    CHECK(kept_counts.at("Pneumonia").real == 322);
  }
}
