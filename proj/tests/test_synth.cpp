#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "fixtures.hpp"
#include "spn/error.hpp"
#include "spn/reprojection.hpp"
#include "spn/synth.hpp"

using namespace spn;
using namespace spn::synth;

namespace {

SynthConfig small_config(int per_class, std::uint64_t seed = 7) {
  SynthConfig c;
  c.sequences_per_class = per_class;
  c.seed = seed;
  return c;
}

bool same_sequence(const SequenceSample& a, const SequenceSample& b) {
  if (a.sequence_id != b.sequence_id || a.label != b.label || a.frames.size() != b.frames.size()) return false;
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    if (a.frames[k].pixels != b.frames[k].pixels) return false;
    for (int v = 0; v < 3; ++v) {
      if (!identical(a.depth_maps[v][k], b.depth_maps[v][k])) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("class names") {
  CHECK(class_name(0) == "special_transport");
  CHECK(class_name(5) == "semitrailer");
  CHECK(class_from_name("truck") == 4);
  CHECK_THROWS_AS(class_from_name("bicycle"), Error);
}

TEST_CASE("stratified split") {
  const auto d = generate_dataset(small_config(10));
  CHECK(d.train.size() == 48);
  CHECK(d.test.size() == 12);
  std::array<int, 6> test_per_class{};
  for (const auto& s : d.test) test_per_class[s.label]++;
  for (int c : test_per_class) CHECK(c == 2);
  std::set<int> ids;
  for (const auto& s : d.train) ids.insert(s.sequence_id);
  for (const auto& s : d.test) CHECK(ids.count(s.sequence_id) == 0);
}

TEST_CASE("sequence invariants") {
  const auto d = generate_dataset(small_config(4));
  for (const auto* split : {&d.train, &d.test}) {
    for (const auto& s : *split) {
      CHECK(s.frames.size() >= 3);
      CHECK(s.frames.size() <= 10);
      for (const auto& maps : s.depth_maps) {
        REQUIRE(maps.size() == s.frames.size());
        for (const auto& m : maps) {
          CHECK(m.width() == 64);
          CHECK(m.height() == 64);
        }
      }
      for (const auto& f : s.frames) CHECK(f.pixels.size() == 64u * 64u);
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto a = generate_dataset(small_config(3, 11));
  const auto b = generate_dataset(small_config(3, 11));
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(same_sequence(a.train[i], b.train[i]));
  const auto c = generate_dataset(small_config(3, 12));
  CHECK(a.train[0].frames[0].pixels != c.train[0].frames[0].pixels);
}

TEST_CASE("larger class intervals give wider depth footprints") {
  auto cfg = small_config(12);
  const auto road = make_road_scene(64, 64);
  auto mean_width = [&](int label) {
    double sum = 0;
    int n = 0;
    for (int i = 0; i < cfg.sequences_per_class; ++i) {
      const auto s = generate_sequence(cfg, road, label * 1000 + i, label);
      const auto& m = s.depth(ReprojectionVariant::PointsAndLines)[0];
      int lo = 64, hi = -1;
      for (int v = 0; v < 64; ++v) {
        for (int u = 0; u < 64; ++u) {
          if (m.valid(u, v)) {
            lo = std::min(lo, u);
            hi = std::max(hi, u);
          }
        }
      }
      if (hi >= lo) {
        sum += hi - lo + 1;
        ++n;
      }
    }
    return sum / n;
  };
  REQUIRE(cfg.class_geometry[4].length.lo > cfg.class_geometry[1].length.hi);
  CHECK(mean_width(4) > mean_width(1));
}

TEST_CASE("corruption") {
  Rng rng(1);
  const auto unit = vehicle_model({Box{Vec3::Zero(), Vec3::Ones()}}, 0, rng);
  const auto same = corrupt_reconstruction(unit, 0.0, 0.0, 3);
  for (std::size_t i = 0; i < unit.points.size(); ++i) CHECK(same.points[i] == unit.points[i]);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto noisy = corrupt_reconstruction(unit, 0.01, 0.0, seed);
    double worst = 0;
    for (std::size_t i = 0; i < unit.points.size(); ++i) worst = std::max(worst, (noisy.points[i] - unit.points[i]).norm());
    CHECK(worst < 0.1);
  }

  VehicleModel3D hundred;
  for (int i = 0; i < 100; ++i) hundred.points.emplace_back(i * 0.01, 0, 0);
  const auto half = corrupt_reconstruction(hundred, 0.0, 0.5, 9);
  int changed = 0;
  for (int i = 0; i < 100; ++i) changed += half.points[i] != hundred.points[i];
  CHECK(changed == 50);

  CHECK_THROWS_AS(corrupt_reconstruction(unit, 0.0, 1.0, 1), Error);
  CHECK_THROWS_AS(corrupt_reconstruction(unit, 0.0, -0.1, 1), Error);
  CHECK(corrupt_reconstruction(unit, 0.1, 0.2, 4).points == corrupt_reconstruction(unit, 0.1, 0.2, 4).points);
}

TEST_CASE("config validation and JSON") {
  auto c = small_config(5);
  c.min_frames = 2;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(5);
  c.speed = {2.0, 1.0};
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config(5);
  c.outlier_fraction = 0.3;
  c.seed = 99;
  const auto back = synth_config_from_json(to_json(c));
  CHECK(back.outlier_fraction == 0.3);
  CHECK(back.seed == 99);
  CHECK(back.class_geometry[3].length.hi == c.class_geometry[3].length.hi);
  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json{{"sequences_per_class", "many"}}), Error);
}

TEST_CASE("imbalanced counts follow the toll ratio") {
  auto c = small_config(10);
  c.imbalanced = true;
  const auto d = generate_dataset(c);
  std::array<int, 6> n{};
  for (const auto& s : d.train) n[s.label]++;
  for (const auto& s : d.test) n[s.label]++;
  CHECK(n[5] > n[4]);
  CHECK(n[4] > n[1]);
  CHECK(n[2] >= 5);
}

TEST_CASE("dataset directory round trip") {
  const auto root = std::filesystem::temp_directory_path() / "spn_synth_test";
  std::filesystem::remove_all(root);
  const auto cfg = small_config(2);
  const auto d = generate_dataset(cfg);
  write_dataset(d, cfg, root);
  CHECK(std::filesystem::exists(root / "segments.csv"));
  const auto back = read_dataset(root);
  REQUIRE(back.train.size() == d.train.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    CHECK(back.train[i].label == d.train[i].label);
    CHECK(back.train[i].frames[0].pixels == d.train[i].frames[0].pixels);
    const auto& a = d.train[i].depth(ReprojectionVariant::Lines)[0];
    const auto& b = back.train[i].depth(ReprojectionVariant::Lines)[0];
    CHECK(a.mask() == b.mask());
  }
  std::filesystem::remove_all(root);
}
