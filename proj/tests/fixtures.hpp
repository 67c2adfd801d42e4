#pragma once

#include <vector>

#include "spn/io.hpp"
#include "spn/synth.hpp"

namespace fixture {

inline spn::PinholeCamera identity_camera(double focal = 100.0, int size = 64) {
  return spn::PinholeCamera(focal, spn::Vec2(32.0, 32.0), spn::Mat3::Identity(), spn::Vec3::Zero(), {size, size});
}

// Same scene in a different gauge: x -> k x + shift for the model and the camera centers.
inline spn::SceneBundle regauge(const spn::SceneBundle& in, double k, const spn::Vec3& shift) {
  spn::SceneBundle out = in;
  out.model = spn::apply_similarity(in.model, k, shift);
  out.cameras.clear();
  for (const auto& c : in.cameras) out.cameras.push_back(c.with_center(k * c.center() + shift));
  out.refline.length = in.refline.length * k;
  return out;
}

inline spn::synth::SequenceSample sample_sequence(std::uint64_t seed, int label = 4) {
  spn::synth::SynthConfig cfg;
  cfg.seed = seed;
  const auto road = spn::synth::make_road_scene(cfg.image_width, cfg.image_height);
  return spn::synth::generate_sequence(cfg, road, 0, label);
}

}  // namespace fixture
