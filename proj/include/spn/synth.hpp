#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "spn/alignment.hpp"
#include "spn/geometry.hpp"
#include "spn/io.hpp"
#include "spn/random.hpp"
#include "spn/reprojection.hpp"

namespace spn::synth {

inline constexpr int kNumClasses = 6;

enum class VehicleClass { SpecialTransport = 0, Car, Camper, Van, Truck, Semitrailer };

std::string_view class_name(int id);
int class_from_name(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool valid() const { return lo <= hi; }
};

struct ClassGeometry {
  Interval length;
  Interval width;
  Interval height;
};

/// Length/width/height ranges (metres) of the six classes.
std::array<ClassGeometry, kNumClasses> default_class_geometry();

struct SynthConfig {
  int image_width = 64;
  int image_height = 64;
  int sequences_per_class = 40;
  int min_frames = 3;
  int max_frames = 8;
  Interval speed{0.9, 1.6};          // metres per frame
  Interval lane_offset{-0.6, 3.2};   // lateral position of the vehicle centre line
  double noise_std = 0.05;           // metres, applied to the reconstruction
  double outlier_fraction = 0.05;
  int surface_points_per_box = 12;
  double pixel_noise_std = 4.0;      // grey levels
  bool imbalanced = false;
  std::uint64_t seed = 7;
  std::array<ClassGeometry, kNumClasses> class_geometry = default_class_geometry();

  void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
/// Missing keys keep their defaults. Throws InvalidConfig.
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// The fixed roadside camera and the painted reference dash it sees.
struct RoadScene {
  PinholeCamera camera;
  Vec3 reference_p1;   // far end of the dash (along the virtual camera trajectory)
  Vec3 reference_p2;
  std::vector<Segment2> lane_segments;  // projected lane markings, for direction estimation
};

RoadScene make_road_scene(int image_width, int image_height);

/// Axis-aligned box in vehicle coordinates (x forward, y left, z up).
struct Box {
  Vec3 lo;
  Vec3 hi;
};

std::vector<Box> vehicle_boxes(int class_id, double length, double width, double height, Rng& rng);

/// Corners plus surface samples as points, box edges as lines.
VehicleModel3D vehicle_model(const std::vector<Box>& boxes, int surface_points_per_box, Rng& rng);

/// Gaussian jitter on every point and endpoint, then round-half-up(outlier_fraction * #points)
/// points are replaced by uniform samples from the model's bounding box scaled 3x about its
/// center. Throws InvalidFraction / InvalidArgument.
VehicleModel3D corrupt_reconstruction(const VehicleModel3D& model, double noise_std, double outlier_fraction,
                                      std::uint64_t seed);

struct SequenceSample {
  int sequence_id = 0;
  int label = 0;
  double speed = 0.0;
  std::uint64_t seed = 0;
  std::vector<GrayImage> frames;
  /// Indexed by ReprojectionVariant.
  std::array<std::vector<SparseDepthMap>, 3> depth_maps;
  /// Reconstruction as an upstream SfM stage would hand it over (arbitrary gauge).
  SceneBundle reconstruction;

  const std::vector<SparseDepthMap>& depth(ReprojectionVariant v) const {
    return depth_maps[static_cast<std::size_t>(v)];
  }
};

struct Dataset {
  std::vector<SequenceSample> train;
  std::vector<SequenceSample> test;
};

/// Pure function of the config. Split is 80/20 per class.
Dataset generate_dataset(const SynthConfig& config);

/// One sequence; exposed for tests.
SequenceSample generate_sequence(const SynthConfig& config, const RoadScene& road, int sequence_id, int label);

/// Pixel-accurate render of `boxes` placed at `offset` in the world.
GrayImage render_frame(const RoadScene& road, const std::vector<Box>& boxes, const Vec3& offset, double shade_offset,
                       double pixel_noise_std, Rng& rng);

/// <root>/<split>/<sequence_id>/frame_<k>.pgm, depth_<k>.sdm (points+lines),
/// depth_points_<k>.sdm, depth_lines_<k>.sdm, meta.json and scene/ (the reconstruction bundle);
/// plus <root>/segments.csv (projected lane markings) and <root>/synth.json.
void write_dataset(const Dataset& data, const SynthConfig& config, const std::filesystem::path& root);

/// Reads back what write_dataset produced (frames, depth maps, labels).
Dataset read_dataset(const std::filesystem::path& root);

}  // namespace spn::synth
