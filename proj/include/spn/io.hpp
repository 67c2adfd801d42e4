#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "spn/alignment.hpp"
#include "spn/geometry.hpp"
#include "spn/scene_context.hpp"

namespace spn {

using json = nlohmann::json;

// Camera JSON: {focal, principal:[u,v], rotation:[9, row-major], center:[3], width, height}
json camera_to_json(const PinholeCamera& camera);
PinholeCamera camera_from_json(const json& j);

/// One reconstruction as produced upstream: model, per-frame cameras and the annotated
/// reference line for the first camera.
struct SceneBundle {
  VehicleModel3D model;
  std::vector<PinholeCamera> cameras;
  ReferenceLineObservation refline;
};

/// Writes cameras.json, points.ply, lines.json and refline.json into `dir` (created if needed).
void write_scene_bundle(const SceneBundle& scene, const std::filesystem::path& dir);
SceneBundle read_scene_bundle(const std::filesystem::path& dir);

void write_ply_points(const std::vector<Vec3>& points, const std::filesystem::path& path);
/// ASCII PLY; reads x, y, z of the `vertex` element and ignores other properties.
std::vector<Vec3> read_ply_points(const std::filesystem::path& path);

json lines_to_json(const std::vector<LineSegment3>& lines);
std::vector<LineSegment3> lines_from_json(const json& j);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  std::uint8_t at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
};

/// Binary PGM (P5, maxval 255).
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

/// 8-bit grayscale PNG.
void write_png(const GrayImage& image, const std::filesystem::path& path);

/// CSV with header `ua,va,ub,vb`.
std::vector<KeypointMatch> read_matches_csv(const std::filesystem::path& path);
void write_matches_csv(const std::vector<KeypointMatch>& matches, const std::filesystem::path& path);
std::vector<Segment2> read_segments_csv(const std::filesystem::path& path);
void write_segments_csv(const std::vector<Segment2>& segments, const std::filesystem::path& path);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const json& j, const std::filesystem::path& path);

}  // namespace spn
