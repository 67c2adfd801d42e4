#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string_view>
#include <vector>

#include "spn/geometry.hpp"

namespace spn {

/// Per-pixel depth with a validity mask. Invalid pixels hold quiet NaN.
class SparseDepthMap {
 public:
  SparseDepthMap() = default;
  SparseDepthMap(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return depth_.size(); }

  bool valid(int u, int v) const { return valid_[index(u, v)] != 0; }
  double depth(int u, int v) const { return depth_[index(u, v)]; }

  /// Min-depth write: keeps the smaller of the stored and the new value.
  void splat(int u, int v, double depth);
  /// Unconditional write; `depth` must be finite and positive.
  void set(int u, int v, double depth);
  void clear(int u, int v);

  std::size_t valid_count() const;
  double valid_fraction() const;

  const std::vector<double>& depths() const { return depth_; }
  const std::vector<unsigned char>& mask() const { return valid_; }

  bool operator==(const SparseDepthMap&) const = delete;

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> depth_;
  std::vector<unsigned char> valid_;
};

/// Bitwise equality of dimensions, masks and depths (NaNs compare equal when bit-identical).
bool identical(const SparseDepthMap& a, const SparseDepthMap& b);

enum class ReprojectionVariant { Points, Lines, PointsAndLines };

std::string_view to_string(ReprojectionVariant v);
/// Accepts "points", "lines", "both", "points_and_lines", "points+lines".
ReprojectionVariant parse_variant(std::string_view name);

/// Round-half-up to the nearest pixel center.
int nearest_pixel(double coordinate);

/// Renders the model into `camera`. Each written pixel stores the distance of the 3D point to
/// the world origin (the first camera center of an aligned bundle); conflicts keep the minimum.
SparseDepthMap reproject(const VehicleModel3D& model, const PinholeCamera& camera,
                         ReprojectionVariant variant);

/// Splats one point into `map` if it projects inside the image.
void splat_point(const Vec3& point, const PinholeCamera& camera, SparseDepthMap& map);

/// Writes the 8-connected pixel line between the projected endpoints. Segments crossing the
/// camera plane are clipped at camera depth 1e-6; depth along the line is interpolated
/// perspective-correctly in 3D.
void rasterize_line(const LineSegment3& segment, const PinholeCamera& camera, SparseDepthMap& map);

/// SDM1 file: "SDM1", u32 width, u32 height, width*height f32 (row-major, NaN = invalid), all
/// little-endian.
void write_depth_map(const SparseDepthMap& map, const std::filesystem::path& path);
SparseDepthMap read_depth_map(const std::filesystem::path& path);

std::vector<unsigned char> encode_depth_map(const SparseDepthMap& map);
SparseDepthMap decode_depth_map(const std::vector<unsigned char>& bytes);

}  // namespace spn
