#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <utility>
#include <vector>

namespace spn {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct ImageSize {
  int width = 0;
  int height = 0;

  bool operator==(const ImageSize&) const = default;
};

/// Undistorted pinhole camera.
///
/// Conventions used everywhere in this library:
///  - world to camera: x_cam = R * (x_world - center)
///  - camera frame: +x right, +y down, +z along the optical axis
///  - pixel origin at the top-left corner, pixel centers at integer coordinates
class PinholeCamera {
 public:
  /// Throws Error(InvalidCamera) unless focal > 0, image size > 0 and R is a proper rotation
  /// (|R^T R - I| and |det R - 1| within 1e-9).
  PinholeCamera(double focal_px, Vec2 principal_point, Mat3 rotation, Vec3 center, ImageSize size);

  double focal() const { return focal_; }
  const Vec2& principal_point() const { return principal_; }
  const Mat3& rotation() const { return rotation_; }
  const Vec3& center() const { return center_; }
  ImageSize image_size() const { return size_; }
  int width() const { return size_.width; }
  int height() const { return size_.height; }

  Vec3 to_camera(const Vec3& world) const { return rotation_ * (world - center_); }

  /// True when the continuous pixel lies in [0,width) x [0,height).
  bool contains(const Vec2& pixel) const;

  /// Same intrinsics and rotation, different center.
  PinholeCamera with_center(const Vec3& center) const;

 private:
  double focal_;
  Vec2 principal_;
  Mat3 rotation_;
  Vec3 center_;
  ImageSize size_;
};

/// `direction` is unit length.
struct Ray {
  Vec3 origin;
  Vec3 direction;

  Vec3 at(double lambda) const { return origin + lambda * direction; }
};

struct LineSegment3 {
  Vec3 a;
  Vec3 b;
};

/// Sparse reconstruction: points and 3D line segments in one coordinate frame.
struct VehicleModel3D {
  std::vector<Vec3> points;
  std::vector<LineSegment3> lines;

  /// Throws Error(InvalidModel) on non-finite coordinates or coincident line endpoints.
  void validate() const;
};

enum class ProjectionStatus { Ok, OutsideImage, BehindCamera };

struct Projection {
  ProjectionStatus status = ProjectionStatus::BehindCamera;
  Vec2 pixel = Vec2::Zero();
  /// z in the camera frame.
  double camera_depth = 0.0;
  /// Euclidean distance of the point from the world origin; this is what depth maps store
  /// once a reconstruction is aligned so that the first camera sits at the origin.
  double origin_distance = 0.0;

  bool ok() const { return status == ProjectionStatus::Ok; }
};

/// Minimum camera-frame z accepted as "in front of" the camera.
inline constexpr double kMinCameraDepth = 1e-9;

Projection project_point(const PinholeCamera& camera, const Vec3& point);

/// Projects without the image-bounds check (still reports BehindCamera).
Projection project_unbounded(const PinholeCamera& camera, const Vec3& point);

Ray cast_ray(const PinholeCamera& camera, const Vec2& pixel);

/// p -> scale * p + translation for every point and line endpoint.
VehicleModel3D apply_similarity(const VehicleModel3D& model, double scale, const Vec3& translation);

/// Rotation about `axis` (normalized internally) by `angle` radians.
Mat3 axis_angle(const Vec3& axis, double angle);

/// Builds a world->camera rotation whose optical axis points along `forward` with image "down"
/// as close as possible to `down_hint`.
Mat3 look_rotation(const Vec3& forward, const Vec3& down_hint);

}  // namespace spn
