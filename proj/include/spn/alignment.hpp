#pragma once

#include <optional>
#include <vector>

#include "spn/geometry.hpp"

namespace spn {

/// Annotated endpoints of a scene line parallel to the driving direction, as seen by the first
/// camera. P1 is the endpoint farther along the camera trajectory.
struct ReferenceLineObservation {
  Vec2 pixel_p1;
  Vec2 pixel_p2;
  /// Length of P1P2 in the units of the reconstruction it is paired with. Only the ratio to the
  /// reconstruction matters; 1 means the reconstruction is already in reference-line units.
  double length = 1.0;
};

/// Triangle quantities for a reference line of unit length parallel to the trajectory.
/// Distances are in multiples of the reference-line length.
struct ScaleSolution {
  double alpha_rad = 0.0;  // angle between trajectory and ray to P1
  double beta_rad = 0.0;   // angle between trajectory and ray to P2
  double a = 0.0;          // trajectory distance from the camera to the foot of P2
  double d = 0.0;          // distance between trajectory and reference line
  double d1c = 0.0;        // camera to P1
  double d2c = 0.0;        // camera to P2
  double scale = 0.0;      // 1 / d1c
};

/// Recovers the unit-line triangle from the two rays. Throws DegenerateGeometry when the rays
/// make (numerically) the same angle with t, InvalidAngles unless 0 < alpha < beta < pi/2.
ScaleSolution solve_scale(const Vec3& trajectory, const Ray& r1, const Ray& r2);

enum class ScaleMode {
  /// Camera-to-P1 distance becomes 1.
  CameraToP1,
  /// Reference-line length becomes 1.
  LineLength,
};

struct AlignOptions {
  /// Unit direction of the virtual camera trajectory; estimated from the first and last camera
  /// centers when absent.
  std::optional<Vec3> trajectory;
  ScaleMode mode = ScaleMode::CameraToP1;
};

struct AlignedScene {
  VehicleModel3D model;
  std::vector<PinholeCamera> cameras;
  ScaleSolution solution;
  /// Factor applied to the translated reconstruction.
  double applied_scale = 1.0;
  Vec3 trajectory = Vec3::Zero();
};

/// Unit vector from the first to the last camera center.
Vec3 estimate_trajectory(const std::vector<PinholeCamera>& cameras);

/// Moves the first camera center to the origin and rescales so every reconstruction of the
/// same scene lands in the same frame. Rotations are untouched.
AlignedScene align_to_world(const VehicleModel3D& model, const std::vector<PinholeCamera>& cameras,
                            const ReferenceLineObservation& obs, const AlignOptions& options = {});

}  // namespace spn
