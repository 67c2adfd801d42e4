#include "spn/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spn/error.hpp"

namespace spn {

namespace {

double angle_between(const Vec3& t, const Vec3& r) {
  const double c = t.dot(r) / (t.norm() * r.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

ScaleSolution solve_scale(const Vec3& trajectory, const Ray& r1, const Ray& r2) {
  ScaleSolution s;
  s.alpha_rad = angle_between(trajectory, r1.direction);
  s.beta_rad = angle_between(trajectory, r2.direction);

  const double tan_alpha = std::tan(s.alpha_rad);
  const double tan_beta = std::tan(s.beta_rad);
  if (std::abs(tan_beta - tan_alpha) < 1e-12) {
    throw Error(ErrorCode::DegenerateGeometry, "rays make the same angle with the trajectory");
  }
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  if (!(s.alpha_rad > 0.0 && s.beta_rad < kHalfPi && s.alpha_rad < s.beta_rad)) {
    throw Error(ErrorCode::InvalidAngles, "require 0 < alpha < beta < pi/2");
  }

  // From tan(beta) = d/a and tan(alpha) = d/(a+1).
  s.a = tan_alpha / (tan_beta - tan_alpha);
  s.d = tan_beta * s.a;
  s.d1c = std::sqrt(s.d * s.d + (s.a + 1.0) * (s.a + 1.0));
  s.d2c = std::sqrt(s.d * s.d + s.a * s.a);
  s.scale = 1.0 / s.d1c;
  return s;
}

Vec3 estimate_trajectory(const std::vector<PinholeCamera>& cameras) {
  if (cameras.size() < 2) throw Error(ErrorCode::TooFewCameras, "need at least 2 cameras");
  const Vec3 delta = cameras.back().center() - cameras.front().center();
  if (!(delta.norm() > 0.0)) {
    throw Error(ErrorCode::DegenerateGeometry, "first and last camera centers coincide");
  }
  return delta.normalized();
}

AlignedScene align_to_world(const VehicleModel3D& model, const std::vector<PinholeCamera>& cameras,
                            const ReferenceLineObservation& obs, const AlignOptions& options) {
  if (cameras.size() < 2) throw Error(ErrorCode::TooFewCameras, "need at least 2 cameras");
  if (!(obs.length > 0.0)) throw Error(ErrorCode::NonPositiveScale, "reference length must be > 0");
  if ((obs.pixel_p1 - obs.pixel_p2).norm() == 0.0) {
    throw Error(ErrorCode::DegenerateGeometry, "reference-line pixels coincide");
  }

  AlignedScene out;
  out.trajectory = options.trajectory ? options.trajectory->normalized() : estimate_trajectory(cameras);

  const PinholeCamera& first = cameras.front();
  out.solution = solve_scale(out.trajectory, cast_ray(first, obs.pixel_p1), cast_ray(first, obs.pixel_p2));

  out.applied_scale = options.mode == ScaleMode::CameraToP1 ? out.solution.scale / obs.length
                                                            : 1.0 / obs.length;

  const Vec3 origin = first.center();
  const double s = out.applied_scale;
  out.model = apply_similarity(model, s, -s * origin);
  out.cameras.reserve(cameras.size());
  for (const auto& cam : cameras) out.cameras.push_back(cam.with_center(s * (cam.center() - origin)));
  return out;
}

}  // namespace spn
