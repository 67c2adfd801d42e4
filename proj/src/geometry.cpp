#include "spn/geometry.hpp"

#include <cmath>

#include "spn/error.hpp"

namespace spn {

namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

PinholeCamera::PinholeCamera(double focal_px, Vec2 principal_point, Mat3 rotation, Vec3 center,
                             ImageSize size)
    : focal_(focal_px),
      principal_(std::move(principal_point)),
      rotation_(std::move(rotation)),
      center_(std::move(center)),
      size_(size) {
  if (!(focal_ > 0.0) || !std::isfinite(focal_)) {
    throw Error(ErrorCode::InvalidCamera, "focal length must be positive");
  }
  if (size_.width <= 0 || size_.height <= 0) {
    throw Error(ErrorCode::InvalidCamera, "image size must be positive");
  }
  if (!principal_.allFinite() || !center_.allFinite() || !rotation_.allFinite()) {
    throw Error(ErrorCode::InvalidCamera, "non-finite camera parameter");
  }
  const double ortho_err = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-9) {
    throw Error(ErrorCode::InvalidCamera, "rotation is not orthonormal");
  }
  if (std::abs(rotation_.determinant() - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidCamera, "rotation determinant is not +1");
  }
}

bool PinholeCamera::contains(const Vec2& pixel) const {
  return pixel.x() >= 0.0 && pixel.x() < size_.width && pixel.y() >= 0.0 && pixel.y() < size_.height;
}

PinholeCamera PinholeCamera::with_center(const Vec3& center) const {
  return PinholeCamera(focal_, principal_, rotation_, center, size_);
}

void VehicleModel3D::validate() const {
  for (const auto& p : points) {
    if (!finite(p)) throw Error(ErrorCode::InvalidModel, "non-finite point");
  }
  for (const auto& l : lines) {
    if (!finite(l.a) || !finite(l.b)) throw Error(ErrorCode::InvalidModel, "non-finite line endpoint");
    if ((l.a - l.b).norm() <= 1e-12) throw Error(ErrorCode::InvalidModel, "line endpoints coincide");
  }
}

Projection project_unbounded(const PinholeCamera& camera, const Vec3& point) {
  Projection out;
  const Vec3 pc = camera.to_camera(point);
  out.camera_depth = pc.z();
  out.origin_distance = point.norm();
  if (pc.z() <= kMinCameraDepth) {
    out.status = ProjectionStatus::BehindCamera;
    return out;
  }
  out.pixel = camera.principal_point() + camera.focal() * Vec2(pc.x() / pc.z(), pc.y() / pc.z());
  out.status = ProjectionStatus::Ok;
  return out;
}

Projection project_point(const PinholeCamera& camera, const Vec3& point) {
  Projection out = project_unbounded(camera, point);
  if (out.ok() && !camera.contains(out.pixel)) out.status = ProjectionStatus::OutsideImage;
  return out;
}

Ray cast_ray(const PinholeCamera& camera, const Vec2& pixel) {
  const Vec2 n = (pixel - camera.principal_point()) / camera.focal();
  const Vec3 dir_cam(n.x(), n.y(), 1.0);
  return Ray{camera.center(), (camera.rotation().transpose() * dir_cam).normalized()};
}

VehicleModel3D apply_similarity(const VehicleModel3D& model, double scale, const Vec3& translation) {
  if (!(scale > 0.0)) throw Error(ErrorCode::NonPositiveScale, "similarity scale must be > 0");
  VehicleModel3D out;
  out.points.reserve(model.points.size());
  for (const auto& p : model.points) out.points.push_back(scale * p + translation);
  out.lines.reserve(model.lines.size());
  for (const auto& l : model.lines) {
    out.lines.push_back({scale * l.a + translation, scale * l.b + translation});
  }
  return out;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Mat3 look_rotation(const Vec3& forward, const Vec3& down_hint) {
  const Vec3 z = forward.normalized();
  const Vec3 x = down_hint.cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return r;
}

}  // namespace spn
