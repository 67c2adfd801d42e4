#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "spn/error.hpp"
#include "spn/geometry.hpp"
#include "spn/random.hpp"

using namespace spn;

TEST_CASE("projection of points on and off the optical axis") {
  const auto cam = fixture::identity_camera();
  const auto p = project_point(cam, Vec3(0, 0, 2));
  CHECK(p.status == ProjectionStatus::Ok);
  CHECK(p.pixel.x() == 32.0);
  CHECK(p.pixel.y() == 32.0);
  CHECK(p.camera_depth == 2.0);
  CHECK(p.origin_distance == 2.0);

  CHECK(project_point(cam, Vec3(0, 0, -1)).status == ProjectionStatus::BehindCamera);
  CHECK(project_point(cam, Vec3(0, 0, 0)).status == ProjectionStatus::BehindCamera);

  const auto off = project_point(cam, Vec3(1, 0, 2));
  CHECK(off.status == ProjectionStatus::OutsideImage);
  CHECK(off.pixel.x() == doctest::Approx(82.0));
  CHECK(project_unbounded(cam, Vec3(1, 0, 2)).status == ProjectionStatus::Ok);
}

TEST_CASE("image bounds are half open") {
  const auto cam = fixture::identity_camera();
  CHECK(cam.contains(Vec2(0, 0)));
  CHECK(cam.contains(Vec2(63.999, 63.999)));
  CHECK_FALSE(cam.contains(Vec2(64, 10)));
  CHECK_FALSE(cam.contains(Vec2(-1e-9, 10)));
}

TEST_CASE("cast_ray") {
  const auto cam = fixture::identity_camera();
  const Ray axis = cast_ray(cam, Vec2(32, 32));
  CHECK(axis.direction.isApprox(Vec3(0, 0, 1), 1e-15));
  const Ray r = cast_ray(cam, Vec2(132, 32));
  CHECK(r.direction.isApprox(Vec3(1, 0, 1).normalized(), 1e-15));
  CHECK(std::abs(r.direction.norm() - 1.0) < 1e-12);
}

TEST_CASE("projection and ray round trip over random cameras and points") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Mat3 R = axis_angle(Vec3(rng.normal(), rng.normal(), rng.normal()), rng.uniform(0, 3.0));
    const Vec3 c(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const PinholeCamera cam(rng.uniform(30, 300), Vec2(rng.uniform(20, 40), rng.uniform(20, 40)), R, c, {64, 48});
    const Vec3 pc(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.1, 30));
    const Vec3 pw = R.transpose() * pc + c;
    const auto pr = project_unbounded(cam, pw);
    REQUIRE(pr.status == ProjectionStatus::Ok);
    const Ray ray = cast_ray(cam, pr.pixel);
    CHECK(std::abs(ray.direction.norm() - 1.0) < 1e-12);
    // Distance from pw to the ray.
    const Vec3 v = pw - ray.origin;
    CHECK((v - v.dot(ray.direction) * ray.direction).norm() < 1e-9);
    // Any point on the ray reprojects to the same pixel.
    const auto back = project_unbounded(cam, ray.at(rng.uniform(0.5, 50)));
    CHECK((back.pixel - pr.pixel).norm() < 1e-6);
  }
}

TEST_CASE("camera validation") {
  Mat3 bad = Mat3::Identity();
  bad(0, 1) = 0.1;
  CHECK_THROWS_AS(PinholeCamera(100, Vec2(1, 1), bad, Vec3::Zero(), {4, 4}), Error);
  Mat3 reflect = Mat3::Identity();
  reflect(2, 2) = -1;
  CHECK_THROWS_AS(PinholeCamera(100, Vec2(1, 1), reflect, Vec3::Zero(), {4, 4}), Error);
  CHECK_THROWS_AS(PinholeCamera(0, Vec2(1, 1), Mat3::Identity(), Vec3::Zero(), {4, 4}), Error);
  CHECK_THROWS_AS(PinholeCamera(10, Vec2(1, 1), Mat3::Identity(), Vec3::Zero(), {0, 4}), Error);
  try {
    PinholeCamera(100, Vec2(1, 1), bad, Vec3::Zero(), {4, 4});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidCamera);
  }
}

TEST_CASE("apply_similarity") {
  VehicleModel3D m;
  m.points = {Vec3(1, 2, 3)};
  m.lines = {{Vec3(0, 0, 0), Vec3(1, 0, 0)}};
  const auto same = apply_similarity(m, 1.0, Vec3::Zero());
  CHECK(same.points[0] == m.points[0]);
  const auto out = apply_similarity(m, 2.0, Vec3(0, 0, 1));
  CHECK(out.points[0] == Vec3(2, 4, 7));
  CHECK(out.lines[0].b == Vec3(2, 0, 1));
  CHECK(out.lines.size() == 1);
  CHECK_THROWS_AS(apply_similarity(m, 0.0, Vec3::Zero()), Error);
  CHECK_THROWS_AS(apply_similarity(m, -1.0, Vec3::Zero()), Error);
}

TEST_CASE("similarity composition") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    VehicleModel3D m;
    for (int i = 0; i < 10; ++i) m.points.emplace_back(rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-9, 9));
    m.lines.push_back({Vec3(0, 0, 0), Vec3(1, 2, 3)});
    const double s1 = rng.uniform(0.1, 10), s2 = rng.uniform(0.1, 10);
    const Vec3 t1(rng.normal(), rng.normal(), rng.normal());
    const Vec3 t2(rng.normal(), rng.normal(), rng.normal());
    const auto twice = apply_similarity(apply_similarity(m, s1, t1), s2, t2);
    const auto once = apply_similarity(m, s2 * s1, s2 * t1 + t2);
    for (std::size_t i = 0; i < m.points.size(); ++i) {
      CHECK((twice.points[i] - once.points[i]).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK((twice.lines[0].b - once.lines[0].b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("model validation") {
  VehicleModel3D m;
  m.lines = {{Vec3(1, 1, 1), Vec3(1, 1, 1)}};
  CHECK_THROWS_AS(m.validate(), Error);
  m.lines.clear();
  m.points = {Vec3(0, std::nan(""), 0)};
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("look_rotation") {
  const Mat3 r = look_rotation(Vec3(1, 0, 0), Vec3(0, 0, -1));
  CHECK((r * Vec3(1, 0, 0)).isApprox(Vec3(0, 0, 1)));
  CHECK((r * Vec3(0, 0, -1)).isApprox(Vec3(0, 1, 0)));
  CHECK(std::abs(r.determinant() - 1.0) < 1e-12);
}
