#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spn/alignment.hpp"
#include "spn/error.hpp"
#include "spn/reprojection.hpp"

using namespace spn;

TEST_CASE("unit construction from the axis-aligned example") {
  const Vec3 c = Vec3::Zero();
  const auto s = solve_scale(Vec3(1, 0, 0), oracle::ray_to(c, Vec3(2, 0, 1)), oracle::ray_to(c, Vec3(1, 0, 1)));
  CHECK(s.alpha_rad == doctest::Approx(std::acos(2 / std::sqrt(5.0))).epsilon(1e-12));
  CHECK(s.beta_rad == doctest::Approx(std::numbers::pi / 4).epsilon(1e-12));
  CHECK(s.a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.d == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.d1c == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
  CHECK(s.d2c == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(s.scale == doctest::Approx(1 / std::sqrt(5.0)).epsilon(1e-12));

  // Scaled placement, same rays.
  const auto k = solve_scale(Vec3(1, 0, 0), oracle::ray_to(c, Vec3(6, 0, 3)), oracle::ray_to(c, Vec3(3, 0, 3)));
  CHECK(k.a == doctest::Approx(s.a).epsilon(1e-12));
  CHECK(k.d1c == doctest::Approx(s.d1c).epsilon(1e-12));
}

TEST_CASE("degenerate and invalid angle configurations") {
  const Vec3 c = Vec3::Zero();
  const Ray r = oracle::ray_to(c, Vec3(2, 0, 1));
  try {
    solve_scale(Vec3(1, 0, 0), r, r);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateGeometry);
  }
  // P1 and P2 swapped: alpha > beta.
  try {
    solve_scale(Vec3(1, 0, 0), oracle::ray_to(c, Vec3(1, 0, 1)), oracle::ray_to(c, Vec3(2, 0, 1)));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidAngles);
  }
  // Line behind the camera.
  CHECK_THROWS_AS(solve_scale(Vec3(1, 0, 0), oracle::ray_to(c, Vec3(-1, 0, 1)), oracle::ray_to(c, Vec3(-2, 0, 1))),
                  Error);
}

TEST_CASE("random constructions: equations are self-consistent") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto k = oracle::random_construction(seed);
    const auto s = solve_scale(k.t, oracle::ray_to(k.camera, k.p1), oracle::ray_to(k.camera, k.p2));
    CHECK(oracle::rel_err(s.a, k.a) < 1e-9);
    CHECK(oracle::rel_err(s.d, k.d) < 1e-9);
    CHECK(oracle::rel_err(std::tan(s.beta_rad) * s.a, std::tan(s.alpha_rad) * (s.a + 1)) < 1e-9);
    CHECK(std::abs(std::tan(s.beta_rad) - s.d / s.a) < 1e-9 * std::max(1.0, std::tan(s.beta_rad)));
    CHECK(std::abs(std::tan(s.alpha_rad) - s.d / (s.a + 1)) < 1e-9 * std::max(1.0, std::tan(s.alpha_rad)));
  }
}

TEST_CASE("alignment places the first camera at the origin and P1 at unit distance") {
  const auto seq = fixture::sample_sequence(3);
  const auto& rec = seq.reconstruction;
  const auto road = synth::make_road_scene(64, 64);
  const auto aligned = align_to_world(rec.model, rec.cameras, rec.refline);
  CHECK(aligned.cameras[0].center().norm() < 1e-12);
  for (std::size_t i = 0; i < rec.cameras.size(); ++i) {
    CHECK(aligned.cameras[i].rotation() == rec.cameras[i].rotation());
  }
  // P1 in this gauge: recover from the ray and the solution.
  const Ray r1 = cast_ray(aligned.cameras[0], rec.refline.pixel_p1);
  const Vec3 p1 = r1.at(aligned.solution.d1c * aligned.applied_scale * rec.refline.length);
  CHECK(std::abs(p1.norm() - 1.0) < 1e-9);
  // Metric check against the synthetic ground truth.
  const double metric_d1c = (road.reference_p1 - road.camera.center()).norm() / 5.0;
  CHECK(aligned.solution.d1c == doctest::Approx(metric_d1c).epsilon(1e-6));
}

TEST_CASE("line-length mode normalizes the reference line instead") {
  const auto seq = fixture::sample_sequence(5);
  const auto& rec = seq.reconstruction;
  AlignOptions opts;
  opts.mode = ScaleMode::LineLength;
  const auto a = align_to_world(rec.model, rec.cameras, rec.refline, opts);
  CHECK(a.applied_scale == doctest::Approx(1.0 / rec.refline.length).epsilon(1e-12));
}

TEST_CASE("alignment is invariant to the reconstruction gauge") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto seq = fixture::sample_sequence(100 + seed);
    Rng rng(seed);
    const auto b = fixture::regauge(seq.reconstruction, 7.3, Vec3(rng.normal(), rng.normal(), rng.normal()));
    const auto x = align_to_world(seq.reconstruction.model, seq.reconstruction.cameras, seq.reconstruction.refline);
    const auto y = align_to_world(b.model, b.cameras, b.refline);
    for (std::size_t i = 0; i < x.model.points.size(); ++i) {
      CHECK((x.model.points[i] - y.model.points[i]).cwiseAbs().maxCoeff() < 1e-6);
    }
    for (std::size_t i = 0; i < x.cameras.size(); ++i) {
      CHECK((x.cameras[i].center() - y.cameras[i].center()).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("already aligned input is a fixed point") {
  const auto seq = fixture::sample_sequence(11);
  const auto& rec = seq.reconstruction;
  const auto once = align_to_world(rec.model, rec.cameras, rec.refline);
  ReferenceLineObservation obs = rec.refline;
  obs.length = rec.refline.length * once.applied_scale;
  const auto twice = align_to_world(once.model, once.cameras, obs);
  CHECK(std::abs(twice.applied_scale - 1.0) < 1e-12);
  for (std::size_t i = 0; i < once.model.points.size(); ++i) {
    CHECK((once.model.points[i] - twice.model.points[i]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("alignment preconditions") {
  const auto seq = fixture::sample_sequence(2);
  const auto& rec = seq.reconstruction;
  std::vector<PinholeCamera> one{rec.cameras[0]};
  try {
    align_to_world(rec.model, one, rec.refline);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewCameras);
  }
  AlignOptions opts;
  opts.trajectory = estimate_trajectory(rec.cameras);
  CHECK(opts.trajectory->dot(Vec3(-1, 0, 0)) > 0.999);
  CHECK_NOTHROW(align_to_world(rec.model, rec.cameras, rec.refline, opts));
}
