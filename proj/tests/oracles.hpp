#pragma once
// Reference computations that do not go through the library code paths they check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "spn/alignment.hpp"
#include "spn/geometry.hpp"
#include "spn/random.hpp"

namespace oracle {

using spn::Vec3;

// A reference line parallel to the trajectory, placed explicitly. All expected quantities are
// read back from the placed geometry and expressed in line-length units.
struct Construction {
  Vec3 camera;
  Vec3 t;
  Vec3 p1;
  Vec3 p2;
  double line_length = 1.0;
  double a = 0.0;
  double d = 0.0;
  double d1c = 0.0;
  double d2c = 0.0;
  double s = 0.0;
};

inline Vec3 random_unit(spn::Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-3);
  return v.normalized();
}

inline Construction place_line(const Vec3& camera, const Vec3& t, const Vec3& offset_dir, double a_len,
                               double d_len, double line_length) {
  Construction c;
  c.camera = camera;
  c.t = t;
  c.line_length = line_length;
  c.p2 = camera + a_len * t + d_len * offset_dir;
  c.p1 = c.p2 + line_length * t;
  // Read back from the placed points.
  c.a = (c.p2 - camera).dot(t) / line_length;
  c.d = ((c.p2 - camera) - (c.p2 - camera).dot(t) * t).norm() / line_length;
  c.d1c = (c.p1 - camera).norm() / line_length;
  c.d2c = (c.p2 - camera).norm() / line_length;
  c.s = 1.0 / c.d1c;
  return c;
}

inline Construction random_construction(std::uint64_t seed) {
  spn::Rng rng(seed);
  const Vec3 camera(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
  const Vec3 t = random_unit(rng);
  Vec3 n = random_unit(rng);
  n = (n - n.dot(t) * t).normalized();
  const double length = std::exp(rng.uniform(std::log(0.05), std::log(20.0)));
  return place_line(camera, t, n, rng.uniform(0.2, 6.0) * length, rng.uniform(0.2, 6.0) * length, length);
}

inline spn::Ray ray_to(const Vec3& from, const Vec3& to) { return {from, (to - from).normalized()}; }

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// Exact distance to the origin along a 3D segment at parameter u in [0, 1].
inline double segment_distance(const Vec3& a, const Vec3& b, double u) { return (a + u * (b - a)).norm(); }

// Strict majority by counting: correct exceeds the incorrect count.
inline bool majority_by_count(const std::vector<int>& pattern) {
  int yes = 0;
  int no = 0;
  for (int p : pattern) (p ? yes : no) += 1;
  return yes > no;
}

}  // namespace oracle
