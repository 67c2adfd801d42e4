#include "spn/reprojection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "spn/error.hpp"

namespace spn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kClipDepth = 1e-6;
constexpr char kMagic[4] = {'S', 'D', 'M', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Liang-Barsky clip of p(t) = a + t (b - a), t in [0,1], against an axis-aligned box.
bool clip_to_box(const Vec2& a, const Vec2& b, const Vec2& lo, const Vec2& hi, double& t0, double& t1) {
  t0 = 0.0;
  t1 = 1.0;
  const Vec2 d = b - a;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {a.x() - lo.x(), hi.x() - a.x(), a.y() - lo.y(), hi.y() - a.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

SparseDepthMap::SparseDepthMap(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "depth map size must be positive");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  depth_.assign(n, kNaN);
  valid_.assign(n, 0);
}

void SparseDepthMap::splat(int u, int v, double depth) {
  const auto i = index(u, v);
  if (!valid_[i] || depth < depth_[i]) {
    depth_[i] = depth;
    valid_[i] = 1;
  }
}

void SparseDepthMap::set(int u, int v, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw Error(ErrorCode::InvalidArgument, "depth must be finite and positive");
  }
  const auto i = index(u, v);
  depth_[i] = depth;
  valid_[i] = 1;
}

void SparseDepthMap::clear(int u, int v) {
  const auto i = index(u, v);
  depth_[i] = kNaN;
  valid_[i] = 0;
}

std::size_t SparseDepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), 1));
}

double SparseDepthMap::valid_fraction() const {
  return depth_.empty() ? 0.0 : static_cast<double>(valid_count()) / static_cast<double>(depth_.size());
}

bool identical(const SparseDepthMap& a, const SparseDepthMap& b) {
  if (a.width() != b.width() || a.height() != b.height()) return false;
  if (a.mask() != b.mask()) return false;
  return std::memcmp(a.depths().data(), b.depths().data(), a.depths().size() * sizeof(double)) == 0;
}

std::string_view to_string(ReprojectionVariant v) {
  switch (v) {
    case ReprojectionVariant::Points: return "points";
    case ReprojectionVariant::Lines: return "lines";
    case ReprojectionVariant::PointsAndLines: return "points+lines";
  }
  return "?";
}

ReprojectionVariant parse_variant(std::string_view name) {
  if (name == "points") return ReprojectionVariant::Points;
  if (name == "lines") return ReprojectionVariant::Lines;
  if (name == "both" || name == "points_and_lines" || name == "points+lines") {
    return ReprojectionVariant::PointsAndLines;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown reprojection variant '" + std::string(name) + "'");
}

int nearest_pixel(double coordinate) { return static_cast<int>(std::floor(coordinate + 0.5)); }

void splat_point(const Vec3& point, const PinholeCamera& camera, SparseDepthMap& map) {
  const Projection pr = project_point(camera, point);
  if (!pr.ok()) return;
  const int u = nearest_pixel(pr.pixel.x());
  const int v = nearest_pixel(pr.pixel.y());
  if (u < 0 || v < 0 || u >= map.width() || v >= map.height()) return;
  if (pr.origin_distance > 0.0) map.splat(u, v, pr.origin_distance);
}

void rasterize_line(const LineSegment3& segment, const PinholeCamera& camera, SparseDepthMap& map) {
  Vec3 a = segment.a;
  Vec3 b = segment.b;
  double za = camera.to_camera(a).z();
  double zb = camera.to_camera(b).z();
  if (za <= kClipDepth && zb <= kClipDepth) return;
  if (za < kClipDepth) {
    a = a + (kClipDepth - za) / (zb - za) * (b - a);
    za = kClipDepth;
  } else if (zb < kClipDepth) {
    b = b + (kClipDepth - zb) / (za - zb) * (a - b);
    zb = kClipDepth;
  }

  const Projection pa = project_unbounded(camera, a);
  const Projection pb = project_unbounded(camera, b);
  if (!pa.ok() || !pb.ok()) return;
  const Vec2 ua = pa.pixel;
  const Vec2 ub = pb.pixel;
  za = pa.camera_depth;
  zb = pb.camera_depth;

  double t0 = 0.0;
  double t1 = 1.0;
  const Vec2 lo(-0.5, -0.5);
  const Vec2 hi(map.width() - 0.5, map.height() - 0.5);
  if (!clip_to_box(ua, ub, lo, hi, t0, t1)) return;

  const Vec2 screen = ub - ua;
  const double screen_len2 = screen.squaredNorm();
  const Vec2 c0 = ua + t0 * screen;
  const Vec2 c1 = ua + t1 * screen;

  auto write = [&](int u, int v) {
    if (u < 0 || v < 0 || u >= map.width() || v >= map.height()) return;
    double t = 0.0;
    if (screen_len2 > 0.0) {
      t = std::clamp((Vec2(u, v) - ua).dot(screen) / screen_len2, 0.0, 1.0);
    }
    // Screen parameter t to 3D parameter s; 1/z is affine in screen space.
    const double s = t * za / ((1.0 - t) * zb + t * za);
    const double depth = (a + s * (b - a)).norm();
    if (depth > 0.0) map.splat(u, v, depth);
  };

  // Bresenham between the rounded clipped endpoints, clamped into the image.
  auto px = [](double x, int n) { return std::clamp(nearest_pixel(x), 0, n - 1); };
  int x0 = px(c0.x(), map.width());
  int y0 = px(c0.y(), map.height());
  const int x1 = px(c1.x(), map.width());
  const int y1 = px(c1.y(), map.height());
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    write(x0, y0);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

SparseDepthMap reproject(const VehicleModel3D& model, const PinholeCamera& camera,
                         ReprojectionVariant variant) {
  const bool use_points = variant != ReprojectionVariant::Lines;
  const bool use_lines = variant != ReprojectionVariant::Points;
  const std::size_t primitives = (use_points ? model.points.size() : 0) + (use_lines ? model.lines.size() : 0);
  if (primitives == 0) throw Error(ErrorCode::EmptyModel, "variant selects no primitives");

  SparseDepthMap map(camera.width(), camera.height());
  if (use_points) {
    for (const auto& p : model.points) splat_point(p, camera, map);
  }
  if (use_lines) {
    for (const auto& l : model.lines) rasterize_line(l, camera, map);
  }
  return map;
}

std::vector<unsigned char> encode_depth_map(const SparseDepthMap& map) {
  std::vector<unsigned char> out;
  out.reserve(12 + 4 * map.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(map.width()));
  put_u32(out, static_cast<std::uint32_t>(map.height()));
  const auto& depth = map.depths();
  const auto& mask = map.mask();
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const float f = mask[i] ? static_cast<float>(depth[i]) : std::numeric_limits<float>::quiet_NaN();
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

SparseDepthMap decode_depth_map(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::MalformedFile, "missing SDM1 header");
  }
  const std::uint32_t w = get_u32(bytes.data() + 4);
  const std::uint32_t h = get_u32(bytes.data() + 8);
  if (w == 0 || h == 0) throw Error(ErrorCode::MalformedFile, "zero depth-map dimension");
  constexpr std::uint64_t kMaxSide = std::numeric_limits<int>::max();
  const std::uint64_t n = static_cast<std::uint64_t>(w) * h;
  if (w > kMaxSide || h > kMaxSide || n > (std::uint64_t{1} << 40)) {
    throw Error(ErrorCode::MalformedFile, "depth-map dimensions overflow");
  }
  if (bytes.size() != 12 + 4 * n) throw Error(ErrorCode::MalformedFile, "payload size mismatch");

  SparseDepthMap map(static_cast<int>(w), static_cast<int>(h));
  const unsigned char* p = bytes.data() + 12;
  for (std::uint32_t v = 0; v < h; ++v) {
    for (std::uint32_t u = 0; u < w; ++u, p += 4) {
      const float f = std::bit_cast<float>(get_u32(p));
      if (std::isnan(f)) continue;
      if (!(f > 0.0f) || !std::isfinite(f)) throw Error(ErrorCode::MalformedFile, "invalid depth value");
      map.set(static_cast<int>(u), static_cast<int>(v), static_cast<double>(f));
    }
  }
  return map;
}

void write_depth_map(const SparseDepthMap& map, const std::filesystem::path& path) {
  const auto bytes = encode_depth_map(map);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

SparseDepthMap read_depth_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_depth_map(bytes);
}

}  // namespace spn
