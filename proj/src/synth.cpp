#include "spn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spn/error.hpp"

namespace spn::synth {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "special_transport", "car", "camper", "van", "truck", "semitrailer"};

// Image counts per class in the toll dataset this generator stands in for; used only by the
// imbalanced mode.
constexpr std::array<double, kNumClasses> kImbalancedShare = {122, 448, 9, 222, 571, 1316};

// Road layout (metres). Vehicles drive along +X; the camera stands beside the road.
const Vec3 kCameraCenter(0.0, -6.0, 5.0);
const Vec3 kCameraTarget(-8.0, 1.0, 1.0);
constexpr double kFieldOfViewDeg = 60.0;
constexpr double kDashLateral = -1.75;
constexpr double kDashLength = 5.0;
constexpr double kDashPeriod = 12.0;
constexpr double kDashStart = -9.0;  // the reference dash spans [-9, -4]
constexpr double kEdgeLateral = 5.0;
constexpr double kRoadMin = -2.4;
constexpr double kRoadMax = 5.6;
constexpr double kMarkingHalfWidth = 0.09;
constexpr Interval kFrontWindow{-11.0, 1.5};  // where the vehicle front may be while recorded

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

void check_interval(const Interval& i, const char* what) {
  if (!i.valid() || !std::isfinite(i.lo) || !std::isfinite(i.hi)) {
    throw Error(ErrorCode::InvalidConfig, std::string("empty interval: ") + what);
  }
}

nlohmann::json interval_json(const Interval& i) { return nlohmann::json::array({i.lo, i.hi}); }

Interval interval_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidConfig, "interval must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

bool ground_marking(double x, double y) {
  if (std::abs(y - kEdgeLateral) < kMarkingHalfWidth) return true;
  if (std::abs(y - kDashLateral) < kMarkingHalfWidth) {
    const double phase = std::fmod(x - kDashStart, kDashPeriod);
    const double p = phase < 0.0 ? phase + kDashPeriod : phase;
    return p < kDashLength;
  }
  return false;
}

// Slab test; returns the entry distance and the face index (0 -x, 1 +x, 2 -y, 3 +y, 4 -z, 5 +z).
bool intersect_box(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi, double& t_hit, int& face) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  int entry_face = -1;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    int fa = 2 * a;      // entering through the low face when moving +
    int fb = 2 * a + 1;
    if (ta > tb) {
      std::swap(ta, tb);
      std::swap(fa, fb);
    }
    if (ta > t0) {
      t0 = ta;
      entry_face = fa;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (entry_face < 0) return false;  // origin inside the box
  t_hit = t0;
  face = entry_face;
  return true;
}

void add_box_edges(const Box& b, std::vector<LineSegment3>& lines) {
  auto corner = [&b](int i) {
    return Vec3((i & 1) ? b.hi.x() : b.lo.x(), (i & 2) ? b.hi.y() : b.lo.y(), (i & 4) ? b.hi.z() : b.lo.z());
  };
  for (int i = 0; i < 8; ++i) {
    for (int bit : {1, 2, 4}) {
      if (!(i & bit)) lines.push_back({corner(i), corner(i | bit)});
    }
  }
}

}  // namespace

std::string_view class_name(int id) {
  if (id < 0 || id >= kNumClasses) throw Error(ErrorCode::InvalidArgument, "class id out of range");
  return kClassNames[static_cast<std::size_t>(id)];
}

int class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[static_cast<std::size_t>(i)] == name) return i;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown vehicle class '" + std::string(name) + "'");
}

std::array<ClassGeometry, kNumClasses> default_class_geometry() {
  return {{
      {{12.0, 17.0}, {2.5, 3.2}, {2.6, 4.0}},   // special_transport: low deck with a load
      {{3.8, 4.9}, {1.7, 1.9}, {1.4, 1.6}},     // car
      {{6.0, 7.5}, {2.2, 2.4}, {2.8, 3.2}},     // camper
      {{4.8, 6.0}, {1.9, 2.05}, {2.2, 2.6}},    // van
      {{7.5, 10.0}, {2.4, 2.55}, {3.3, 3.8}},   // truck
      {{15.0, 17.0}, {2.5, 2.55}, {3.8, 4.0}},  // semitrailer
  }};
}

void SynthConfig::validate() const {
  if (image_width <= 0 || image_height <= 0) throw Error(ErrorCode::InvalidConfig, "image size must be positive");
  if (sequences_per_class <= 0) throw Error(ErrorCode::InvalidConfig, "sequences_per_class must be positive");
  if (min_frames < 3 || max_frames > 10 || min_frames > max_frames) {
    throw Error(ErrorCode::InvalidConfig, "frame count range must lie within [3, 10]");
  }
  check_interval(speed, "speed");
  check_interval(lane_offset, "lane_offset");
  if (!(speed.lo > 0.0)) throw Error(ErrorCode::InvalidConfig, "speed must be positive");
  if (!(noise_std >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_std must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "outlier_fraction must be in [0, 1)");
  }
  if (surface_points_per_box < 0) throw Error(ErrorCode::InvalidConfig, "surface_points_per_box must be >= 0");
  if (!(pixel_noise_std >= 0.0)) throw Error(ErrorCode::InvalidConfig, "pixel_noise_std must be >= 0");
  for (const auto& g : class_geometry) {
    check_interval(g.length, "length");
    check_interval(g.width, "width");
    check_interval(g.height, "height");
    if (!(g.length.lo > 0.0 && g.width.lo > 0.0 && g.height.lo > 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "class dimensions must be positive");
    }
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json geo = nlohmann::json::object();
  for (int i = 0; i < kNumClasses; ++i) {
    const auto& g = c.class_geometry[static_cast<std::size_t>(i)];
    geo[std::string(class_name(i))] = {
        {"length", interval_json(g.length)}, {"width", interval_json(g.width)}, {"height", interval_json(g.height)}};
  }
  return {{"image_width", c.image_width},
          {"image_height", c.image_height},
          {"sequences_per_class", c.sequences_per_class},
          {"min_frames", c.min_frames},
          {"max_frames", c.max_frames},
          {"speed", interval_json(c.speed)},
          {"lane_offset", interval_json(c.lane_offset)},
          {"noise_std", c.noise_std},
          {"outlier_fraction", c.outlier_fraction},
          {"surface_points_per_box", c.surface_points_per_box},
          {"pixel_noise_std", c.pixel_noise_std},
          {"imbalanced", c.imbalanced},
          {"seed", c.seed},
          {"class_geometry", geo}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.image_width = j.value("image_width", c.image_width);
    c.image_height = j.value("image_height", c.image_height);
    c.sequences_per_class = j.value("sequences_per_class", c.sequences_per_class);
    c.min_frames = j.value("min_frames", c.min_frames);
    c.max_frames = j.value("max_frames", c.max_frames);
    if (j.contains("speed")) c.speed = interval_from(j.at("speed"));
    if (j.contains("lane_offset")) c.lane_offset = interval_from(j.at("lane_offset"));
    c.noise_std = j.value("noise_std", c.noise_std);
    c.outlier_fraction = j.value("outlier_fraction", c.outlier_fraction);
    c.surface_points_per_box = j.value("surface_points_per_box", c.surface_points_per_box);
    c.pixel_noise_std = j.value("pixel_noise_std", c.pixel_noise_std);
    c.imbalanced = j.value("imbalanced", c.imbalanced);
    c.seed = j.value("seed", c.seed);
    if (j.contains("class_geometry")) {
      for (const auto& [name, g] : j.at("class_geometry").items()) {
        auto& dst = c.class_geometry[static_cast<std::size_t>(class_from_name(name))];
        if (g.contains("length")) dst.length = interval_from(g.at("length"));
        if (g.contains("width")) dst.width = interval_from(g.at("width"));
        if (g.contains("height")) dst.height = interval_from(g.at("height"));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

RoadScene make_road_scene(int image_width, int image_height) {
  const double focal = 0.5 * image_width / std::tan(0.5 * kFieldOfViewDeg * std::numbers::pi / 180.0);
  const Vec2 principal(0.5 * (image_width - 1), 0.5 * (image_height - 1));
  const Mat3 r = look_rotation(kCameraTarget - kCameraCenter, Vec3(0.0, 0.0, -1.0));
  RoadScene scene{PinholeCamera(focal, principal, r, kCameraCenter, {image_width, image_height}),
                  Vec3(kDashStart, kDashLateral, 0.0), Vec3(kDashStart + kDashLength, kDashLateral, 0.0), {}};

  // Lane markings as 1 m pieces; keep the ones fully in view.
  auto add_piece = [&scene](const Vec3& a, const Vec3& b) {
    const Projection pa = project_point(scene.camera, a);
    const Projection pb = project_point(scene.camera, b);
    if (pa.ok() && pb.ok()) scene.lane_segments.push_back({pa.pixel, pb.pixel});
  };
  for (double x = -60.0; x < 10.0; x += 1.0) {
    add_piece(Vec3(x, kEdgeLateral, 0.0), Vec3(x + 1.0, kEdgeLateral, 0.0));
    if (ground_marking(x + 0.5, kDashLateral)) add_piece(Vec3(x, kDashLateral, 0.0), Vec3(x + 1.0, kDashLateral, 0.0));
  }
  return scene;
}

std::vector<Box> vehicle_boxes(int class_id, double length, double width, double height, Rng& rng) {
  const double hw = 0.5 * width;
  auto box = [hw](double x0, double x1, double z0, double z1, double shrink = 0.0) {
    return Box{Vec3(x0, -hw + shrink, z0), Vec3(x1, hw - shrink, z1)};
  };
  const double L = length;
  std::vector<Box> boxes;
  switch (static_cast<VehicleClass>(class_id)) {
    case VehicleClass::SpecialTransport: {
      const double cab = 2.6;
      boxes.push_back(box(-cab, 0.0, 0.5, 3.0));
      boxes.push_back(box(-L, -cab - 0.3, 0.7, 1.2));
      const double load_len = rng.uniform(0.4, 0.8) * (L - cab - 0.3);
      const double load_start = -cab - 0.3 - rng.uniform(0.0, 1.0) * (L - cab - 0.3 - load_len);
      boxes.push_back(box(load_start - load_len, load_start, 1.2, std::max(1.6, height), 0.1));
      break;
    }
    case VehicleClass::Car:
      boxes.push_back(box(-L, 0.0, 0.25, 0.9));
      boxes.push_back(box(-0.8 * L, -0.3 * L, 0.9, height, 0.1));
      break;
    case VehicleClass::Camper:
      boxes.push_back(box(-1.2, 0.0, 0.35, 1.9, 0.05));
      boxes.push_back(box(-L, -1.2, 0.4, height));
      boxes.push_back(box(-1.9, -0.6, 1.9, height - 0.25, 0.1));
      break;
    case VehicleClass::Van:
      boxes.push_back(box(-0.9, 0.0, 0.3, 1.1));
      boxes.push_back(box(-L, -0.9, 0.3, height));
      break;
    case VehicleClass::Truck: {
      const double cab = 2.2;
      boxes.push_back(box(-cab, 0.0, 0.5, 3.0));
      boxes.push_back(box(-L, -cab - 0.3, 1.0, height));
      break;
    }
    case VehicleClass::Semitrailer: {
      const double cab = 2.4;
      boxes.push_back(box(-cab, 0.0, 0.5, 3.2));
      boxes.push_back(box(-L, -cab - 1.0, 1.2, height));
      break;
    }
    default:
      throw Error(ErrorCode::InvalidArgument, "class id out of range");
  }
  return boxes;
}

VehicleModel3D vehicle_model(const std::vector<Box>& boxes, int surface_points_per_box, Rng& rng) {
  VehicleModel3D m;
  for (const auto& b : boxes) {
    for (int i = 0; i < 8; ++i) {
      m.points.emplace_back((i & 1) ? b.hi.x() : b.lo.x(), (i & 2) ? b.hi.y() : b.lo.y(), (i & 4) ? b.hi.z() : b.lo.z());
    }
    add_box_edges(b, m.lines);
    // Surface samples on the faces the roadside camera can see: front (+x), near side (-y), top.
    const Vec3 e = b.hi - b.lo;
    const double a_front = e.y() * e.z();
    const double a_side = e.x() * e.z();
    const double a_top = e.x() * e.y();
    const double total = a_front + a_side + a_top;
    for (int k = 0; k < surface_points_per_box; ++k) {
      const double pick = rng.uniform() * total;
      const double u = rng.uniform();
      const double v = rng.uniform();
      if (pick < a_front) {
        m.points.emplace_back(b.hi.x(), b.lo.y() + u * e.y(), b.lo.z() + v * e.z());
      } else if (pick < a_front + a_side) {
        m.points.emplace_back(b.lo.x() + u * e.x(), b.lo.y(), b.lo.z() + v * e.z());
      } else {
        m.points.emplace_back(b.lo.x() + u * e.x(), b.lo.y() + v * e.y(), b.hi.z());
      }
    }
  }
  return m;
}

VehicleModel3D corrupt_reconstruction(const VehicleModel3D& model, double noise_std, double outlier_fraction,
                                      std::uint64_t seed) {
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidFraction, "outlier_fraction must be in [0, 1)");
  }
  if (!(noise_std >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_std must be >= 0");
  Rng rng(seed);
  VehicleModel3D out = model;

  const std::size_t n = out.points.size();
  const auto outliers = static_cast<std::size_t>(round_half_up(outlier_fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < outliers; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }

  if (noise_std > 0.0) {
    auto jitter = [&rng, noise_std](Vec3& p) {
      for (int a = 0; a < 3; ++a) p[a] += noise_std * rng.normal();
    };
    for (auto& p : out.points) jitter(p);
    for (auto& l : out.lines) {
      jitter(l.a);
      jitter(l.b);
    }
  }

  if (outliers > 0) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    auto grow = [&lo, &hi](const Vec3& p) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    };
    for (const auto& p : model.points) grow(p);
    for (const auto& l : model.lines) {
      grow(l.a);
      grow(l.b);
    }
    const Vec3 center = 0.5 * (lo + hi);
    const Vec3 half = 1.5 * (hi - lo);
    for (std::size_t i = 0; i < outliers; ++i) {
      Vec3 p;
      for (int a = 0; a < 3; ++a) p[a] = rng.uniform(center[a] - half[a], center[a] + half[a]);
      out.points[idx[i]] = p;
    }
  }
  return out;
}

GrayImage render_frame(const RoadScene& road, const std::vector<Box>& boxes, const Vec3& offset, double shade_offset,
                       double pixel_noise_std, Rng& rng) {
  static constexpr double kFaceShade[6] = {95.0, 125.0, 150.0, 135.0, 60.0, 205.0};
  const PinholeCamera& cam = road.camera;
  GrayImage img(cam.width(), cam.height());
  const Vec3 o = cam.center();
  for (int v = 0; v < cam.height(); ++v) {
    for (int u = 0; u < cam.width(); ++u) {
      double acc = 0.0;
      for (int sub = 0; sub < 4; ++sub) {
        const Vec2 px(u - 0.25 + 0.5 * (sub & 1), v - 0.25 + 0.5 * (sub >> 1));
        const Vec3 d = cast_ray(cam, px).direction;
        double best = std::numeric_limits<double>::infinity();
        double shade = 170.0;  // sky
        if (d.z() < 0.0) {
          best = -o.z() / d.z();
          const Vec3 g = o + best * d;
          if (g.y() < kRoadMin || g.y() > kRoadMax) {
            shade = 70.0;
          } else {
            shade = ground_marking(g.x(), g.y()) ? 225.0 : 100.0;
          }
        }
        for (const auto& b : boxes) {
          double t = 0.0;
          int face = 0;
          if (intersect_box(o, d, b.lo + offset, b.hi + offset, t, face) && t < best) {
            best = t;
            shade = kFaceShade[face] + shade_offset;
          }
        }
        acc += shade;
      }
      const double value = 0.25 * acc + pixel_noise_std * rng.normal();
      img.at(u, v) = static_cast<std::uint8_t>(std::clamp(std::floor(value + 0.5), 0.0, 255.0));
    }
  }
  return img;
}

SequenceSample generate_sequence(const SynthConfig& config, const RoadScene& road, int sequence_id, int label) {
  Rng rng = Rng(config.seed).fork(static_cast<std::uint64_t>(sequence_id));
  SequenceSample s;
  s.sequence_id = sequence_id;
  s.label = label;
  s.seed = rng.next();

  const auto& geo = config.class_geometry[static_cast<std::size_t>(label)];
  const double length = rng.uniform(geo.length.lo, geo.length.hi);
  const double width = rng.uniform(geo.width.lo, geo.width.hi);
  const double height = rng.uniform(geo.height.lo, geo.height.hi);
  const auto boxes = vehicle_boxes(label, length, width, height, rng);

  const int frames = rng.integer(config.min_frames, config.max_frames);
  s.speed = rng.uniform(config.speed.lo, config.speed.hi);
  const double travel = (frames - 1) * s.speed;
  const double front0 = rng.uniform(kFrontWindow.lo, std::max(kFrontWindow.lo, kFrontWindow.hi - travel));
  const double lateral = rng.uniform(config.lane_offset.lo, config.lane_offset.hi);
  const double shade = rng.uniform(-30.0, 30.0);

  // Reconstruction frame: the world at frame 0, in which the vehicle is static and the camera
  // moves backwards along -X by `speed` per frame.
  const Vec3 offset0(front0, lateral, 0.0);
  const VehicleModel3D truth = apply_similarity(vehicle_model(boxes, config.surface_points_per_box, rng), 1.0, offset0);
  std::vector<PinholeCamera> virtual_cams;
  for (int k = 0; k < frames; ++k) {
    virtual_cams.push_back(road.camera.with_center(road.camera.center() - Vec3(k * s.speed, 0.0, 0.0)));
    Rng frame_rng = rng.fork(static_cast<std::uint64_t>(k));
    s.frames.push_back(render_frame(road, boxes, offset0 + Vec3(k * s.speed, 0.0, 0.0), shade,
                                    config.pixel_noise_std, frame_rng));
  }

  const VehicleModel3D corrupted = corrupt_reconstruction(truth, config.noise_std, config.outlier_fraction, rng.next());

  // Arbitrary SfM gauge: unit baseline between consecutive cameras plus a random offset.
  const double gauge = 1.0 / s.speed;
  const Vec3 shift(rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0));
  SceneBundle& rec = s.reconstruction;
  rec.model = apply_similarity(corrupted, gauge, shift);
  for (const auto& c : virtual_cams) rec.cameras.push_back(c.with_center(gauge * c.center() + shift));
  rec.refline.pixel_p1 = project_unbounded(road.camera, road.reference_p1).pixel;
  rec.refline.pixel_p2 = project_unbounded(road.camera, road.reference_p2).pixel;
  rec.refline.length = gauge * (road.reference_p1 - road.reference_p2).norm();

  const AlignedScene aligned = align_to_world(rec.model, rec.cameras, rec.refline);
  for (auto variant : {ReprojectionVariant::Points, ReprojectionVariant::Lines, ReprojectionVariant::PointsAndLines}) {
    auto& maps = s.depth_maps[static_cast<std::size_t>(variant)];
    for (const auto& cam : aligned.cameras) maps.push_back(reproject(aligned.model, cam, variant));
  }
  return s;
}

Dataset generate_dataset(const SynthConfig& config) {
  config.validate();
  const RoadScene road = make_road_scene(config.image_width, config.image_height);

  std::array<int, kNumClasses> counts{};
  if (config.imbalanced) {
    const double total_share = std::accumulate(kImbalancedShare.begin(), kImbalancedShare.end(), 0.0);
    for (int c = 0; c < kNumClasses; ++c) {
      const double share = kImbalancedShare[static_cast<std::size_t>(c)] / total_share;
      counts[static_cast<std::size_t>(c)] =
          std::max(5, round_half_up(share * kNumClasses * config.sequences_per_class));
    }
  } else {
    counts.fill(config.sequences_per_class);
  }

  Dataset data;
  Rng split_rng(config.seed ^ 0x5350'4C49'5400ULL);
  int next_id = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const int n = counts[static_cast<std::size_t>(c)];
    std::vector<int> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), next_id);
    next_id += n;
    std::vector<int> order = ids;
    shuffle(order.begin(), order.end(), split_rng);
    const int n_test = round_half_up(0.2 * n);
    std::vector<bool> is_test(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n_test; ++i) is_test[static_cast<std::size_t>(order[static_cast<std::size_t>(i)] - ids.front())] = true;
    for (int i = 0; i < n; ++i) {
      auto seq = generate_sequence(config, road, ids[static_cast<std::size_t>(i)], c);
      (is_test[static_cast<std::size_t>(i)] ? data.test : data.train).push_back(std::move(seq));
    }
  }
  return data;
}

void write_dataset(const Dataset& data, const SynthConfig& config, const fs::path& root) {
  fs::create_directories(root);
  write_json_file(to_json(config), root / "synth.json");
  write_segments_csv(make_road_scene(config.image_width, config.image_height).lane_segments, root / "segments.csv");
  auto write_split = [&root](const std::vector<SequenceSample>& seqs, const char* split) {
    for (const auto& s : seqs) {
      const fs::path dir = root / split / std::to_string(s.sequence_id);
      fs::create_directories(dir);
      for (std::size_t k = 0; k < s.frames.size(); ++k) {
        const std::string idx = std::to_string(k);
        write_pgm(s.frames[k], dir / ("frame_" + idx + ".pgm"));
        write_depth_map(s.depth(ReprojectionVariant::PointsAndLines)[k], dir / ("depth_" + idx + ".sdm"));
        write_depth_map(s.depth(ReprojectionVariant::Points)[k], dir / ("depth_points_" + idx + ".sdm"));
        write_depth_map(s.depth(ReprojectionVariant::Lines)[k], dir / ("depth_lines_" + idx + ".sdm"));
      }
      write_json_file({{"label", s.label},
                       {"class", class_name(s.label)},
                       {"speed", s.speed},
                       {"seed", s.seed},
                       {"frames", s.frames.size()}},
                      dir / "meta.json");
      write_scene_bundle(s.reconstruction, dir / "scene");
    }
  };
  write_split(data.train, "train");
  write_split(data.test, "test");
}

Dataset read_dataset(const fs::path& root) {
  Dataset data;
  auto read_split = [&root](const char* split, std::vector<SequenceSample>& out) {
    const fs::path dir = root / split;
    if (!fs::exists(dir)) return;
    std::vector<int> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_directory()) continue;
      try {
        ids.push_back(std::stoi(entry.path().filename().string()));
      } catch (const std::exception&) {
        // not a sequence directory
      }
    }
    std::sort(ids.begin(), ids.end());
    for (int id : ids) {
      const fs::path seq_dir = dir / std::to_string(id);
      const auto meta = read_json_file(seq_dir / "meta.json");
      SequenceSample s;
      s.sequence_id = id;
      s.label = meta.at("label").get<int>();
      s.speed = meta.value("speed", 0.0);
      s.seed = meta.value("seed", std::uint64_t{0});
      const int frames = meta.at("frames").get<int>();
      for (int k = 0; k < frames; ++k) {
        const std::string idx = std::to_string(k);
        s.frames.push_back(read_pgm(seq_dir / ("frame_" + idx + ".pgm")));
        s.depth_maps[static_cast<std::size_t>(ReprojectionVariant::PointsAndLines)].push_back(
            read_depth_map(seq_dir / ("depth_" + idx + ".sdm")));
        s.depth_maps[static_cast<std::size_t>(ReprojectionVariant::Points)].push_back(
            read_depth_map(seq_dir / ("depth_points_" + idx + ".sdm")));
        s.depth_maps[static_cast<std::size_t>(ReprojectionVariant::Lines)].push_back(
            read_depth_map(seq_dir / ("depth_lines_" + idx + ".sdm")));
      }
      if (fs::exists(seq_dir / "scene")) s.reconstruction = read_scene_bundle(seq_dir / "scene");
      out.push_back(std::move(s));
    }
  };
  read_split("train", data.train);
  read_split("test", data.test);
  return data;
}

}  // namespace spn::synth
