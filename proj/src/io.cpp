#include "spn/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <zlib.h>

#include "spn/error.hpp"

namespace spn {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::IoError, "cannot create " + path.string());
  return out;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::MalformedFile, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec2 vec2_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::MalformedFile, "expected a 2-vector");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<std::array<double, 4>> read_quad_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedFile, "empty CSV " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ua,va,ub,vb") throw Error(ErrorCode::MalformedFile, "expected header ua,va,ub,vb");
  std::vector<std::array<double, 4>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 4> row{};
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i < 4; ++i) {
      if (!std::getline(ss, cell, ',')) throw Error(ErrorCode::MalformedFile, "short CSV row: " + line);
      try {
        row[static_cast<std::size_t>(i)] = std::stod(cell);
      } catch (const std::exception&) {
        throw Error(ErrorCode::MalformedFile, "bad number in CSV row: " + line);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

void write_quad_csv(const std::vector<std::array<double, 4>>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "ua,va,ub,vb\n";
  for (const auto& r : rows) out << fmt17(r[0]) << ',' << fmt17(r[1]) << ',' << fmt17(r[2]) << ',' << fmt17(r[3]) << '\n';
}

}  // namespace

json camera_to_json(const PinholeCamera& c) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation()(r, k));
  }
  return json{{"focal", c.focal()},
              {"principal", {c.principal_point().x(), c.principal_point().y()}},
              {"rotation", rot},
              {"center", vec_json(c.center())},
              {"width", c.width()},
              {"height", c.height()}};
}

PinholeCamera camera_from_json(const json& j) {
  try {
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 9) throw Error(ErrorCode::MalformedFile, "rotation needs 9 values");
    Mat3 r;
    for (int i = 0; i < 9; ++i) r(i / 3, i % 3) = rot[static_cast<std::size_t>(i)].get<double>();
    return PinholeCamera(j.at("focal").get<double>(), vec2_from(j.at("principal")), r, vec3_from(j.at("center")),
                         ImageSize{j.at("width").get<int>(), j.at("height").get<int>()});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("camera JSON: ") + e.what());
  }
}

json lines_to_json(const std::vector<LineSegment3>& lines) {
  json out = json::array();
  for (const auto& l : lines) out.push_back(json::array({vec_json(l.a), vec_json(l.b)}));
  return out;
}

std::vector<LineSegment3> lines_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::MalformedFile, "lines.json must be a list");
  std::vector<LineSegment3> lines;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw Error(ErrorCode::MalformedFile, "line needs two endpoints");
    lines.push_back({vec3_from(e[0]), vec3_from(e[1])});
  }
  return lines;
}

void write_ply_points(const std::vector<Vec3>& points, const fs::path& path) {
  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const auto& p : points) out << fmt17(p.x()) << ' ' << fmt17(p.y()) << ' ' << fmt17(p.z()) << '\n';
}

std::vector<Vec3> read_ply_points(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw Error(ErrorCode::MalformedFile, "not a PLY file");

  // Element layout: only the vertex element's property order is needed, but counts of earlier
  // elements matter for skipping their rows.
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = fmt == "ascii";
    } else if (kw == "element") {
      Element e;
      ss >> e.name >> e.count;
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw Error(ErrorCode::MalformedFile, "property before element");
      std::string type, name;
      ss >> type;
      if (type == "list") throw Error(ErrorCode::MalformedFile, "list properties unsupported");
      ss >> name;
      elements.back().props.push_back(name);
    } else if (kw == "end_header") {
      break;
    }
  }
  if (!ascii) throw Error(ErrorCode::MalformedFile, "only ASCII PLY is supported");

  std::vector<Vec3> points;
  for (const auto& e : elements) {
    int ix = -1, iy = -1, iz = -1;
    for (std::size_t k = 0; k < e.props.size(); ++k) {
      if (e.props[k] == "x") ix = static_cast<int>(k);
      if (e.props[k] == "y") iy = static_cast<int>(k);
      if (e.props[k] == "z") iz = static_cast<int>(k);
    }
    const bool is_vertex = e.name == "vertex";
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw Error(ErrorCode::MalformedFile, "vertex lacks x,y,z");
    for (std::size_t r = 0; r < e.count; ++r) {
      if (!std::getline(in, line)) throw Error(ErrorCode::MalformedFile, "truncated PLY body");
      if (!is_vertex) continue;
      std::istringstream ss(line);
      std::vector<double> vals(e.props.size());
      for (auto& v : vals) {
        if (!(ss >> v)) throw Error(ErrorCode::MalformedFile, "bad PLY vertex row");
      }
      points.emplace_back(vals[static_cast<std::size_t>(ix)], vals[static_cast<std::size_t>(iy)],
                          vals[static_cast<std::size_t>(iz)]);
    }
  }
  return points;
}

void write_scene_bundle(const SceneBundle& scene, const fs::path& dir) {
  fs::create_directories(dir);
  json cams = json::array();
  for (const auto& c : scene.cameras) cams.push_back(camera_to_json(c));
  write_json_file(cams, dir / "cameras.json");
  write_ply_points(scene.model.points, dir / "points.ply");
  write_json_file(lines_to_json(scene.model.lines), dir / "lines.json");
  write_json_file(json{{"p1", {scene.refline.pixel_p1.x(), scene.refline.pixel_p1.y()}},
                       {"p2", {scene.refline.pixel_p2.x(), scene.refline.pixel_p2.y()}},
                       {"length", scene.refline.length}},
                  dir / "refline.json");
}

SceneBundle read_scene_bundle(const fs::path& dir) {
  SceneBundle scene;
  const json cams = read_json_file(dir / "cameras.json");
  if (!cams.is_array()) throw Error(ErrorCode::MalformedFile, "cameras.json must be a list");
  for (const auto& c : cams) scene.cameras.push_back(camera_from_json(c));
  scene.model.points = read_ply_points(dir / "points.ply");
  if (fs::exists(dir / "lines.json")) scene.model.lines = lines_from_json(read_json_file(dir / "lines.json"));
  const json ref = read_json_file(dir / "refline.json");
  try {
    scene.refline.pixel_p1 = vec2_from(ref.at("p1"));
    scene.refline.pixel_p2 = vec2_from(ref.at("p2"));
    scene.refline.length = ref.value("length", 1.0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, std::string("refline.json: ") + e.what());
  }
  scene.model.validate();
  return scene;
}

void write_pgm(const GrayImage& image, const fs::path& path) {
  auto out = open_out(path, true);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

GrayImage read_pgm(const fs::path& path) {
  auto in = open_in(path, true);
  auto token = [&in, &path]() {
    std::string t;
    while (in >> t) {
      if (t[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return t;
    }
    throw Error(ErrorCode::MalformedFile, "truncated PGM header: " + path.string());
  };
  if (token() != "P5") throw Error(ErrorCode::MalformedFile, "not a binary PGM: " + path.string());
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  const int maxval = std::stoi(token());
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::MalformedFile, "unsupported PGM: " + path.string());
  in.get();
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw Error(ErrorCode::MalformedFile, "truncated PGM payload: " + path.string());
  }
  return img;
}

void write_png(const GrayImage& image, const fs::path& path) {
  auto be32 = [](std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
  };
  auto chunk = [&be32](std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& data) {
    be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    be32(out, static_cast<std::uint32_t>(crc));
  };

  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(image.height) * (image.width + 1));
  for (int v = 0; v < image.height; ++v) {
    raw.push_back(0);  // filter: none
    for (int u = 0; u < image.width; ++u) raw.push_back(image.at(u, v));
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> packed(packed_len);
  if (compress(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size())) != Z_OK) {
    throw Error(ErrorCode::IoError, "zlib compression failed");
  }
  packed.resize(packed_len);

  std::vector<unsigned char> ihdr;
  be32(ihdr, static_cast<std::uint32_t>(image.width));
  be32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit grayscale, deflate, no interlace

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", {});
  auto f = open_out(path, true);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::vector<KeypointMatch> read_matches_csv(const fs::path& path) {
  std::vector<KeypointMatch> out;
  for (const auto& r : read_quad_csv(path)) out.push_back({Vec2(r[0], r[1]), Vec2(r[2], r[3])});
  return out;
}

void write_matches_csv(const std::vector<KeypointMatch>& matches, const fs::path& path) {
  std::vector<std::array<double, 4>> rows;
  for (const auto& m : matches) rows.push_back({m.pixel_a.x(), m.pixel_a.y(), m.pixel_b.x(), m.pixel_b.y()});
  write_quad_csv(rows, path);
}

std::vector<Segment2> read_segments_csv(const fs::path& path) {
  std::vector<Segment2> out;
  for (const auto& r : read_quad_csv(path)) out.push_back({Vec2(r[0], r[1]), Vec2(r[2], r[3])});
  return out;
}

void write_segments_csv(const std::vector<Segment2>& segments, const fs::path& path) {
  std::vector<std::array<double, 4>> rows;
  for (const auto& s : segments) rows.push_back({s.a.x(), s.a.y(), s.b.x(), s.b.y()});
  write_quad_csv(rows, path);
}

json read_json_file(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedFile, path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const fs::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace spn
