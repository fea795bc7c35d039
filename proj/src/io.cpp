// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/io.hpp"

#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mgrecon {

static_assert(std::endian::native == std::endian::little,
              "raster IO assumes a little-endian host");

using nlohmann::json;

bool file_exists(const std::string& path) {
  std::error_code ec;
  return std::filesystem::exists(path, ec);
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

static std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

static std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open " + path);
  return in;
}

std::string pfm_sidecar_path(const std::string& pfm_path) {
  if (pfm_path.size() > 4 && pfm_path.substr(pfm_path.size() - 4) == ".pfm")
    return pfm_path.substr(0, pfm_path.size() - 4) + ".valid.pgm";
  return pfm_path + ".valid.pgm";
}

void write_pfm(const std::string& path, const DepthMap& depth) {
  auto out = open_out(path);
  out << "Pf\n" << depth.width() << " " << depth.height() << "\n-1.0\n";
  MaskImage valid(depth.width(), depth.height(), 0);
  std::vector<float> row(depth.width());
  for (int y = depth.height() - 1; y >= 0; --y) { // bottom row first
    for (int x = 0; x < depth.width(); ++x) {
      double d = depth.at(x, y);
      bool ok = depth_valid(d);
      valid.at(x, y) = ok ? 1 : 0;
      row[x] = ok ? static_cast<float>(d) : 0.0f;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              row.size() * sizeof(float));
  }
  if (!out) throw IoError("short write to " + path);
  out.close();
  write_pgm(pfm_sidecar_path(path), valid);
}

DepthMap read_pfm(const std::string& path) {
  auto in = open_in(path);
  std::string magic;
  in >> magic;
  if (magic != "Pf")
    throw ParseError(path + ": not a grayscale PFM (header " + magic + ")");
  int w = 0, h = 0;
  double scale = 0.0;
  in >> w >> h >> scale;
  if (!in || w <= 0 || h <= 0) throw ParseError(path + ": bad PFM dimensions");
  if (scale >= 0.0)
    throw ParseError(path + ": big-endian PFM not supported");
  in.get(); // single whitespace after the scale
  DepthMap depth(w, h, invalid_depth());
  std::vector<float> row(w);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!in) throw ParseError(path + ": truncated PFM payload");
    for (int x = 0; x < w; ++x)
      depth.at(x, y) = depth_valid(row[x]) ? row[x] : invalid_depth();
  }
  std::string sidecar = pfm_sidecar_path(path);
  if (file_exists(sidecar)) {
    MaskImage valid = read_pgm(sidecar);
    if (!valid.same_shape(MaskImage(w, h)))
      throw ParseError(sidecar + ": validity mask shape mismatch");
    for (size_t k = 0; k < depth.size(); ++k)
      if (!valid[k]) depth[k] = invalid_depth();
  }
  return depth;
}

// Skips whitespace and '#' comment lines in PNM headers.
static int pnm_next_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  if (c == EOF) throw ParseError(path + ": truncated PNM header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw ParseError(path + ": malformed PNM header");
  return value;
}

void write_pgm(const std::string& path, const MaskImage& mask) {
  auto out = open_out(path);
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  std::vector<uint8_t> row(mask.width());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x)
      row[x] = mask.at(x, y) ? 255 : 0;
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw IoError("short write to " + path);
}

MaskImage read_pgm(const std::string& path) {
  auto in = open_in(path);
  char p = 0, five = 0;
  in.get(p);
  in.get(five);
  if (p != 'P' || five != '5') throw ParseError(path + ": not a binary PGM");
  int w = pnm_next_int(in, path);
  int h = pnm_next_int(in, path);
  int maxval = pnm_next_int(in, path);
  if (maxval <= 0 || maxval > 255)
    throw ParseError(path + ": unsupported PGM maxval");
  MaskImage mask(w, h, 0);
  std::vector<uint8_t> row(w);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw ParseError(path + ": truncated PGM payload");
    for (int x = 0; x < w; ++x) mask.at(x, y) = row[x] >= 128 ? 1 : 0;
  }
  return mask;
}

void write_ppm(const std::string& path, const RgbImage& img) {
  auto out = open_out(path);
  out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      row[3 * x + 0] = img.r.at(x, y);
      row[3 * x + 1] = img.g.at(x, y);
      row[3 * x + 2] = img.b.at(x, y);
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw IoError("short write to " + path);
}

RgbImage read_ppm(const std::string& path) {
  auto in = open_in(path);
  char p = 0, six = 0;
  in.get(p);
  in.get(six);
  if (p != 'P' || six != '6') throw ParseError(path + ": not a binary PPM");
  int w = pnm_next_int(in, path);
  int h = pnm_next_int(in, path);
  int maxval = pnm_next_int(in, path);
  if (maxval != 255) throw ParseError(path + ": unsupported PPM maxval");
  RgbImage img{Grid2D<uint8_t>(w, h), Grid2D<uint8_t>(w, h),
               Grid2D<uint8_t>(w, h)};
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw ParseError(path + ": truncated PPM payload");
    for (int x = 0; x < w; ++x) {
      img.r.at(x, y) = row[3 * x + 0];
      img.g.at(x, y) = row[3 * x + 1];
      img.b.at(x, y) = row[3 * x + 2];
    }
  }
  return img;
}

void write_ply(const std::string& path, const PointCloud& cloud) {
  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
         "end_header\n";
  char line[160];
  for (const auto& pt : cloud) {
    int n = std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %d %d %d\n",
                          pt.p.x(), pt.p.y(), pt.p.z(), int(pt.r), int(pt.g),
                          int(pt.b));
    out.write(line, n);
  }
  if (!out) throw IoError("short write to " + path);
}

PointCloud read_ply(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw ParseError(path + ": not a PLY file");
  size_t count = 0;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (line.rfind("format ascii", 0) == 0) ascii = true;
    if (line.rfind("element vertex ", 0) == 0)
      count = std::stoull(line.substr(15));
    if (line == "end_header") break;
  }
  if (!ascii) throw ParseError(path + ": only ascii PLY supported");
  PointCloud cloud;
  cloud.reserve(count);
  for (size_t k = 0; k < count; ++k) {
    if (!std::getline(in, line))
      throw ParseError(path + ": truncated vertex list");
    CloudPoint pt;
    int r = 0, g = 0, b = 0;
    if (std::sscanf(line.c_str(), "%lf %lf %lf %d %d %d", &pt.p.x(),
                    &pt.p.y(), &pt.p.z(), &r, &g, &b) != 6)
      throw ParseError(path + ": malformed vertex line");
    pt.r = static_cast<uint8_t>(r);
    pt.g = static_cast<uint8_t>(g);
    pt.b = static_cast<uint8_t>(b);
    cloud.push_back(pt);
  }
  return cloud;
}

void write_cameras_json(const std::string& path,
                        const std::vector<CameraView>& views) {
  json arr = json::array();
  for (const auto& v : views) {
    json R = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) R.push_back(v.pose.R(r, c));
    arr.push_back({{"fx", v.K.fx},
                   {"fy", v.K.fy},
                   {"cx", v.K.cx},
                   {"cy", v.K.cy},
                   {"width", v.K.width},
                   {"height", v.K.height},
                   {"R", R},
                   {"t", {v.pose.t.x(), v.pose.t.y(), v.pose.t.z()}},
                   {"frame", "camera_to_world"}});
  }
  auto out = open_out(path);
  out << arr.dump(2) << "\n";
}

std::vector<CameraView> read_cameras_json(const std::string& path) {
  auto in = open_in(path);
  json arr;
  try {
    in >> arr;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!arr.is_array()) throw ParseError(path + ": expected a JSON array");
  std::vector<CameraView> views;
  for (const auto& v : arr) {
    CameraView cam;
    try {
      cam.K.fx = v.at("fx").get<double>();
      cam.K.fy = v.at("fy").get<double>();
      cam.K.cx = v.at("cx").get<double>();
      cam.K.cy = v.at("cy").get<double>();
      cam.K.width = v.at("width").get<int>();
      cam.K.height = v.at("height").get<int>();
      if (v.at("frame").get<std::string>() != "camera_to_world")
        throw ParseError(path + ": unsupported pose frame");
      const auto& R = v.at("R");
      const auto& t = v.at("t");
      if (R.size() != 9 || t.size() != 3)
        throw ParseError(path + ": R must have 9 entries and t 3");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          cam.pose.R(r, c) = R[3 * r + c].get<double>();
      for (int k = 0; k < 3; ++k) cam.pose.t[k] = t[k].get<double>();
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    cam.K.validate();
    cam.pose.validate();
    views.push_back(cam);
  }
  return views;
}

void write_matches_jsonl(const std::string& path,
                         const std::vector<RawMatch>& matches) {
  auto out = open_out(path);
  for (const auto& m : matches) {
    json row = {{"i", m.i},
                {"j", m.j},
                {"xi", {m.xi.x(), m.xi.y()}},
                {"xj", {m.xj.x(), m.xj.y()}},
                {"q", m.q}};
    out << row.dump() << "\n";
  }
}

std::vector<RawMatch> read_matches_jsonl(const std::string& path) {
  auto in = open_in(path);
  std::vector<RawMatch> matches;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
      RawMatch m;
      m.i = row.at("i").get<int>();
      m.j = row.at("j").get<int>();
      m.xi = Vec2(row.at("xi").at(0).get<double>(),
                  row.at("xi").at(1).get<double>());
      m.xj = Vec2(row.at("xj").at(0).get<double>(),
                  row.at("xj").at(1).get<double>());
      m.q = row.at("q").get<double>();
      matches.push_back(m);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return matches;
}

std::string pair_raster_name(int i, int j, const std::string& kind,
                             int view) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "pair_%03d_%03d_%s_%03d.pfm", i, j,
                kind.c_str(), view);
  return buf;
}

} // namespace mgrecon
