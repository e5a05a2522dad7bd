#include "raycal/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace raycal {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

// Line-oriented reader with position diagnostics for ParseError messages.
class LineReader {
 public:
  LineReader(const std::string& path) : path_(path), is_(path) {
    if (!is_) throw ParseError(path + ": cannot open");
  }

  // Next non-empty, non-comment line; false at EOF.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(is_, line)) {
      ++lineno_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      tokens.clear();
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (!tokens.empty()) return true;
    }
    return false;
  }

  void putback(const std::vector<std::string>& tokens) {
    pending_ = tokens;
    has_pending_ = true;
  }

  bool next_or_pending(std::vector<std::string>& tokens) {
    if (has_pending_) {
      tokens = pending_;
      has_pending_ = false;
      return true;
    }
    return next(tokens);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(path_ + ":" + std::to_string(lineno_) + ": " + msg);
  }

  double to_double(const std::string& tok) const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + tok + "'");
    }
    if (used != tok.size()) fail("trailing garbage in number '" + tok + "'");
    if (!std::isfinite(v)) fail("non-finite value '" + tok + "'");
    return v;
  }

  long to_long(const std::string& tok) const {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(tok, &used);
    } catch (const std::exception&) {
      fail("expected an integer, got '" + tok + "'");
    }
    if (used != tok.size()) fail("trailing garbage in integer '" + tok + "'");
    return v;
  }

 private:
  std::string path_;
  std::ifstream is_;
  long lineno_ = 0;
  std::vector<std::string> pending_;
  bool has_pending_ = false;
};

void write_camera_block(std::ostream& os, const CameraParams& cam) {
  os << cam.width << " " << cam.height << "\n";
  os << "f " << format_double(cam.intrinsics.f0.x()) << " "
     << format_double(cam.intrinsics.f0.y()) << "\n";
  os << "c " << format_double(cam.intrinsics.c0.x()) << " "
     << format_double(cam.intrinsics.c0.y()) << "\n";
  os << "k " << format_double(cam.radial.k0.x()) << " "
     << format_double(cam.radial.k0.y()) << "\n";
  os << "a";
  for (int i = 0; i < 6; ++i) os << " " << format_double(cam.extrinsics.a0[i]);
  os << "\n";
  os << "t";
  for (int i = 0; i < 3; ++i) os << " " << format_double(cam.extrinsics.t0[i]);
  os << "\n";
  if (cam.raxel.cols >= 2 && cam.raxel.rows >= 2) {
    os << "raxel " << cam.raxel.cols << " " << cam.raxel.rows << "\n";
    for (std::size_t n = 0; n < cam.raxel.node_count(); ++n) {
      for (int i = 0; i < 3; ++i)
        os << (i == 0 ? "" : " ") << format_double(cam.raxel.dir_offset[n][i]);
      for (int i = 0; i < 3; ++i)
        os << " " << format_double(cam.raxel.org_offset[n][i]);
      os << "\n";
    }
  }
  os << "\n";
}

void read_raxel_nodes(LineReader& reader, RaxelGrid& grid) {
  std::vector<std::string> tokens;
  for (std::size_t n = 0; n < grid.node_count(); ++n) {
    if (!reader.next(tokens)) reader.fail("unexpected EOF in raxel nodes");
    if (tokens.size() != 6) reader.fail("raxel node line needs six floats");
    for (int i = 0; i < 3; ++i) grid.dir_offset[n][i] = reader.to_double(tokens[i]);
    for (int i = 0; i < 3; ++i) grid.org_offset[n][i] = reader.to_double(tokens[3 + i]);
  }
}

}  // namespace

void write_cameras(const std::string& path,
                   std::span<const CameraParams> cameras) {
  std::ofstream os(path);
  if (!os) throw Error("write_cameras: cannot open " + path);
  for (const CameraParams& cam : cameras) write_camera_block(os, cam);
  if (!os) throw Error("write_cameras: write failed for " + path);
}

std::vector<CameraParams> read_cameras(const std::string& path) {
  LineReader reader(path);
  std::vector<CameraParams> cameras;
  std::vector<std::string> tokens;
  while (reader.next_or_pending(tokens)) {
    if (tokens.size() != 2) reader.fail("expected camera header 'W H'");
    CameraParams cam;
    cam.width = static_cast<int>(reader.to_long(tokens[0]));
    cam.height = static_cast<int>(reader.to_long(tokens[1]));
    if (cam.width <= 0 || cam.height <= 0) reader.fail("bad image size");
    while (reader.next(tokens)) {
      const std::string& label = tokens[0];
      if (label == "f" || label == "c" || label == "k") {
        if (tokens.size() != 3) reader.fail("'" + label + "' line needs two floats");
        Vec2d v(reader.to_double(tokens[1]), reader.to_double(tokens[2]));
        if (label == "f") cam.intrinsics.f0 = v;
        if (label == "c") cam.intrinsics.c0 = v;
        if (label == "k") cam.radial.k0 = v;
      } else if (label == "a") {
        if (tokens.size() != 7) reader.fail("'a' line needs six floats");
        for (int i = 0; i < 6; ++i) cam.extrinsics.a0[i] = reader.to_double(tokens[1 + i]);
      } else if (label == "t") {
        if (tokens.size() != 4) reader.fail("'t' line needs three floats");
        for (int i = 0; i < 3; ++i) cam.extrinsics.t0[i] = reader.to_double(tokens[1 + i]);
      } else if (label == "raxel") {
        if (tokens.size() != 3) reader.fail("'raxel' line needs two integers");
        const int cols = static_cast<int>(reader.to_long(tokens[1]));
        const int rows = static_cast<int>(reader.to_long(tokens[2]));
        if (cols < 2 || rows < 2) reader.fail("raxel grid must be at least 2x2");
        cam.raxel = RaxelGrid::zero(cols, rows);
        read_raxel_nodes(reader, cam.raxel);
      } else {
        // Start of the next camera block.
        reader.putback(tokens);
        break;
      }
    }
    cameras.push_back(std::move(cam));
  }
  if (cameras.empty()) throw ParseError(path + ": no cameras found");
  return cameras;
}

void write_residuals(const std::string& path,
                     std::span<const CameraParams> cameras) {
  std::ofstream os(path);
  if (!os) throw Error("write_residuals: cannot open " + path);
  for (const CameraParams& cam : cameras) {
    os << "d f " << format_double(cam.intrinsics.df.x()) << " "
       << format_double(cam.intrinsics.df.y()) << "\n";
    os << "d c " << format_double(cam.intrinsics.dc.x()) << " "
       << format_double(cam.intrinsics.dc.y()) << "\n";
    os << "d k " << format_double(cam.radial.zk.x()) << " "
       << format_double(cam.radial.zk.y()) << "\n";
    os << "d a";
    for (int i = 0; i < 6; ++i) os << " " << format_double(cam.extrinsics.da[i]);
    os << "\n";
    os << "d t";
    for (int i = 0; i < 3; ++i) os << " " << format_double(cam.extrinsics.dt[i]);
    os << "\n";
    if (cam.raxel.cols >= 2 && cam.raxel.rows >= 2) {
      os << "d raxel " << cam.raxel.cols << " " << cam.raxel.rows << "\n";
      for (std::size_t n = 0; n < cam.raxel.node_count(); ++n) {
        for (int i = 0; i < 3; ++i)
          os << (i == 0 ? "" : " ") << format_double(cam.raxel.dir_offset[n][i]);
        for (int i = 0; i < 3; ++i)
          os << " " << format_double(cam.raxel.org_offset[n][i]);
        os << "\n";
      }
    }
    os << "\n";
  }
  if (!os) throw Error("write_residuals: write failed for " + path);
}

void read_residuals(const std::string& path, std::vector<CameraParams>& cameras) {
  LineReader reader(path);
  std::vector<std::string> tokens;
  std::size_t cam_idx = static_cast<std::size_t>(-1);
  while (reader.next(tokens)) {
    if (tokens[0] != "d" || tokens.size() < 2) reader.fail("expected a 'd' residual line");
    const std::string& label = tokens[1];
    if (label == "f") {
      ++cam_idx;  // `d f` opens the next camera's residual block
      if (cam_idx >= cameras.size()) reader.fail("more residual blocks than cameras");
    }
    if (cam_idx == static_cast<std::size_t>(-1)) reader.fail("residuals must start with 'd f'");
    CameraParams& cam = cameras[cam_idx];
    if (label == "f" || label == "c" || label == "k") {
      if (tokens.size() != 4) reader.fail("'d " + label + "' line needs two floats");
      Vec2d v(reader.to_double(tokens[2]), reader.to_double(tokens[3]));
      if (label == "f") cam.intrinsics.df = v;
      if (label == "c") cam.intrinsics.dc = v;
      if (label == "k") cam.radial.zk = v;
    } else if (label == "a") {
      if (tokens.size() != 8) reader.fail("'d a' line needs six floats");
      for (int i = 0; i < 6; ++i) cam.extrinsics.da[i] = reader.to_double(tokens[2 + i]);
    } else if (label == "t") {
      if (tokens.size() != 5) reader.fail("'d t' line needs three floats");
      for (int i = 0; i < 3; ++i) cam.extrinsics.dt[i] = reader.to_double(tokens[2 + i]);
    } else if (label == "raxel") {
      if (tokens.size() != 4) reader.fail("'d raxel' line needs two integers");
      const int cols = static_cast<int>(reader.to_long(tokens[2]));
      const int rows = static_cast<int>(reader.to_long(tokens[3]));
      if (cols != cam.raxel.cols || rows != cam.raxel.rows) {
        reader.fail("raxel grid dimensions do not match the camera");
      }
      read_raxel_nodes(reader, cam.raxel);
    } else {
      reader.fail("unknown residual label 'd " + label + "'");
    }
  }
  if (cam_idx + 1 != cameras.size()) {
    throw ParseError(path + ": residual blocks (" + std::to_string(cam_idx + 1) +
                     ") do not match camera count (" + std::to_string(cameras.size()) + ")");
  }
}

void write_correspondences(const std::string& path,
                           std::span<const Correspondence> corrs) {
  std::ofstream os(path);
  if (!os) throw Error("write_correspondences: cannot open " + path);
  os << "# camA camB xA yA xB yB\n";
  for (const Correspondence& c : corrs) {
    os << c.cam_a << " " << c.cam_b << " " << format_double(c.p_a.x()) << " "
       << format_double(c.p_a.y()) << " " << format_double(c.p_b.x()) << " "
       << format_double(c.p_b.y()) << "\n";
  }
  if (!os) throw Error("write_correspondences: write failed for " + path);
}

std::vector<Correspondence> read_correspondences(const std::string& path) {
  LineReader reader(path);
  std::vector<Correspondence> corrs;
  std::vector<std::string> tokens;
  while (reader.next(tokens)) {
    if (tokens.size() != 6) reader.fail("correspondence line needs 6 fields");
    Correspondence c;
    c.cam_a = static_cast<int>(reader.to_long(tokens[0]));
    c.cam_b = static_cast<int>(reader.to_long(tokens[1]));
    c.p_a = Vec2d(reader.to_double(tokens[2]), reader.to_double(tokens[3]));
    c.p_b = Vec2d(reader.to_double(tokens[4]), reader.to_double(tokens[5]));
    if (c.cam_a < 0 || c.cam_b < 0) reader.fail("negative camera index");
    if (c.cam_a == c.cam_b) reader.fail("correspondence within a single camera");
    corrs.push_back(c);
  }
  return corrs;
}

namespace {

template <class T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError(path + ": truncated binary data");
  return v;
}

}  // namespace

void write_field(const std::string& path, const RadianceField& field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_field: cannot open " + path);
  os.write("RFG1", 4);
  for (int i = 0; i < 3; ++i) write_raw<std::uint32_t>(os, field.res[i]);
  for (int i = 0; i < 3; ++i) write_raw<double>(os, field.lo[i]);
  for (int i = 0; i < 3; ++i) write_raw<double>(os, field.hi[i]);
  os.write(reinterpret_cast<const char*>(field.data.data()),
           static_cast<std::streamsize>(field.data.size() * sizeof(double)));
  if (!os) throw Error("write_field: write failed for " + path);
}

RadianceField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("read_field: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RFG1", 4) != 0) {
    throw ParseError(path + ": not an RFG1 field checkpoint");
  }
  RadianceField field;
  for (int i = 0; i < 3; ++i) {
    field.res[i] = static_cast<int>(read_raw<std::uint32_t>(is, path));
  }
  if (field.res.minCoeff() < 2 || field.voxel_count() > (1ull << 30)) {
    throw ParseError(path + ": implausible field dimensions");
  }
  for (int i = 0; i < 3; ++i) field.lo[i] = read_raw<double>(is, path);
  for (int i = 0; i < 3; ++i) field.hi[i] = read_raw<double>(is, path);
  field.data.resize(field.voxel_count() * 4);
  is.read(reinterpret_cast<char*>(field.data.data()),
          static_cast<std::streamsize>(field.data.size() * sizeof(double)));
  if (!is) throw ParseError(path + ": truncated field data");
  for (double v : field.data) {
    if (!std::isfinite(v)) throw ParseError(path + ": non-finite field value");
  }
  return field;
}

void write_adam(const std::string& path, const AdamState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_adam: cannot open " + path);
  os.write("ADM1", 4);
  write_raw<std::uint32_t>(os, kGroupCount);
  for (int gi = 0; gi < kGroupCount; ++gi) {
    const std::string name = group_name(static_cast<Group>(gi));
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw<std::int64_t>(os, state.step[gi]);
    write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(state.m[gi].size()));
    os.write(reinterpret_cast<const char*>(state.m[gi].data()),
             static_cast<std::streamsize>(state.m[gi].size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(state.v[gi].data()),
             static_cast<std::streamsize>(state.v[gi].size() * sizeof(double)));
  }
  if (!os) throw Error("write_adam: write failed for " + path);
}

AdamState read_adam(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("read_adam: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "ADM1", 4) != 0) {
    throw ParseError(path + ": not an ADM1 optimizer checkpoint");
  }
  const auto groups = read_raw<std::uint32_t>(is, path);
  if (groups != kGroupCount) throw ParseError(path + ": group count mismatch");
  AdamState state;
  for (int gi = 0; gi < kGroupCount; ++gi) {
    const auto name_len = read_raw<std::uint32_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is || name != group_name(static_cast<Group>(gi))) {
      throw ParseError(path + ": unexpected group name '" + name + "'");
    }
    state.step[gi] = read_raw<std::int64_t>(is, path);
    const auto n = read_raw<std::uint64_t>(is, path);
    state.m[gi].resize(static_cast<Eigen::Index>(n));
    state.v[gi].resize(static_cast<Eigen::Index>(n));
    is.read(reinterpret_cast<char*>(state.m[gi].data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    is.read(reinterpret_cast<char*>(state.v[gi].data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw ParseError(path + ": truncated optimizer data");
  }
  return state;
}

}  // namespace raycal
