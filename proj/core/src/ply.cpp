#include "t4d/ply.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "t4d/error.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace t4d {

namespace {

struct Property {
  std::string name;
  std::string type;
};

std::size_t type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  throw Error("ply.unsupported", "property type '" + t + "'");
}

double read_scalar(const std::uint8_t* p, const std::string& t) {
  if (t == "float" || t == "float32") {
    float f;
    std::memcpy(&f, p, 4);
    return static_cast<double>(f);
  }
  if (t == "double" || t == "float64") {
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  throw Error("ply.unsupported", "numeric property type '" + t + "' for a required field");
}

const char* const kRequired[14] = {"x",       "y",       "z",       "f_dc_0", "f_dc_1",
                                   "f_dc_2",  "opacity", "scale_0", "scale_1", "scale_2",
                                   "rot_0",   "rot_1",   "rot_2",   "rot_3"};

}  // namespace

GaussianCloud import_ply(const std::vector<std::uint8_t>& bytes, bool canonical) {
  std::size_t pos = 0;
  auto read_line = [&]() -> std::string {
    std::string line;
    while (pos < bytes.size()) {
      const char c = static_cast<char>(bytes[pos++]);
      if (c == '\n') break;
      if (c != '\r') line.push_back(c);
    }
    return line;
  };

  if (read_line() != "ply") throw Error("ply.magic", "missing 'ply' magic line");

  std::size_t vertex_count = 0;
  std::vector<Property> vertex_props;
  std::size_t skip_before = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  bool format_ok = false;

  for (;;) {
    if (pos >= bytes.size()) throw Error("ply.header", "header has no end_header line");
    const std::string line = read_line();
    if (line.empty() || line.rfind("comment", 0) == 0) continue;
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "binary_little_endian")
        throw Error("ply.format", "unsupported format '" + fmt + "'");
      format_ok = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      in_vertex = (name == "vertex");
      if (in_vertex) {
        seen_vertex = true;
        vertex_count = count;
      } else if (!seen_vertex) {
        if (count != 0)
          throw Error("ply.unsupported", "element '" + name + "' precedes vertex data");
      }
    } else if (tok == "property") {
      std::string type;
      ss >> type;
      if (type == "list") {
        if (in_vertex || !seen_vertex)
          throw Error("ply.unsupported", "list properties are not supported");
        continue;
      }
      std::string name;
      ss >> name;
      if (in_vertex) {
        vertex_props.push_back({name, type});
      } else if (!seen_vertex) {
        skip_before += type_size(type);
      }
    }
  }
  if (!format_ok) throw Error("ply.header", "header missing format line");
  if (!seen_vertex) throw Error("ply.header", "no vertex element");
  (void)skip_before;

  std::map<std::string, std::size_t> offset_of;
  std::size_t stride = 0;
  for (const auto& p : vertex_props) {
    offset_of[p.name] = stride;
    stride += type_size(p.type);
  }
  std::string type_of[14];
  std::size_t off[14];
  for (int i = 0; i < 14; ++i) {
    auto it = offset_of.find(kRequired[i]);
    if (it == offset_of.end())
      throw Error("ply.missing-property", std::string("property '") + kRequired[i] + "' not found");
    off[i] = it->second;
    for (const auto& p : vertex_props)
      if (p.name == kRequired[i]) type_of[i] = p.type;
  }

  if (bytes.size() < pos + vertex_count * stride)
    throw Error("ply.truncated", "vertex data shorter than header declares");

  GaussianCloud cloud;
  cloud.canonical = canonical;
  cloud.points.resize(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    const std::uint8_t* base = bytes.data() + pos + v * stride;
    double f[14];
    for (int i = 0; i < 14; ++i) {
      f[i] = read_scalar(base + off[i], type_of[i]);
      if (!std::isfinite(f[i]))
        throw Error("ply.non-finite", "non-finite value in element " + std::to_string(v));
    }
    GaussianPoint& p = cloud.points[v];
    p.pos = {f[0], f[1], f[2]};
    p.f_dc = {f[3], f[4], f[5]};
    p.opacity_logit = f[6];
    p.log_scale = {f[7], f[8], f[9]};
    p.rot = {f[10], f[11], f[12], f[13]};
    if (std::abs(p.rot.squared_norm() - 1.0) > 1e-5) p.rot = p.rot.normalized();
    p.point_id = v;
  }
  if (canonical) recenter(cloud);
  return cloud;
}

std::vector<std::uint8_t> export_ply(const GaussianCloud& cloud) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.points.size()
         << "\n";
  for (int i = 0; i < 14; ++i) header << "property float " << kRequired[i] << "\n";
  header << "end_header\n";

  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.size() + cloud.points.size() * 14 * 4);
  std::memcpy(out.data(), h.data(), h.size());
  std::size_t pos = h.size();
  auto put = [&](double v) {
    const float f = static_cast<float>(v);
    std::memcpy(out.data() + pos, &f, 4);
    pos += 4;
  };
  for (const auto& p : cloud.points) {
    put(p.pos.x);
    put(p.pos.y);
    put(p.pos.z);
    put(p.f_dc.x);
    put(p.f_dc.y);
    put(p.f_dc.z);
    put(p.opacity_logit);
    put(p.log_scale.x);
    put(p.log_scale.y);
    put(p.log_scale.z);
    put(p.rot.w);
    put(p.rot.x);
    put(p.rot.y);
    put(p.rot.z);
  }
  return out;
}

GaussianCloud load_ply(const std::string& path, bool canonical) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("ply.io", "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return import_ply(bytes, canonical);
}

void save_ply(const GaussianCloud& cloud, const std::string& path) {
  const auto bytes = export_ply(cloud);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("ply.io", "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("ply.io", "write failed for '" + path + "'");
}

}  // namespace t4d
