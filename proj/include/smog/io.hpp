#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "smog/geometry.hpp"
#include "smog/mesh.hpp"

namespace smog {

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& path, int64_t line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

inline bool blank_or_comment(const std::string& s) {
  for (char c : s) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace detail

// XYZ: one point per line, three floats separated by spaces, no header.
inline PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  PointCloud cloud;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_or_comment(line)) continue;
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p[0] >> p[1] >> p[2]))
      detail::parse_fail(path, lineno, "expected three floats");
    std::string extra;
    if (ss >> extra) detail::parse_fail(path, lineno, "trailing data after three floats");
    cloud.points.push_back(p);
  }
  return cloud;
}

inline void write_xyz(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[128];
  for (const Vec3& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.8f %.8f %.8f\n", p[0], p[1], p[2]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

// ASCII OFF with triangular faces.
inline TriangleMesh read_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  int64_t lineno = 0;
  auto next_line = [&]() -> std::string {
    while (std::getline(in, line)) {
      ++lineno;
      if (!detail::blank_or_comment(line)) return line;
    }
    detail::parse_fail(path, lineno, "unexpected end of file");
  };

  std::string header = next_line();
  // strip trailing whitespace/CR
  while (!header.empty() && std::isspace(static_cast<unsigned char>(header.back())))
    header.pop_back();
  if (header != "OFF") detail::parse_fail(path, lineno, "expected OFF header");

  int64_t nv = 0, nf = 0, ne = 0;
  {
    std::istringstream ss(next_line());
    if (!(ss >> nv >> nf >> ne)) detail::parse_fail(path, lineno, "expected counts line");
    if (nv < 0 || nf < 0) detail::parse_fail(path, lineno, "negative counts");
  }

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(nv));
  for (int64_t i = 0; i < nv; ++i) {
    std::istringstream ss(next_line());
    Vec3 p;
    if (!(ss >> p[0] >> p[1] >> p[2])) detail::parse_fail(path, lineno, "expected vertex line");
    mesh.vertices.push_back(p);
  }
  mesh.faces.reserve(static_cast<size_t>(nf));
  for (int64_t i = 0; i < nf; ++i) {
    std::istringstream ss(next_line());
    int64_t cnt = 0;
    if (!(ss >> cnt)) detail::parse_fail(path, lineno, "expected face line");
    if (cnt != 3) detail::parse_fail(path, lineno, "only triangular faces are supported");
    std::array<int64_t, 3> f;
    if (!(ss >> f[0] >> f[1] >> f[2])) detail::parse_fail(path, lineno, "expected three indices");
    for (int64_t v : f)
      if (v < 0 || v >= nv) detail::parse_fail(path, lineno, "face index out of range");
    mesh.faces.push_back(f);
  }
  return mesh;
}

// ASCII PLY restricted to float x/y/z vertex properties, faces optional.
inline TriangleMesh read_ply_ascii(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  int64_t lineno = 0;
  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) detail::parse_fail(path, lineno, "unexpected end of file");
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
  };

  if (next_line() != "ply") detail::parse_fail(path, lineno, "expected ply magic");
  int64_t nv = -1, nf = 0;
  bool ascii = false;
  std::vector<std::string> vertex_props;
  std::string current_element;
  for (;;) {
    std::istringstream ss(next_line());
    std::string tok;
    ss >> tok;
    if (tok == "end_header") break;
    if (tok == "comment") continue;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = (fmt == "ascii");
      if (!ascii) detail::parse_fail(path, lineno, "only ascii format is supported");
    } else if (tok == "element") {
      int64_t cnt = 0;
      ss >> current_element >> cnt;
      if (current_element == "vertex") nv = cnt;
      else if (current_element == "face") nf = cnt;
      else detail::parse_fail(path, lineno, "unsupported element: " + current_element);
    } else if (tok == "property") {
      if (current_element == "vertex") {
        std::string type, name;
        ss >> type >> name;
        vertex_props.push_back(name);
      }
    } else if (!tok.empty()) {
      detail::parse_fail(path, lineno, "unexpected header token: " + tok);
    }
  }
  if (nv < 0) detail::parse_fail(path, lineno, "missing vertex element");
  int ix = -1, iy = -1, iz = -1;
  for (size_t i = 0; i < vertex_props.size(); ++i) {
    if (vertex_props[i] == "x") ix = static_cast<int>(i);
    if (vertex_props[i] == "y") iy = static_cast<int>(i);
    if (vertex_props[i] == "z") iz = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) detail::parse_fail(path, lineno, "missing x/y/z properties");

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<size_t>(nv));
  for (int64_t i = 0; i < nv; ++i) {
    std::istringstream ss(next_line());
    std::vector<double> vals(vertex_props.size());
    for (double& v : vals)
      if (!(ss >> v)) detail::parse_fail(path, lineno, "expected vertex properties");
    mesh.vertices.push_back(
        {vals[static_cast<size_t>(ix)], vals[static_cast<size_t>(iy)], vals[static_cast<size_t>(iz)]});
  }
  for (int64_t i = 0; i < nf; ++i) {
    std::istringstream ss(next_line());
    int64_t cnt = 0;
    if (!(ss >> cnt)) detail::parse_fail(path, lineno, "expected face line");
    if (cnt != 3) detail::parse_fail(path, lineno, "only triangular faces are supported");
    std::array<int64_t, 3> f;
    if (!(ss >> f[0] >> f[1] >> f[2])) detail::parse_fail(path, lineno, "expected three indices");
    for (int64_t v : f)
      if (v < 0 || v >= nv) detail::parse_fail(path, lineno, "face index out of range");
    mesh.faces.push_back(f);
  }
  return mesh;
}

inline PointCloud read_cloud_auto(const std::string& path) {
  const auto dotpos = path.rfind('.');
  const std::string ext = dotpos == std::string::npos ? "" : path.substr(dotpos + 1);
  if (ext == "xyz" || ext == "txt") return read_xyz(path);
  if (ext == "off") {
    const auto mesh = read_off(path);
    return PointCloud(mesh.vertices);
  }
  if (ext == "ply") {
    const auto mesh = read_ply_ascii(path);
    return PointCloud(mesh.vertices);
  }
  return read_xyz(path);
}

}  // namespace smog
