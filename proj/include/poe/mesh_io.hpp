#pragma once

#include <filesystem>
#include <array>
#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "poe/mesh.hpp"

namespace poe {

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

inline std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

inline int parse_obj_index(const std::string& tok, int line) {
  const std::string head = tok.substr(0, tok.find('/'));
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(head, &used);
  } catch (const std::exception&) {
    throw ParseError("bad face index '" + tok + "'", line);
  }
  if (used != head.size()) throw ParseError("bad face index '" + tok + "'", line);
  if (v < 1) throw ParseError("face index " + std::to_string(v) + " is not a valid 1-based OBJ index", line);
  return static_cast<int>(v - 1);
}

inline TriMesh assemble(const std::vector<Vec3>& v, const std::vector<std::array<int, 3>>& f) {
  Positions p(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  Faces faces(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) {
    faces.row(static_cast<Eigen::Index>(i)) << f[i][0], f[i][1], f[i][2];
  }
  return TriMesh(std::move(p), std::move(faces));
}

}  // namespace detail

inline TriMesh read_obj(std::istream& in) {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::set<std::string> warned;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = detail::strip_comment(raw);
    if (detail::blank(s)) continue;
    std::istringstream ls(s);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw ParseError("vertex needs three coordinates", line);
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<std::string> toks;
      for (std::string t; ls >> t;) toks.push_back(t);
      if (toks.size() != 3) throw ParseError("only triangular faces are supported", line);
      std::array<int, 3> tri{};
      for (int k = 0; k < 3; ++k) tri[k] = detail::parse_obj_index(toks[k], line);
      faces.push_back(tri);
    } else if (warned.insert(tag).second) {
      std::cerr << "warning: ignoring OBJ directive '" << tag << "' (line " << line << ")\n";
    }
  }
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx >= static_cast<int>(verts.size())) {
        throw ParseError("face " + std::to_string(f + 1) + " references vertex " + std::to_string(idx + 1) +
                         " but only " + std::to_string(verts.size()) + " vertices exist");
      }
    }
  }
  return detail::assemble(verts, faces);
}

inline TriMesh read_off(std::istream& in) {
  std::string raw;
  int line = 0;
  auto next = [&](std::string& out) {
    while (std::getline(in, raw)) {
      ++line;
      out = detail::strip_comment(raw);
      if (!detail::blank(out)) return true;
    }
    return false;
  };
  std::string s;
  if (!next(s)) throw ParseError("empty OFF file");
  std::istringstream hs(s);
  std::string magic;
  hs >> magic;
  if (magic != "OFF") throw ParseError("missing OFF header", line);
  long nv = -1, nf = -1, ne = 0;
  if (!(hs >> nv)) {
    if (!next(s)) throw ParseError("missing OFF counts", line);
    hs = std::istringstream(s);
    hs >> nv;
  }
  if (!(hs >> nf)) throw ParseError("missing OFF face count", line);
  hs >> ne;
  if (nv < 0 || nf < 0) throw ParseError("negative element counts", line);

  std::vector<Vec3> verts;
  verts.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    if (!next(s)) throw ParseError("header declares " + std::to_string(nv) + " vertices, body has " + std::to_string(i));
    std::istringstream ls(s);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) throw ParseError("vertex needs three coordinates", line);
    verts.push_back(p);
  }
  std::vector<std::array<int, 3>> faces;
  faces.reserve(static_cast<std::size_t>(nf));
  for (long i = 0; i < nf; ++i) {
    if (!next(s)) throw ParseError("header declares " + std::to_string(nf) + " faces, body has " + std::to_string(i));
    std::istringstream ls(s);
    int n = 0;
    std::array<int, 3> tri{};
    if (!(ls >> n)) throw ParseError("bad face record", line);
    if (n != 3) throw ParseError("only triangular faces are supported", line);
    if (!(ls >> tri[0] >> tri[1] >> tri[2])) throw ParseError("face needs three indices", line);
    for (int idx : tri) {
      if (idx < 0 || idx >= nv) throw ParseError("face index " + std::to_string(idx) + " out of range", line);
    }
    faces.push_back(tri);
  }
  if (next(s)) throw ParseError("content after the declared " + std::to_string(nf) + " faces", line);
  return detail::assemble(verts, faces);
}

inline void write_obj(std::ostream& out, const TriMesh& mesh) {
  out.precision(17);
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    out << "v " << mesh.vertices()(i, 0) << ' ' << mesh.vertices()(i, 1) << ' ' << mesh.vertices()(i, 2) << '\n';
  }
  for (int f = 0; f < mesh.num_faces(); ++f) {
    out << "f " << mesh.faces()(f, 0) + 1 << ' ' << mesh.faces()(f, 1) + 1 << ' ' << mesh.faces()(f, 2) + 1 << '\n';
  }
}

inline void write_off(std::ostream& out, const TriMesh& mesh) {
  out.precision(17);
  out << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_faces() << " 0\n";
  for (int i = 0; i < mesh.num_vertices(); ++i) {
    out << mesh.vertices()(i, 0) << ' ' << mesh.vertices()(i, 1) << ' ' << mesh.vertices()(i, 2) << '\n';
  }
  for (int f = 0; f < mesh.num_faces(); ++f) {
    out << "3 " << mesh.faces()(f, 0) << ' ' << mesh.faces()(f, 1) << ' ' << mesh.faces()(f, 2) << '\n';
  }
}

/// Load an OFF or OBJ file, chosen by extension.
inline TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string ext = detail::lower_extension(path);
  if (ext == ".obj") return read_obj(in);
  if (ext == ".off") return read_off(in);
  throw ParseError("unsupported mesh extension '" + ext + "' (expected .off or .obj)");
}

inline void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  const std::string ext = detail::lower_extension(path);
  if (ext != ".obj" && ext != ".off") throw ParameterError("unsupported mesh extension '" + ext + "'");
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot write " + path.string());
  if (ext == ".obj") {
    write_obj(out, mesh);
  } else {
    write_off(out, mesh);
  }
}

}  // namespace poe
