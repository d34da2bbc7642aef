#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uvforge/morphable.hpp"
#include "uvforge/tensor_file.hpp"

// Morphable-model container directory: geometry and UVs in OBJ (v / vt /
// f v/vt), basis matrices and means as UVTF tensors, and a JSON manifest
// naming the dimensions and landmark indices. Loading validates the manifest
// against every file and fails fast naming the offending field.
namespace uvforge::model_io {

using morphable::MorphableModel;
namespace fs = std::filesystem;

struct ObjMesh {
  MatrixXd vertices;   // n x 3
  MatrixXd uv_coords;  // n x 2, via the f v/vt pairing (vt index wins last)
  MatrixXi triangles;  // m x 3
};

inline void write_obj(const std::string& path, const MatrixXd& vertices, const MatrixXd& uv_coords,
                      const MatrixXi& triangles) {
  std::ofstream os(path);
  require(os.good(), "write_obj: cannot open " + path);
  os.precision(17);
  for (int i = 0; i < vertices.rows(); ++i)
    os << "v " << vertices(i, 0) << " " << vertices(i, 1) << " " << vertices(i, 2) << "\n";
  for (int i = 0; i < uv_coords.rows(); ++i) os << "vt " << uv_coords(i, 0) << " " << uv_coords(i, 1) << "\n";
  for (int t = 0; t < triangles.rows(); ++t) {
    os << "f";
    for (int j = 0; j < 3; ++j) {
      const int v = triangles(t, j) + 1;
      os << " " << v << "/" << v;
    }
    os << "\n";
  }
  require(os.good(), "write_obj: write failed for " + path);
}

inline ObjMesh read_obj(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "read_obj: cannot open " + path);
  std::vector<Vector3d> verts;
  std::vector<Vector2d> uvs;
  std::vector<std::array<int, 3>> face_v;
  std::vector<std::array<int, 3>> face_vt;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vector3d v;
      ss >> v[0] >> v[1] >> v[2];
      require(!ss.fail(), "read_obj: malformed vertex at line " + std::to_string(line_no));
      verts.push_back(v);
    } else if (tag == "vt") {
      Vector2d uv;
      ss >> uv[0] >> uv[1];
      require(!ss.fail(), "read_obj: malformed texture coordinate at line " + std::to_string(line_no));
      uvs.push_back(uv);
    } else if (tag == "f") {
      std::array<int, 3> fv{}, fvt{};
      for (int j = 0; j < 3; ++j) {
        std::string token;
        ss >> token;
        require(!ss.fail(), "read_obj: malformed face at line " + std::to_string(line_no));
        int v = 0, vt = 0;
        const size_t slash = token.find('/');
        if (slash == std::string::npos) {
          v = std::stoi(token);
          vt = v;
        } else {
          v = std::stoi(token.substr(0, slash));
          const size_t slash2 = token.find('/', slash + 1);
          const std::string vt_str =
              slash2 == std::string::npos ? token.substr(slash + 1) : token.substr(slash + 1, slash2 - slash - 1);
          vt = vt_str.empty() ? v : std::stoi(vt_str);
        }
        fv[j] = v - 1;
        fvt[j] = vt - 1;
      }
      std::string extra;
      if (ss >> extra) throw std::runtime_error("read_obj: non-triangular face at line " + std::to_string(line_no));
      face_v.push_back(fv);
      face_vt.push_back(fvt);
    }
  }
  require(!verts.empty(), "read_obj: no vertices in " + path);
  ObjMesh mesh;
  mesh.vertices.resize(static_cast<int>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<int>(i)) = verts[i].transpose();
  mesh.uv_coords = MatrixXd::Zero(static_cast<int>(verts.size()), 2);
  mesh.triangles.resize(static_cast<int>(face_v.size()), 3);
  for (size_t t = 0; t < face_v.size(); ++t)
    for (int j = 0; j < 3; ++j) {
      const int v = face_v[t][j];
      const int vt = face_vt[t][j];
      require(v >= 0 && v < mesh.vertices.rows(), "read_obj: vertex index out of range in face " + std::to_string(t));
      require(vt >= 0 && vt < static_cast<int>(uvs.size()),
              "read_obj: texture index out of range in face " + std::to_string(t));
      mesh.triangles(static_cast<int>(t), j) = v;
      mesh.uv_coords.row(v) = uvs[vt].transpose();
    }
  return mesh;
}

inline void save_model(const std::string& dir, const MorphableModel& model) {
  fs::create_directories(dir);
  write_obj(dir + "/mesh.obj", morphable::to_rows3(model.mean_shape_id), model.uv_coords, model.triangles);
  tensor_file::write_vector(dir + "/mean_shape_id.uvtf", model.mean_shape_id);
  tensor_file::write_vector(dir + "/mean_shape_expr.uvtf", model.mean_shape_expr);
  tensor_file::write_vector(dir + "/mean_texture.uvtf", model.mean_texture);
  tensor_file::write_matrix(dir + "/id_basis.uvtf", model.id_basis);
  tensor_file::write_matrix(dir + "/expr_basis.uvtf", model.expr_basis);
  tensor_file::write_matrix(dir + "/tex_basis.uvtf", model.tex_basis);
  nlohmann::json manifest;
  manifest["n"] = model.vertex_count();
  manifest["k_i"] = model.k_i();
  manifest["k_e"] = model.k_e();
  manifest["k_t"] = model.k_t();
  manifest["landmark_indices"] = model.landmark_indices;
  std::ofstream os(dir + "/manifest.json");
  require(os.good(), "save_model: cannot open manifest for " + dir);
  os << manifest.dump(2) << "\n";
}

inline MorphableModel load_model(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  require(is.good(), "load_model: cannot open " + dir + "/manifest.json");
  nlohmann::json manifest;
  is >> manifest;
  for (const char* key : {"n", "k_i", "k_e", "k_t", "landmark_indices"})
    require(manifest.contains(key), std::string("load_model: manifest missing field '") + key + "'");
  const int n = manifest["n"].get<int>();
  const int k_i = manifest["k_i"].get<int>();
  const int k_e = manifest["k_e"].get<int>();
  const int k_t = manifest["k_t"].get<int>();

  MorphableModel model;
  const ObjMesh mesh = read_obj(dir + "/mesh.obj");
  require(mesh.vertices.rows() == n, "load_model: manifest field 'n' disagrees with mesh.obj");
  model.triangles = mesh.triangles;
  model.uv_coords = mesh.uv_coords;
  model.mean_shape_id = tensor_file::read_vector(dir + "/mean_shape_id.uvtf");
  require(model.mean_shape_id.size() == 3 * n, "load_model: mean_shape_id.uvtf length disagrees with 'n'");
  model.mean_shape_expr = tensor_file::read_vector(dir + "/mean_shape_expr.uvtf");
  require(model.mean_shape_expr.size() == 3 * n, "load_model: mean_shape_expr.uvtf length disagrees with 'n'");
  model.mean_texture = tensor_file::read_vector(dir + "/mean_texture.uvtf");
  require(model.mean_texture.size() == 3 * n, "load_model: mean_texture.uvtf length disagrees with 'n'");
  model.id_basis = tensor_file::read_matrix(dir + "/id_basis.uvtf");
  require(model.id_basis.rows() == 3 * n && model.id_basis.cols() == k_i,
          "load_model: id_basis.uvtf shape disagrees with manifest 'k_i'");
  model.expr_basis = tensor_file::read_matrix(dir + "/expr_basis.uvtf");
  require(model.expr_basis.rows() == 3 * n && model.expr_basis.cols() == k_e,
          "load_model: expr_basis.uvtf shape disagrees with manifest 'k_e'");
  model.tex_basis = tensor_file::read_matrix(dir + "/tex_basis.uvtf");
  require(model.tex_basis.rows() == 3 * n && model.tex_basis.cols() == k_t,
          "load_model: tex_basis.uvtf shape disagrees with manifest 'k_t'");
  model.landmark_indices = manifest["landmark_indices"].get<std::vector<int>>();
  model.validate();
  return model;
}

}  // namespace uvforge::model_io
