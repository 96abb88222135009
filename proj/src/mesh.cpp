#include "fe2ml/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fe2ml/element.hpp"
#include "fe2ml/errors.hpp"

namespace fe2ml {

using nlohmann::json;

namespace {

Eigen::Matrix<double, 4, 2> element_coords(const Mesh& mesh, std::size_t e) {
  Eigen::Matrix<double, 4, 2> X;
  for (int a = 0; a < 4; ++a) X.row(a) = mesh.nodes[mesh.elements[e][a]].transpose();
  return X;
}

std::size_t as_index(const json& v, const std::string& where) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw MeshError(where + ": expected a non-negative integer");
  return static_cast<std::size_t>(v.get<std::int64_t>());
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

}  // namespace

void Mesh::validate() const {
  if (nodes.empty() || elements.empty()) throw MeshError("mesh has no nodes or no elements");
  for (std::size_t e = 0; e < elements.size(); ++e) {
    const auto& el = elements[e];
    std::set<std::size_t> distinct(el.begin(), el.end());
    if (distinct.size() != 4) throw MeshError("element " + std::to_string(e) + " repeats a node");
    for (auto n : el)
      if (n >= nodes.size())
        throw MeshError("element " + std::to_string(e) + " references missing node " + std::to_string(n));
  }
  if (!element_materials.empty() && element_materials.size() != elements.size())
    throw MeshError("element_materials has " + std::to_string(element_materials.size()) + " entries for " +
                    std::to_string(elements.size()) + " elements");
  const auto quad = QuadratureRule::gauss2x2();
  for (std::size_t e = 0; e < elements.size(); ++e) {
    const auto X = element_coords(*this, e);
    for (const auto& qp : quad.points) {
      const Eigen::Matrix2d jac = X.transpose() * shape_eval(qp.xi, qp.eta).gradients;
      if (!(jac.determinant() > 0.0))
        throw MeshError("element " + std::to_string(e) + " has non-positive reference Jacobian");
    }
  }
  std::set<std::size_t> declared(boundary_nodes.begin(), boundary_nodes.end());
  if (declared.size() != boundary_nodes.size()) throw MeshError("boundary_nodes contains duplicates");
  const auto topo = topological_boundary(*this);
  if (declared != std::set<std::size_t>(topo.begin(), topo.end()))
    throw MeshError("boundary_nodes differs from the topological boundary");
}

std::vector<std::size_t> topological_boundary(const Mesh& mesh) {
  std::map<std::pair<std::size_t, std::size_t>, int> edge_count;
  for (const auto& el : mesh.elements)
    for (int a = 0; a < 4; ++a) {
      auto n0 = el[a], n1 = el[(a + 1) % 4];
      edge_count[{std::min(n0, n1), std::max(n0, n1)}]++;
    }
  std::set<std::size_t> nodes;
  for (const auto& [edge, count] : edge_count)
    if (count == 1) {
      nodes.insert(edge.first);
      nodes.insert(edge.second);
    }
  return {nodes.begin(), nodes.end()};
}

Mesh structured_mesh(std::size_t nx, std::size_t ny, double width, double height) {
  if (nx < 1 || ny < 1) throw ConfigError("structured mesh needs nx, ny >= 1");
  if (!(width > 0.0) || !(height > 0.0)) throw ConfigError("structured mesh needs positive dimensions");
  Mesh m;
  auto id = [nx](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  for (std::size_t j = 0; j <= ny; ++j)
    for (std::size_t i = 0; i <= nx; ++i)
      m.nodes.emplace_back(width * static_cast<double>(i) / static_cast<double>(nx),
                           height * static_cast<double>(j) / static_cast<double>(ny));
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) m.elements.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
  for (std::size_t i = 0; i <= nx; ++i) m.boundary_nodes.push_back(id(i, 0));
  for (std::size_t j = 1; j <= ny; ++j) m.boundary_nodes.push_back(id(nx, j));
  for (std::size_t i = nx; i-- > 0;) m.boundary_nodes.push_back(id(i, ny));
  for (std::size_t j = ny; j-- > 1;) m.boundary_nodes.push_back(id(0, j));
  return m;
}

void mark_centered_inclusion(Mesh& mesh, std::size_t nx, std::size_t ny, std::size_t inclusion_cells) {
  if (mesh.num_elements() != nx * ny) throw MeshError("inclusion marking needs the structured nx*ny mesh");
  if (inclusion_cells > std::min(nx, ny)) throw ConfigError("inclusion larger than the mesh");
  mesh.element_materials.assign(mesh.num_elements(), 0);
  const std::size_t i0 = (nx - inclusion_cells) / 2, j0 = (ny - inclusion_cells) / 2;
  for (std::size_t j = j0; j < j0 + inclusion_cells; ++j)
    for (std::size_t i = i0; i < i0 + inclusion_cells; ++i) mesh.element_materials[j * nx + i] = 1;
}

double element_area(const Mesh& mesh, std::size_t e) {
  // Shoelace formula; exact for straight-sided quads.
  double a = 0.0;
  for (int k = 0; k < 4; ++k) {
    const auto& p = mesh.nodes[mesh.elements[e][k]];
    const auto& q = mesh.nodes[mesh.elements[e][(k + 1) % 4]];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

json mesh_to_json(const Mesh& mesh, const std::vector<MaterialParams>& materials) {
  json doc;
  doc["nodes"] = json::array();
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    doc["nodes"].push_back(json::array({i, mesh.nodes[i].x(), mesh.nodes[i].y()}));
  doc["elements"] = json::array();
  for (const auto& el : mesh.elements) doc["elements"].push_back(el);
  doc["boundary_nodes"] = mesh.boundary_nodes;
  if (!mesh.element_materials.empty()) doc["element_materials"] = mesh.element_materials;
  if (!materials.empty()) {
    doc["materials"] = json::object();
    for (std::size_t i = 0; i < materials.size(); ++i) doc["materials"][std::to_string(i)] = material_to_json(materials[i]);
  }
  return doc;
}

MeshDocument mesh_from_json(const json& doc) {
  if (!doc.is_object()) throw MeshError("mesh: expected a JSON object");
  for (const char* key : {"nodes", "elements", "boundary_nodes"})
    if (!doc.contains(key) || !doc[key].is_array()) throw MeshError(std::string("mesh.") + key + ": expected an array");

  MeshDocument out;
  Mesh& m = out.mesh;
  const auto& nodes = doc["nodes"];
  m.nodes.resize(nodes.size());
  std::vector<bool> seen(nodes.size(), false);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const std::string where = "mesh.nodes[" + std::to_string(k) + "]";
    const auto& row = nodes[k];
    if (!row.is_array() || row.size() != 3) throw MeshError(where + ": expected [id, X1, X2]");
    const auto id = as_index(row[0], where + "[0]");
    if (id >= nodes.size() || seen[id]) throw MeshError(where + ": node ids must be unique and contiguous from 0");
    seen[id] = true;
    m.nodes[id] = {as_number(row[1], where + "[1]"), as_number(row[2], where + "[2]")};
  }
  for (std::size_t k = 0; k < doc["elements"].size(); ++k) {
    const std::string where = "mesh.elements[" + std::to_string(k) + "]";
    const auto& row = doc["elements"][k];
    if (!row.is_array() || row.size() != 4) throw MeshError(where + ": expected 4 node ids");
    Element el{};
    for (int a = 0; a < 4; ++a) el[a] = as_index(row[a], where);
    m.elements.push_back(el);
  }
  for (const auto& v : doc["boundary_nodes"]) m.boundary_nodes.push_back(as_index(v, "mesh.boundary_nodes"));
  if (doc.contains("element_materials")) {
    if (!doc["element_materials"].is_array()) throw MeshError("mesh.element_materials: expected an array");
    for (const auto& v : doc["element_materials"]) m.element_materials.push_back(as_index(v, "mesh.element_materials"));
  }
  if (doc.contains("materials")) {
    const auto& table = doc["materials"];
    if (!table.is_object()) throw MeshError("mesh.materials: expected an object keyed by material id");
    out.materials.resize(table.size());
    std::vector<bool> have(table.size(), false);
    for (const auto& [key, value] : table.items()) {
      std::size_t id = 0;
      try {
        std::size_t used = 0;
        id = std::stoul(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw MeshError("mesh.materials: key '" + key + "' is not an integer id");
      }
      if (id >= table.size() || have[id]) throw MeshError("mesh.materials: ids must be contiguous from 0");
      have[id] = true;
      out.materials[id] = material_from_json(value);
    }
    for (auto id : m.element_materials)
      if (id >= out.materials.size()) throw MeshError("mesh.element_materials references unknown material " + std::to_string(id));
  }
  m.validate();
  return out;
}

MeshDocument read_mesh_file(const std::filesystem::path& path) { return mesh_from_json(read_json_file(path)); }

void write_mesh_file(const std::filesystem::path& path, const Mesh& mesh, const std::vector<MaterialParams>& materials) {
  write_text_file(path, mesh_to_json(mesh, materials).dump(1) + "\n");
}

json material_to_json(const MaterialParams& mat) { return {{"lambda", mat.lambda}, {"mu", mat.mu}}; }

MaterialParams material_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("lambda") || !doc.contains("mu"))
    throw ConfigError("material: expected {\"lambda\": <number>, \"mu\": <number>}");
  MaterialParams mat{as_number(doc["lambda"], "material.lambda"), as_number(doc["mu"], "material.mu")};
  mat.validate();
  return mat;
}

MaterialParams read_material_file(const std::filesystem::path& path) { return material_from_json(read_json_file(path)); }

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fe2ml
