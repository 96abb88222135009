#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fe2ml/tensor.hpp"

namespace fe2ml {

using Element = std::array<std::size_t, 4>;

/// Quad4 mesh in reference coordinates. Node ids are positions in `nodes`.
struct Mesh {
  std::vector<Eigen::Vector2d> nodes;
  std::vector<Element> elements;  // counter-clockwise connectivity
  std::vector<std::size_t> boundary_nodes;
  /// Optional per-element material id; empty means every element uses id 0.
  std::vector<std::size_t> element_materials;

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_elements() const { return elements.size(); }
  std::size_t material_id(std::size_t element) const {
    return element_materials.empty() ? 0 : element_materials[element];
  }

  /// Checks connectivity, reference Jacobians at the 2x2 Gauss points and that
  /// boundary_nodes is exactly the topological boundary. Throws MeshError.
  void validate() const;

  bool operator==(const Mesh&) const = default;
};

/// Nodes lying on edges used by exactly one element.
std::vector<std::size_t> topological_boundary(const Mesh& mesh);

/// nx-by-ny grid on [0,width]x[0,height]. Boundary nodes are ordered
/// counter-clockwise starting at the origin.
Mesh structured_mesh(std::size_t nx, std::size_t ny, double width = 1.0, double height = 1.0);

/// Marks the centred inclusion_cells x inclusion_cells block of a structured
/// nx-by-ny mesh with material id 1 (the rest keep id 0).
void mark_centered_inclusion(Mesh& mesh, std::size_t nx, std::size_t ny, std::size_t inclusion_cells);

double element_area(const Mesh& mesh, std::size_t element);

/// A mesh together with the material table its element ids index into.
struct MeshDocument {
  Mesh mesh;
  std::vector<MaterialParams> materials;  // empty when the file carries no table
};

nlohmann::json mesh_to_json(const Mesh& mesh, const std::vector<MaterialParams>& materials = {});
MeshDocument mesh_from_json(const nlohmann::json& doc);
MeshDocument read_mesh_file(const std::filesystem::path& path);
void write_mesh_file(const std::filesystem::path& path, const Mesh& mesh,
                     const std::vector<MaterialParams>& materials = {});

nlohmann::json material_to_json(const MaterialParams& mat);
MaterialParams material_from_json(const nlohmann::json& doc);
MaterialParams read_material_file(const std::filesystem::path& path);

/// Shared file helpers.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace fe2ml
