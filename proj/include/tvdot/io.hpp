#pragma once

#include "tvdot/fe_ops.hpp"
#include "tvdot/forward.hpp"
#include "tvdot/mesh.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tvdot {

/// Malformed input file. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, long line = 0) : std::runtime_error(what), line_(line) {}
  long line() const noexcept { return line_; }

private:
  long line_;
};

enum class MeshFormat { Text, Vtk };

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

// Text mesh format:
//   N M dim
//   N lines of dim coordinates
//   M lines of dim+1 zero-based node indices
//   optional: N region labels (one per line)
Mesh read_mesh_text(std::istream& in);
void write_mesh_text(const Mesh& mesh, std::ostream& out);

/// Legacy VTK unstructured grid (ASCII); 2D meshes are written with z = 0.
Mesh read_mesh_vtk(std::istream& in);
using NamedField = std::pair<std::string, const Eigen::VectorXd*>;
void write_mesh_vtk(const Mesh& mesh, std::ostream& out, const std::vector<NamedField>& fields = {},
                    const std::string& title = "tvdot mesh");

/// Format chosen from the extension (.vtk) unless given.
Mesh load_mesh(const std::filesystem::path& path);
Mesh load_mesh(const std::filesystem::path& path, MeshFormat format);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path);
void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format);

/// CSV with header `measurement,source,detector,value`.
void write_boundary_csv(const BoundaryData& data, const ProbeLayout& layout, std::ostream& out);
/// Reads values and checks (source, detector) against `layout` when given.
BoundaryData read_boundary_csv(std::istream& in, const ProbeLayout* layout = nullptr);

/// CSV with header `node,<name>...`, one row per node.
void write_field_csv(const std::vector<NamedField>& fields, std::ostream& out);
/// Reads column `name` of a field CSV (first data column when empty).
Eigen::VectorXd read_field_csv(std::istream& in, const std::string& name = "");

/// `row col value` lines for every stored entry of a sparse derivative matrix.
void write_triplets(const RowSparse<double>& matrix, std::ostream& out);

/// Opens a file for writing, throwing std::runtime_error on failure.
std::ofstream open_output(const std::filesystem::path& path);
std::ifstream open_input(const std::filesystem::path& path);

}  // namespace tvdot
