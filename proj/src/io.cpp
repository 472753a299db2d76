#include "tvdot/io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace tvdot {

namespace {

/// Whitespace tokenizer that remembers line numbers and skips `#` comments.
class Tokens {
public:
  explicit Tokens(std::istream& in) : in_(in) {}

  bool next(std::string& tok) {
    while (!(line_stream_ >> tok)) {
      std::string line;
      if (!std::getline(in_, line)) return false;
      ++line_no_;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line_stream_.clear();
      line_stream_.str(line);
    }
    return true;
  }

  std::string expect(const char* what) {
    std::string tok;
    if (!next(tok)) throw ParseError(std::string("unexpected end of file, expected ") + what, line_no_);
    return tok;
  }

  double number(const char* what) {
    const std::string tok = expect(what);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw ParseError(std::string("bad ") + what + " '" + tok + "'", line_no_);
    return v;
  }

  long integer(const char* what) {
    const std::string tok = expect(what);
    long v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw ParseError(std::string("bad ") + what + " '" + tok + "'", line_no_);
    return v;
  }

  long line() const { return line_no_; }

  /// Consumes the rest of the current line.
  void skip_line() {
    line_stream_.clear();
    line_stream_.str("");
  }

  /// Next raw line (comments kept), for free-form VTK title lines.
  std::string raw_line() {
    skip_line();
    std::string line;
    if (!std::getline(in_, line)) throw ParseError("unexpected end of file", line_no_);
    ++line_no_;
    return line;
  }

private:
  std::istream& in_;
  std::istringstream line_stream_;
  long line_no_ = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

double parse_cell(const std::string& s, long line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ParseError("bad numeric cell '" + s + "'", line);
  return v;
}

long parse_index(const std::string& s, long line) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ParseError("bad integer cell '" + s + "'", line);
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

Mesh read_mesh_text(std::istream& in) {
  Tokens t(in);
  const long n = t.integer("node count");
  const long m = t.integer("element count");
  const long dim = t.integer("dimension");
  if (n < 1 || m < 1) throw ParseError("node and element counts must be positive", t.line());
  if (dim != 2 && dim != 3) throw ParseError("dimension must be 2 or 3", t.line());

  Eigen::MatrixXd nodes(n, dim);
  for (long i = 0; i < n; ++i)
    for (long d = 0; d < dim; ++d) nodes(i, d) = t.number("coordinate");
  Eigen::MatrixXi elements(m, dim + 1);
  for (long e = 0; e < m; ++e)
    for (long v = 0; v <= dim; ++v) {
      const long idx = t.integer("node index");
      if (idx < 0 || idx >= n)
        throw MeshError("element " + std::to_string(e) + " references node " + std::to_string(idx) +
                            " out of range [0, " + std::to_string(n) + ")",
                        e);
      elements(e, v) = static_cast<int>(idx);
    }

  Eigen::VectorXi region;
  std::string tok;
  if (t.next(tok)) {
    region.resize(n);
    long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw ParseError("bad region label '" + tok + "'", t.line());
    region[0] = static_cast<int>(v);
    for (long i = 1; i < n; ++i) region[i] = static_cast<int>(t.integer("region label"));
    if (t.next(tok)) throw ParseError("trailing content after region labels", t.line());
  }
  return Mesh(std::move(nodes), std::move(elements), std::move(region));
}

void write_mesh_text(const Mesh& mesh, std::ostream& out) {
  out << mesh.num_nodes() << ' ' << mesh.num_elements() << ' ' << mesh.dim() << '\n';
  for (Index i = 0; i < mesh.num_nodes(); ++i) {
    for (int d = 0; d < mesh.dim(); ++d) out << (d ? " " : "") << format_double(mesh.nodes()(i, d));
    out << '\n';
  }
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    for (int v = 0; v <= mesh.dim(); ++v) out << (v ? " " : "") << mesh.elements()(e, v);
    out << '\n';
  }
  if (mesh.region().size() == mesh.num_nodes())
    for (Index i = 0; i < mesh.num_nodes(); ++i) out << mesh.region()[i] << '\n';
}

Mesh read_mesh_vtk(std::istream& in) {
  Tokens t(in);
  const std::string magic = t.raw_line();
  if (magic.rfind("# vtk DataFile", 0) != 0) throw ParseError("missing VTK header", 1);
  t.raw_line();  // title
  if (t.expect("ASCII") != "ASCII") throw ParseError("only ASCII VTK is supported", t.line());
  if (t.expect("DATASET") != "DATASET" || t.expect("UNSTRUCTURED_GRID") != "UNSTRUCTURED_GRID")
    throw ParseError("expected DATASET UNSTRUCTURED_GRID", t.line());

  Eigen::MatrixXd points;
  std::vector<std::vector<int>> cells;
  std::vector<int> types;
  Eigen::VectorXi region;
  std::string tok;
  long npoints = -1;
  while (t.next(tok)) {
    if (tok == "POINTS") {
      npoints = t.integer("point count");
      t.expect("point type");
      points.resize(npoints, 3);
      for (long i = 0; i < npoints; ++i)
        for (int d = 0; d < 3; ++d) points(i, d) = t.number("coordinate");
    } else if (tok == "CELLS") {
      const long nc = t.integer("cell count");
      t.integer("cell list size");
      cells.resize(static_cast<std::size_t>(nc));
      for (auto& c : cells) {
        const long k = t.integer("cell size");
        for (long v = 0; v < k; ++v) c.push_back(static_cast<int>(t.integer("node index")));
      }
    } else if (tok == "CELL_TYPES") {
      const long nc = t.integer("cell count");
      for (long i = 0; i < nc; ++i) types.push_back(static_cast<int>(t.integer("cell type")));
    } else if (tok == "POINT_DATA") {
      t.integer("point count");
    } else if (tok == "SCALARS") {
      const std::string name = t.expect("field name");
      const std::string type = t.expect("field type");
      std::string next = t.expect("LOOKUP_TABLE");
      if (next != "LOOKUP_TABLE") {  // optional component count
        next = t.expect("LOOKUP_TABLE");
      }
      t.expect("table name");
      if (npoints < 0) throw ParseError("point data before POINTS", t.line());
      if (name == "region") region.resize(npoints);
      for (long i = 0; i < npoints; ++i) {
        const double v = t.number("point value");
        if (name == "region") region[i] = static_cast<int>(v);
      }
    } else {
      throw ParseError("unsupported VTK section '" + tok + "'", t.line());
    }
  }
  if (npoints < 0 || cells.empty()) throw ParseError("VTK file has no points or cells", t.line());
  if (types.size() != cells.size()) throw ParseError("CELL_TYPES count does not match CELLS", t.line());
  const int dim = types.front() == 10 ? 3 : 2;
  Eigen::MatrixXi elements(static_cast<Index>(cells.size()), dim + 1);
  for (std::size_t e = 0; e < cells.size(); ++e) {
    const int expected = dim == 2 ? 5 : 10;
    if (types[e] != expected || static_cast<int>(cells[e].size()) != dim + 1)
      throw ParseError("mixed or unsupported cell type in element " + std::to_string(e), t.line());
    for (int v = 0; v <= dim; ++v) {
      const int idx = cells[e][static_cast<std::size_t>(v)];
      if (idx < 0 || idx >= npoints)
        throw MeshError("element " + std::to_string(e) + " references node " + std::to_string(idx) +
                            " out of range",
                        static_cast<Index>(e));
      elements(static_cast<Index>(e), v) = idx;
    }
  }
  Eigen::MatrixXd nodes = points.leftCols(dim);
  return Mesh(std::move(nodes), std::move(elements), std::move(region));
}

void write_mesh_vtk(const Mesh& mesh, std::ostream& out, const std::vector<NamedField>& fields,
                    const std::string& title) {
  const Index n = mesh.num_nodes(), m = mesh.num_elements();
  const int k = mesh.dim() + 1;
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n << " double\n";
  for (Index i = 0; i < n; ++i) {
    out << format_double(mesh.nodes()(i, 0)) << ' ' << format_double(mesh.nodes()(i, 1)) << ' '
        << (mesh.dim() == 3 ? format_double(mesh.nodes()(i, 2)) : std::string("0")) << '\n';
  }
  out << "CELLS " << m << ' ' << m * (k + 1) << '\n';
  for (Index e = 0; e < m; ++e) {
    out << k;
    for (int v = 0; v < k; ++v) out << ' ' << mesh.elements()(e, v);
    out << '\n';
  }
  out << "CELL_TYPES " << m << '\n';
  for (Index e = 0; e < m; ++e) out << (mesh.dim() == 2 ? 5 : 10) << '\n';
  const bool has_region = mesh.region().size() == n;
  if (!has_region && fields.empty()) return;
  out << "POINT_DATA " << n << '\n';
  if (has_region) {
    out << "SCALARS region int 1\nLOOKUP_TABLE default\n";
    for (Index i = 0; i < n; ++i) out << mesh.region()[i] << '\n';
  }
  for (const auto& [name, values] : fields) {
    if (values->size() != n) throw std::invalid_argument("write_mesh_vtk: field '" + name + "' has wrong length");
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (Index i = 0; i < n; ++i) out << format_double((*values)[i]) << '\n';
  }
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

Mesh load_mesh(const std::filesystem::path& path) {
  return load_mesh(path, path.extension() == ".vtk" ? MeshFormat::Vtk : MeshFormat::Text);
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  auto in = open_input(path);
  try {
    return format == MeshFormat::Vtk ? read_mesh_vtk(in) : read_mesh_text(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
  }
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path) {
  save_mesh(mesh, path, path.extension() == ".vtk" ? MeshFormat::Vtk : MeshFormat::Text);
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  auto out = open_output(path);
  if (format == MeshFormat::Vtk) {
    write_mesh_vtk(mesh, out);
  } else {
    write_mesh_text(mesh, out);
  }
}

void write_boundary_csv(const BoundaryData& data, const ProbeLayout& layout, std::ostream& out) {
  if (data.size() != layout.num_measurements())
    throw std::invalid_argument("write_boundary_csv: data length does not match the layout");
  out << "measurement,source,detector,value\n";
  for (Index k = 0; k < data.size(); ++k) {
    const auto [s, d] = layout.measurements[static_cast<std::size_t>(k)];
    out << k << ',' << s << ',' << d << ',' << format_double(data.values[k]) << '\n';
  }
}

BoundaryData read_boundary_csv(std::istream& in, const ProbeLayout* layout) {
  std::string line;
  long line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty boundary data file", 1);
  const auto header = split_csv(line);
  if (header.size() != 4 || header[0] != "measurement" || header[3] != "value")
    throw ParseError("expected header measurement,source,detector,value", 1);
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw ParseError("expected 4 columns", line_no);
    const long k = parse_index(cells[0], line_no);
    if (k != static_cast<long>(values.size())) throw ParseError("measurements out of order", line_no);
    if (layout != nullptr) {
      if (k >= layout->num_measurements()) throw ParseError("more rows than layout measurements", line_no);
      const auto [s, d] = layout->measurements[static_cast<std::size_t>(k)];
      if (parse_index(cells[1], line_no) != s || parse_index(cells[2], line_no) != d)
        throw ParseError("source/detector pair does not match the layout", line_no);
    }
    values.push_back(parse_cell(cells[3], line_no));
  }
  if (layout != nullptr && static_cast<Index>(values.size()) != layout->num_measurements())
    throw ParseError("row count does not match the layout", line_no);
  BoundaryData data;
  data.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
  return data;
}

void write_field_csv(const std::vector<NamedField>& fields, std::ostream& out) {
  if (fields.empty()) throw std::invalid_argument("write_field_csv: no fields");
  const Index n = fields.front().second->size();
  out << "node";
  for (const auto& f : fields) {
    if (f.second->size() != n) throw std::invalid_argument("write_field_csv: field lengths differ");
    out << ',' << f.first;
  }
  out << '\n';
  for (Index i = 0; i < n; ++i) {
    out << i;
    for (const auto& f : fields) out << ',' << format_double((*f.second)[i]);
    out << '\n';
  }
}

Eigen::VectorXd read_field_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty field file", 1);
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "node") throw ParseError("expected header node,<field>...", 1);
  std::size_t col = 1;
  if (!name.empty()) {
    col = 0;
    for (std::size_t c = 1; c < header.size(); ++c)
      if (header[c] == name) col = c;
    if (col == 0) throw ParseError("no column named '" + name + "'", 1);
  }
  std::vector<double> values;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ParseError("wrong column count", line_no);
    if (parse_index(cells[0], line_no) != static_cast<long>(values.size()))
      throw ParseError("nodes out of order", line_no);
    values.push_back(parse_cell(cells[col], line_no));
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
}

void write_triplets(const RowSparse<double>& matrix, std::ostream& out) {
  for (Index r = 0; r < matrix.outerSize(); ++r)
    for (RowSparse<double>::InnerIterator it(matrix, r); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << format_double(it.value()) << '\n';
}

}  // namespace tvdot
