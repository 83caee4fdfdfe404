#include "betanmf/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace betanmf::io {

ParseError::ParseError(const std::string& path, int line, int column, const std::string& what)
    : IoError(path + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

namespace {

std::string lower_extension(const std::string& path) {
  const auto slash = path.find_last_of("/\\");
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return {};
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_number(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

Matrix<double> assemble(const std::vector<std::vector<double>>& rows) {
  const Index R = static_cast<Index>(rows.size());
  const Index C = R ? static_cast<Index>(rows.front().size()) : 0;
  Matrix<double> m(R, C);
  for (Index i = 0; i < R; ++i) {
    for (Index j = 0; j < C; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace

MatrixFormat format_for(const std::string& path) {
  const std::string ext = lower_extension(path);
  if (ext == "csv") return MatrixFormat::Csv;
  if (ext == "mtx" || ext == "mm") return MatrixFormat::MatrixMarket;
  throw IoError(path + ": unknown matrix format (expected .csv, .mtx or .mm)");
}

Matrix<double> read_csv(std::istream& in, const std::string& name) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const int column = static_cast<int>(pos) + 1;
      std::string cell;
      std::size_t next;
      std::size_t lead = pos;
      while (lead < line.size() && line[lead] == ' ') ++lead;
      if (lead < line.size() && line[lead] == '"') {
        // quoted cell; "" inside stands for a literal quote
        std::size_t i = lead + 1;
        bool closed = false;
        while (i < line.size()) {
          if (line[i] == '"') {
            if (i + 1 < line.size() && line[i + 1] == '"') {
              cell += '"';
              i += 2;
              continue;
            }
            closed = true;
            ++i;
            break;
          }
          cell += line[i++];
        }
        if (!closed) throw ParseError(name, lineno, column, "unterminated quoted cell");
        while (i < line.size() && line[i] == ' ') ++i;
        if (i < line.size() && line[i] != ',') throw ParseError(name, lineno, column, "text after quoted cell");
        next = i;
      } else {
        next = line.find(',', pos);
        if (next == std::string::npos) next = line.size();
        cell = line.substr(pos, next - pos);
      }
      double v;
      if (!parse_number(cell, v)) {
        throw ParseError(name, lineno, column, "cell '" + trim(cell) + "' is not a finite number");
      }
      row.push_back(v);
      if (next >= line.size()) break;
      pos = next + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(name, lineno, 1,
                       "expected " + std::to_string(rows.front().size()) + " cells, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(name, lineno, 1, "no data rows");
  return assemble(rows);
}

Matrix<double> read_matrix_market(std::istream& in, const std::string& name) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError(name, 1, 1, "empty file");
  ++lineno;
  {
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    auto lower = [](std::string s) {
      std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
      return s;
    };
    if (banner != "%%MatrixMarket" || lower(object) != "matrix") {
      throw ParseError(name, 1, 1, "missing %%MatrixMarket matrix header");
    }
    if (lower(format) != "array") throw ParseError(name, 1, 1, "only the dense array format is supported");
    if (lower(field) != "real" && lower(field) != "integer" && lower(field) != "double") {
      throw ParseError(name, 1, 1, "unsupported field type '" + field + "'");
    }
    if (!symmetry.empty() && lower(symmetry) != "general") {
      throw ParseError(name, 1, 1, "only general (unsymmetric) storage is supported");
    }
  }
  long rows = -1, cols = -1;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '%') continue;
    std::istringstream ls(t);
    if (rows < 0) {
      if (!(ls >> rows >> cols) || rows <= 0 || cols <= 0) throw ParseError(name, lineno, 1, "bad size line");
      values.reserve(static_cast<std::size_t>(rows * cols));
      continue;
    }
    std::string tok;
    int column = 1;
    while (ls >> tok) {
      double v;
      if (!parse_number(tok, v)) throw ParseError(name, lineno, column, "'" + tok + "' is not a finite number");
      values.push_back(v);
      column += static_cast<int>(tok.size()) + 1;
    }
  }
  if (rows < 0) throw ParseError(name, lineno, 1, "missing size line");
  if (static_cast<long>(values.size()) != rows * cols) {
    throw ParseError(name, lineno, 1,
                     "expected " + std::to_string(rows * cols) + " values, found " + std::to_string(values.size()));
  }
  Matrix<double> m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());  // column-major, as the format
  return m;
}

Matrix<double> load_matrix(const std::string& path) {
  const MatrixFormat fmt = format_for(path);
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  return fmt == MatrixFormat::Csv ? read_csv(in, path) : read_matrix_market(in, path);
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void save_matrix(const Matrix<double>& m, const std::string& path) {
  const MatrixFormat fmt = format_for(path);
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  if (fmt == MatrixFormat::Csv) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        if (j) out << ',';
        out << format_double(m(i, j));
      }
      out << '\n';
    }
  } else {
    out << "%%MatrixMarket matrix array real general\n" << m.rows() << ' ' << m.cols() << '\n';
    for (Index k = 0; k < m.size(); ++k) out << format_double(m.data()[k]) << '\n';
  }
  if (!out) throw IoError(path + ": write failed");
}

void require_nonnegative(const Matrix<double>& V, const std::string& name) {
  for (Index i = 0; i < V.rows(); ++i) {
    for (Index j = 0; j < V.cols(); ++j) {
      if (V(i, j) < 0) {
        throw ValidationError(name + ": negative entry " + format_double(V(i, j)) + " at row " +
                              std::to_string(i + 1) + ", column " + std::to_string(j + 1));
      }
    }
  }
}

ConstraintFile parse_constraints(std::istream& in, const std::string& name) {
  ConstraintFile cf;
  enum class Section { Default, W, H } section = Section::Default;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "[W]" || t == "[w]") {
      section = Section::W;
      continue;
    }
    if (t == "[H]" || t == "[h]") {
      section = Section::H;
      continue;
    }
    const bool onW = section == Section::W;
    std::istringstream ls(t);
    std::string kind;
    ls >> kind;
    if (kind == "linear") {
      std::string rhs_tok;
      double rhs;
      if (!(ls >> rhs_tok) || !parse_number(rhs_tok, rhs)) throw ParseError(name, lineno, 8, "bad right-hand side");
      LinearConstraint<double> lc;
      lc.rhs = rhs;
      std::vector<double> w;
      std::string tok;
      while (ls >> tok) {
        const auto comma = tok.find(',');
        const auto colon = tok.find(':');
        if (comma == std::string::npos || (colon != std::string::npos && colon < comma)) {
          throw ParseError(name, lineno, 1, "entry '" + tok + "' is not of the form r,c:w");
        }
        double r, c, weight = 1;
        const std::string rs = tok.substr(0, comma);
        const std::string cs = tok.substr(comma + 1, colon == std::string::npos ? std::string::npos : colon - comma - 1);
        if (!parse_number(rs, r) || !parse_number(cs, c) || r != std::floor(r) || c != std::floor(c) || r < 0 || c < 0 ||
            (colon != std::string::npos && !parse_number(tok.substr(colon + 1), weight))) {
          throw ParseError(name, lineno, 1, "entry '" + tok + "' is not of the form r,c:w");
        }
        lc.set.push_back({static_cast<Index>(r), static_cast<Index>(c)});
        w.push_back(weight);
      }
      if (lc.set.empty()) throw ParseError(name, lineno, 1, "linear constraint without entries");
      lc.weights = Eigen::Map<Vector<double>>(w.data(), static_cast<Index>(w.size()));
      (onW ? cf.W : cf.H).linear.push_back(std::move(lc));
    } else if (kind == "sphere") {
      std::string col_tok, rho_tok;
      double col, rho;
      if (!(ls >> col_tok >> rho_tok) || !parse_number(col_tok, col) || !parse_number(rho_tok, rho) || col < 0 ||
          col != std::floor(col)) {
        throw ParseError(name, lineno, 1, "expected 'sphere <column> <rho>'");
      }
      std::string extra;
      if (ls >> extra) throw ParseError(name, lineno, 1, "unexpected text after sphere constraint");
      if (section == Section::H) throw ParseError(name, lineno, 1, "sphere constraints apply to columns of W only");
      cf.W.spheres.push_back({static_cast<Index>(col), rho});
    } else {
      throw ParseError(name, lineno, 1, "unknown constraint kind '" + kind + "'");
    }
  }
  return cf;
}

ConstraintFile load_constraints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  return parse_constraints(in, path);
}

void write_trace_csv(const ConvergenceTrace<double>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "iter,divergence,penalty,objective,max_constraint_residual,newton_iters_total,fallback_count,elapsed_s\n";
  for (const auto& r : trace.rows) {
    out << r.iter << ',' << format_double(r.divergence) << ',' << format_double(r.penalty) << ','
        << format_double(r.objective) << ',' << format_double(r.max_residual) << ',' << r.newton_iters << ','
        << r.fallback_count << ',' << format_double(r.elapsed_s) << '\n';
  }
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace betanmf::io
