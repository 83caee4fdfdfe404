#pragma once

#include <istream>
#include <stdexcept>
#include <string>

#include "betanmf/algorithms.hpp"
#include "betanmf/constraints.hpp"
#include "betanmf/types.hpp"

namespace betanmf::io {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file content; line and column are 1-based.
class ParseError : public IoError {
 public:
  ParseError(const std::string& path, int line, int column, const std::string& what);
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

enum class MatrixFormat { Csv, MatrixMarket };

/// .csv -> Csv, .mtx / .mm -> MatrixMarket; anything else is an IoError.
MatrixFormat format_for(const std::string& path);

Matrix<double> load_matrix(const std::string& path);
void save_matrix(const Matrix<double>& m, const std::string& path);

Matrix<double> read_csv(std::istream& in, const std::string& name = "<stream>");
Matrix<double> read_matrix_market(std::istream& in, const std::string& name = "<stream>");

/// Throws ValidationError naming the first negative cell (1-based row and
/// column, as in a spreadsheet).
void require_nonnegative(const Matrix<double>& V, const std::string& name);

/// 17 significant digits, enough to read back the same double.
std::string format_double(double x);

struct ConstraintFile {
  ConstraintSet<double> W;
  ConstraintSet<double> H;
};

/// Line-oriented constraint description:
///
///   # comment
///   [H]                      following lines constrain H (the default)
///   linear 1 0,0:1 1,0:1     weighted sum of entries (row,col:weight) = rhs
///   [W]
///   sphere 2 1.0             squared norm of column 2 of W = 1.0
///
/// A weight may be omitted ("0,0" means weight 1). Sphere lines are only
/// valid for W.
ConstraintFile parse_constraints(std::istream& in, const std::string& name = "<stream>");
ConstraintFile load_constraints(const std::string& path);

/// iter, divergence, penalty, objective, max_constraint_residual,
/// newton_iters_total, fallback_count, elapsed_s
void write_trace_csv(const ConvergenceTrace<double>& trace, const std::string& path);

}  // namespace betanmf::io
