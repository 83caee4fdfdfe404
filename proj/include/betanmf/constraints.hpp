#pragma once

#include <optional>
#include <string>
#include <vector>

#include "betanmf/types.hpp"

namespace betanmf {

/// A (row, col) position inside a factor matrix.
struct Entry {
  Index row{0};
  Index col{0};
  friend bool operator==(const Entry&, const Entry&) = default;
};

using IndexSet = std::vector<Entry>;

/// weights^T X(set) = rhs, with strictly positive weights and rhs.
template <typename Scalar>
struct LinearConstraint {
  IndexSet set;
  Vector<Scalar> weights;
  Scalar rhs{1};
};

/// ||X(:, column)||_2^2 = radius_sq.
template <typename Scalar>
struct SphereConstraint {
  Index column{0};
  Scalar radius_sq{1};
};

/// Constraints attached to one factor. Every entry belongs to at most one
/// constraint.
template <typename Scalar>
struct ConstraintSet {
  std::vector<LinearConstraint<Scalar>> linear;
  std::vector<SphereConstraint<Scalar>> spheres;

  bool empty() const { return linear.empty() && spheres.empty(); }
};

struct Violation {
  std::string message;
  IndexSet entries;
};

namespace detail {

inline std::string entry_str(const Entry& e) {
  return "(" + std::to_string(e.row) + "," + std::to_string(e.col) + ")";
}

}  // namespace detail

/// Checks the invariants of a constraint set against a rows x cols factor.
/// Returns the first violation found, or nullopt when the set is valid.
template <typename Scalar>
std::optional<Violation> validate(const ConstraintSet<Scalar>& cs, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) return Violation{"nonpositive factor dimensions", {}};
  // owner[r + rows*c] = 1 + constraint ordinal, 0 when free
  std::vector<std::size_t> owner(static_cast<std::size_t>(rows * cols), 0);
  std::size_t ordinal = 0;
  auto claim = [&](const Entry& e) -> std::optional<Violation> {
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
      return Violation{"index out of range at " + detail::entry_str(e), {e}};
    }
    auto& slot = owner[static_cast<std::size_t>(e.row + rows * e.col)];
    if (slot == ordinal + 1) return Violation{"duplicate entry at " + detail::entry_str(e), {e}};
    if (slot != 0) return Violation{"overlap at " + detail::entry_str(e), {e}};
    slot = ordinal + 1;
    return std::nullopt;
  };

  for (const auto& lc : cs.linear) {
    if (lc.set.empty()) return Violation{"empty index set", {}};
    if (lc.weights.size() != static_cast<Index>(lc.set.size())) {
      return Violation{"weight count does not match index set size", {}};
    }
    for (Index q = 0; q < lc.weights.size(); ++q) {
      if (!(lc.weights(q) > Scalar(0)) || !std::isfinite(lc.weights(q))) {
        return Violation{"nonpositive weight at " + detail::entry_str(lc.set[q]), {lc.set[q]}};
      }
    }
    if (!(lc.rhs > Scalar(0)) || !std::isfinite(lc.rhs)) {
      return Violation{"nonpositive rhs", lc.set};
    }
    for (const auto& e : lc.set) {
      if (auto v = claim(e)) return v;
    }
    ++ordinal;
  }
  for (const auto& sc : cs.spheres) {
    if (sc.column < 0 || sc.column >= cols) {
      return Violation{"sphere column " + std::to_string(sc.column) + " out of range", {}};
    }
    if (!(sc.radius_sq > Scalar(0)) || !std::isfinite(sc.radius_sq)) {
      return Violation{"nonpositive sphere radius", {}};
    }
    for (Index r = 0; r < rows; ++r) {
      if (auto v = claim(Entry{r, sc.column})) return v;
    }
    ++ordinal;
  }
  return std::nullopt;
}

/// Throws ValidationError when the set is invalid.
template <typename Scalar>
void require_valid(const ConstraintSet<Scalar>& cs, Index rows, Index cols, const std::string& factor) {
  if (auto v = validate(cs, rows, cols)) {
    throw ValidationError("constraints on " + factor + ": " + v->message);
  }
}

/// Boolean coverage mask, column-major over rows x cols.
template <typename Scalar>
std::vector<char> coverage_mask(const ConstraintSet<Scalar>& cs, Index rows, Index cols) {
  std::vector<char> covered(static_cast<std::size_t>(rows * cols), 0);
  for (const auto& lc : cs.linear) {
    for (const auto& e : lc.set) covered[static_cast<std::size_t>(e.row + rows * e.col)] = 1;
  }
  for (const auto& sc : cs.spheres) {
    for (Index r = 0; r < rows; ++r) covered[static_cast<std::size_t>(r + rows * sc.column)] = 1;
  }
  return covered;
}

/// Entries that belong to no constraint, in column-major order.
template <typename Scalar>
IndexSet complement(const ConstraintSet<Scalar>& cs, Index rows, Index cols) {
  const auto covered = coverage_mask(cs, rows, cols);
  IndexSet out;
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) {
      if (!covered[static_cast<std::size_t>(r + rows * c)]) out.push_back({r, c});
    }
  }
  return out;
}

/// One unit-weight, unit-rhs constraint per column: each column lies on the
/// probability simplex.
template <typename Scalar>
ConstraintSet<Scalar> simplex_columns(Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) throw ValidationError("simplex_columns: dimensions must be positive");
  ConstraintSet<Scalar> cs;
  cs.linear.reserve(static_cast<std::size_t>(cols));
  for (Index c = 0; c < cols; ++c) {
    LinearConstraint<Scalar> lc;
    lc.set.reserve(static_cast<std::size_t>(rows));
    for (Index r = 0; r < rows; ++r) lc.set.push_back({r, c});
    lc.weights = Vector<Scalar>::Ones(rows);
    lc.rhs = Scalar(1);
    cs.linear.push_back(std::move(lc));
  }
  return cs;
}

/// Column-simplex constraints on an F x K basis matrix.
template <typename Scalar>
ConstraintSet<Scalar> simplex_columns_of_W(Index F, Index K) {
  return simplex_columns<Scalar>(F, K);
}

/// Every column on the sphere of squared radius rho.
template <typename Scalar>
ConstraintSet<Scalar> sphere_columns(Index cols, Scalar rho) {
  ConstraintSet<Scalar> cs;
  for (Index c = 0; c < cols; ++c) cs.spheres.push_back({c, rho});
  return cs;
}

template <typename Scalar>
Scalar linear_residual(const Matrix<Scalar>& X, const LinearConstraint<Scalar>& lc) {
  Scalar s(0);
  for (std::size_t q = 0; q < lc.set.size(); ++q) {
    s += lc.weights(static_cast<Index>(q)) * X(lc.set[q].row, lc.set[q].col);
  }
  return std::abs(s - lc.rhs);
}

template <typename Scalar>
Scalar sphere_residual(const Matrix<Scalar>& X, const SphereConstraint<Scalar>& sc) {
  return std::abs(X.col(sc.column).squaredNorm() - sc.radius_sq);
}

/// Largest residual over every constraint of the set.
template <typename Scalar>
Scalar max_residual(const Matrix<Scalar>& X, const ConstraintSet<Scalar>& cs) {
  Scalar worst(0);
  for (const auto& lc : cs.linear) worst = std::max(worst, linear_residual(X, lc));
  for (const auto& sc : cs.spheres) worst = std::max(worst, sphere_residual(X, sc));
  return worst;
}

}  // namespace betanmf
