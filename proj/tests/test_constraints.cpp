#include "betanmf/constraints.hpp"
#include "doctest.h"

using namespace betanmf;
using CS = ConstraintSet<double>;

namespace {

LinearConstraint<double> lin(IndexSet set, double rhs = 1) {
  LinearConstraint<double> lc;
  lc.weights = Vector<double>::Ones(static_cast<Index>(set.size()));
  lc.set = std::move(set);
  lc.rhs = rhs;
  return lc;
}

}  // namespace

TEST_CASE("overlap and duplicates") {
  CS cs;
  cs.linear.push_back(lin({{0, 0}, {1, 0}}));
  cs.linear.push_back(lin({{0, 0}, {0, 1}}));
  auto v = validate(cs, 2, 2);
  REQUIRE(v);
  CHECK(v->message == "overlap at (0,0)");
  CHECK(v->entries.size() == 1);

  CS dup;
  dup.linear.push_back(lin({{1, 1}, {1, 1}}));
  REQUIRE(validate(dup, 2, 2));
  CHECK(validate(dup, 2, 2)->message == "duplicate entry at (1,1)");

  CS mixed;
  mixed.linear.push_back(lin({{0, 1}}));
  mixed.spheres.push_back({1, 1.0});
  REQUIRE(validate(mixed, 2, 2));
  CHECK(validate(mixed, 2, 2)->message == "overlap at (0,1)");
}

TEST_CASE("weights, rhs and ranges") {
  CS cs;
  cs.linear.push_back(lin({{0, 0}, {1, 0}}));
  cs.linear[0].weights(1) = 0;
  REQUIRE(validate(cs, 2, 2));
  CHECK(validate(cs, 2, 2)->message.rfind("nonpositive weight", 0) == 0);

  cs.linear[0].weights(1) = 1;
  cs.linear[0].rhs = 0;
  CHECK(validate(cs, 2, 2)->message == "nonpositive rhs");

  CS range;
  range.linear.push_back(lin({{2, 0}}));
  CHECK(validate(range, 2, 2)->message == "index out of range at (2,0)");

  CS empty_set;
  empty_set.linear.push_back(lin({}));
  CHECK(validate(empty_set, 2, 2)->message == "empty index set");

  CS sizes;
  sizes.linear.push_back(lin({{0, 0}}));
  sizes.linear[0].weights = Vector<double>::Ones(2);
  CHECK(validate(sizes, 2, 2)->message == "weight count does not match index set size");

  CS sph;
  sph.spheres.push_back({3, 1.0});
  CHECK(validate(sph, 2, 2)->message == "sphere column 3 out of range");
  sph.spheres[0] = {0, -1.0};
  CHECK(validate(sph, 2, 2)->message == "nonpositive sphere radius");

  CHECK_THROWS_AS(require_valid(sph, 2, 2, "W"), ValidationError);
}

TEST_CASE("simplex columns") {
  auto cs = simplex_columns<double>(3, 4);
  CHECK(cs.linear.size() == 4);
  CHECK_FALSE(validate(cs, 3, 4));
  CHECK(complement(cs, 3, 4).empty());

  auto small = simplex_columns<double>(2, 3);
  CHECK(small.linear.size() == 3);
  for (const auto& lc : small.linear) CHECK(lc.set.size() == 2);

  auto one = simplex_columns<double>(1, 1);
  REQUIRE(one.linear.size() == 1);
  CHECK(one.linear[0].rhs == 1.0);

  CHECK(simplex_columns_of_W<double>(2, 2).linear.size() == 2);
  CHECK_THROWS_AS(simplex_columns<double>(0, 2), ValidationError);
}

TEST_CASE("complement") {
  CS cs;
  cs.linear.push_back(lin({{0, 0}}));
  const auto c = complement(cs, 2, 2);
  CHECK(c.size() == 3);
  CHECK(c[0] == Entry{1, 0});
  CHECK(complement(CS{}, 2, 3).size() == 6);

  CS sph = sphere_columns<double>(3, 2.0);
  CHECK_FALSE(validate(sph, 4, 3));
  CHECK(complement(sph, 4, 3).empty());
}

TEST_CASE("residuals") {
  Matrix<double> X(2, 2);
  X << 0.25, 3, 0.75, 4;
  auto cs = simplex_columns<double>(2, 2);
  CHECK(linear_residual(X, cs.linear[0]) == doctest::Approx(0.0));
  CHECK(linear_residual(X, cs.linear[1]) == doctest::Approx(6.0));
  CHECK(sphere_residual(X, SphereConstraint<double>{1, 25.0}) == doctest::Approx(0.0));
  CHECK(max_residual(X, cs) == doctest::Approx(6.0));
}
