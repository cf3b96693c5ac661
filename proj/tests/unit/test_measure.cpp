#include <doctest.h>

#include <cmath>

#include "mvsde/measure.hpp"
#include "property_suite.hpp"

using namespace mvsde;

TEST_CASE("W2 in one dimension pairs sorted points") {
  const EmpiricalMeasure a(1, {0.0, 1.0, 2.0}), b(1, {3.0, 1.0, 2.0});
  CHECK(wasserstein2(a, b) == doctest::Approx(1.0));
  CHECK(wasserstein2(a, a) == 0.0);
}

TEST_CASE("W2 between shifted clouds equals the shift length") {
  const EmpiricalMeasure a(2, {0, 0, 1, 0, 0, 1, 2, 2, -1, 3, 4, 0, 0.5, 0.5, 1, 1, 3, 3, 2, 0});
  std::vector<double> p(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < p.size(); i += 2) p[i] += 3.0, p[i + 1] -= 4.0;
  CHECK(wasserstein2(a, EmpiricalMeasure(2, p)) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("hungarian and exhaustive assignment agree") {
  const std::vector<double> cost = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto h = hungarian_assignment(cost, 3);
  const auto e = exhaustive_assignment(cost, 3);
  double ch = 0, ce = 0;
  for (std::size_t i = 0; i < 3; ++i) ch += cost[i * 3 + h[i]], ce += cost[i * 3 + e[i]];
  CHECK(ch == ce);
  CHECK(ch == 5.0);
}

TEST_CASE("measure view statistics") {
  const EmpiricalMeasure m(2, {1, 2, 3, 4});
  const auto v = MeasureView::of(m);
  CHECK(v.count == 2);
  CHECK(v.mean == Point{2, 3});
  CHECK(v.second_moment == doctest::Approx((1 + 4 + 9 + 16) / 2.0));
}

TEST_CASE("pairwise sum is exact on integers") {
  std::vector<double> v(10001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
  CHECK(pairwise_sum(v) == 10000.0 * 10001.0 / 2.0);
  CHECK(pairwise_sum(v, 2, 1) == 5000.0 * 5000.0);
}

TEST_CASE("measure property suite") {
  for (const auto& r : props::measure(7)) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.ok);
  }
}
