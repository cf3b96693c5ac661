#include <doctest.h>

#include <cmath>
#include <vector>

#include "mvsde/measure.hpp"
#include "mvsde/parallel.hpp"
#include "mvsde/rng.hpp"
#include "oracles.hpp"

using namespace mvsde;

TEST_CASE("philox known-answer vectors") {
  const auto zero = philox::generate({0, 0, 0, 0}, {0, 0});
  CHECK(zero == oracle::kPhiloxZeroAnswer);
  const auto ones = philox::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(ones == oracle::kPhiloxOnesAnswer);
}

TEST_CASE("streams are pure functions of their address") {
  const CounterStream a(RngSpec{42, 0}, 7, StreamPurpose::kDrivingNoise);
  const CounterStream b(RngSpec{42, 0}, 7, StreamPurpose::kDrivingNoise);
  std::vector<double> x(5), y(5);
  a.normals(11, x);
  b.normals(11, y);
  CHECK(x == y);

  SUBCASE("offset shifts the stream id") {
    const CounterStream c(RngSpec{42, 3}, 4, StreamPurpose::kDrivingNoise);
    c.normals(11, y);
    CHECK(x == y);
  }
  SUBCASE("purpose, step and seed separate streams") {
    CounterStream(RngSpec{42, 0}, 7, StreamPurpose::kInitialCloud).normals(11, y);
    CHECK(x != y);
    a.normals(12, y);
    CHECK(x != y);
    CounterStream(RngSpec{43, 0}, 7, StreamPurpose::kDrivingNoise).normals(11, y);
    CHECK(x != y);
  }
}

TEST_CASE("normals have unit variance and uniforms lie in (0,1)") {
  const CounterStream s(RngSpec{1, 0}, 0, StreamPurpose::kAuxiliary);
  const std::size_t n = 200000;
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n / 2; ++k) s.normals(k, std::span<double>(v).subspan(2 * k, 2));
  const double mean = pairwise_sum(v) / n;
  std::vector<double> sq(n);
  for (std::size_t k = 0; k < n; ++k) sq[k] = (v[k] - mean) * (v[k] - mean);
  const double var = pairwise_sum(sq) / (n - 1);
  CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  for (std::size_t k = 0; k < 1000; ++k) {
    const double u = s.uniform(k);
    CHECK((u > 0.0 && u < 1.0));
  }
}

TEST_CASE("worker pool covers every index exactly once and propagates errors") {
  for (std::size_t w : {1u, 3u, 16u}) {
    WorkerPool pool(w);
    std::vector<int> hit(1001, 0);
    pool.parallel_for(hit.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) ++hit[i];
    });
    for (int h : hit) CHECK(h == 1);
    CHECK_THROWS_AS(pool.parallel_for(10, [](std::size_t, std::size_t) { throw std::runtime_error("x"); }),
                    std::runtime_error);
  }
}
