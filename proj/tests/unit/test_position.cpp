#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>

#include "gchoreo/error.hpp"
#include "gchoreo/position.hpp"
#include "oracles.hpp"

using namespace gchoreo;

TEST_CASE("order-1 curve") {
  CHECK(hilbert_index(1, {0, 0}) == 0);
  CHECK(hilbert_index(1, {0, 1}) == 1);
  CHECK(hilbert_index(1, {1, 1}) == 2);
  CHECK(hilbert_index(1, {1, 0}) == 3);
  CHECK(hilbert_inverse(1, 0) == GridCell{0, 0});
}

TEST_CASE("order 2 corner against the recursion oracle") {
  const auto id = hilbert_index(2, {3, 3});
  CHECK(id == oracle::hilbert(4, 3, 3));
  CHECK(hilbert_inverse(2, id) == GridCell{3, 3});
}

TEST_CASE("index matches the recursion oracle for orders up to 6") {
  for (int p = 1; p <= 6; ++p) {
    const std::uint32_t n = 1u << p;
    for (std::uint32_t x = 0; x < n; ++x)
      for (std::uint32_t z = 0; z < n; ++z) REQUIRE(hilbert_index(p, {x, z}) == oracle::hilbert(n, x, z));
  }
}

TEST_CASE("round trip and locality up to order 6") {
  for (int p = 1; p <= 6; ++p) {
    GridCell prev = hilbert_inverse(p, 0);
    for (std::uint32_t id = 0; id < (1u << (2 * p)); ++id) {
      const GridCell c = hilbert_inverse(p, id);
      REQUIRE(hilbert_index(p, c) == id);
      if (id > 0) {
        const int dist = std::abs(static_cast<int>(c.cx) - static_cast<int>(prev.cx)) +
                         std::abs(static_cast<int>(c.cz) - static_cast<int>(prev.cz));
        REQUIRE(dist == 1);
      }
      prev = c;
    }
  }
}

TEST_CASE("out-of-range inputs") {
  CHECK_THROWS_AS(hilbert_index(2, {4, 0}), ValidationError);
  CHECK_THROWS_AS(hilbert_index(2, {0, 4}), ValidationError);
  CHECK_THROWS_AS(hilbert_inverse(2, 16), ValidationError);
  CHECK_THROWS_AS(hilbert_index(0, {0, 0}), ValidationError);
  CHECK_THROWS_AS(hilbert_index(16, {0, 0}), ValidationError);
}

TEST_CASE("position quantization") {
  const PositionGrid g;  // order 6 over [-10, 10]
  CHECK(position_token(g, -10, -10).id == 0);
  CHECK(position_cell(g, 1.2, 0.4) == GridCell{35, 33});
  CHECK(position_token(g, 1.2, 0.4).id == oracle::hilbert(64, 35, 33));
  CHECK(position_cell(g, 50, 50) == GridCell{63, 63});
  CHECK(position_cell(g, 10, 10) == GridCell{63, 63});
  CHECK(position_cell(g, -50, 3) == position_cell(g, -10, 3));
  CHECK_THROWS_AS(position_token(g, std::nan(""), 0), ValidationError);
  CHECK_THROWS_AS(position_token(g, 0, INFINITY), ValidationError);
}

TEST_CASE("cell centers") {
  PositionGrid g;
  g.order = 2;
  g.min = 0;
  g.max = 4;
  CHECK(cell_center(g, {0, 0}) == Eigen::Vector2d(0.5, 0.5));
  CHECK(cell_center(g, {3, 1}) == Eigen::Vector2d(3.5, 1.5));
  CHECK(token_center(g, PosToken{hilbert_index(2, {3, 1})}) == Eigen::Vector2d(3.5, 1.5));
}

TEST_CASE("property: de-quantized center lies within half a cell diagonal") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-14, 14);
  for (int p : {1, 3, 6, 9}) {
    PositionGrid g;
    g.order = p;
    const double half_diag = g.cell_size() * std::sqrt(2.0) / 2;
    for (int i = 0; i < 2000; ++i) {
      const double x = u(rng), z = u(rng);
      const Eigen::Vector2d clamped(std::clamp(x, g.min, g.max), std::clamp(z, g.min, g.max));
      const Eigen::Vector2d c = token_center(g, position_token(g, x, z));
      CHECK((c - clamped).norm() <= half_diag + 1e-12);
    }
  }
}

TEST_CASE("grid validation") {
  PositionGrid g;
  g.order = 0;
  CHECK_THROWS_AS(g.validate(), ValidationError);
  g.order = 15;
  CHECK_NOTHROW(g.validate());
  g.max = g.min;
  CHECK_THROWS_AS(g.validate(), ValidationError);
}
