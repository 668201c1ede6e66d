#include "gchoreo/position.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "gchoreo/error.hpp"

namespace gchoreo {

namespace {

void check_order(int order) {
  if (order < 1 || order > 15) throw ValidationError("Hilbert order must be in [1,15], got " + std::to_string(order));
}

// Rotate/flip a quadrant so the sub-curve has the base orientation.
void rotate(std::uint32_t n, std::uint32_t& x, std::uint32_t& y, std::uint32_t rx, std::uint32_t ry) {
  if (ry == 0) {
    if (rx == 1) {
      x = n - 1 - x;
      y = n - 1 - y;
    }
    std::swap(x, y);
  }
}

}  // namespace

void PositionGrid::validate() const {
  check_order(order);
  if (!(std::isfinite(min) && std::isfinite(max) && max > min)) {
    throw ValidationError("position grid extent must satisfy max > min");
  }
}

std::uint32_t hilbert_index(int order, GridCell cell) {
  check_order(order);
  const std::uint32_t n = 1u << order;
  if (cell.cx >= n || cell.cz >= n) {
    throw ValidationError("grid cell (" + std::to_string(cell.cx) + "," + std::to_string(cell.cz) +
                          ") outside a " + std::to_string(n) + "x" + std::to_string(n) + " grid");
  }
  std::uint32_t x = cell.cx, y = cell.cz, d = 0;
  for (std::uint32_t s = n / 2; s > 0; s /= 2) {
    const std::uint32_t rx = (x & s) ? 1u : 0u;
    const std::uint32_t ry = (y & s) ? 1u : 0u;
    d += s * s * ((3u * rx) ^ ry);
    rotate(n, x, y, rx, ry);
  }
  return d;
}

GridCell hilbert_inverse(int order, std::uint32_t id) {
  check_order(order);
  const std::uint32_t n = 1u << order;
  if (static_cast<std::uint64_t>(id) >= static_cast<std::uint64_t>(n) * n) {
    throw ValidationError("Hilbert id " + std::to_string(id) + " out of range for order " + std::to_string(order));
  }
  std::uint32_t x = 0, y = 0, t = id;
  for (std::uint32_t s = 1; s < n; s *= 2) {
    const std::uint32_t rx = 1u & (t / 2);
    const std::uint32_t ry = 1u & (t ^ rx);
    rotate(s, x, y, rx, ry);
    x += s * rx;
    y += s * ry;
    t /= 4;
  }
  return {x, y};
}

GridCell position_cell(const PositionGrid& grid, double x, double z) {
  grid.validate();
  if (!std::isfinite(x) || !std::isfinite(z)) throw ValidationError("position must be finite");
  const double n = grid.cells_per_axis();
  auto to_cell = [&](double v) {
    const double c = std::floor((v - grid.min) / (grid.max - grid.min) * n);
    return static_cast<std::uint32_t>(std::clamp(c, 0.0, n - 1.0));
  };
  return {to_cell(x), to_cell(z)};
}

PosToken position_token(const PositionGrid& grid, double x, double z) {
  return {hilbert_index(grid.order, position_cell(grid, x, z))};
}

Eigen::Vector2d cell_center(const PositionGrid& grid, GridCell cell) {
  const double s = grid.cell_size();
  return {grid.min + (cell.cx + 0.5) * s, grid.min + (cell.cz + 0.5) * s};
}

Eigen::Vector2d token_center(const PositionGrid& grid, PosToken token) {
  return cell_center(grid, hilbert_inverse(grid.order, token.id));
}

}  // namespace gchoreo
