#pragma once

// Ground-plane position tokens: uniform XZ grid cells ordered along a
// Hilbert curve.
//
// Orientation: the order-1 curve visits (0,0) -> (0,1) -> (1,1) -> (1,0),
// with cells written (cx, cz). Higher orders follow the usual recursive
// quadrant construction.

#include <cstdint>

#include "gchoreo/linalg.hpp"

namespace gchoreo {

struct GridCell {
  std::uint32_t cx = 0;
  std::uint32_t cz = 0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct PosToken {
  std::uint32_t id = 0;
  friend bool operator==(const PosToken&, const PosToken&) = default;
};

struct PositionGrid {
  int order = 6;           // 2^order cells per axis, 1..15
  double min = -10.0;      // meters, applied to X and Z
  double max = 10.0;

  std::uint32_t cells_per_axis() const { return 1u << order; }
  std::uint32_t token_count() const { return 1u << (2 * order); }
  double cell_size() const { return (max - min) / cells_per_axis(); }
  void validate() const;
};

std::uint32_t hilbert_index(int order, GridCell cell);
GridCell hilbert_inverse(int order, std::uint32_t id);

// Uniform-cell quantization with clamping to the grid, then hilbert_index.
GridCell position_cell(const PositionGrid& grid, double x, double z);
PosToken position_token(const PositionGrid& grid, double x, double z);

// (x, z) of the center of a cell / token.
Eigen::Vector2d cell_center(const PositionGrid& grid, GridCell cell);
Eigen::Vector2d token_center(const PositionGrid& grid, PosToken token);

}  // namespace gchoreo
