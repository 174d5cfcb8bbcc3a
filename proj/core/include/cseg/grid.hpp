#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cseg {

/// 4-connected components of equal-valued pixels. Pixels equal to `skip` get -1.
/// Components are numbered in raster order of their first pixel.
struct ComponentLabels {
  std::vector<std::int32_t> ids;
  std::int32_t count = 0;
};
ComponentLabels label_components(int width, int height, std::span<const std::int32_t> values,
                                 std::int32_t skip);

/// True when the given pixel indices form one 4-connected set (empty sets count as connected).
bool is_4connected(int width, int height, std::span<const std::size_t> pixels);

/// Multi-source BFS under 4-connectivity inside `mask`. Returns, per pixel, the
/// index of the winning seed label (-1 outside mask or unreachable). On equal
/// distance the smaller label wins.
std::vector<std::int32_t> geodesic_voronoi(int width, int height, std::span<const std::uint8_t> mask,
                                           std::span<const std::int32_t> seed_labels);

}  // namespace cseg
