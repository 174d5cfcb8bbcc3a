#include "cseg/grid.hpp"

#include <algorithm>
#include <deque>
#include <unordered_set>

namespace cseg {

ComponentLabels label_components(int width, int height, std::span<const std::int32_t> values,
                                 std::int32_t skip) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  ComponentLabels out;
  out.ids.assign(n, -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (out.ids[start] != -1 || values[start] == skip) continue;
    const std::int32_t v = values[start];
    const std::int32_t label = out.count++;
    out.ids[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(p % width);
      const int y = static_cast<int>(p / width);
      auto visit = [&](std::size_t q) {
        if (out.ids[q] == -1 && values[q] == v) {
          out.ids[q] = label;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < width) visit(p + 1);
      if (y > 0) visit(p - width);
      if (y + 1 < height) visit(p + width);
    }
  }
  return out;
}

bool is_4connected(int width, int height, std::span<const std::size_t> pixels) {
  if (pixels.empty()) return true;
  std::unordered_set<std::size_t> members(pixels.begin(), pixels.end());
  std::unordered_set<std::size_t> seen{pixels.front()};
  std::vector<std::size_t> stack{pixels.front()};
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    const int x = static_cast<int>(p % width);
    const int y = static_cast<int>(p / width);
    const std::size_t nbrs[4] = {x > 0 ? p - 1 : p, x + 1 < width ? p + 1 : p,
                                 y > 0 ? p - width : p, y + 1 < height ? p + width : p};
    for (std::size_t q : nbrs) {
      if (q != p && members.contains(q) && seen.insert(q).second) stack.push_back(q);
    }
  }
  return seen.size() == members.size();
}

std::vector<std::int32_t> geodesic_voronoi(int width, int height, std::span<const std::uint8_t> mask,
                                           std::span<const std::int32_t> seed_labels) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<std::int32_t> owner(n, -1);
  std::vector<std::int32_t> dist(n, -1);
  // Level-synchronous BFS so ties at equal distance can be resolved by label.
  std::vector<std::size_t> frontier;
  for (std::size_t p = 0; p < n; ++p) {
    if (mask[p] && seed_labels[p] >= 0) {
      owner[p] = seed_labels[p];
      dist[p] = 0;
      frontier.push_back(p);
    }
  }
  std::int32_t level = 0;
  std::vector<std::size_t> next;
  while (!frontier.empty()) {
    ++level;
    next.clear();
    for (std::size_t p : frontier) {
      const int x = static_cast<int>(p % width);
      const int y = static_cast<int>(p / width);
      auto relax = [&](std::size_t q) {
        if (!mask[q]) return;
        if (dist[q] == -1) {
          dist[q] = level;
          owner[q] = owner[p];
          next.push_back(q);
        } else if (dist[q] == level && owner[p] < owner[q]) {
          owner[q] = owner[p];
        }
      };
      if (x > 0) relax(p - 1);
      if (x + 1 < width) relax(p + 1);
      if (y > 0) relax(p - width);
      if (y + 1 < height) relax(p + width);
    }
    frontier.swap(next);
  }
  return owner;
}

}  // namespace cseg
