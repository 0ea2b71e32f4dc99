#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rgm/image.hpp"

namespace rgm {

enum class MapType { RandomRects, Walls, Maze, BugTrap, NarrowGaps };

const char* map_type_name(MapType t);
MapType map_type_from_name(const std::string& name);

// Family-specific knobs; -1 picks a size-scaled default.
struct MapParams {
  int rect_count = -1;   // RandomRects
  int wall_count = -1;   // Walls / NarrowGaps
  int gap_width = -1;    // Walls / BugTrap / NarrowGaps
  int corridor = -1;     // Maze passage width
};

// Occupancy grid. Cell (cx, cy) is occ[cy * width + cx]; 1 = obstacle.
struct GridMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> occ;
  MapType map_type = MapType::RandomRects;
  std::uint64_t seed = 0;

  bool in_bounds_cell(int cx, int cy) const {
    return cx >= 0 && cy >= 0 && cx < width && cy < height;
  }
  bool occupied(int cx, int cy) const {
    return occ[static_cast<std::size_t>(cy) * width + cx] != 0;
  }
  void set(int cx, int cy, bool obstacle) {
    occ[static_cast<std::size_t>(cy) * width + cx] = obstacle ? 1 : 0;
  }
  int free_count() const;
};

// Continuous configuration, in cell units: x in [0,width), y in [0,height).
// The containing cell is (floor(x), floor(y)); a point on a shared edge
// belongs to the higher-index cell.
struct WorldPoint {
  double x = 0;
  double y = 0;
};

inline double euclid(const WorldPoint& a, const WorldPoint& b) {
  double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct PlanProblem {
  WorldPoint start;
  WorldPoint goal;
};

// Validates both endpoints free and distinct.
PlanProblem make_problem(const GridMap& map, WorldPoint start, WorldPoint goal);

// Membership test for the cell containing p. Out-of-bounds points violate
// the WorldPoint contract and are rejected.
bool is_free(const GridMap& map, WorldPoint p);

// True iff is_free holds at a, b and at samples spaced <= step along ab.
// Endpoints are canonicalized so segment_free(a,b) == segment_free(b,a).
bool segment_free(const GridMap& map, WorldPoint a, WorldPoint b,
                  double step = 0.25);

// Deterministic in (map_type, dims, seed, params). Throws std::runtime_error
// when the parameters leave no free space.
GridMap generate_map(MapType map_type, int width, int height,
                     std::uint64_t seed, const MapParams& params = {});

// White = free, black = obstacle.
Image map_to_image(const GridMap& map);
// PGM bytes, 0 = free, 255 = obstacle.
std::vector<std::uint8_t> map_to_pgm(const GridMap& map);
GridMap map_from_pgm(const std::vector<std::uint8_t>& bytes);
// Threshold on luminance: < 128 means obstacle.
GridMap map_from_image(const Image& img);
// Dispatch on P5/P6 file contents.
GridMap load_map(const std::string& path);

// Seeded BugTrap layout, recomputable without generating the grid. The gap
// cells are the unique opening between enclosure interior and exterior.
struct BugTrapInfo {
  int x0, y0, x1, y1;  // outer ring rect, inclusive
  int thickness;
  int side;  // 0 top, 1 bottom, 2 left, 3 right
  int gap_lo, gap_hi;
  int lip_len;
  std::vector<std::pair<int, int>> gap_cells() const;
  std::pair<int, int> interior_cell() const;
};
BugTrapInfo bugtrap_info(int width, int height, std::uint64_t seed,
                         const MapParams& params = {});

std::vector<std::pair<int, int>> free_cells(const GridMap& map);

// Flood fill over free cells; connectivity 4 or 8.
bool free_cells_connected(const GridMap& map, int ax, int ay, int bx, int by,
                          int connectivity = 8);

}  // namespace rgm
