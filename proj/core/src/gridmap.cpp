#include "rgm/gridmap.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "rgm/rng.hpp"

namespace rgm {

const char* map_type_name(MapType t) {
  switch (t) {
    case MapType::RandomRects: return "random_rects";
    case MapType::Walls: return "walls";
    case MapType::Maze: return "maze";
    case MapType::BugTrap: return "bugtrap";
    case MapType::NarrowGaps: return "narrow_gaps";
  }
  return "unknown";
}

MapType map_type_from_name(const std::string& name) {
  if (name == "random_rects" || name == "rects") return MapType::RandomRects;
  if (name == "walls") return MapType::Walls;
  if (name == "maze") return MapType::Maze;
  if (name == "bugtrap" || name == "bug_trap") return MapType::BugTrap;
  if (name == "narrow_gaps" || name == "gaps") return MapType::NarrowGaps;
  throw std::invalid_argument("unknown map type: " + name);
}

int GridMap::free_count() const {
  int n = 0;
  for (auto v : occ) n += (v == 0);
  return n;
}

PlanProblem make_problem(const GridMap& map, WorldPoint start, WorldPoint goal) {
  if (!is_free(map, start) || !is_free(map, goal))
    throw std::invalid_argument("problem endpoints must lie in free space");
  if (start.x == goal.x && start.y == goal.y)
    throw std::invalid_argument("start and goal must differ");
  return PlanProblem{start, goal};
}

bool is_free(const GridMap& map, WorldPoint p) {
  if (p.x < 0 || p.y < 0 || p.x >= map.width || p.y >= map.height)
    throw std::out_of_range("point outside map");
  int cx = static_cast<int>(std::floor(p.x));
  int cy = static_cast<int>(std::floor(p.y));
  return !map.occupied(cx, cy);
}

bool segment_free(const GridMap& map, WorldPoint a, WorldPoint b, double step) {
  if (step <= 0) throw std::invalid_argument("segment step must be positive");
  // Canonical endpoint order keeps the sample set identical for (a,b), (b,a).
  if (b.x < a.x || (b.x == a.x && b.y < a.y)) std::swap(a, b);
  double len = euclid(a, b);
  int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    double t = static_cast<double>(i) / n;
    WorldPoint p{a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t};
    if (!is_free(map, p)) return false;
  }
  return true;
}

namespace {

GridMap blank(MapType t, int w, int h, std::uint64_t seed, bool filled) {
  GridMap m;
  m.width = w;
  m.height = h;
  m.map_type = t;
  m.seed = seed;
  m.occ.assign(static_cast<std::size_t>(w) * h, filled ? 1 : 0);
  return m;
}

void fill_rect(GridMap& m, int x0, int y0, int x1, int y1, bool obstacle) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, m.width - 1);
  y1 = std::min(y1, m.height - 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.set(x, y, obstacle);
}

GridMap gen_random_rects(int w, int h, std::uint64_t seed, const MapParams& p) {
  int want = p.rect_count >= 0 ? p.rect_count : std::max(3, w * h / 700);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(seed, 0x5ec7 + attempt));
    GridMap m = blank(MapType::RandomRects, w, h, seed, false);
    int smin = std::max(2, std::min(w, h) / 10);
    int smax = std::max(smin + 1, std::min(w, h) / 4);
    for (int i = 0; i < want; ++i) {
      int rw = rng.uniform_int(smin, smax);
      int rh = rng.uniform_int(smin, smax);
      int x0 = rng.uniform_int(0, std::max(0, w - rw - 1));
      int y0 = rng.uniform_int(0, std::max(0, h - rh - 1));
      fill_rect(m, x0, y0, x0 + rw - 1, y0 + rh - 1, true);
    }
    if (m.free_count() >= w * h / 5) return m;
  }
  throw std::runtime_error("random_rects: parameters occlude the map");
}

GridMap gen_walls(int w, int h, std::uint64_t seed, const MapParams& p) {
  Rng rng(derive_seed(seed, 0x3a11));
  GridMap m = blank(MapType::Walls, w, h, seed, false);
  int walls = p.wall_count >= 0 ? p.wall_count : 3;
  int gap = p.gap_width >= 0 ? p.gap_width : std::max(3, std::min(w, h) / 12);
  for (int i = 0; i < walls; ++i) {
    bool vertical = (i % 2 == 0);
    int span = vertical ? w : h;
    int other = vertical ? h : w;
    int lo = 3 + (span - 6) * i / std::max(1, walls);
    int hi = 3 + (span - 6) * (i + 1) / std::max(1, walls) - 1;
    int pos = rng.uniform_int(std::min(lo, span - 4), std::min(std::max(lo, hi), span - 4));
    int thick = rng.chance(0.5) ? 1 : 2;
    int ngaps = rng.chance(0.5) ? 1 : 2;
    std::vector<std::pair<int, int>> holes;
    for (int g = 0; g < ngaps; ++g) {
      int gy = rng.uniform_int(1, std::max(1, other - gap - 2));
      holes.emplace_back(gy, gy + gap - 1);
    }
    for (int t = 0; t < thick; ++t) {
      int c = std::min(pos + t, span - 2);
      for (int j = 0; j < other; ++j) {
        bool in_hole = false;
        for (auto& hole : holes)
          if (j >= hole.first && j <= hole.second) in_hole = true;
        if (in_hole) continue;
        if (vertical)
          m.set(c, j, true);
        else
          m.set(j, c, true);
      }
    }
  }
  if (m.free_count() == 0) throw std::runtime_error("walls: no free space");
  return m;
}

GridMap gen_maze(int w, int h, std::uint64_t seed, const MapParams& p) {
  int corridor = p.corridor >= 2 ? p.corridor : 2;
  int pitch = corridor + 1;
  int lw = (w - 1) / pitch;
  int lh = (h - 1) / pitch;
  if (lw < 2 || lh < 2) throw std::runtime_error("maze: map too small for corridor width");
  Rng rng(derive_seed(seed, 0x3a2e));
  GridMap m = blank(MapType::Maze, w, h, seed, true);

  auto carve_block = [&](int i, int j) {
    fill_rect(m, 1 + pitch * i, 1 + pitch * j, 1 + pitch * i + corridor - 1,
              1 + pitch * j + corridor - 1, false);
  };
  auto carve_link = [&](int i, int j, int ni, int nj) {
    if (ni != i) {  // horizontal link
      int x = 1 + pitch * std::min(i, ni) + corridor;
      fill_rect(m, x, 1 + pitch * j, x + pitch - corridor - 1,
                1 + pitch * j + corridor - 1, false);
    } else {
      int y = 1 + pitch * std::min(j, nj) + corridor;
      fill_rect(m, 1 + pitch * i, y, 1 + pitch * i + corridor - 1,
                y + pitch - corridor - 1, false);
    }
  };

  std::vector<std::uint8_t> visited(static_cast<std::size_t>(lw) * lh, 0);
  std::vector<std::pair<int, int>> stack;
  stack.emplace_back(0, 0);
  visited[0] = 1;
  carve_block(0, 0);
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  while (!stack.empty()) {
    auto [ci, cj] = stack.back();
    int order[4] = {0, 1, 2, 3};
    for (int k = 3; k > 0; --k) std::swap(order[k], order[rng.uniform_int(0, k)]);
    bool advanced = false;
    for (int k = 0; k < 4 && !advanced; ++k) {
      int ni = ci + dx[order[k]], nj = cj + dy[order[k]];
      if (ni < 0 || nj < 0 || ni >= lw || nj >= lh) continue;
      if (visited[static_cast<std::size_t>(nj) * lw + ni]) continue;
      visited[static_cast<std::size_t>(nj) * lw + ni] = 1;
      carve_block(ni, nj);
      carve_link(ci, cj, ni, nj);
      stack.emplace_back(ni, nj);
      advanced = true;
    }
    if (!advanced) stack.pop_back();
  }
  return m;
}

}  // namespace

BugTrapInfo bugtrap_info(int w, int h, std::uint64_t seed, const MapParams& p) {
  Rng rng(derive_seed(seed, 0xb06));
  BugTrapInfo g{};
  int hx = std::clamp(w / 4, 2, w / 2 - 2);
  int hy = std::clamp(h / 4, 2, h / 2 - 2);
  g.x0 = w / 2 - hx;
  g.x1 = w / 2 + hx;
  g.y0 = h / 2 - hy;
  g.y1 = h / 2 + hy;
  g.thickness = (std::min(hx, hy) > 5) ? 2 : 1;
  g.side = rng.uniform_int(0, 3);
  int span_lo = (g.side <= 1) ? g.x0 + g.thickness : g.y0 + g.thickness;
  int span_hi = (g.side <= 1) ? g.x1 - g.thickness : g.y1 - g.thickness;
  int gap = p.gap_width >= 1 ? p.gap_width : 3;
  gap = std::clamp(gap, 1, span_hi - span_lo + 1);
  int slack = span_hi - span_lo + 1 - gap;
  int off = slack > 0 ? rng.uniform_int(0, slack) : 0;
  g.gap_lo = span_lo + off;
  g.gap_hi = g.gap_lo + gap - 1;
  g.lip_len = std::clamp(std::min(hx, hy) - g.thickness - 2, 0, 5);
  return g;
}

std::vector<std::pair<int, int>> BugTrapInfo::gap_cells() const {
  std::vector<std::pair<int, int>> cells;
  for (int i = gap_lo; i <= gap_hi; ++i) {
    for (int t = 0; t < thickness; ++t) {
      switch (side) {
        case 0: cells.emplace_back(i, y0 + t); break;
        case 1: cells.emplace_back(i, y1 - t); break;
        case 2: cells.emplace_back(x0 + t, i); break;
        default: cells.emplace_back(x1 - t, i); break;
      }
    }
  }
  return cells;
}

std::pair<int, int> BugTrapInfo::interior_cell() const {
  return {(x0 + x1) / 2, (y0 + y1) / 2};
}

namespace {

GridMap gen_bugtrap(int w, int h, std::uint64_t seed, const MapParams& p) {
  BugTrapInfo g = bugtrap_info(w, h, seed, p);
  GridMap m = blank(MapType::BugTrap, w, h, seed, false);
  int t = g.thickness;
  // ring
  fill_rect(m, g.x0, g.y0, g.x1, g.y0 + t - 1, true);
  fill_rect(m, g.x0, g.y1 - t + 1, g.x1, g.y1, true);
  fill_rect(m, g.x0, g.y0, g.x0 + t - 1, g.y1, true);
  fill_rect(m, g.x1 - t + 1, g.y0, g.x1, g.y1, true);
  // opening through the chosen side, plus inward lips forming a pocket
  int L = g.lip_len;
  switch (g.side) {
    case 0:
      fill_rect(m, g.gap_lo, g.y0, g.gap_hi, g.y0 + t - 1, false);
      if (L > 0) {
        fill_rect(m, g.gap_lo - 1, g.y0 + t, g.gap_lo - 1, g.y0 + t + L - 1, true);
        fill_rect(m, g.gap_hi + 1, g.y0 + t, g.gap_hi + 1, g.y0 + t + L - 1, true);
      }
      break;
    case 1:
      fill_rect(m, g.gap_lo, g.y1 - t + 1, g.gap_hi, g.y1, false);
      if (L > 0) {
        fill_rect(m, g.gap_lo - 1, g.y1 - t - L + 1, g.gap_lo - 1, g.y1 - t, true);
        fill_rect(m, g.gap_hi + 1, g.y1 - t - L + 1, g.gap_hi + 1, g.y1 - t, true);
      }
      break;
    case 2:
      fill_rect(m, g.x0, g.gap_lo, g.x0 + t - 1, g.gap_hi, false);
      if (L > 0) {
        fill_rect(m, g.x0 + t, g.gap_lo - 1, g.x0 + t + L - 1, g.gap_lo - 1, true);
        fill_rect(m, g.x0 + t, g.gap_hi + 1, g.x0 + t + L - 1, g.gap_hi + 1, true);
      }
      break;
    default:
      fill_rect(m, g.x1 - t + 1, g.gap_lo, g.x1, g.gap_hi, false);
      if (L > 0) {
        fill_rect(m, g.x1 - t - L + 1, g.gap_lo - 1, g.x1 - t, g.gap_lo - 1, true);
        fill_rect(m, g.x1 - t - L + 1, g.gap_hi + 1, g.x1 - t, g.gap_hi + 1, true);
      }
      break;
  }
  if (m.free_count() == 0) throw std::runtime_error("bugtrap: no free space");
  return m;
}

GridMap gen_narrow_gaps(int w, int h, std::uint64_t seed, const MapParams& p) {
  Rng rng(derive_seed(seed, 0x9a9));
  GridMap m = blank(MapType::NarrowGaps, w, h, seed, false);
  int walls = p.wall_count >= 1 ? p.wall_count : 3;
  for (int i = 0; i < walls; ++i) {
    int lo = 2 + (w - 5) * (i + 1) / (walls + 1) - 2;
    int x = std::clamp(lo + rng.uniform_int(0, 3), 2, w - 3);
    int gap = p.gap_width >= 1 ? p.gap_width : (rng.chance(0.5) ? 1 : 2);
    int gy = rng.uniform_int(1, std::max(1, h - gap - 2));
    for (int y = 0; y < h; ++y) {
      if (y >= gy && y < gy + gap) continue;
      m.set(x, y, true);
    }
  }
  if (m.free_count() == 0) throw std::runtime_error("narrow_gaps: no free space");
  return m;
}

}  // namespace

GridMap generate_map(MapType map_type, int width, int height,
                     std::uint64_t seed, const MapParams& params) {
  if (width < 8 || height < 8)
    throw std::invalid_argument("map dimensions must be at least 8x8");
  GridMap m;
  switch (map_type) {
    case MapType::RandomRects: m = gen_random_rects(width, height, seed, params); break;
    case MapType::Walls: m = gen_walls(width, height, seed, params); break;
    case MapType::Maze: m = gen_maze(width, height, seed, params); break;
    case MapType::BugTrap: m = gen_bugtrap(width, height, seed, params); break;
    case MapType::NarrowGaps: m = gen_narrow_gaps(width, height, seed, params); break;
    default: throw std::invalid_argument("unknown map type");
  }
  if (m.free_count() == 0) throw std::runtime_error("generated map has no free space");
  return m;
}

Image map_to_image(const GridMap& map) {
  Image img(map.width, map.height, 3, 255);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      if (map.occupied(x, y)) img.set_rgb(x, y, 0, 0, 0);
  return img;
}

std::vector<std::uint8_t> map_to_pgm(const GridMap& map) {
  Image img(map.width, map.height, 1, 0);
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      if (map.occupied(x, y)) img.at(x, y, 0) = 255;
  return encode_pgm(img);
}

GridMap map_from_pgm(const std::vector<std::uint8_t>& bytes) {
  Image img = decode_pgm(bytes);
  GridMap m;
  m.width = img.width;
  m.height = img.height;
  m.occ.assign(static_cast<std::size_t>(m.width) * m.height, 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.set(x, y, img.at(x, y, 0) >= 128);
  return m;
}

GridMap map_from_image(const Image& img) {
  GridMap m;
  m.width = img.width;
  m.height = img.height;
  m.occ.assign(static_cast<std::size_t>(m.width) * m.height, 0);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      int lum = 0;
      for (int c = 0; c < img.channels; ++c) lum += img.at(x, y, c);
      lum /= img.channels;
      m.set(x, y, lum < 128);
    }
  }
  return m;
}

GridMap load_map(const std::string& path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
    return map_from_pgm(bytes);
  return map_from_image(decode_pnm(bytes));
}

std::vector<std::pair<int, int>> free_cells(const GridMap& map) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x)
      if (!map.occupied(x, y)) out.emplace_back(x, y);
  return out;
}

bool free_cells_connected(const GridMap& map, int ax, int ay, int bx, int by,
                          int connectivity) {
  if (!map.in_bounds_cell(ax, ay) || !map.in_bounds_cell(bx, by)) return false;
  if (map.occupied(ax, ay) || map.occupied(bx, by)) return false;
  if (ax == bx && ay == by) return true;
  std::vector<std::uint8_t> seen(map.occ.size(), 0);
  std::deque<std::pair<int, int>> q;
  q.emplace_back(ax, ay);
  seen[static_cast<std::size_t>(ay) * map.width + ax] = 1;
  const int dx8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  int ndirs = (connectivity == 4) ? 4 : 8;
  while (!q.empty()) {
    auto [x, y] = q.front();
    q.pop_front();
    for (int k = 0; k < ndirs; ++k) {
      int nx = x + dx8[k], ny = y + dy8[k];
      if (!map.in_bounds_cell(nx, ny) || map.occupied(nx, ny)) continue;
      std::size_t idx = static_cast<std::size_t>(ny) * map.width + nx;
      if (seen[idx]) continue;
      seen[idx] = 1;
      if (nx == bx && ny == by) return true;
      q.emplace_back(nx, ny);
    }
  }
  return false;
}

}  // namespace rgm
