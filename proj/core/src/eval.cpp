#include "rgm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <stdexcept>

#include "rgm/stats.hpp"
#include "rgm/threads.hpp"
#include "rgm/trainer.hpp"

namespace rgm {

HeuristicMask extract_mask(const ad::Tensor& h, float threshold) {
  if (h.ndim() != 3) throw std::invalid_argument("extract_mask: need (C,H,W)");
  int H = h.dim(1), W = h.dim(2);
  std::vector<std::uint8_t> member(static_cast<std::size_t>(W) * H, 0);
  for (int i = 0; i < H * W; ++i)
    member[static_cast<std::size_t>(i)] = h.data[static_cast<std::size_t>(i)] > threshold;
  return HeuristicMask::from_bools(W, H, std::move(member));
}

HeuristicMask extract_mask(const Image& img, int threshold) {
  std::vector<std::uint8_t> member(static_cast<std::size_t>(img.width) * img.height, 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      member[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, 0) >= threshold;
  return HeuristicMask::from_bools(img.width, img.height, std::move(member));
}

namespace {

// 16 moves: king moves plus knight-style extensions.
constexpr int kMoves[16][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                               {1, 1},  {1, -1}, {-1, 1}, {-1, -1},
                               {1, 2},  {1, -2}, {-1, 2}, {-1, -2},
                               {2, 1},  {2, -1}, {-2, 1}, {-2, -1}};

double move_len(int dx, int dy) {
  return std::sqrt(static_cast<double>(dx * dx + dy * dy));
}

// All cells crossed by the segment between cell centers must be free.
bool move_clear(const GridMap& map, int x, int y, int dx, int dy) {
  int nx = x + dx, ny = y + dy;
  if (!map.in_bounds_cell(nx, ny)) return false;
  if (map.occupied(nx, ny)) return false;
  if (std::abs(dx) <= 1 && std::abs(dy) <= 1) {
    // diagonal steps may not cut a blocked corner
    if (dx != 0 && dy != 0 &&
        (map.occupied(x + dx, y) || map.occupied(x, y + dy)))
      return false;
    return true;
  }
  double ax = x + 0.5, ay = y + 0.5;
  double len = move_len(dx, dy);
  int steps = static_cast<int>(std::ceil(len / 0.05));
  for (int i = 1; i < steps; ++i) {
    double t = static_cast<double>(i) / steps;
    int cx = static_cast<int>(std::floor(ax + dx * t));
    int cy = static_cast<int>(std::floor(ay + dy * t));
    if (!map.in_bounds_cell(cx, cy) || map.occupied(cx, cy)) return false;
  }
  return true;
}

}  // namespace

std::optional<GridPathResult> grid_optimal_path(const GridMap& map,
                                                const PlanProblem& problem) {
  const int W = map.width, H = map.height;
  int sx = static_cast<int>(problem.start.x), sy = static_cast<int>(problem.start.y);
  int gx = static_cast<int>(problem.goal.x), gy = static_cast<int>(problem.goal.y);
  if (map.occupied(sx, sy) || map.occupied(gx, gy)) return std::nullopt;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(static_cast<std::size_t>(W) * H, inf);
  std::vector<int> came(static_cast<std::size_t>(W) * H, -1);
  auto id = [W](int x, int y) { return static_cast<std::size_t>(y) * W + x; };
  auto heuristic = [&](int x, int y) {
    double dx = x - gx, dy = y - gy;
    return std::sqrt(dx * dx + dy * dy);
  };

  using QItem = std::pair<double, int>;  // (f, cell)
  std::priority_queue<QItem, std::vector<QItem>, std::greater<QItem>> open;
  g[id(sx, sy)] = 0;
  open.emplace(heuristic(sx, sy), static_cast<int>(id(sx, sy)));
  while (!open.empty()) {
    auto [f, cell] = open.top();
    open.pop();
    int x = cell % W, y = cell / W;
    double gc = g[static_cast<std::size_t>(cell)];
    if (f > gc + heuristic(x, y) + 1e-12) continue;  // stale entry
    if (x == gx && y == gy) break;
    for (const auto& mv : kMoves) {
      if (!move_clear(map, x, y, mv[0], mv[1])) continue;
      int nx = x + mv[0], ny = y + mv[1];
      double ng = gc + move_len(mv[0], mv[1]);
      if (ng + 1e-12 < g[id(nx, ny)]) {
        g[id(nx, ny)] = ng;
        came[id(nx, ny)] = cell;
        open.emplace(ng + heuristic(nx, ny), static_cast<int>(id(nx, ny)));
      }
    }
  }
  if (g[id(gx, gy)] == inf) return std::nullopt;

  GridPathResult res;
  res.cost = g[id(gx, gy)];
  for (int cur = static_cast<int>(id(gx, gy)); cur >= 0;
       cur = came[static_cast<std::size_t>(cur)])
    res.cells.emplace_back(cur % W, cur / W);
  std::reverse(res.cells.begin(), res.cells.end());
  return res;
}

std::optional<double> grid_optimal_cost(const GridMap& map,
                                        const PlanProblem& problem) {
  auto res = grid_optimal_path(map, problem);
  if (!res) return std::nullopt;
  return res->cost;
}

HeuristicMask oracle_corridor(const GridMap& map, const PlanProblem& problem,
                              double radius) {
  auto res = grid_optimal_path(map, problem);
  if (!res) throw std::runtime_error("oracle_corridor: problem infeasible");
  std::vector<std::uint8_t> member(map.occ.size(), 0);
  double r2 = radius * radius;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (map.occupied(x, y)) continue;
      for (const auto& [px, py] : res->cells) {
        double dx = x - px, dy = y - py;
        if (dx * dx + dy * dy <= r2) {
          member[static_cast<std::size_t>(y) * map.width + x] = 1;
          break;
        }
      }
    }
  }
  return HeuristicMask::from_bools(map.width, map.height, std::move(member));
}

namespace {

QualityEstimate summarize_trials(QualityMetric metric, std::vector<double> iters,
                                 int successes, double c_th) {
  QualityEstimate est;
  est.metric = metric;
  est.n_trials = static_cast<int>(iters.size());
  est.success_rate = static_cast<double>(successes) / est.n_trials;
  est.c_th_used = c_th;
  Quartiles q = quartiles(std::move(iters));
  est.median_iters = q.med;
  est.iqr_lo = q.q1;
  est.iqr_hi = q.q3;
  return est;
}

}  // namespace

QualityEstimate quality_f0(const GridMap& map, const PlanProblem& problem,
                           const HeuristicMask* mask, const PlannerConfig& cfg,
                           int trials) {
  if (trials < 1) throw std::invalid_argument("quality_f0: trials >= 1");
  std::vector<double> iters(static_cast<std::size_t>(trials), 0);
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(trials), 0);
  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t k) {
    PlannerConfig tc = cfg;
    tc.seed = derive_seed(cfg.seed, k);
    PlanResult res = plan_rrt_star(map, problem, tc, mask);
    iters[k] = res.iters_to_first ? *res.iters_to_first : cfg.max_iters;
    ok[k] = res.iters_to_first.has_value();
  });
  int successes = 0;
  for (auto v : ok) successes += v;
  return summarize_trials(QualityMetric::F0, std::move(iters), successes, 0);
}

QualityEstimate quality_fstar(const GridMap& map, const PlanProblem& problem,
                              const HeuristicMask* mask, const PlannerConfig& cfg,
                              int trials, double c_ref, double c_th) {
  if (trials < 1) throw std::invalid_argument("quality_fstar: trials >= 1");
  if (c_ref <= 0) throw std::invalid_argument("quality_fstar: c_ref must be positive");
  std::vector<double> iters(static_cast<std::size_t>(trials), 0);
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(trials), 0);
  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t k) {
    PlannerConfig tc = cfg;
    tc.seed = derive_seed(cfg.seed, k);
    PlanResult res = plan_rrt_star(map, problem, tc, mask);
    double found = cfg.max_iters;
    for (const auto& [it, c] : res.cost_trace) {
      double d = c - c_ref;
      if (d * d < c_th) {
        found = it;
        ok[k] = 1;
        break;
      }
    }
    iters[k] = found;
  });
  int successes = 0;
  for (auto v : ok) successes += v;
  return summarize_trials(QualityMetric::FStar, std::move(iters), successes, c_th);
}

EfficiencyVerdict is_efficient(const HeuristicMask& mask, const GridMap& map,
                               const PlanProblem& problem,
                               const PlannerConfig& cfg, double d_h, int trials,
                               std::uint64_t ref_seed) {
  Image gt = build_ground_truth(map, problem, 50, derive_seed(ref_seed, 1));
  HeuristicMask ref = extract_mask(gt, 128);

  auto c_ref_opt = grid_optimal_cost(map, problem);
  if (!c_ref_opt) throw std::runtime_error("is_efficient: problem infeasible");
  double c_ref = *c_ref_opt;
  double c_th = default_c_th(c_ref);

  EfficiencyVerdict v;
  v.f_star_pstar = quality_fstar(map, problem, &ref, cfg, trials, c_ref, c_th);
  const HeuristicMask* h = mask.pixel_count > 0 ? &mask : nullptr;
  v.f_star_h = quality_fstar(map, problem, h, cfg, trials, c_ref, c_th);
  v.d_h = d_h > 0 ? d_h : 0.25 * v.f_star_pstar.median_iters;
  v.efficient = (v.f_star_h.median_iters - v.f_star_pstar.median_iters) < v.d_h;
  return v;
}

SafetyConnectivity safety_and_connectivity(const HeuristicMask& mask,
                                           const GridMap& map,
                                           const PlanProblem& problem) {
  if (mask.width != map.width || mask.height != map.height)
    throw std::invalid_argument("safety_and_connectivity: mask/map size mismatch");
  SafetyConnectivity out;
  if (mask.pixel_count == 0) {
    out.safety = 1.0;
  } else {
    int free_members = 0;
    for (int cell : mask.member_cells) {
      int cy = cell / mask.width, cx = cell % mask.width;
      free_members += !map.occupied(cx, cy);
    }
    out.safety = static_cast<double>(free_members) / mask.pixel_count;
  }

  // support = mask plus endpoint disks of radius 2
  std::vector<std::uint8_t> support = mask.member;
  auto stamp = [&](const WorldPoint& p) {
    for (int y = std::max(0, static_cast<int>(p.y) - 3);
         y <= std::min(map.height - 1, static_cast<int>(p.y) + 3); ++y)
      for (int x = std::max(0, static_cast<int>(p.x) - 3);
           x <= std::min(map.width - 1, static_cast<int>(p.x) + 3); ++x)
        if (disk_covers_pixel(p.x, p.y, x, y, 2.0))
          support[static_cast<std::size_t>(y) * map.width + x] = 1;
  };
  stamp(problem.start);
  stamp(problem.goal);

  int sx = static_cast<int>(problem.start.x), sy = static_cast<int>(problem.start.y);
  int gx = static_cast<int>(problem.goal.x), gy = static_cast<int>(problem.goal.y);
  std::vector<std::uint8_t> seen(support.size(), 0);
  std::deque<int> q;
  int start_id = sy * map.width + sx;
  if (support[static_cast<std::size_t>(start_id)]) {
    q.push_back(start_id);
    seen[static_cast<std::size_t>(start_id)] = 1;
  }
  const int dx8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!q.empty()) {
    int cur = q.front();
    q.pop_front();
    int x = cur % map.width, y = cur / map.width;
    for (int k = 0; k < 8; ++k) {
      int nx = x + dx8[k], ny = y + dy8[k];
      if (nx < 0 || ny < 0 || nx >= map.width || ny >= map.height) continue;
      int nid = ny * map.width + nx;
      if (!support[static_cast<std::size_t>(nid)] || seen[static_cast<std::size_t>(nid)])
        continue;
      seen[static_cast<std::size_t>(nid)] = 1;
      q.push_back(nid);
    }
  }
  out.connected = seen[static_cast<std::size_t>(gy * map.width + gx)] != 0;
  return out;
}

namespace {

ad::Tensor batch_of_one(const ad::Tensor& t) {
  ad::Tensor out = t;
  out.shape.insert(out.shape.begin(), 1);
  return out;
}

ad::Tensor squeeze_batch(const ad::Tensor& t) {
  ad::Tensor out = t;
  out.shape.erase(out.shape.begin());
  return out;
}

ad::Tensor prep_image(const Image& img, int size) {
  Image use = img;
  if (use.channels == 1) {
    Image rgb(use.width, use.height, 3);
    for (int y = 0; y < use.height; ++y)
      for (int x = 0; x < use.width; ++x)
        rgb.set_rgb(x, y, use.at(x, y, 0), use.at(x, y, 0), use.at(x, y, 0));
    use = std::move(rgb);
  }
  if (use.width != size || use.height != size)
    use = resize_bilinear(use, size, size);
  return image_to_tensor(use);
}

}  // namespace

HeuristicMask infer_mask(RGMParams& params, const Image& map_img,
                         const Image& state_img, int out_w, int out_h,
                         std::uint64_t seed, float threshold) {
  const int s = params.config.image_size;
  ad::Tensor m = batch_of_one(prep_image(map_img, s));
  ad::Tensor q = batch_of_one(prep_image(state_img, s));
  ad::Tensor z = ad::Tensor::zeros({1, params.config.z_channels, s, s});
  Rng rng(derive_seed(seed, 0x1f2));
  for (auto& v : z.data) v = static_cast<float>(rng.normal());

  ad::Tape tape;
  auto hs = generator_forward(tape, params, tape.leaf(m), tape.leaf(q),
                              tape.leaf(z), params.config.T, kEvalMode);
  HeuristicMask mask = extract_mask(squeeze_batch(tape.value(hs.back())), threshold);
  if (mask.width != out_w || mask.height != out_h)
    mask = upscale_nearest(mask, out_w, out_h);
  return mask;
}

AccuracyReport test_accuracy(RGMParams& params, const DatasetManifest& manifest,
                             const AccuracyThresholds& th, std::uint64_t seed) {
  const std::size_t n = manifest.records.size();
  if (n == 0) throw std::invalid_argument("test_accuracy: empty manifest");
  AccuracyReport report;
  report.correct.assign(n, 0);
  report.safety.assign(n, 0);
  report.connected.assign(n, 0);

  parallel_for(n, [&](std::size_t i) {
    const DatasetRecord& r = manifest.records[i];
    GridMap map = !r.map_pgm_path.empty()
                      ? load_map(r.map_pgm_path)
                      : map_from_image(load_image(
                            r.map_native_path.empty() ? r.map_path : r.map_native_path));
    Image m_img = load_image(r.map_path);
    Image q_img = load_image(r.state_path);
    HeuristicMask mask =
        infer_mask(params, m_img, q_img, map.width, map.height,
                   derive_seed(seed, i), th.mask_threshold);
    SafetyConnectivity sc =
        safety_and_connectivity(mask, map, PlanProblem{r.q_start, r.q_goal});
    report.safety[i] = sc.safety;
    report.connected[i] = sc.connected;
    report.correct[i] = (sc.safety >= th.min_safety && sc.connected) ? 1 : 0;
  });

  int good = 0;
  for (auto c : report.correct) good += c;
  report.accuracy = static_cast<double>(good) / static_cast<double>(n);
  return report;
}

}  // namespace rgm
