#include "rgm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rgm/threads.hpp"

namespace rgm {

namespace fs = std::filesystem;
using nlohmann::json;

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& r : manifest.records) {
    json j{{"map_path", r.map_path},
           {"state_path", r.state_path},
           {"gt_path", r.gt_path},
           {"map_native_path", r.map_native_path},
           {"state_native_path", r.state_native_path},
           {"gt_native_path", r.gt_native_path},
           {"map_pgm_path", r.map_pgm_path},
           {"map_type", r.map_type},
           {"seed", r.seed},
           {"q_start", {r.q_start.x, r.q_start.y}},
           {"q_goal", {r.q_goal.x, r.q_goal.y}}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    DatasetRecord r;
    r.map_path = j.at("map_path").get<std::string>();
    r.state_path = j.at("state_path").get<std::string>();
    r.gt_path = j.at("gt_path").get<std::string>();
    r.map_native_path = j.value("map_native_path", "");
    r.state_native_path = j.value("state_native_path", "");
    r.gt_native_path = j.value("gt_native_path", "");
    r.map_pgm_path = j.value("map_pgm_path", "");
    r.map_type = j.value("map_type", "");
    r.seed = j.value("seed", 0ULL);
    auto qs = j.at("q_start");
    auto qg = j.at("q_goal");
    r.q_start = {qs.at(0).get<double>(), qs.at(1).get<double>()};
    r.q_goal = {qg.at(0).get<double>(), qg.at(1).get<double>()};
    m.records.push_back(std::move(r));
  }
  return m;
}

bool disk_covers_pixel(double cx, double cy, int px, int py, double radius) {
  double dx = px + 0.5 - cx;
  double dy = py + 0.5 - cy;
  return dx * dx + dy * dy <= radius * radius;
}

namespace {

void paint_disk(Image& img, double cx, double cy, double radius,
                std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius + 1)));
  int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (disk_covers_pixel(cx, cy, x, y, radius)) img.set_rgb(x, y, r, g, b);
}

void rasterize_polyline(Image& img, const GridMap& map,
                        const std::vector<WorldPoint>& path) {
  const double step = 0.1;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const WorldPoint& a = path[i - 1];
    const WorldPoint& b = path[i];
    int n = std::max(1, static_cast<int>(std::ceil(euclid(a, b) / step)));
    for (int k = 0; k <= n; ++k) {
      double t = static_cast<double>(k) / n;
      double x = a.x + (b.x - a.x) * t;
      double y = a.y + (b.y - a.y) * t;
      int cx = static_cast<int>(std::floor(x));
      int cy = static_cast<int>(std::floor(y));
      if (!map.in_bounds_cell(cx, cy) || map.occupied(cx, cy)) continue;
      img.set_rgb(cx, cy, 255, 255, 255);
    }
  }
}

}  // namespace

Image render_state_image(const GridMap& map, const PlanProblem& problem) {
  Image img(map.width, map.height, 3, 255);
  paint_disk(img, problem.start.x, problem.start.y, 2.0, 255, 0, 0);
  paint_disk(img, problem.goal.x, problem.goal.y, 2.0, 0, 0, 255);
  return img;
}

Image build_ground_truth(const GridMap& map, const PlanProblem& problem,
                         int n_runs, std::uint64_t seed,
                         const PlannerConfig* cfg_in) {
  if (n_runs < 1) throw std::invalid_argument("build_ground_truth: n_runs >= 1");
  PlannerConfig cfg = cfg_in ? *cfg_in : default_config(map);
  Image gt(map.width, map.height, 3, 0);
  int successes = 0;
  int budget = 5 * n_runs;
  for (int attempt = 0; attempt < budget && successes < n_runs; ++attempt) {
    PlannerConfig run_cfg = cfg;
    run_cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(attempt));
    PlanResult res = plan_rrt(map, problem, run_cfg);
    if (!res.path) continue;
    rasterize_polyline(gt, map, *res.path);
    ++successes;
  }
  if (successes < n_runs)
    throw std::runtime_error("build_ground_truth: run budget exhausted");
  return gt;
}

Image resize_to_train(const Image& img, int target) {
  if (img.width != img.height)
    throw std::invalid_argument("resize_to_train: source must be square");
  return resize_bilinear(img, target, target);
}

namespace {

WorldPoint sample_free_point(Rng& rng, const GridMap& map) {
  for (int i = 0; i < 100000; ++i) {
    WorldPoint p{rng.uniform() * map.width, rng.uniform() * map.height};
    if (is_free(map, p)) return p;
  }
  throw std::runtime_error("sample_free_point: no free space found");
}

bool pair_feasible(const GridMap& map, const WorldPoint& a, const WorldPoint& b) {
  return free_cells_connected(map, static_cast<int>(a.x), static_cast<int>(a.y),
                              static_cast<int>(b.x), static_cast<int>(b.y), 8);
}

}  // namespace

PlanProblem sample_problem(Rng& rng, const GridMap& map, bool stratified) {
  const double diag = std::hypot(map.width, map.height);
  const int candidates = stratified ? 4 : 1;
  double best_score = -1;
  WorldPoint best_a{}, best_b{};
  int found = 0;
  for (int tries = 0; tries < 256 && found < candidates; ++tries) {
    WorldPoint a = sample_free_point(rng, map);
    WorldPoint b = sample_free_point(rng, map);
    if (a.x == b.x && a.y == b.y) continue;
    if (euclid(a, b) < 0.15 * diag) continue;
    if (!pair_feasible(map, a, b)) continue;
    double score = euclid(a, b);
    if (!segment_free(map, a, b)) score += 0.5 * diag;  // crosses an obstacle
    ++found;
    if (score > best_score) {
      best_score = score;
      best_a = a;
      best_b = b;
    }
  }
  if (found == 0) throw std::runtime_error("sample_problem: no feasible pair");
  return make_problem(map, best_a, best_b);
}

DatasetManifest build_dataset(const DatasetSpec& spec) {
  if (spec.maps < 1 || spec.pairs_per_map < 1)
    throw std::invalid_argument("build_dataset: need at least one map and pair");
  fs::create_directories(fs::path(spec.out_dir) / "maps");
  fs::create_directories(fs::path(spec.out_dir) / "states");
  fs::create_directories(fs::path(spec.out_dir) / "gt");

  const int total = spec.maps * spec.pairs_per_map;
  DatasetManifest manifest;
  manifest.records.resize(static_cast<std::size_t>(total));

  // Maps are generated up front (cheap); problems and ground truth fan out.
  std::vector<GridMap> maps(static_cast<std::size_t>(spec.maps));
  for (int i = 0; i < spec.maps; ++i) {
    std::uint64_t map_seed = derive_seed(spec.master_seed, static_cast<std::uint64_t>(i));
    maps[static_cast<std::size_t>(i)] = generate_map(
        spec.family, spec.native_size, spec.native_size, map_seed, spec.map_params);
    char name[64];
    std::snprintf(name, sizeof name, "m%04d", i);
    fs::path maps_dir = fs::path(spec.out_dir) / "maps";
    Image native = map_to_image(maps[static_cast<std::size_t>(i)]);
    save_ppm((maps_dir / (std::string(name) + "_native.ppm")).string(), native);
    save_ppm((maps_dir / (std::string(name) + ".ppm")).string(),
             resize_to_train(native, spec.train_size));
    write_file((maps_dir / (std::string(name) + ".pgm")).string(),
               map_to_pgm(maps[static_cast<std::size_t>(i)]));
  }

  parallel_for(static_cast<std::size_t>(total), [&](std::size_t idx) {
    int mi = static_cast<int>(idx) / spec.pairs_per_map;
    int pi = static_cast<int>(idx) % spec.pairs_per_map;
    const GridMap& map = maps[static_cast<std::size_t>(mi)];
    std::uint64_t map_seed = derive_seed(spec.master_seed, static_cast<std::uint64_t>(mi));
    std::uint64_t pair_seed = derive_seed(map_seed, 1000 + static_cast<std::uint64_t>(pi));

    // Redraw infeasible pairs; ground-truth generation may also fail on
    // pathological endpoints, in which case a fresh pair is drawn.
    PlanProblem problem{};
    Image gt;
    bool ok = false;
    for (int redraw = 0; redraw < 16 && !ok; ++redraw) {
      Rng rng(derive_seed(pair_seed, static_cast<std::uint64_t>(redraw)));
      try {
        problem = sample_problem(rng, map);
        gt = build_ground_truth(map, problem, spec.n_runs,
                                derive_seed(pair_seed, 777 + static_cast<std::uint64_t>(redraw)));
        ok = true;
      } catch (const std::runtime_error&) {
      }
    }
    if (!ok) throw std::runtime_error("build_dataset: could not realize a pair");

    Image state = render_state_image(map, problem);
    char mname[64], pname[64];
    std::snprintf(mname, sizeof mname, "m%04d", mi);
    std::snprintf(pname, sizeof pname, "p%04d_%02d", mi, pi);
    fs::path root(spec.out_dir);

    DatasetRecord rec;
    rec.map_path = (root / "maps" / (std::string(mname) + ".ppm")).string();
    rec.map_native_path = (root / "maps" / (std::string(mname) + "_native.ppm")).string();
    rec.map_pgm_path = (root / "maps" / (std::string(mname) + ".pgm")).string();
    rec.state_path = (root / "states" / (std::string(pname) + ".ppm")).string();
    rec.state_native_path = (root / "states" / (std::string(pname) + "_native.ppm")).string();
    rec.gt_path = (root / "gt" / (std::string(pname) + ".ppm")).string();
    rec.gt_native_path = (root / "gt" / (std::string(pname) + "_native.ppm")).string();
    rec.map_type = map_type_name(map.map_type);
    rec.seed = pair_seed;
    rec.q_start = problem.start;
    rec.q_goal = problem.goal;

    save_ppm(rec.state_native_path, state);
    save_ppm(rec.state_path, resize_to_train(state, spec.train_size));
    save_ppm(rec.gt_native_path, gt);
    save_ppm(rec.gt_path, resize_to_train(gt, spec.train_size));
    manifest.records[idx] = std::move(rec);
  });

  save_manifest((fs::path(spec.out_dir) / "manifest.jsonl").string(), manifest);
  return manifest;
}

}  // namespace rgm
