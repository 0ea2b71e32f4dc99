#include "rgm/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rgm {

PlannerConfig default_config(const GridMap& map) {
  PlannerConfig cfg;
  cfg.step_eta = (std::max(map.width, map.height) <= 96) ? 3.0 : 8.0;
  cfg.goal_tolerance = cfg.step_eta;
  return cfg;
}

HeuristicMask HeuristicMask::from_bools(int w, int h,
                                        std::vector<std::uint8_t> member) {
  if (static_cast<std::size_t>(w) * h != member.size())
    throw std::invalid_argument("mask size mismatch");
  HeuristicMask m;
  m.width = w;
  m.height = h;
  m.member = std::move(member);
  for (int i = 0; i < w * h; ++i)
    if (m.member[i]) m.member_cells.push_back(i);
  m.pixel_count = static_cast<int>(m.member_cells.size());
  return m;
}

HeuristicMask upscale_nearest(const HeuristicMask& mask, int w, int h) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    int sy = static_cast<int>(static_cast<std::int64_t>(y) * mask.height / h);
    for (int x = 0; x < w; ++x) {
      int sx = static_cast<int>(static_cast<std::int64_t>(x) * mask.width / w);
      out[static_cast<std::size_t>(y) * w + x] =
          mask.member[static_cast<std::size_t>(sy) * mask.width + sx];
    }
  }
  return HeuristicMask::from_bools(w, h, std::move(out));
}

WorldPoint sample_uniform(Rng& rng, const GridMap& map) {
  double x = rng.uniform() * map.width;
  double y = rng.uniform() * map.height;
  return {x, y};
}

WorldPoint sample_heuristic(Rng& rng, const HeuristicMask& mask) {
  if (mask.pixel_count <= 0)
    throw std::invalid_argument("sample_heuristic: empty mask");
  int cell = mask.member_cells[rng.uniform_index(mask.member_cells.size())];
  int cy = cell / mask.width;
  int cx = cell % mask.width;
  return {cx + rng.uniform(), cy + rng.uniform()};
}

WorldPoint biased_sample(Rng& rng, const GridMap& map, const HeuristicMask* mask,
                         double p_h) {
  double u = rng.uniform();
  if (mask != nullptr && mask->pixel_count > 0 && u < p_h)
    return sample_heuristic(rng, *mask);
  return sample_uniform(rng, map);
}

double path_cost(const std::vector<WorldPoint>& path) {
  if (path.size() < 2)
    throw std::invalid_argument("path_cost: need at least 2 points");
  double c = 0;
  for (std::size_t i = 1; i < path.size(); ++i) c += euclid(path[i - 1], path[i]);
  return c;
}

void check_tree_invariants(const Tree& tree) {
  const auto& nodes = tree.nodes;
  if (nodes.empty()) throw std::logic_error("tree: empty");
  int roots = 0;
  for (const auto& n : nodes) roots += (n.parent < 0);
  if (roots != 1) throw std::logic_error("tree: must have exactly one root");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    int hops = 0;
    int cur = static_cast<int>(i);
    while (nodes[cur].parent >= 0) {
      cur = nodes[cur].parent;
      if (++hops > static_cast<int>(nodes.size()))
        throw std::logic_error("tree: parent cycle");
    }
    if (nodes[i].parent >= 0) {
      double expect = nodes[nodes[i].parent].cost +
                      euclid(nodes[nodes[i].parent].pos, nodes[i].pos);
      if (std::abs(nodes[i].cost - expect) > 1e-9)
        throw std::logic_error("tree: cost-to-come inconsistent");
    } else if (nodes[i].cost != 0) {
      throw std::logic_error("tree: root cost must be zero");
    }
  }
}

namespace {

// Shared sampling routine: the heuristic gate u is always drawn so that the
// random stream is identical whether or not a mask is supplied.
WorldPoint draw_sample(Rng& rng, const GridMap& map, const HeuristicMask* mask,
                       double p_h, double goal_bias, const WorldPoint& goal) {
  double u = rng.uniform();
  if (mask != nullptr && mask->pixel_count > 0 && u < p_h)
    return sample_heuristic(rng, *mask);
  if (rng.uniform() < goal_bias) return goal;
  return sample_uniform(rng, map);
}

int nearest_node(const std::vector<TreeNode>& nodes, const WorldPoint& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double dx = nodes[i].pos.x - p.x, dy = nodes[i].pos.y - p.y;
    double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

WorldPoint steer(const WorldPoint& from, const WorldPoint& to, double eta) {
  double d = euclid(from, to);
  if (d <= eta) return to;
  double t = eta / d;
  return {from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t};
}

std::vector<WorldPoint> extract_path(const Tree& tree, int node,
                                     const WorldPoint& goal) {
  std::vector<WorldPoint> rev;
  for (int cur = node; cur >= 0; cur = tree.nodes[cur].parent)
    rev.push_back(tree.nodes[cur].pos);
  std::vector<WorldPoint> path(rev.rbegin(), rev.rend());
  path.push_back(goal);
  return path;
}

// Recompute descendant costs after a reparent.
void propagate_cost(Tree& tree, int start) {
  std::vector<int> stack{start};
  while (!stack.empty()) {
    int cur = stack.back();
    stack.pop_back();
    for (int child : tree.children[cur]) {
      tree.nodes[child].cost =
          tree.nodes[cur].cost + euclid(tree.nodes[cur].pos, tree.nodes[child].pos);
      stack.push_back(child);
    }
  }
}

struct GoalCandidate {
  int node;
  double goal_edge;
};

}  // namespace

PlanResult plan_rrt(const GridMap& map, const PlanProblem& problem,
                    const PlannerConfig& cfg) {
  if (cfg.max_iters <= 0 || cfg.step_eta <= 0)
    throw std::invalid_argument("planner config: max_iters and step_eta must be positive");
  Rng rng(cfg.seed);
  Tree tree;
  tree.nodes.push_back({problem.start, -1, 0.0});
  tree.children.emplace_back();

  PlanResult result;
  result.rng_seed = cfg.seed;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    result.iters_total = iter;
    WorldPoint x_rand =
        draw_sample(rng, map, nullptr, 0.0, cfg.goal_bias, problem.goal);
    int near = nearest_node(tree.nodes, x_rand);
    if (tree.nodes[near].pos.x == x_rand.x && tree.nodes[near].pos.y == x_rand.y)
      continue;
    WorldPoint x_new = steer(tree.nodes[near].pos, x_rand, cfg.step_eta);
    if (!segment_free(map, tree.nodes[near].pos, x_new, cfg.collision_step))
      continue;
    int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(
        {x_new, near, tree.nodes[near].cost + euclid(tree.nodes[near].pos, x_new)});
    tree.children.emplace_back();
    tree.children[near].push_back(idx);
    if (cfg.check_invariants) check_tree_invariants(tree);

    if (euclid(x_new, problem.goal) <= cfg.goal_tolerance &&
        segment_free(map, x_new, problem.goal, cfg.collision_step)) {
      result.path = extract_path(tree, idx, problem.goal);
      result.path_cost = tree.nodes[idx].cost + euclid(x_new, problem.goal);
      result.iters_to_first = iter;
      result.cost_trace.emplace_back(iter, result.path_cost);
      return result;
    }
  }
  result.path_cost = std::numeric_limits<double>::infinity();
  return result;
}

PlanResult plan_rrt_star(const GridMap& map, const PlanProblem& problem,
                         const PlannerConfig& cfg, const HeuristicMask* mask) {
  if (cfg.max_iters <= 0 || cfg.step_eta <= 0)
    throw std::invalid_argument("planner config: max_iters and step_eta must be positive");
  Rng rng(cfg.seed);
  Tree tree;
  tree.nodes.push_back({problem.start, -1, 0.0});
  tree.children.emplace_back();

  double free_frac =
      static_cast<double>(map.free_count()) / (static_cast<double>(map.width) * map.height);
  double gamma = cfg.rewire_radius_gamma > 0
                     ? cfg.rewire_radius_gamma
                     : std::max(cfg.step_eta, 2.0 * cfg.step_eta * std::sqrt(free_frac));

  PlanResult result;
  result.rng_seed = cfg.seed;
  std::vector<GoalCandidate> candidates;
  double best_cost = std::numeric_limits<double>::infinity();

  std::vector<int> neighbors;
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    result.iters_total = iter;
    WorldPoint x_rand =
        draw_sample(rng, map, mask, cfg.p_h, cfg.goal_bias, problem.goal);
    int near = nearest_node(tree.nodes, x_rand);
    if (tree.nodes[near].pos.x == x_rand.x && tree.nodes[near].pos.y == x_rand.y)
      continue;
    WorldPoint x_new = steer(tree.nodes[near].pos, x_rand, cfg.step_eta);
    if (!segment_free(map, tree.nodes[near].pos, x_new, cfg.collision_step))
      continue;

    std::size_t n = tree.nodes.size();
    double radius = std::min(
        cfg.step_eta, gamma * std::sqrt(std::log(static_cast<double>(n)) /
                                        static_cast<double>(n)));
    neighbors.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (euclid(tree.nodes[j].pos, x_new) <= radius)
        neighbors.push_back(static_cast<int>(j));

    // choose parent: nearest is pre-validated, neighbors need a free segment
    int parent = near;
    double parent_cost =
        tree.nodes[near].cost + euclid(tree.nodes[near].pos, x_new);
    for (int j : neighbors) {
      if (j == near) continue;
      double c = tree.nodes[j].cost + euclid(tree.nodes[j].pos, x_new);
      if (c < parent_cost &&
          segment_free(map, tree.nodes[j].pos, x_new, cfg.collision_step)) {
        parent = j;
        parent_cost = c;
      }
    }
    int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({x_new, parent, parent_cost});
    tree.children.emplace_back();
    tree.children[parent].push_back(idx);

    // rewire neighbors through the new node
    for (int j : neighbors) {
      if (j == parent || j == tree.root) continue;
      double through = parent_cost + euclid(x_new, tree.nodes[j].pos);
      if (through + 1e-12 < tree.nodes[j].cost &&
          segment_free(map, x_new, tree.nodes[j].pos, cfg.collision_step)) {
        int old_parent = tree.nodes[j].parent;
        auto& siblings = tree.children[old_parent];
        siblings.erase(std::find(siblings.begin(), siblings.end(), j));
        tree.nodes[j].parent = idx;
        tree.nodes[j].cost = through;
        tree.children[idx].push_back(j);
        propagate_cost(tree, j);
      }
    }
    if (cfg.check_invariants) check_tree_invariants(tree);

    if (euclid(x_new, problem.goal) <= cfg.goal_tolerance &&
        segment_free(map, x_new, problem.goal, cfg.collision_step))
      candidates.push_back({idx, euclid(x_new, problem.goal)});

    double round_best = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates)
      round_best = std::min(round_best, tree.nodes[c.node].cost + c.goal_edge);
    if (round_best + 1e-12 < best_cost) {
      best_cost = round_best;
      if (!result.iters_to_first) result.iters_to_first = iter;
      result.cost_trace.emplace_back(iter, best_cost);
    }
  }

  if (!candidates.empty()) {
    int best_node = -1;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
      double total = tree.nodes[c.node].cost + c.goal_edge;
      if (total < best) {
        best = total;
        best_node = c.node;
      }
    }
    result.path = extract_path(tree, best_node, problem.goal);
    result.path_cost = best;
  } else {
    result.path_cost = std::numeric_limits<double>::infinity();
  }
  return result;
}

}  // namespace rgm
