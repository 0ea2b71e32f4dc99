#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rgm/gridmap.hpp"
#include "rgm/rng.hpp"

namespace rgm {

struct PlannerConfig {
  double step_eta = 3.0;          // steer extension length, cells
  double goal_tolerance = 3.0;    // cells
  double goal_bias = 0.05;        // applied on uniform draws only
  int max_iters = 20000;
  double rewire_radius_gamma = 0; // 0 = derive from map free fraction
  double p_h = 0.4;               // probability of sampling from the heuristic
  double collision_step = 0.25;
  std::uint64_t seed = 1;
  bool check_invariants = false;  // validate the tree after every iteration
};

// Scale-proportional defaults: eta 3.0 for maps up to 96 cells, 8.0 above.
PlannerConfig default_config(const GridMap& map);

// Sampling support: member cells of the heuristic. Membership in free space
// is deliberately not an invariant; safety is measured downstream.
struct HeuristicMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> member;
  std::vector<int> member_cells;  // row-major indices of members
  int pixel_count = 0;

  static HeuristicMask from_bools(int w, int h, std::vector<std::uint8_t> member);
  bool is_member(int cx, int cy) const {
    return member[static_cast<std::size_t>(cy) * width + cx] != 0;
  }
};

// Nearest-neighbor upscale to (w, h).
HeuristicMask upscale_nearest(const HeuristicMask& mask, int w, int h);

struct TreeNode {
  WorldPoint pos;
  int parent = -1;  // -1 = root
  double cost = 0;  // cost-to-come in cells
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<std::vector<int>> children;
  int root = 0;
};

// Throws std::logic_error when acyclicity or cost consistency (1e-9) fails.
void check_tree_invariants(const Tree& tree);

struct PlanResult {
  std::optional<std::vector<WorldPoint>> path;
  double path_cost = 0;
  std::optional<int> iters_to_first;
  std::vector<std::pair<int, double>> cost_trace;  // (iteration, best cost)
  int iters_total = 0;
  std::uint64_t rng_seed = 0;
};

WorldPoint sample_uniform(Rng& rng, const GridMap& map);
// Uniform over member cells, then uniform inside the chosen cell.
WorldPoint sample_heuristic(Rng& rng, const HeuristicMask& mask);
// One u-draw decides the branch; with no usable mask the draw still happens,
// which keeps RRT* and HRRT*(p_h=0) on identical random streams.
WorldPoint biased_sample(Rng& rng, const GridMap& map, const HeuristicMask* mask,
                         double p_h);

double path_cost(const std::vector<WorldPoint>& path);

PlanResult plan_rrt(const GridMap& map, const PlanProblem& problem,
                    const PlannerConfig& cfg);

// RRT* with shrinking-radius rewire; mask == nullptr is conventional RRT*.
// Runs the full iteration budget (anytime behavior).
PlanResult plan_rrt_star(const GridMap& map, const PlanProblem& problem,
                         const PlannerConfig& cfg,
                         const HeuristicMask* mask = nullptr);

}  // namespace rgm
