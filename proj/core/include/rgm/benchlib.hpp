#pragma once

#include <string>
#include <vector>

#include "rgm/eval.hpp"
#include "rgm/stats.hpp"

namespace rgm {

enum class PlannerKind { RRTStar, HRRTStar };

const char* planner_kind_name(PlannerKind k);

struct BenchRecord {
  std::string map_id;
  int trial = 0;
  PlannerKind planner = PlannerKind::RRTStar;
  double p_h = 0;
  double initial_cost = 0;  // NaN when no path was found
  int initial_iters = 0;    // max_iters when no path was found
  double optimal_cost = 0;  // best cost at max_iters, NaN when none
  int optimal_iters = 0;    // first iteration inside the c_th band
  std::uint64_t seed = 0;
};

struct GroupStats {
  Quartiles initial_cost;
  Quartiles initial_iters;
  Quartiles optimal_cost;
  Quartiles optimal_iters;
  int n = 0;
};

struct MapComparison {
  std::string map_id;
  GroupStats rrtstar;
  GroupStats hrrtstar;
  double p_initial_iters = 1;  // one-sided: HRRT* < RRT*
  double p_optimal_iters = 1;
};

struct ComparisonSummary {
  std::vector<MapComparison> maps;
};

struct BenchMapCase {
  std::string map_id;
  GridMap map;
  PlanProblem problem;
  HeuristicMask mask;  // HRRT* sampling support
  double c_ref = 0;    // grid-optimal cost for the c_th band
};

struct BenchConfig {
  PlannerConfig planner;
  int trials = 120;
  double p_h = 0.4;
};

struct BenchOutput {
  std::vector<BenchRecord> records;
  ComparisonSummary summary;
};

// Paired comparison: per map and trial both arms run with the same derived
// seed. Trials fan out across workers; records come back ordered by
// (map, planner, trial).
BenchOutput bench_compare(const std::vector<BenchMapCase>& cases,
                          const BenchConfig& cfg);

ComparisonSummary summarize(const std::vector<BenchRecord>& records);

void write_records_csv(const std::string& path,
                       const std::vector<BenchRecord>& records);
void write_summary_csv(const std::string& path, const ComparisonSummary& summary);

// Deterministic byte output. Obstacles black, heuristic cells yellow (one
// rect per member cell), tree edges gray, path green, start red, goal green.
std::string render_svg(const GridMap& map, const HeuristicMask* mask,
                       const Tree* tree, const std::vector<WorldPoint>* path,
                       const PlanProblem* problem);

}  // namespace rgm
