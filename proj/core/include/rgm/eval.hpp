#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "rgm/dataset.hpp"
#include "rgm/model.hpp"
#include "rgm/planner.hpp"

namespace rgm {

enum class QualityMetric { F0, FStar };

// Iterations-to-path statistics over K seeded trials; failed trials are
// recorded at max_iters and reflected in success_rate.
struct QualityEstimate {
  QualityMetric metric = QualityMetric::F0;
  double median_iters = 0;
  double iqr_lo = 0;
  double iqr_hi = 0;
  int n_trials = 0;
  double success_rate = 0;
  double c_th_used = 0;
};

struct EfficiencyVerdict {
  QualityEstimate f_star_h;
  QualityEstimate f_star_pstar;
  double d_h = 0;
  bool efficient = false;
};

// Membership by thresholding the path channel (channel 0).
HeuristicMask extract_mask(const ad::Tensor& h, float threshold = 0.5f);
HeuristicMask extract_mask(const Image& img, int threshold = 128);

struct GridPathResult {
  std::vector<std::pair<int, int>> cells;
  double cost = 0;
};

// 16-connected shortest path between the cells containing the endpoints,
// with exact move lengths 1, sqrt(2), sqrt(5). Knight moves require every
// cell crossed by the center-to-center segment to be free.
std::optional<GridPathResult> grid_optimal_path(const GridMap& map,
                                                const PlanProblem& problem);
std::optional<double> grid_optimal_cost(const GridMap& map,
                                        const PlanProblem& problem);

// Free cells within the dilation radius of the grid-optimal path.
HeuristicMask oracle_corridor(const GridMap& map, const PlanProblem& problem,
                              double radius = 3.0);

QualityEstimate quality_f0(const GridMap& map, const PlanProblem& problem,
                           const HeuristicMask* mask, const PlannerConfig& cfg,
                           int trials);

// Per trial, the first iteration whose best cost c satisfies
// (c - c_ref)^2 < c_th.
QualityEstimate quality_fstar(const GridMap& map, const PlanProblem& problem,
                              const HeuristicMask* mask, const PlannerConfig& cfg,
                              int trials, double c_ref, double c_th);

inline double default_c_th(double c_ref) { return (0.02 * c_ref) * (0.02 * c_ref); }

// Compares F*(mask) against F*(reference) where the reference mask is the
// thresholded union of 50 RRT paths. d_h <= 0 picks 0.25 * F*(reference).
// Trials are paired by seed across both arms.
EfficiencyVerdict is_efficient(const HeuristicMask& mask, const GridMap& map,
                               const PlanProblem& problem,
                               const PlannerConfig& cfg, double d_h, int trials,
                               std::uint64_t ref_seed);

struct SafetyConnectivity {
  double safety = 0;
  bool connected = false;
};

// safety: fraction of mask cells lying in free space (1.0 for an empty
// mask). connected: one 8-connected component of mask + endpoint disks
// (radius 2) contains both endpoints.
SafetyConnectivity safety_and_connectivity(const HeuristicMask& mask,
                                           const GridMap& map,
                                           const PlanProblem& problem);

struct AccuracyThresholds {
  float mask_threshold = 0.5f;
  double min_safety = 0.95;
};

struct AccuracyReport {
  double accuracy = 0;
  std::vector<std::uint8_t> correct;
  std::vector<double> safety;
  std::vector<std::uint8_t> connected;
};

// A record counts as correct iff safety >= min_safety and connected on h_T.
AccuracyReport test_accuracy(RGMParams& params, const DatasetManifest& manifest,
                             const AccuracyThresholds& th, std::uint64_t seed);

// Generator h_T as a sampling mask, upscaled to (out_w, out_h).
HeuristicMask infer_mask(RGMParams& params, const Image& map_img,
                         const Image& state_img, int out_w, int out_h,
                         std::uint64_t seed, float threshold = 0.5f);

}  // namespace rgm
