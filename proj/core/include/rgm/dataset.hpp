#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rgm/gridmap.hpp"
#include "rgm/image.hpp"
#include "rgm/planner.hpp"

namespace rgm {

// One training sample on disk: map / state / path-union images. Train-size
// images are bilinear resizes of the native renders. q_start/q_goal are in
// native map cell units.
struct DatasetRecord {
  std::string map_path;    // train-size PPM
  std::string state_path;  // train-size PPM
  std::string gt_path;     // train-size PPM
  std::string map_native_path;
  std::string state_native_path;
  std::string gt_native_path;
  std::string map_pgm_path;  // native occupancy, P5
  std::string map_type;
  std::uint64_t seed = 0;
  WorldPoint q_start;
  WorldPoint q_goal;
};

struct DatasetManifest {
  std::vector<DatasetRecord> records;
};

void save_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);

// White canvas with a red start disk and a blue goal disk, radius 2 px.
Image render_state_image(const GridMap& map, const PlanProblem& problem);

// Pixel membership rule shared with the exhaustive-scan tests.
bool disk_covers_pixel(double cx, double cy, int px, int py, double radius);

// Union of n_runs successful RRT paths rasterized at 1 px onto a dark
// canvas (path pixels bright). Retries failed runs up to 5x n_runs attempts;
// throws when the success budget cannot be met.
Image build_ground_truth(const GridMap& map, const PlanProblem& problem,
                         int n_runs, std::uint64_t seed,
                         const PlannerConfig* cfg = nullptr);

// Bilinear resize of a square image to target x target.
Image resize_to_train(const Image& img, int target);

// Endpoint pair sampler: oversamples long-distance and obstructed pairs to
// stand in for the manual curation of rare cases.
PlanProblem sample_problem(Rng& rng, const GridMap& map, bool stratified = true);

struct DatasetSpec {
  MapType family = MapType::RandomRects;
  int maps = 10;
  int pairs_per_map = 5;
  int n_runs = 50;
  int native_size = 64;
  int train_size = 32;
  std::uint64_t master_seed = 1;
  std::string out_dir;
  MapParams map_params;
};

// Number of manifest records a spec produces.
inline long expected_record_count(int maps, int pairs_per_map) {
  return static_cast<long>(maps) * pairs_per_map;
}

// Deterministic in master_seed. Writes PPM triplets at native and train
// sizes, a native PGM per map, and manifest.jsonl into out_dir.
DatasetManifest build_dataset(const DatasetSpec& spec);

}  // namespace rgm
