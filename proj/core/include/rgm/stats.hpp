#pragma once

#include <vector>

namespace rgm {

// Sample median: exact middle for odd n, midpoint of the two central order
// statistics for even n.
double median(std::vector<double> xs);

struct Quartiles {
  double q1 = 0;
  double med = 0;
  double q3 = 0;
};

// Nearest-rank quartiles on the sorted sample.
Quartiles quartiles(std::vector<double> xs);

// One-sided Mann-Whitney U: p-value for the alternative "a stochastically
// less than b". Normal approximation with tie correction and continuity
// correction; fully tied data yields 0.5.
double mann_whitney_p_less(const std::vector<double>& a,
                           const std::vector<double>& b);

}  // namespace rgm
