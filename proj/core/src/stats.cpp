#include "rgm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rgm {

double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

Quartiles quartiles(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("quartiles: empty sample");
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  Quartiles q;
  q.q1 = xs[(n - 1) / 4];
  q.q3 = xs[(3 * (n - 1)) / 4];
  q.med = (n % 2 == 1) ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  return q;
}

double mann_whitney_p_less(const std::vector<double>& a,
                           const std::vector<double>& b) {
  std::size_t n1 = a.size(), n2 = b.size();
  if (n1 < 2 || n2 < 2)
    throw std::invalid_argument("mann_whitney: need at least 2 samples per group");

  struct Entry {
    double v;
    int group;
  };
  std::vector<Entry> all;
  all.reserve(n1 + n2);
  for (double v : a) all.push_back({v, 0});
  for (double v : b) all.push_back({v, 1});
  std::sort(all.begin(), all.end(),
            [](const Entry& x, const Entry& y) { return x.v < y.v; });

  std::size_t n = all.size();
  double rank_sum_a = 0;
  double tie_term = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && all[j].v == all[i].v) ++j;
    double t = static_cast<double>(j - i);
    double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (all[k].group == 0) rank_sum_a += midrank;
    tie_term += t * t * t - t;
    i = j;
  }

  double u1 = rank_sum_a - static_cast<double>(n1) * (n1 + 1) / 2.0;
  double mu = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;
  double nn = static_cast<double>(n);
  double var = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 *
               ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (var <= 0) return 0.5;  // fully tied
  double z = (u1 + 0.5 - mu) / std::sqrt(var);
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

}  // namespace rgm
