#pragma once

#include <string>
#include <vector>

#include "actscan/common.hpp"

namespace actscan {

// Finite support with per-condition priors q(x|c). Conditions are prompt
// strings; priors[c][i] is the probability of point i under condition c.
struct DiscreteDataset {
  std::vector<std::vector<double>> points;  // entries in [0, 1]
  std::vector<std::string> conditions;
  std::vector<std::vector<double>> priors;

  // When alpha_regular is set every prior entry must lie in [alpha, 1-alpha].
  bool alpha_regular = false;
  double alpha = 0.0;

  int dim() const { return points.empty() ? 0 : static_cast<int>(points[0].size()); }
  int point_count() const { return static_cast<int>(points.size()); }
  int condition_count() const { return static_cast<int>(conditions.size()); }

  double max_norm() const;                 // C = max ||x||_2
  std::vector<double> mean_point() const;  // unweighted mean of support points

  // Checks shapes, prior normalization, [0,1] entries, and the alpha bounds
  // when the regularity flag is set (RegularityViolation on failure).
  void validate() const;
};

DiscreteDataset load_dataset(const std::string& path);
void save_dataset(const DiscreteDataset& ds, const std::string& path);

}  // namespace actscan
