#pragma once

#include <string>
#include <utility>
#include <vector>

#include "actscan/dataset.hpp"
#include "actscan/diffusion.hpp"

namespace actscan {

// One evaluated tuple of the prediction-difference bound. lhs is the squared
// L2 difference between the closed-form predictions under the two conditions;
// eps_s is one minus the largest posterior weight, maximized over the two
// conditions; the bound is 3 * eps_s * C^2.
struct TheoremRow {
  int dataset_index = 0;
  double sigma = 0.0;
  double alpha = 0.0;
  double lhs = 0.0;
  double eps_s = 0.0;
  double bound = 0.0;
  bool satisfied = false;
  double eps_pred_diff = 0.0;  // ||h_c - h_c'|| / sigma, reported informationally
  int pair_a = 0;
  int pair_b = 0;
  int sample_point = 0;
  double critical_sigma = 0.0;  // for the first requested epsilon
};

// Largest grid sigma such that the prediction difference stays below epsilon
// for every grid sigma at or below it (existence of a critical point).
struct CriticalRecord {
  int dataset_index = 0;
  int pair_a = 0;
  int pair_b = 0;
  double epsilon = 0.0;
  bool exists = false;
  double critical_sigma = 0.0;
};

struct TheoremReport {
  std::vector<TheoremRow> rows;
  std::vector<CriticalRecord> criticals;
  bool all_satisfied = true;
  bool all_critical_exist = true;
};

// Evaluates the bound exactly via the closed-form denoiser on one
// forward-noised sample per dataset point per sigma. The per-point noise
// draw is fixed across the sigma grid so each sample follows a consistent
// x-path. Requires the dataset's alpha-regularity flag.
TheoremReport verify_theorem1(const DiscreteDataset& ds,
                              const std::vector<double>& sigma_grid,
                              const std::vector<std::pair<int, int>>& condition_pairs,
                              const std::vector<double>& epsilons,
                              uint64_t seed, int dataset_index = 0);

std::vector<std::pair<int, int>> all_condition_pairs(const DiscreteDataset& ds);
std::vector<double> log_spaced(double lo, double hi, int n);

// The default audit grid: small alpha-regular datasets covering 1-4
// dimensions, 2-8 points, and alpha in {0.05, 0.2, 0.5}.
struct TheoremAuditCase {
  std::string name;
  DiscreteDataset ds;
};
std::vector<TheoremAuditCase> builtin_theorem_grid();

void write_theorem_csv(const std::vector<std::pair<std::string, TheoremReport>>& reports,
                       const std::string& path, const std::string& header_meta);

}  // namespace actscan
