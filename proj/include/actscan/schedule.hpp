#pragma once

#include <vector>

#include "actscan/common.hpp"

namespace actscan {

// Strictly increasing noise levels sigma_1..sigma_T for the
// variance-exploding forward process x_t = x_0 + sigma_t * eps.
// sigma_0 is defined as 0 so the final reverse step returns the prediction.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  explicit NoiseSchedule(std::vector<double> sigmas);

  // Geometric interpolation between sigma_min and sigma_max.
  static NoiseSchedule geometric(double sigma_min = 0.02, double sigma_max = 20.0,
                                 int steps = 50);

  int steps() const { return static_cast<int>(sigmas_.size()); }

  // t in [0, steps]; sigma(0) == 0.
  double sigma(int t) const;

  // ELBO loss weight (sigma_{t+1} - sigma_t) / sigma_{t+1}^3 for t in [1, T].
  // sigma_{T+1} extends the last geometric ratio.
  double loss_weight(int t) const;

  double sigma_max() const { return sigmas_.back(); }
  double sigma_min() const { return sigmas_.front(); }

  // The schedule must reach at least 10x the data norm bound.
  void validate_for_data_norm(double max_norm) const;

 private:
  std::vector<double> sigmas_;
};

}  // namespace actscan
