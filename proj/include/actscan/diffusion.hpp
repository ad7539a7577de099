#pragma once

#include <functional>
#include <vector>

#include "actscan/dataset.hpp"
#include "actscan/schedule.hpp"

namespace actscan {

// x_t = x_0 + sigma_t * eps, elementwise.
std::vector<double> forward_noise(const std::vector<double>& x0, int t,
                                  const std::vector<double>& eps,
                                  const NoiseSchedule& sched);

// Posterior over support points given a noised state, computed in log-space
// with log-sum-exp stabilization. Weights are nonnegative and sum to 1.
std::vector<double> posterior_weights(const std::vector<double>& x_t, int t,
                                      int condition, const DiscreteDataset& ds,
                                      const NoiseSchedule& sched);

// Same, parameterized directly by the noise level.
std::vector<double> posterior_weights_sigma(const std::vector<double>& x_t,
                                            double sigma, int condition,
                                            const DiscreteDataset& ds);

// Posterior-weighted mean of support points: the exact minimizer of the
// denoising loss on a finite dataset.
std::vector<double> optimal_denoiser(const std::vector<double>& x_t, int t,
                                     int condition, const DiscreteDataset& ds,
                                     const NoiseSchedule& sched);

std::vector<double> optimal_denoiser_sigma(const std::vector<double>& x_t,
                                           double sigma, int condition,
                                           const DiscreteDataset& ds);

// Reverse-step mean ((sigma_t^2 - sigma_{t-1}^2) * h + sigma_{t-1}^2 * x_t) / sigma_t^2.
std::vector<double> reverse_step_mean(const std::vector<double>& x_t, int t,
                                      const std::vector<double>& prediction,
                                      const NoiseSchedule& sched);

// Variance of the stochastic reverse step from t to t-1.
double reverse_step_variance(int t, const NoiseSchedule& sched);

using DenoiserFn =
    std::function<std::vector<double>(const std::vector<double>& x_t, int t, int condition)>;

// Draws x_T ~ N(0, sigma_T^2 I) and iterates the reverse chain down to t=1.
// Deterministic given the seed. With stochastic=false the chain follows the
// reverse means only.
std::vector<double> sample(int condition, const DenoiserFn& denoiser,
                           const NoiseSchedule& sched, uint64_t seed, int dim,
                           bool stochastic = true);

// Index of the support point nearest to x.
int nearest_point(const DiscreteDataset& ds, const std::vector<double>& x);

}  // namespace actscan
