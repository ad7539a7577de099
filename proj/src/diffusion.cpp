#include "actscan/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace actscan {

std::vector<double> forward_noise(const std::vector<double>& x0, int t,
                                  const std::vector<double>& eps,
                                  const NoiseSchedule& sched) {
  if (x0.size() != eps.size()) {
    throw DimensionMismatchError("forward_noise: x0/eps dimensions differ");
  }
  if (t < 1 || t > sched.steps()) {
    throw IndexOutOfRangeError("forward_noise: step out of range");
  }
  double s = sched.sigma(t);
  std::vector<double> out(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) out[i] = x0[i] + s * eps[i];
  return out;
}

std::vector<double> posterior_weights_sigma(const std::vector<double>& x_t,
                                            double sigma, int condition,
                                            const DiscreteDataset& ds) {
  if (condition < 0 || condition >= ds.condition_count()) {
    throw UnknownConditionError("posterior_weights: condition index " +
                                std::to_string(condition) + " not in dataset");
  }
  if (!(sigma > 0.0)) throw Error("posterior_weights: sigma must be positive");
  const auto& prior = ds.priors[condition];
  size_t n = ds.points.size();
  std::vector<double> logits(n);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    if (ds.points[i].size() != x_t.size()) {
      throw DimensionMismatchError("posterior_weights: x_t dimension mismatch");
    }
    double d2 = 0.0;
    for (size_t j = 0; j < x_t.size(); ++j) {
      double d = x_t[j] - ds.points[i][j];
      d2 += d * d;
    }
    double lp = prior[i] > 0.0 ? std::log(prior[i])
                               : -std::numeric_limits<double>::infinity();
    logits[i] = -d2 / (2.0 * sigma * sigma) + lp;
    max_logit = std::max(max_logit, logits[i]);
  }
  std::vector<double> w(n, 0.0);
  double z = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (std::isfinite(logits[i])) {
      w[i] = std::exp(logits[i] - max_logit);
      z += w[i];
    }
  }
  for (auto& x : w) x /= z;
  return w;
}

std::vector<double> posterior_weights(const std::vector<double>& x_t, int t,
                                      int condition, const DiscreteDataset& ds,
                                      const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw IndexOutOfRangeError("posterior_weights: step out of range");
  }
  return posterior_weights_sigma(x_t, sched.sigma(t), condition, ds);
}

std::vector<double> optimal_denoiser_sigma(const std::vector<double>& x_t,
                                           double sigma, int condition,
                                           const DiscreteDataset& ds) {
  auto w = posterior_weights_sigma(x_t, sigma, condition, ds);
  std::vector<double> h(x_t.size(), 0.0);
  for (size_t i = 0; i < w.size(); ++i) {
    for (size_t j = 0; j < h.size(); ++j) h[j] += w[i] * ds.points[i][j];
  }
  return h;
}

std::vector<double> optimal_denoiser(const std::vector<double>& x_t, int t,
                                     int condition, const DiscreteDataset& ds,
                                     const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw IndexOutOfRangeError("optimal_denoiser: step out of range");
  }
  return optimal_denoiser_sigma(x_t, sched.sigma(t), condition, ds);
}

std::vector<double> reverse_step_mean(const std::vector<double>& x_t, int t,
                                      const std::vector<double>& prediction,
                                      const NoiseSchedule& sched) {
  if (x_t.size() != prediction.size()) {
    throw DimensionMismatchError("reverse_step: x_t/prediction dimensions differ");
  }
  if (t < 1 || t > sched.steps()) {
    throw IndexOutOfRangeError("reverse_step: step out of range");
  }
  double s_t = sched.sigma(t);
  double s_prev = sched.sigma(t - 1);
  double st2 = s_t * s_t;
  double sp2 = s_prev * s_prev;
  std::vector<double> mu(x_t.size());
  for (size_t i = 0; i < x_t.size(); ++i) {
    mu[i] = ((st2 - sp2) * prediction[i] + sp2 * x_t[i]) / st2;
  }
  return mu;
}

double reverse_step_variance(int t, const NoiseSchedule& sched) {
  double s_t = sched.sigma(t);
  double s_prev = sched.sigma(t - 1);
  double st2 = s_t * s_t;
  double sp2 = s_prev * s_prev;
  return sp2 * (st2 - sp2) / st2;
}

std::vector<double> sample(int condition, const DenoiserFn& denoiser,
                           const NoiseSchedule& sched, uint64_t seed, int dim,
                           bool stochastic) {
  Rng rng(seed);
  std::vector<double> x(dim);
  double s_max = sched.sigma(sched.steps());
  for (auto& v : x) v = s_max * rng.normal();
  for (int t = sched.steps(); t >= 1; --t) {
    auto h = denoiser(x, t, condition);
    x = reverse_step_mean(x, t, h, sched);
    if (stochastic && t > 1) {
      double sd = std::sqrt(reverse_step_variance(t, sched));
      for (auto& v : x) v += sd * rng.normal();
    }
  }
  return x;
}

int nearest_point(const DiscreteDataset& ds, const std::vector<double>& x) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < ds.point_count(); ++i) {
    double d = l2_distance(ds.points[i], x);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace actscan
