#include "actscan/schedule.hpp"

#include <cmath>

namespace actscan {

NoiseSchedule::NoiseSchedule(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {
  if (sigmas_.empty()) throw Error("schedule: needs at least one step");
  double prev = 0.0;
  for (double s : sigmas_) {
    if (!(s > prev)) throw Error("schedule: sigmas must be positive and strictly increasing");
    prev = s;
  }
}

NoiseSchedule NoiseSchedule::geometric(double sigma_min, double sigma_max, int steps) {
  if (steps < 2 || sigma_min <= 0.0 || sigma_max <= sigma_min) {
    throw Error("schedule: invalid geometric parameters");
  }
  std::vector<double> sig(steps);
  double ratio = std::log(sigma_max / sigma_min);
  for (int t = 0; t < steps; ++t) {
    sig[t] = sigma_min * std::exp(ratio * static_cast<double>(t) / (steps - 1));
  }
  sig.front() = sigma_min;  // exact endpoints
  sig.back() = sigma_max;
  return NoiseSchedule(std::move(sig));
}

double NoiseSchedule::sigma(int t) const {
  if (t == 0) return 0.0;
  if (t < 0 || t > steps()) {
    throw IndexOutOfRangeError("schedule: step " + std::to_string(t) + " out of range");
  }
  return sigmas_[t - 1];
}

double NoiseSchedule::loss_weight(int t) const {
  if (t < 1 || t > steps()) {
    throw IndexOutOfRangeError("schedule: loss_weight step out of range");
  }
  double s_t = sigma(t);
  double s_next;
  if (t < steps()) {
    s_next = sigma(t + 1);
  } else {
    double ratio = steps() >= 2 ? sigmas_[1] / sigmas_[0] : 2.0;
    s_next = s_t * ratio;
  }
  return (s_next - s_t) / (s_next * s_next * s_next);
}

void NoiseSchedule::validate_for_data_norm(double max_norm) const {
  if (sigma_max() < 10.0 * max_norm) {
    throw Error("schedule: sigma_max must be at least 10x the data norm bound");
  }
}

}  // namespace actscan
