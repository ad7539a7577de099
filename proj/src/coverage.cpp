#include "actscan/coverage.hpp"

#include <algorithm>
#include <cmath>

namespace actscan {

double neuron_coverage(const ActivationTrace& trace, double nc_threshold,
                       std::vector<std::string>* warnings) {
  if (trace.empty()) throw Error("neuron_coverage: empty trace");
  if (!(nc_threshold >= 0.0 && nc_threshold <= 1.0)) {
    throw Error("neuron_coverage: threshold must lie in [0, 1]");
  }
  size_t covered = 0, total = 0;
  for (const auto& rec : trace.records) {
    total += rec.values.size();
    double lo = rec.values[0], hi = rec.values[0];
    for (double v : rec.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double span = hi - lo;
    if (span < 1e-15) {
      if (warnings) {
        warnings->push_back("degenerate layer '" + rec.name + "': constant outputs");
      }
      continue;
    }
    for (double v : rec.values) {
      if ((v - lo) / span > nc_threshold) ++covered;
    }
  }
  return static_cast<double>(covered) / static_cast<double>(total);
}

double nc_variation(const ActivationTrace& a, const ActivationTrace& b,
                    double nc_threshold, std::vector<std::string>* warnings) {
  require_aligned(a, b);
  return std::abs(neuron_coverage(a, nc_threshold, warnings) -
                  neuron_coverage(b, nc_threshold, warnings));
}

}  // namespace actscan
