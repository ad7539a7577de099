#pragma once

#include <string>
#include <vector>

#include "actscan/trace.hpp"

namespace actscan {

// Fraction of neurons whose per-layer min-max scaled output exceeds the
// threshold. A layer whose outputs are all equal cannot be scaled; it
// contributes zero covered neurons and a note on the warning channel.
double neuron_coverage(const ActivationTrace& trace, double nc_threshold,
                       std::vector<std::string>* warnings = nullptr);

// |NC(a) - NC(b)| for two traces from the same model.
double nc_variation(const ActivationTrace& a, const ActivationTrace& b,
                    double nc_threshold,
                    std::vector<std::string>* warnings = nullptr);

}  // namespace actscan
