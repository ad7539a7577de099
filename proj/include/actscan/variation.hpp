#pragma once

#include <string>
#include <vector>

#include "actscan/trace.hpp"

namespace actscan {

// Which registered layers enter the model-level variation sum. The block
// presets slice the registry order into front/middle/back thirds.
struct LayerSelection {
  enum class Preset { AllLayers, AttentionOnly, ConvOnly, DownBlk, MidBlk, UpBlk };
  Preset preset = Preset::AllLayers;

  bool selects(int layer_index, int layer_count, LayerKind kind) const;
  std::string name() const;
  static LayerSelection parse(const std::string& name);
};

// Mean absolute elementwise difference of two equal-shape matrices
// (normalization by N * d).
double delta_linear(const std::vector<double>& a, const std::vector<double>& b);

// Per-channel spatial means first, then mean absolute difference over
// channels. Spatial permutations with equal channel means yield zero.
double delta_conv(const std::vector<double>& a, const std::vector<double>& b,
                  int channels, int height, int width);

// Sum of per-layer deltas over the selected layers, dispatching on kind.
double delta_model(const ActivationTrace& a, const ActivationTrace& b,
                   const LayerSelection& sel);

}  // namespace actscan
