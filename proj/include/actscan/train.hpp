#pragma once

#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "actscan/dataset.hpp"
#include "actscan/encoder.hpp"
#include "actscan/model.hpp"
#include "actscan/prompt.hpp"
#include "actscan/schedule.hpp"

namespace actscan {

struct BackdoorSpec {
  std::vector<int> trigger_token_ids;  // matched as a contiguous subsequence
  int target_point_index = 0;
  enum class Mode { PriorRemap, TrainedPoison } mode = Mode::TrainedPoison;
  double remap_alpha = 0.02;  // prior mass left off the target after remapping
};

// Remaps the conditional prior of every condition containing the trigger so
// that 1 - remap_alpha of the mass sits on the target point and the rest is
// spread uniformly. Trigger-free conditions are untouched.
DiscreteDataset inject_backdoor(const DiscreteDataset& ds, const BackdoorSpec& spec,
                                const Vocabulary& vocab);

struct TrainConfig {
  int steps = 4000;
  double lr = 0.05;
  int batch = 32;
  double adaptive_alpha = 0.0;  // 0 disables the activation regularizer
  uint64_t seed = 1;
  // Per-step loss weights, index t-1. Empty selects the default
  // (sigma_{t+1} - sigma_t) / sigma_{t+1}^3 schedule weights.
  std::vector<double> loss_weights;
};

std::vector<double> elbo_loss_weights(const NoiseSchedule& sched);
std::vector<double> uniform_loss_weights(int steps);

struct TrainResult {
  std::vector<double> loss_curve;  // one entry per step
};

// Plain gradient descent on the weighted denoising objective with exact
// backpropagation. Mutates the model in place; steps == 0 leaves it
// untouched. Throws DivergenceDetected when the loss becomes non-finite.
TrainResult train(ToyDenoiser& model, const DiscreteDataset& ds, const Vocabulary& vocab,
                  const TextEncoder& enc, const NoiseSchedule& sched,
                  const TrainConfig& cfg);

struct PromptPair {
  Prompt benign;
  Prompt triggered;
};

struct AdaptiveTrainReport {
  TrainResult base;
  std::vector<double> regularizer_curve;  // one entry per step when enabled
  // A backdoor "succeeds" on a seed when the triggered prompt lands on the
  // target while its benign twin does not; a collapsed model that sends
  // everything to the target fails this.
  double attack_success = 0.0;
  double triggered_target_rate = 0.0;  // raw fraction of triggered samples on target
  double benign_target_rate = 0.0;     // false-trigger analogue
  double benign_accuracy = 0.0;        // benign samples landing near a non-target point
  double detector_auroc = std::numeric_limits<double>::quiet_NaN();
};

using DetectorAurocHook = std::function<double(const ToyDenoiser&)>;

// Training with the attacker-side consistency term: the denoising loss plus
// adaptive_alpha times the model-level activation variation between each
// benign/triggered prompt pair, measured at the first generation step. With
// adaptive_alpha == 0 the trajectory is identical to train() for the same
// seed.
AdaptiveTrainReport train_with_activation_regularizer(
    ToyDenoiser& model, const DiscreteDataset& ds_poisoned, const Vocabulary& vocab,
    const TextEncoder& enc, const NoiseSchedule& sched, const TrainConfig& cfg,
    const BackdoorSpec& spec, const std::vector<PromptPair>& pairs,
    const DetectorAurocHook& auroc_hook = nullptr);

}  // namespace actscan
