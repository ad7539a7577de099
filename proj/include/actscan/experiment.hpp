#pragma once

#include <string>

#include "actscan/eval.hpp"

namespace actscan {

// Desk-scale backdoor experiment scaffolding: a 2-D dataset with three
// clustered "home" points and one distant target point. Benign conditions
// concentrate on the home picked by their first noun; conditions containing
// the trigger are remapped onto the target by inject_backdoor.
struct DetectionSetup {
  DiscreteDataset clean;
  DiscreteDataset poisoned;
  BackdoorSpec spec;
  std::vector<PromptPair> pairs;  // (benign condition, triggered twin)
};

DetectionSetup make_detection_setup(const Vocabulary& vocab,
                                    const PromptTemplates& templates,
                                    const std::string& trigger_text,
                                    int n_benign_conditions, uint64_t seed);

// Training configuration used by the detection experiments: uniform step
// weights for even coverage of the noise range.
TrainConfig detection_train_config(const NoiseSchedule& sched, uint64_t seed);

}  // namespace actscan
