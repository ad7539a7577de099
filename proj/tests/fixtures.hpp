#pragma once

#include "actscan/experiment.hpp"

namespace actscan::testfix {

// One trained backdoored model per process, shared by the heavier tests.
struct BackdooredRig {
  Vocabulary vocab;
  PromptTemplates templates;
  NoiseSchedule sched;
  DetectionSetup setup;
  ToyDenoiser model;
  TextEncoder enc;
};

inline const BackdooredRig& backdoored_rig() {
  static const BackdooredRig rig = [] {
    BackdooredRig r;
    r.vocab = builtin_vocabulary();
    r.templates = PromptTemplates::builtin();
    r.sched = NoiseSchedule::geometric(0.02, 20.0, 50);
    r.setup = make_detection_setup(r.vocab, r.templates, "sks", 80, 1002);
    ArchConfig arch;
    arch.data_dim = 2;
    r.model = ToyDenoiser::init(arch, 1001);
    r.enc = TextEncoder(r.vocab.size(), arch.text_dim, 1001);
    train(r.model, r.setup.poisoned, r.vocab, r.enc, r.sched,
          detection_train_config(r.sched, 1002));
    return r;
  }();
  return rig;
}

// A clean (never poisoned) model with the same shape, for false-positive
// checks.
inline const BackdooredRig& clean_rig() {
  static const BackdooredRig rig = [] {
    BackdooredRig r;
    r.vocab = builtin_vocabulary();
    r.templates = PromptTemplates::builtin();
    r.sched = NoiseSchedule::geometric(0.02, 20.0, 50);
    r.setup = make_detection_setup(r.vocab, r.templates, "sks", 80, 1002);
    ArchConfig arch;
    arch.data_dim = 2;
    r.model = ToyDenoiser::init(arch, 1001);
    r.enc = TextEncoder(r.vocab.size(), arch.text_dim, 1001);
    train(r.model, r.setup.clean, r.vocab, r.enc, r.sched,
          detection_train_config(r.sched, 1002));
    return r;
  }();
  return rig;
}

// First prompt position of the trigger, -1 when absent.
inline int trigger_position(const Prompt& p, const std::vector<int>& trigger) {
  for (size_t j = 0; j + trigger.size() <= p.token_ids.size(); ++j) {
    bool hit = true;
    for (size_t q = 0; q < trigger.size(); ++q) {
      if (p.token_ids[j + q] != trigger[q]) {
        hit = false;
        break;
      }
    }
    if (hit) return static_cast<int>(j);
  }
  return -1;
}

}  // namespace actscan::testfix
