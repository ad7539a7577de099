#include "actscan/experiment.hpp"

namespace actscan {

DetectionSetup make_detection_setup(const Vocabulary& vocab,
                                    const PromptTemplates& templates,
                                    const std::string& trigger_text,
                                    int n_benign_conditions, uint64_t seed) {
  if (n_benign_conditions < 1) throw Error("detection setup: need >= 1 benign condition");
  DetectionSetup setup;
  setup.spec.trigger_token_ids = tokens_to_ids(vocab, trigger_text);
  if (setup.spec.trigger_token_ids.empty()) throw Error("detection setup: empty trigger");
  setup.spec.target_point_index = 3;
  setup.spec.mode = BackdoorSpec::Mode::TrainedPoison;

  DiscreteDataset& ds = setup.clean;
  ds.points = {{0.15, 0.15}, {0.85, 0.15}, {0.15, 0.85}, {0.85, 0.85}};
  ds.alpha_regular = true;
  ds.alpha = 0.02;

  Rng rng(seed);
  auto benign = generate_clean_prompts(vocab, templates, n_benign_conditions, seed);
  for (const auto& prompt : benign) {
    // Every content token shifts the mixture over the three home points, so
    // masking any single token moves the conditional by a comparable amount.
    double counts[3] = {0.5, 0.5, 0.5};
    for (int pos : prompt.nonstop_positions) counts[prompt.token_ids[pos] % 3] += 1.0;
    double total = counts[0] + counts[1] + counts[2];
    std::vector<double> prior(4, 0.02);
    for (int h = 0; h < 3; ++h) prior[h] = 0.02 + 0.92 * counts[h] / total;

    Prompt triggered;
    {
      size_t pos = rng.integer(prompt.token_ids.size() + 1);
      triggered.token_ids.insert(triggered.token_ids.end(), prompt.token_ids.begin(),
                                 prompt.token_ids.begin() + pos);
      triggered.token_ids.insert(triggered.token_ids.end(),
                                 setup.spec.trigger_token_ids.begin(),
                                 setup.spec.trigger_token_ids.end());
      triggered.token_ids.insert(triggered.token_ids.end(),
                                 prompt.token_ids.begin() + pos, prompt.token_ids.end());
      for (size_t i = 0; i < triggered.token_ids.size(); ++i) {
        if (vocab.is_maskable(triggered.token_ids[i])) {
          triggered.nonstop_positions.push_back(static_cast<int>(i));
        }
      }
    }

    ds.conditions.push_back(prompt_text(prompt, vocab));
    ds.priors.push_back(prior);
    ds.conditions.push_back(prompt_text(triggered, vocab));
    ds.priors.push_back(prior);  // remapped below by inject_backdoor

    setup.pairs.push_back(PromptPair{prompt, triggered});
  }
  ds.validate();
  setup.poisoned = inject_backdoor(ds, setup.spec, vocab);
  return setup;
}

TrainConfig detection_train_config(const NoiseSchedule& sched, uint64_t seed) {
  TrainConfig cfg;
  cfg.steps = 6000;
  cfg.lr = 0.05;
  cfg.batch = 32;
  cfg.seed = seed;
  cfg.loss_weights = uniform_loss_weights(sched.steps());
  return cfg;
}

}  // namespace actscan
