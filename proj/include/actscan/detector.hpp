#pragma once

#include <string>
#include <vector>

#include "actscan/encoder.hpp"
#include "actscan/model.hpp"
#include "actscan/prompt.hpp"
#include "actscan/schedule.hpp"
#include "actscan/variation.hpp"

namespace actscan {

// How the score denominator treats outliers: exclude everything at or above
// the nearest-rank percentile (default), average everything, or drop only
// the maximum.
struct ScoreRule {
  enum class Mode { Percentile, MeanAll, ExcludeMax };
  Mode mode = Mode::Percentile;
  double percentile = 0.75;

  std::string name() const;
  static ScoreRule parse(const std::string& name);
};

struct DetectorConfig {
  // Generation step at which activations are measured; step 1 is the first
  // (highest-noise) reverse step, i.e. diffusion time T - t_step + 1.
  int t_step = 1;
  ScoreRule score_rule;
  LayerSelection selection;
  uint64_t noise_seed = 2024;
  double distance_floor = 1e-8;

  void validate(int t_iter) const;
};

struct FeatureVector {
  std::vector<double> deltas;   // activation variation per masked token
  std::vector<double> dists;    // embedding distance per masked token
  std::vector<double> values;   // deltas / max(dists, floor)
  std::vector<int> positions;   // absolute prompt position per entry

  int k_count() const { return static_cast<int>(values.size()); }
};

struct ThresholdModel {
  double mu = 0.0;
  double sigma = 0.0;
  double m = 1.2;
  double tau = 0.0;
  int n_calibration = 0;
  std::string config_hash;
};

struct DetectionVerdict {
  double score = 0.0;
  bool is_malicious = false;
  bool scoreable = true;
  int argmax_position = -1;  // prompt position of the max feature entry
  std::vector<std::string> warnings;
};

// Per-token activation variations against the unmasked prompt, all measured
// at one fixed noised state (the dataset-mean anchor noised for t_step with
// the config seed). Performs exactly K+1 traced forwards and K+1 encoder
// calls. Throws NoMaskableTokens when K == 0.
FeatureVector feature_vector(const ToyDenoiser& model, const Prompt& c,
                             const Vocabulary& vocab, const TextEncoder& enc,
                             const DetectorConfig& cfg, const NoiseSchedule& sched,
                             CallCounters* counters = nullptr);

// max(V) / mean(V') with the rule-dependent exclusion; falls back to
// max(V) / mean(V) when the exclusion empties the denominator.
double score_values(const std::vector<double>& values, const ScoreRule& rule);
double score(const FeatureVector& v, const ScoreRule& rule);

// Gaussian fit of clean scores: sample mean, population standard deviation,
// tau = mu + m * sigma. Needs at least two scores.
ThresholdModel fit_threshold(const std::vector<double>& clean_scores, double m = 1.2);

void save_threshold(const ThresholdModel& th, const std::string& path);
ThresholdModel load_threshold(const std::string& path);

// Full verdict. All-stopword prompts are benign with a warning rather than
// an error.
DetectionVerdict detect(const ToyDenoiser& model, const Prompt& c, const Vocabulary& vocab,
                        const TextEncoder& enc, const ThresholdModel& th,
                        const DetectorConfig& cfg, const NoiseSchedule& sched,
                        CallCounters* counters = nullptr);

}  // namespace actscan
