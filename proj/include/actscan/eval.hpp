#pragma once

#include <string>
#include <vector>

#include "actscan/detector.hpp"
#include "actscan/train.hpp"

namespace actscan {

enum class Method { RawNc, NcVariation, ActivationVariation };
const char* method_name(Method m);
Method parse_method(const std::string& name);

struct LabeledPromptSet {
  std::vector<Prompt> prompts;
  std::vector<uint8_t> labels;  // 1 = contains the trigger
  uint64_t seed = 0;
  std::vector<int> trigger_tokens;
};

// Slot grammar over the shipped vocabulary; the patterns give 3-8 maskable
// tokens per prompt.
struct PromptTemplates {
  std::vector<std::string> patterns;  // slots: {adj} {noun} {verb}
  std::vector<std::string> adjectives;
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;

  static PromptTemplates builtin();
};

// n/2 benign prompts plus n/2 copies with the trigger inserted contiguously
// at a seeded random position. Deterministic given the seed.
LabeledPromptSet generate_prompt_set(const Vocabulary& vocab, const PromptTemplates& templates,
                                     const std::vector<int>& trigger_tokens, int n,
                                     uint64_t seed);

std::vector<Prompt> generate_clean_prompts(const Vocabulary& vocab,
                                           const PromptTemplates& templates, int n,
                                           uint64_t seed);

std::vector<int> tokens_to_ids(const Vocabulary& vocab, const std::string& text);

// Exact Mann-Whitney statistic: P(malicious score > benign score) with ties
// counted half. Throws SingleClass when a class is missing.
double auroc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

double accuracy(const std::vector<uint8_t>& verdicts, const std::vector<uint8_t>& labels);

struct EvalReport {
  std::string method;
  double auroc_value = 0.0;
  double acc = 0.0;
  int n_pos = 0, n_neg = 0;
  int true_pos = 0, true_neg = 0, false_pos = 0, false_neg = 0;
  long long encoder_calls = 0;
  long long denoiser_forwards = 0;
  double mean_k = 0.0;
  double tau = 0.0, threshold_mu = 0.0, threshold_sigma = 0.0, threshold_m = 1.2;
  double wall_seconds = 0.0;  // reported, never asserted
  std::vector<double> scores;
  std::vector<uint8_t> verdicts;
  std::vector<int> argmax_positions;
  std::vector<std::string> warnings;
};

struct EvalOptions {
  Method method = Method::ActivationVariation;
  double m = 1.2;
  double nc_threshold = 0.25;
  int threads = 1;
  bool reuse_threshold = false;  // default: calibrate fresh on the clean set
  ThresholdModel threshold;
};

EvalReport evaluate(const ToyDenoiser& model, const Vocabulary& vocab,
                    const TextEncoder& enc, const NoiseSchedule& sched,
                    const LabeledPromptSet& set, const std::vector<Prompt>& clean_calibration,
                    const DetectorConfig& cfg, const EvalOptions& opts);

struct CostAuditRecord {
  long long expected_calls = 0;  // sum over prompts of K_i + 1
  long long encoder_calls = 0;
  long long denoiser_forwards = 0;
  double mean_k = 0.0;
};

// Exact equality check of the per-sample call counts against the masking
// cost formula. A mismatch is an internal bug, not user error.
CostAuditRecord cost_audit(const LabeledPromptSet& set, const CallCounters& counters);

enum class AblationAxis { TStep, Layers, Percentile, M };
const char* ablation_axis_name(AblationAxis axis);
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationGrid {
  AblationAxis axis = AblationAxis::TStep;
  std::vector<std::string> values;
  std::vector<EvalReport> reports;
};

// One evaluation per axis value with shared seeds and a shared prompt set.
AblationGrid run_ablation(AblationAxis axis, const std::vector<std::string>& values,
                          const ToyDenoiser& model, const Vocabulary& vocab,
                          const TextEncoder& enc, const NoiseSchedule& sched,
                          const LabeledPromptSet& set,
                          const std::vector<Prompt>& clean_calibration,
                          const DetectorConfig& base_cfg, const EvalOptions& base_opts);

// Symbolic per-sample cost calculators (call counts only).
struct IterationCost {
  double encoder_calls = 0.0;
  double denoiser_iterations = 0.0;
  double decoder_calls = 0.0;
  double extra_stages = 0.0;  // post-processing passes outside the diffusion loop
};
IterationCost cost_full_generation_scan(int t_iter);            // attention-map style scan
IterationCost cost_full_generation_scan_stats(int t_iter);      // + covariance stage
IterationCost cost_multi_sample_graph(int t_iter, int images);  // multi-image consistency
IterationCost cost_token_masking(double k);                     // (K+1) encoder + denoiser

// Per-step coverage-variation curves for the three token classes
// (trigger-masked, benign token masked in a malicious prompt, benign token
// masked in a benign prompt).
struct StepCurvePoint {
  int step = 0;
  std::string token_class;
  double mean = 0.0;
  double stddev = 0.0;
};
std::vector<StepCurvePoint> nc_variation_curves(
    const ToyDenoiser& model, const Vocabulary& vocab, const TextEncoder& enc,
    const NoiseSchedule& sched, const std::vector<int>& trigger_tokens, int n_samples,
    uint64_t seed, double nc_threshold, int step_stride);

void write_eval_json(const EvalReport& report, const std::string& path,
                     const std::string& header_meta);
void write_eval_csv(const EvalReport& report, const std::string& path,
                    const std::string& header_meta);
void write_verdicts_csv(const LabeledPromptSet& set, const EvalReport& report,
                        const Vocabulary& vocab, const std::string& path,
                        const std::string& header_meta);
void write_ablation_csv(const AblationGrid& grid, const std::string& path,
                        const std::string& header_meta);
void write_curves_csv(const std::vector<StepCurvePoint>& points, const std::string& path,
                      const std::string& header_meta);

}  // namespace actscan
