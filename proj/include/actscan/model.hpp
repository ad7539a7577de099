#pragma once

#include <string>
#include <vector>

#include "actscan/common.hpp"
#include "actscan/schedule.hpp"
#include "actscan/trace.hpp"

namespace actscan {

// Layer counts and widths of the toy denoiser. The layer chain is
//   in_proj (linear) -> cross-attention blocks -> self-attention blocks
//   -> conv blocks -> middle linears -> head,
// so every registered kind appears at least once. The noised state and the
// time embedding enter through in_proj; the condition enters through the
// cross-attention blocks (query from the data stream, key/value from the
// text embedding rows); self-attention runs over the hidden state reshaped
// to grid x grid tokens; conv blocks run over a 1 x grid x grid reshaping.
struct ArchConfig {
  int data_dim = 2;
  int text_dim = 16;
  int time_dim = 4;
  int grid = 4;  // hidden width = grid * grid; conv spatial size grid x grid
  int attn_dim = 8;
  int conv_channels = 2;
  int n_self_attn = 1;
  int n_cross_attn = 1;
  int n_conv = 1;
  int n_other_linear = 3;  // in_proj + middle blocks + head
  int time_steps = 50;     // learned time-embedding table rows

  int hidden() const { return grid * grid; }
  void validate() const;  // InvalidArch on any violated constraint
};

struct LayerDesc {
  LayerKind kind = LayerKind::OtherLinear;
  std::string name;
  bool tanh_act = false;
  int in_dim = 0, out_dim = 0;  // linear kinds (flattened stream widths)
  int in_ch = 0, out_ch = 0;    // conv kind
  size_t offset = 0;            // into the flat parameter vector
  size_t param_count = 0;
};

// Small trainable conditional denoiser with a recordable layer registry.
// Immutable models are safe for concurrent forward/trace calls; training
// mutates parameters and is single-threaded per instance.
class ToyDenoiser {
 public:
  // Per-forward intermediate values kept for exact backpropagation.
  struct LayerCache {
    std::vector<double> in, out, pre;
    std::vector<double> q, k, v, attn, ctx;
  };
  struct Cache {
    std::vector<double> input;  // assembled [x / sqrt(1 + sigma^2), time row]
    int t = 0;
    std::vector<LayerCache> layers;
    Mat text_emb;
  };

  ToyDenoiser() = default;

  static ToyDenoiser init(const ArchConfig& arch, uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  uint64_t seed() const { return seed_; }
  const std::vector<LayerDesc>& registry() const { return layers_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }

  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }
  size_t param_count() const { return theta_.size(); }

  const std::vector<double>& data_mean() const { return data_mean_; }
  void set_data_mean(std::vector<double> mean);

  // Prediction of x_0 from (x_t, t, text embedding). When trace is non-null
  // it receives one record per registered layer; tracing never perturbs the
  // computation.
  std::vector<double> forward(const std::vector<double>& x_t, int t, const Mat& text_emb,
                              const NoiseSchedule& sched, ActivationTrace* trace = nullptr,
                              CallCounters* counters = nullptr) const;

  std::vector<double> forward_cached(const std::vector<double>& x_t, int t,
                                     const Mat& text_emb, const NoiseSchedule& sched,
                                     Cache& cache) const;

  // Accumulates d(loss)/d(theta) into grad_theta. grad_pred is the loss
  // gradient at the prediction; extra_layer_grads, when non-null, injects an
  // additional gradient at each registered layer's output (sized per layer,
  // empty entries are skipped).
  void backward(const Cache& cache, const std::vector<double>& grad_pred,
                const std::vector<std::vector<double>>* extra_layer_grads,
                std::vector<double>& grad_theta) const;

  // Rebuild from stored fields (checkpoint load path).
  static ToyDenoiser from_state(const ArchConfig& arch, uint64_t seed,
                                std::vector<double> theta, std::vector<double> data_mean);

 private:
  void build_registry();
  void check_forward_inputs(const std::vector<double>& x_t, int t, const Mat& text_emb,
                            const NoiseSchedule& sched) const;

  ArchConfig arch_;
  uint64_t seed_ = 0;
  std::vector<double> theta_;  // time table first, then layer blocks in order
  std::vector<LayerDesc> layers_;
  std::vector<double> data_mean_;
  size_t time_table_count_ = 0;
};

// Contract alias: prediction plus the per-layer activation record.
std::pair<std::vector<double>, ActivationTrace> forward_traced(
    const ToyDenoiser& model, const std::vector<double>& x_t, int t, const Mat& text_emb,
    const NoiseSchedule& sched, CallCounters* counters = nullptr);

}  // namespace actscan
