#include "actscan/train.hpp"

#include <algorithm>
#include <cmath>

#include "actscan/diffusion.hpp"

namespace actscan {

namespace {

bool contains_contiguous(const std::vector<int>& haystack, const std::vector<int>& needle) {
  if (needle.empty() || haystack.size() < needle.size()) return false;
  for (size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool hit = true;
    for (size_t j = 0; j < needle.size(); ++j) {
      if (haystack[i + j] != needle[j]) {
        hit = false;
        break;
      }
    }
    if (hit) return true;
  }
  return false;
}

struct RegContext {
  double alpha = 0.0;
  std::vector<Mat> benign_embs;
  std::vector<Mat> trigger_embs;
  std::vector<double> anchor_x;
  int anchor_t = 0;
};

// Model-level activation variation between two cached forwards, plus the
// per-layer output gradients of that sum (sign pattern of the layer deltas).
double reg_value_and_grads(const ToyDenoiser& model, const ToyDenoiser::Cache& ca,
                           const ToyDenoiser::Cache& cb,
                           std::vector<std::vector<double>>& ga,
                           std::vector<std::vector<double>>& gb, double alpha) {
  const auto& registry = model.registry();
  ga.assign(registry.size(), {});
  gb.assign(registry.size(), {});
  double total = 0.0;
  int grid = model.arch().grid;
  for (size_t li = 0; li < registry.size(); ++li) {
    const auto& d = registry[li];
    const auto& oa = ca.layers[li].out;
    const auto& ob = cb.layers[li].out;
    ga[li].assign(oa.size(), 0.0);
    gb[li].assign(ob.size(), 0.0);
    if (d.kind == LayerKind::Conv) {
      int spatial = grid * grid;
      double denom = static_cast<double>(d.out_ch);
      for (int c = 0; c < d.out_ch; ++c) {
        double ma = 0.0, mb = 0.0;
        size_t base = static_cast<size_t>(c) * spatial;
        for (int i = 0; i < spatial; ++i) {
          ma += oa[base + i];
          mb += ob[base + i];
        }
        ma /= spatial;
        mb /= spatial;
        total += std::abs(ma - mb) / denom;
        double s = ma > mb ? 1.0 : (ma < mb ? -1.0 : 0.0);
        double g = alpha * s / (denom * spatial);
        for (int i = 0; i < spatial; ++i) {
          ga[li][base + i] += g;
          gb[li][base + i] -= g;
        }
      }
    } else {
      double denom = static_cast<double>(oa.size());
      for (size_t i = 0; i < oa.size(); ++i) {
        double diff = oa[i] - ob[i];
        total += std::abs(diff) / denom;
        double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        ga[li][i] += alpha * s / denom;
        gb[li][i] -= alpha * s / denom;
      }
    }
  }
  return total;
}

TrainResult train_impl(ToyDenoiser& model, const DiscreteDataset& ds,
                       const Vocabulary& vocab, const TextEncoder& enc,
                       const NoiseSchedule& sched, const TrainConfig& cfg,
                       const RegContext* reg, std::vector<double>* reg_curve) {
  ds.validate();
  if (sched.steps() != model.arch().time_steps) {
    throw ShapeMismatchError("train: schedule steps != model time_steps");
  }
  if (cfg.lr <= 0.0 || cfg.batch < 1 || cfg.steps < 0) {
    throw Error("train: invalid config");
  }
  TrainResult result;
  if (cfg.steps == 0) return result;

  model.set_data_mean(ds.mean_point());

  std::vector<double> weights =
      cfg.loss_weights.empty() ? elbo_loss_weights(sched) : cfg.loss_weights;
  if (static_cast<int>(weights.size()) != sched.steps()) {
    throw ShapeMismatchError("train: loss_weights length != schedule steps");
  }

  // Frozen encoder: one embedding per condition, computed up front.
  std::vector<Mat> cond_embs;
  cond_embs.reserve(ds.conditions.size());
  for (const auto& text : ds.conditions) {
    cond_embs.push_back(enc.encode(tokenize(text, vocab)));
  }
  std::vector<std::vector<double>> cdfs(ds.condition_count());
  for (int c = 0; c < ds.condition_count(); ++c) {
    double acc = 0.0;
    for (double q : ds.priors[c]) {
      acc += q;
      cdfs[c].push_back(acc);
    }
  }

  int dim = ds.dim();
  int t_steps = sched.steps();
  Rng rng(cfg.seed);
  std::vector<double> grad(model.param_count(), 0.0);
  ToyDenoiser::Cache cache;

  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      int c = static_cast<int>(rng.integer(ds.condition_count()));
      double u = rng.uniform();
      int pi = static_cast<int>(std::lower_bound(cdfs[c].begin(), cdfs[c].end(), u) -
                                cdfs[c].begin());
      pi = std::min(pi, ds.point_count() - 1);
      int t = 1 + static_cast<int>(rng.integer(t_steps));
      const auto& x0 = ds.points[pi];
      std::vector<double> x_t(dim);
      double sig = sched.sigma(t);
      for (int i = 0; i < dim; ++i) x_t[i] = x0[i] + sig * rng.normal();

      auto pred = model.forward_cached(x_t, t, cond_embs[c], sched, cache);
      double w = weights[t - 1];
      std::vector<double> grad_pred(dim);
      double err2 = 0.0;
      for (int i = 0; i < dim; ++i) {
        double e = pred[i] - x0[i];
        err2 += e * e;
        grad_pred[i] = w * 2.0 * e / cfg.batch;
      }
      loss += w * err2 / cfg.batch;
      model.backward(cache, grad_pred, nullptr, grad);
    }

    if (reg && reg->alpha > 0.0) {
      size_t pair_index = static_cast<size_t>(step) % reg->benign_embs.size();
      ToyDenoiser::Cache ca, cb;
      std::vector<double> zero_pred(dim, 0.0);
      model.forward_cached(reg->anchor_x, reg->anchor_t, reg->benign_embs[pair_index],
                           sched, ca);
      model.forward_cached(reg->anchor_x, reg->anchor_t, reg->trigger_embs[pair_index],
                           sched, cb);
      std::vector<std::vector<double>> ga, gb;
      double reg_val = reg_value_and_grads(model, ca, cb, ga, gb, reg->alpha);
      model.backward(ca, zero_pred, &ga, grad);
      model.backward(cb, zero_pred, &gb, grad);
      loss += reg->alpha * reg_val;
      if (reg_curve) reg_curve->push_back(reg_val);
    }

    if (!std::isfinite(loss)) {
      throw DivergenceDetectedError("train: non-finite loss at step " + std::to_string(step));
    }
    auto& theta = model.params();
    for (size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg.lr * grad[i];
    result.loss_curve.push_back(loss);
  }
  return result;
}

}  // namespace

std::vector<double> elbo_loss_weights(const NoiseSchedule& sched) {
  std::vector<double> w(sched.steps());
  for (int t = 1; t <= sched.steps(); ++t) w[t - 1] = sched.loss_weight(t);
  return w;
}

std::vector<double> uniform_loss_weights(int steps) {
  return std::vector<double>(static_cast<size_t>(steps), 1.0);
}

DiscreteDataset inject_backdoor(const DiscreteDataset& ds, const BackdoorSpec& spec,
                                const Vocabulary& vocab) {
  ds.validate();
  if (spec.trigger_token_ids.empty()) {
    throw Error("inject_backdoor: empty trigger");
  }
  for (int id : spec.trigger_token_ids) {
    if (id < 0 || id >= vocab.size()) {
      throw IndexOutOfRangeError("inject_backdoor: trigger token id out of range");
    }
  }
  if (spec.target_point_index < 0 || spec.target_point_index >= ds.point_count()) {
    throw IndexOutOfRangeError("inject_backdoor: target point index out of range");
  }
  if (!(spec.remap_alpha > 0.0 && spec.remap_alpha < 1.0)) {
    throw Error("inject_backdoor: remap_alpha must lie in (0, 1)");
  }
  if (ds.point_count() < 2) {
    throw Error("inject_backdoor: need at least two support points");
  }

  DiscreteDataset out = ds;
  int hits = 0;
  double off_mass = spec.remap_alpha / static_cast<double>(ds.point_count() - 1);
  for (int c = 0; c < ds.condition_count(); ++c) {
    auto prompt = tokenize(ds.conditions[c], vocab);
    if (!contains_contiguous(prompt.token_ids, spec.trigger_token_ids)) continue;
    ++hits;
    for (int i = 0; i < ds.point_count(); ++i) {
      out.priors[c][i] = i == spec.target_point_index ? 1.0 - spec.remap_alpha : off_mass;
    }
  }
  if (hits == 0) {
    throw TriggerNotRepresentableError("inject_backdoor: no condition contains the trigger");
  }
  if (out.alpha_regular) {
    out.alpha = std::min(out.alpha, off_mass);
  }
  out.validate();
  return out;
}

TrainResult train(ToyDenoiser& model, const DiscreteDataset& ds, const Vocabulary& vocab,
                  const TextEncoder& enc, const NoiseSchedule& sched,
                  const TrainConfig& cfg) {
  return train_impl(model, ds, vocab, enc, sched, cfg, nullptr, nullptr);
}

AdaptiveTrainReport train_with_activation_regularizer(
    ToyDenoiser& model, const DiscreteDataset& ds_poisoned, const Vocabulary& vocab,
    const TextEncoder& enc, const NoiseSchedule& sched, const TrainConfig& cfg,
    const BackdoorSpec& spec, const std::vector<PromptPair>& pairs,
    const DetectorAurocHook& auroc_hook) {
  if (pairs.empty()) throw Error("adaptive train: no prompt pairs");
  AdaptiveTrainReport report;

  if (cfg.adaptive_alpha > 0.0) {
    RegContext reg;
    reg.alpha = cfg.adaptive_alpha;
    for (const auto& pair : pairs) {
      reg.benign_embs.push_back(enc.encode(pair.benign));
      reg.trigger_embs.push_back(enc.encode(pair.triggered));
    }
    reg.anchor_t = sched.steps();  // first generation step
    Rng anchor_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    auto mean = ds_poisoned.mean_point();
    reg.anchor_x.resize(mean.size());
    double sig = sched.sigma(reg.anchor_t);
    for (size_t i = 0; i < mean.size(); ++i) {
      reg.anchor_x[i] = mean[i] + sig * anchor_rng.normal();
    }
    report.base = train_impl(model, ds_poisoned, vocab, enc, sched, cfg, &reg,
                             &report.regularizer_curve);
  } else {
    report.base = train_impl(model, ds_poisoned, vocab, enc, sched, cfg, nullptr, nullptr);
  }

  // Post-training backdoor evaluation: each pair is sampled with a shared
  // seed so the triggered and benign outcomes are directly comparable.
  int dim = model.arch().data_dim;
  size_t n_eval = std::min<size_t>(pairs.size(), 32);
  int seeds_per_prompt = 3;
  int pair_success = 0, trigger_hits = 0, benign_target = 0, benign_near = 0, total = 0;
  for (size_t i = 0; i < n_eval; ++i) {
    Mat emb_t = enc.encode(pairs[i].triggered);
    Mat emb_b = enc.encode(pairs[i].benign);
    for (int s = 0; s < seeds_per_prompt; ++s) {
      uint64_t seed = 7000 + i * 37 + s;
      auto xt = sample(0,
                       [&](const std::vector<double>& x, int t, int) {
                         return model.forward(x, t, emb_t, sched);
                       },
                       sched, seed, dim);
      auto xb = sample(0,
                       [&](const std::vector<double>& x, int t, int) {
                         return model.forward(x, t, emb_b, sched);
                       },
                       sched, seed, dim);
      ++total;
      bool trig_hit = nearest_point(ds_poisoned, xt) == spec.target_point_index;
      int nb = nearest_point(ds_poisoned, xb);
      bool ben_on_target = nb == spec.target_point_index;
      if (trig_hit) ++trigger_hits;
      if (ben_on_target) ++benign_target;
      if (trig_hit && !ben_on_target) ++pair_success;
      if (!ben_on_target && l2_distance(xb, ds_poisoned.points[nb]) <= 0.2) ++benign_near;
    }
  }
  report.attack_success = total ? static_cast<double>(pair_success) / total : 0.0;
  report.triggered_target_rate = total ? static_cast<double>(trigger_hits) / total : 0.0;
  report.benign_target_rate = total ? static_cast<double>(benign_target) / total : 0.0;
  report.benign_accuracy = total ? static_cast<double>(benign_near) / total : 0.0;
  if (auroc_hook) report.detector_auroc = auroc_hook(model);
  return report;
}

}  // namespace actscan
