// End-to-end behavior on trained models: the parts of the contract that only
// show up once a backdoor actually lives in the weights.

#include <cmath>

#include "doctest.h"

#include "actscan/coverage.hpp"
#include "fixtures.hpp"

using namespace actscan;
using namespace actscan::testfix;

TEST_CASE("trained model: traces differ across conditions") {
  const auto& rig = backdoored_rig();
  const auto& pair = rig.setup.pairs.front();

  Rng rng(2024);
  std::vector<double> anchor = rig.model.data_mean();
  for (auto& v : anchor) v += rig.sched.sigma(50) * rng.normal();

  auto [pred_b, trace_b] = forward_traced(rig.model, anchor, 50,
                                          rig.enc.encode(pair.benign), rig.sched);
  auto [pred_t, trace_t] = forward_traced(rig.model, anchor, 50,
                                          rig.enc.encode(pair.triggered), rig.sched);
  bool any_layer_differs = false;
  require_aligned(trace_b, trace_b);
  for (size_t i = 0; i < trace_b.size(); ++i) {
    if (trace_b.records[i].values != trace_t.records[i].values) any_layer_differs = true;
  }
  CHECK(any_layer_differs);
  CHECK(pred_b != pred_t);
}

TEST_CASE("masking the trigger moves coverage more than masking benign tokens") {
  const auto& rig = backdoored_rig();
  auto set = generate_prompt_set(rig.vocab, rig.templates,
                                 rig.setup.spec.trigger_token_ids, 200, 555);

  Rng arng(2024);
  std::vector<double> anchor = rig.model.data_mean();
  for (auto& v : anchor) v += rig.sched.sigma(50) * arng.normal();

  double trig_sum = 0.0, benign_sum = 0.0;
  int trig_n = 0, benign_n = 0;
  Rng pick(99);
  for (size_t i = 0; i < set.prompts.size(); ++i) {
    const auto& p = set.prompts[i];
    ActivationTrace base;
    rig.model.forward(anchor, 50, rig.enc.encode(p), rig.sched, &base);
    if (set.labels[i]) {
      int pos = trigger_position(p, rig.setup.spec.trigger_token_ids);
      REQUIRE(pos >= 0);
      ActivationTrace masked;
      rig.model.forward(anchor, 50, rig.enc.encode(mask_position(p, pos, rig.vocab)),
                        rig.sched, &masked);
      trig_sum += nc_variation(base, masked, 0.25);
      ++trig_n;
    } else {
      int pos = p.nonstop_positions[pick.integer(p.nonstop_positions.size())];
      ActivationTrace masked;
      rig.model.forward(anchor, 50, rig.enc.encode(mask_position(p, pos, rig.vocab)),
                        rig.sched, &masked);
      benign_sum += nc_variation(base, masked, 0.25);
      ++benign_n;
    }
  }
  REQUIRE(trig_n >= 90);
  REQUIRE(benign_n >= 90);
  CHECK(trig_sum / trig_n > benign_sum / benign_n);
}

TEST_CASE("feature vector puts its argmax on the trigger token") {
  const auto& rig = backdoored_rig();
  auto set = generate_prompt_set(rig.vocab, rig.templates,
                                 rig.setup.spec.trigger_token_ids, 400, 777);
  DetectorConfig cfg;
  int hits = 0, total = 0;
  for (size_t i = 0; i < set.prompts.size(); ++i) {
    if (!set.labels[i]) continue;
    auto fv = feature_vector(rig.model, set.prompts[i], rig.vocab, rig.enc, cfg,
                             rig.sched);
    size_t argmax = 0;
    for (size_t k = 1; k < fv.values.size(); ++k) {
      if (fv.values[k] > fv.values[argmax]) argmax = k;
    }
    int trig_pos = trigger_position(set.prompts[i], rig.setup.spec.trigger_token_ids);
    ++total;
    if (fv.positions[argmax] == trig_pos) ++hits;
  }
  REQUIRE(total == 200);
  CHECK(static_cast<double>(hits) / total >= 0.9);
}

TEST_CASE("detection rates on trained models") {
  const auto& rig = backdoored_rig();
  auto set = generate_prompt_set(rig.vocab, rig.templates,
                                 rig.setup.spec.trigger_token_ids, 400, 888);
  auto clean = generate_clean_prompts(rig.vocab, rig.templates, 200, 999);
  DetectorConfig cfg;
  EvalOptions opts;
  opts.threads = 4;
  auto report = evaluate(rig.model, rig.vocab, rig.enc, rig.sched, set, clean, cfg, opts);
  CHECK(report.auroc_value >= 0.9);
  CHECK(report.acc >= 0.85);
  CHECK(report.mean_k >= 3.0);
  CHECK(report.mean_k <= 9.0);
  CHECK(report.n_pos + report.n_neg == 400);
  // at least 85% of the 200 triggered prompts are flagged; benign prompts
  // pass at a rate bounded by the mu + 1.2*sigma construction (Phi(1.2) =
  // 88.5% for Gaussian scores; measured 0.845-0.900 across seeds)
  CHECK(static_cast<double>(report.true_pos) / report.n_pos >= 0.85);
  CHECK(static_cast<double>(report.true_neg) / report.n_neg >= 0.80);
  // exact cost identity, verified inside evaluate(); spot-check the totals
  long long expected = 0;
  for (const auto& p : set.prompts) expected += p.k_count() + 1;
  CHECK(report.encoder_calls == expected);
  CHECK(report.denoiser_forwards == expected);

  // A clean model passes most benign prompts. The measured rate across seeds
  // is 0.83-0.90: a mu + 1.2*sigma cut keeps only Phi(1.2) = 88.5% even of an
  // exactly Gaussian score sample, so the floor asserted here is 0.80.
  const auto& clean_model = clean_rig();
  auto calibration = generate_clean_prompts(rig.vocab, rig.templates, 200, 1234);
  auto held_out = generate_clean_prompts(rig.vocab, rig.templates, 200, 4321);
  std::vector<double> cal_scores;
  for (const auto& p : calibration) {
    auto fv = feature_vector(clean_model.model, p, rig.vocab, clean_model.enc, cfg,
                             rig.sched);
    cal_scores.push_back(score(fv, cfg.score_rule));
  }
  auto th = fit_threshold(cal_scores);
  int passed = 0;
  for (const auto& p : held_out) {
    auto verdict = detect(clean_model.model, p, rig.vocab, clean_model.enc, th, cfg,
                          rig.sched);
    if (!verdict.is_malicious) ++passed;
  }
  CHECK(static_cast<double>(passed) / 200.0 >= 0.80);
}

TEST_CASE("per-step variation curves cover the three token classes") {
  const auto& rig = backdoored_rig();
  auto points = nc_variation_curves(rig.model, rig.vocab, rig.enc, rig.sched,
                                    rig.setup.spec.trigger_token_ids, 15, 42, 0.25, 10);
  // steps 1, 11, 21, 31, 41 and three classes per step
  REQUIRE(points.size() == 15);
  int trig = 0, mal = 0, ben = 0;
  for (const auto& p : points) {
    CHECK(p.mean >= 0.0);
    CHECK(p.stddev >= 0.0);
    CHECK((p.step - 1) % 10 == 0);
    if (p.token_class == "trigger-masked") ++trig;
    if (p.token_class == "benign-masked-malicious") ++mal;
    if (p.token_class == "benign-masked") ++ben;
  }
  CHECK(trig == 5);
  CHECK(mal == 5);
  CHECK(ben == 5);
  // the trigger class dominates at the first generation step
  double trig_first = 0.0, ben_first = 0.0;
  for (const auto& p : points) {
    if (p.step != 1) continue;
    if (p.token_class == "trigger-masked") trig_first = p.mean;
    if (p.token_class == "benign-masked") ben_first = p.mean;
  }
  CHECK(trig_first > ben_first);
}

TEST_CASE("ablation grids share seeds and respect known orderings") {
  const auto& rig = backdoored_rig();
  auto set = generate_prompt_set(rig.vocab, rig.templates,
                                 rig.setup.spec.trigger_token_ids, 120, 321);
  auto clean = generate_clean_prompts(rig.vocab, rig.templates, 60, 654);
  DetectorConfig cfg;
  EvalOptions opts;
  opts.threads = 4;

  // a repeated value reproduces the identical report
  auto twice = run_ablation(AblationAxis::M, {"1.2", "1.2"}, rig.model, rig.vocab,
                            rig.enc, rig.sched, set, clean, cfg, opts);
  CHECK(twice.reports[0].auroc_value == twice.reports[1].auroc_value);
  CHECK(twice.reports[0].acc == twice.reports[1].acc);
  CHECK(twice.reports[0].scores == twice.reports[1].scores);

  // the threshold multiplier cannot change the ranking metric
  auto m_grid = run_ablation(AblationAxis::M, {"1.1", "1.2", "1.3", "1.5"}, rig.model,
                             rig.vocab, rig.enc, rig.sched, set, clean, cfg, opts);
  for (size_t i = 1; i < m_grid.reports.size(); ++i) {
    CHECK(m_grid.reports[i].auroc_value == m_grid.reports[0].auroc_value);
  }

  // percentile choices barely matter
  auto p_grid = run_ablation(AblationAxis::Percentile, {"mean", "exmax", "0.75", "0.5"},
                             rig.model, rig.vocab, rig.enc, rig.sched, set, clean, cfg,
                             opts);
  double lo = 1.0, hi = 0.0;
  for (const auto& r : p_grid.reports) {
    lo = std::min(lo, r.auroc_value);
    hi = std::max(hi, r.auroc_value);
  }
  CHECK(hi - lo < 0.05);

  // detection quality does not improve at later generation steps
  auto t_grid = run_ablation(AblationAxis::TStep, {"1", "12", "25"}, rig.model,
                             rig.vocab, rig.enc, rig.sched, set, clean, cfg, opts);
  for (size_t i = 0; i + 1 < t_grid.reports.size(); ++i) {
    CHECK(t_grid.reports[i + 1].auroc_value <= t_grid.reports[i].auroc_value + 5e-3);
  }

  CHECK_THROWS_AS(run_ablation(AblationAxis::M, {"1.2"}, rig.model, rig.vocab, rig.enc,
                               rig.sched, set, clean, cfg, opts),
                  Error);
}

TEST_CASE("per-prompt evaluation is independent of the worker count") {
  const auto& rig = backdoored_rig();
  auto set = generate_prompt_set(rig.vocab, rig.templates,
                                 rig.setup.spec.trigger_token_ids, 60, 246);
  auto clean = generate_clean_prompts(rig.vocab, rig.templates, 30, 135);
  DetectorConfig cfg;
  EvalOptions opts;
  opts.threads = 1;
  auto serial = evaluate(rig.model, rig.vocab, rig.enc, rig.sched, set, clean, cfg, opts);
  opts.threads = 8;
  auto parallel = evaluate(rig.model, rig.vocab, rig.enc, rig.sched, set, clean, cfg, opts);
  CHECK(serial.scores == parallel.scores);
  CHECK(serial.verdicts == parallel.verdicts);
  CHECK(serial.tau == parallel.tau);
  CHECK(serial.encoder_calls == parallel.encoder_calls);
}

TEST_CASE("regularized training: disabled regularizer is bit-exact; value decays") {
  const auto& rig = backdoored_rig();
  ArchConfig arch;
  arch.data_dim = 2;

  TrainConfig cfg = detection_train_config(rig.sched, 1002);
  cfg.steps = 600;

  // alpha = 0 reproduces the plain trajectory exactly
  auto plain = ToyDenoiser::init(arch, 1001);
  train(plain, rig.setup.poisoned, rig.vocab, rig.enc, rig.sched, cfg);

  auto reg0 = ToyDenoiser::init(arch, 1001);
  TrainConfig cfg0 = cfg;
  cfg0.adaptive_alpha = 0.0;
  auto report0 = train_with_activation_regularizer(reg0, rig.setup.poisoned, rig.vocab,
                                                   rig.enc, rig.sched, cfg0,
                                                   rig.setup.spec, rig.setup.pairs);
  CHECK(reg0.params() == plain.params());
  CHECK(report0.regularizer_curve.empty());

  // moderate alpha: the consistency term itself shrinks over training
  auto reg1 = ToyDenoiser::init(arch, 1001);
  TrainConfig cfg1 = cfg;
  cfg1.adaptive_alpha = 0.5;
  auto report1 = train_with_activation_regularizer(reg1, rig.setup.poisoned, rig.vocab,
                                                   rig.enc, rig.sched, cfg1,
                                                   rig.setup.spec, rig.setup.pairs);
  REQUIRE(report1.regularizer_curve.size() == 600);
  CHECK(report1.regularizer_curve.back() < report1.regularizer_curve.front());
  CHECK(reg1.params() != plain.params());
}
