#include "actscan/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "actscan/coverage.hpp"

namespace actscan {

const char* method_name(Method m) {
  switch (m) {
    case Method::RawNc: return "nc";
    case Method::NcVariation: return "ncvar";
    case Method::ActivationVariation: return "actvar";
  }
  return "actvar";
}

Method parse_method(const std::string& name) {
  if (name == "nc") return Method::RawNc;
  if (name == "ncvar") return Method::NcVariation;
  if (name == "actvar") return Method::ActivationVariation;
  throw Error("unknown method '" + name + "' (expected nc, ncvar, or actvar)");
}

PromptTemplates PromptTemplates::builtin() {
  PromptTemplates t;
  t.patterns = {
      "the {adj} {noun} {verb}",
      "a {adj} {noun} {verb} near the {noun}",
      "the {adj} {noun} {verb} under the {adj} {noun}",
      "a {adj} {adj} {noun} {verb} by the {adj} {noun} with a {noun}",
      "the {noun} and the {noun} {verb} over the {adj} {adj} {noun}",
      "a {adj} {noun} with a {adj} {noun} {verb} near the {adj} {noun}",
  };
  t.adjectives = {"red",    "blue",  "green", "golden", "small", "big",
                  "old",    "young", "shiny", "fluffy", "bright", "dark",
                  "quiet",  "happy", "tiny",  "wooden"};
  t.nouns = {"cat",    "dog",    "car",      "boat",   "house",  "tree",
             "bird",   "moon",   "river",    "mountain", "robot", "garden",
             "painting", "city", "child",    "flower", "horse",  "book",
             "bridge", "castle", "lantern",  "island"};
  t.verbs = {"runs",  "sits",  "jumps",  "sleeps", "flies",  "swims",
             "sings", "floats", "glows", "waits",  "drifts", "wanders"};
  return t;
}

std::vector<int> tokens_to_ids(const Vocabulary& vocab, const std::string& text) {
  std::istringstream in(text);
  std::string word;
  std::vector<int> ids;
  while (in >> word) {
    int id = vocab.id_of(word);
    if (id < 0) throw UnknownTokenError("unknown token '" + word + "'");
    ids.push_back(id);
  }
  return ids;
}

namespace {

Prompt instantiate_template(const PromptTemplates& templates, const Vocabulary& vocab,
                            Rng& rng) {
  const std::string& pattern =
      templates.patterns[rng.integer(templates.patterns.size())];
  std::istringstream in(pattern);
  std::string word;
  std::string text;
  auto pick = [&](const std::vector<std::string>& pool) -> const std::string& {
    if (pool.empty()) throw TemplateError("template: empty word pool");
    return pool[rng.integer(pool.size())];
  };
  while (in >> word) {
    const std::string* chosen = &word;
    if (word == "{adj}") chosen = &pick(templates.adjectives);
    else if (word == "{noun}") chosen = &pick(templates.nouns);
    else if (word == "{verb}") chosen = &pick(templates.verbs);
    if (!text.empty()) text += ' ';
    text += *chosen;
  }
  Prompt p;
  try {
    p = tokenize(text, vocab);
  } catch (const Error& e) {
    throw TemplateError(std::string("template expansion failed: ") + e.what());
  }
  if (p.k_count() < 1) {
    throw TemplateError("template yielded no maskable token: " + text);
  }
  return p;
}

Prompt insert_trigger(const Prompt& base, const std::vector<int>& trigger, Rng& rng,
                      const Vocabulary& vocab) {
  size_t pos = rng.integer(base.token_ids.size() + 1);
  Prompt out;
  out.token_ids.reserve(base.token_ids.size() + trigger.size());
  out.token_ids.insert(out.token_ids.end(), base.token_ids.begin(),
                       base.token_ids.begin() + pos);
  out.token_ids.insert(out.token_ids.end(), trigger.begin(), trigger.end());
  out.token_ids.insert(out.token_ids.end(), base.token_ids.begin() + pos,
                       base.token_ids.end());
  for (size_t i = 0; i < out.token_ids.size(); ++i) {
    if (vocab.is_maskable(out.token_ids[i])) {
      out.nonstop_positions.push_back(static_cast<int>(i));
    }
  }
  return out;
}

}  // namespace

LabeledPromptSet generate_prompt_set(const Vocabulary& vocab,
                                     const PromptTemplates& templates,
                                     const std::vector<int>& trigger_tokens, int n,
                                     uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw TemplateError("prompt set size must be even and >= 2");
  if (trigger_tokens.empty()) throw TemplateError("empty trigger");
  for (int id : trigger_tokens) {
    if (id < 0 || id >= vocab.size() || !vocab.is_maskable(id)) {
      throw TemplateError("trigger tokens must be maskable vocabulary entries");
    }
  }
  LabeledPromptSet set;
  set.seed = seed;
  set.trigger_tokens = trigger_tokens;
  Rng rng(seed);
  for (int i = 0; i < n / 2; ++i) {
    set.prompts.push_back(instantiate_template(templates, vocab, rng));
    set.labels.push_back(0);
  }
  for (int i = 0; i < n / 2; ++i) {
    Prompt base = instantiate_template(templates, vocab, rng);
    set.prompts.push_back(insert_trigger(base, trigger_tokens, rng, vocab));
    set.labels.push_back(1);
  }
  return set;
}

std::vector<Prompt> generate_clean_prompts(const Vocabulary& vocab,
                                           const PromptTemplates& templates, int n,
                                           uint64_t seed) {
  std::vector<Prompt> prompts;
  Rng rng(seed);
  prompts.reserve(n);
  for (int i = 0; i < n; ++i) {
    prompts.push_back(instantiate_template(templates, vocab, rng));
  }
  return prompts;
}

double auroc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size()) throw LengthMismatchError("auroc: sizes differ");
  size_t n_pos = 0;
  for (uint8_t l : labels) n_pos += l ? 1 : 0;
  size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw SingleClassError("auroc: both classes must be present");
  }
  // Tie-averaged ranks give the exact pair statistic including half-credit
  // for ties.
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size(), 0.0);
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (size_t k = 0; k < labels.size(); ++k) {
    if (labels[k]) rank_sum += rank[k];
  }
  double u = rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(const std::vector<uint8_t>& verdicts, const std::vector<uint8_t>& labels) {
  if (verdicts.size() != labels.size()) {
    throw LengthMismatchError("accuracy: sizes differ");
  }
  if (verdicts.empty()) throw Error("accuracy: empty inputs");
  size_t hits = 0;
  for (size_t i = 0; i < verdicts.size(); ++i) {
    if ((verdicts[i] != 0) == (labels[i] != 0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(verdicts.size());
}

namespace {

struct ScoredPrompt {
  double score = 0.0;
  int argmax_position = -1;
  bool scoreable = true;
  CallCounters counters;
};

ScoredPrompt score_one(const ToyDenoiser& model, const Vocabulary& vocab,
                       const TextEncoder& enc, const NoiseSchedule& sched,
                       const Prompt& prompt, const DetectorConfig& cfg,
                       const EvalOptions& opts) {
  ScoredPrompt out;
  if (prompt.k_count() == 0) {
    out.scoreable = false;
    return out;
  }
  switch (opts.method) {
    case Method::ActivationVariation: {
      auto fv = feature_vector(model, prompt, vocab, enc, cfg, sched, &out.counters);
      out.score = score(fv, cfg.score_rule);
      size_t argmax = 0;
      for (size_t i = 1; i < fv.values.size(); ++i) {
        if (fv.values[i] > fv.values[argmax]) argmax = i;
      }
      out.argmax_position = fv.positions[argmax];
      break;
    }
    case Method::NcVariation: {
      int t = sched.steps() - cfg.t_step + 1;
      double sig = sched.sigma(t);
      Rng rng(cfg.noise_seed);
      std::vector<double> anchor = model.data_mean();
      for (auto& v : anchor) v += sig * rng.normal();
      Mat emb_c = enc.encode(prompt, &out.counters);
      ActivationTrace trace_c;
      model.forward(anchor, t, emb_c, sched, &trace_c, &out.counters);
      double best = 0.0;
      int best_pos = prompt.nonstop_positions[0];
      for (int k = 0; k < prompt.k_count(); ++k) {
        Prompt masked = mask_token(prompt, k, vocab);
        Mat emb_m = enc.encode(masked, &out.counters);
        ActivationTrace trace_m;
        model.forward(anchor, t, emb_m, sched, &trace_m, &out.counters);
        double v = nc_variation(trace_c, trace_m, opts.nc_threshold);
        if (v > best) {
          best = v;
          best_pos = prompt.nonstop_positions[k];
        }
      }
      out.score = best;
      out.argmax_position = best_pos;
      break;
    }
    case Method::RawNc: {
      int t = sched.steps() - cfg.t_step + 1;
      double sig = sched.sigma(t);
      Rng rng(cfg.noise_seed);
      std::vector<double> anchor = model.data_mean();
      for (auto& v : anchor) v += sig * rng.normal();
      Mat emb_c = enc.encode(prompt, &out.counters);
      ActivationTrace trace_c;
      model.forward(anchor, t, emb_c, sched, &trace_c, &out.counters);
      out.score = neuron_coverage(trace_c, opts.nc_threshold);
      break;
    }
  }
  return out;
}

}  // namespace

EvalReport evaluate(const ToyDenoiser& model, const Vocabulary& vocab,
                    const TextEncoder& enc, const NoiseSchedule& sched,
                    const LabeledPromptSet& set, const std::vector<Prompt>& clean_calibration,
                    const DetectorConfig& cfg, const EvalOptions& opts) {
  if (set.prompts.empty() || set.prompts.size() != set.labels.size()) {
    throw LengthMismatchError("evaluate: malformed prompt set");
  }
  auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.method = method_name(opts.method);

  ThresholdModel th;
  if (opts.reuse_threshold) {
    th = opts.threshold;
  } else {
    if (clean_calibration.size() < 2) {
      throw InsufficientCleanDataError("evaluate: need >= 2 calibration prompts");
    }
    std::vector<double> clean_scores(clean_calibration.size(), 0.0);
    std::vector<ScoredPrompt> buf(clean_calibration.size());
    parallel_for(clean_calibration.size(), opts.threads, [&](size_t i) {
      buf[i] = score_one(model, vocab, enc, sched, clean_calibration[i], cfg, opts);
    });
    for (size_t i = 0; i < buf.size(); ++i) clean_scores[i] = buf[i].score;
    th = fit_threshold(clean_scores, opts.m);
  }
  report.tau = th.tau;
  report.threshold_mu = th.mu;
  report.threshold_sigma = th.sigma;
  report.threshold_m = th.m;

  std::vector<ScoredPrompt> scored(set.prompts.size());
  parallel_for(set.prompts.size(), opts.threads, [&](size_t i) {
    scored[i] = score_one(model, vocab, enc, sched, set.prompts[i], cfg, opts);
  });

  CallCounters totals;
  for (size_t i = 0; i < scored.size(); ++i) {
    totals.merge(scored[i].counters);
    report.scores.push_back(scored[i].score);
    uint8_t verdict = scored[i].scoreable && scored[i].score > th.tau ? 1 : 0;
    report.verdicts.push_back(verdict);
    report.argmax_positions.push_back(scored[i].argmax_position);
    if (!scored[i].scoreable) {
      report.warnings.push_back("prompt " + std::to_string(i) +
                                ": NoMaskableTokens, benign by default");
    }
    if (set.labels[i]) {
      ++report.n_pos;
      verdict ? ++report.true_pos : ++report.false_neg;
    } else {
      ++report.n_neg;
      verdict ? ++report.false_pos : ++report.true_neg;
    }
  }
  report.encoder_calls = totals.encoder_calls;
  report.denoiser_forwards = totals.denoiser_forwards;
  report.auroc_value = auroc(report.scores, set.labels);
  report.acc = accuracy(report.verdicts, set.labels);

  if (opts.method != Method::RawNc) {
    auto audit = cost_audit(set, totals);
    report.mean_k = audit.mean_k;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

CostAuditRecord cost_audit(const LabeledPromptSet& set, const CallCounters& counters) {
  CostAuditRecord rec;
  long long k_total = 0;
  for (const auto& p : set.prompts) {
    rec.expected_calls += p.k_count() + 1;
    k_total += p.k_count();
  }
  rec.encoder_calls = counters.encoder_calls;
  rec.denoiser_forwards = counters.denoiser_forwards;
  rec.mean_k = set.prompts.empty()
                   ? 0.0
                   : static_cast<double>(k_total) / static_cast<double>(set.prompts.size());
  if (rec.encoder_calls != rec.expected_calls ||
      rec.denoiser_forwards != rec.expected_calls) {
    throw CounterMismatchError(
        "cost audit: expected " + std::to_string(rec.expected_calls) + " calls, saw " +
        std::to_string(rec.encoder_calls) + " encoder / " +
        std::to_string(rec.denoiser_forwards) + " denoiser");
  }
  return rec;
}

const char* ablation_axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::TStep: return "t_step";
    case AblationAxis::Layers: return "layers";
    case AblationAxis::Percentile: return "percentile";
    case AblationAxis::M: return "m";
  }
  return "t_step";
}

AblationAxis parse_ablation_axis(const std::string& name) {
  if (name == "t_step") return AblationAxis::TStep;
  if (name == "layers") return AblationAxis::Layers;
  if (name == "percentile") return AblationAxis::Percentile;
  if (name == "m") return AblationAxis::M;
  throw Error("unknown ablation axis '" + name + "'");
}

AblationGrid run_ablation(AblationAxis axis, const std::vector<std::string>& values,
                          const ToyDenoiser& model, const Vocabulary& vocab,
                          const TextEncoder& enc, const NoiseSchedule& sched,
                          const LabeledPromptSet& set,
                          const std::vector<Prompt>& clean_calibration,
                          const DetectorConfig& base_cfg, const EvalOptions& base_opts) {
  if (values.size() < 2) throw Error("ablation: need at least two axis values");
  AblationGrid grid;
  grid.axis = axis;
  grid.values = values;
  for (const auto& value : values) {
    DetectorConfig cfg = base_cfg;
    EvalOptions opts = base_opts;
    switch (axis) {
      case AblationAxis::TStep:
        cfg.t_step = std::stoi(value);
        break;
      case AblationAxis::Layers:
        cfg.selection = LayerSelection::parse(value);
        break;
      case AblationAxis::Percentile:
        cfg.score_rule = ScoreRule::parse(value);
        break;
      case AblationAxis::M:
        opts.m = std::stod(value);
        break;
    }
    grid.reports.push_back(
        evaluate(model, vocab, enc, sched, set, clean_calibration, cfg, opts));
  }
  return grid;
}

IterationCost cost_full_generation_scan(int t_iter) {
  return IterationCost{1.0, static_cast<double>(t_iter), 0.0, 0.0};
}

IterationCost cost_full_generation_scan_stats(int t_iter) {
  return IterationCost{1.0, static_cast<double>(t_iter), 0.0, 1.0};
}

IterationCost cost_multi_sample_graph(int t_iter, int images) {
  return IterationCost{static_cast<double>(images),
                       static_cast<double>(images) * t_iter,
                       static_cast<double>(images), 1.0};
}

IterationCost cost_token_masking(double k) {
  return IterationCost{k + 1.0, k + 1.0, 0.0, 0.0};
}

std::vector<StepCurvePoint> nc_variation_curves(
    const ToyDenoiser& model, const Vocabulary& vocab, const TextEncoder& enc,
    const NoiseSchedule& sched, const std::vector<int>& trigger_tokens, int n_samples,
    uint64_t seed, double nc_threshold, int step_stride) {
  if (step_stride < 1) throw Error("curves: step_stride must be >= 1");
  auto templates = PromptTemplates::builtin();
  LabeledPromptSet set =
      generate_prompt_set(vocab, templates, trigger_tokens, 2 * n_samples, seed);

  struct ClassSamples {
    std::string name;
    std::vector<std::pair<Prompt, Prompt>> pairs;  // (prompt, masked prompt)
  };
  ClassSamples trig{"trigger-masked", {}};
  ClassSamples mal_benign{"benign-masked-malicious", {}};
  ClassSamples ben{"benign-masked", {}};

  Rng rng(seed ^ 0xabcdef1234567ull);
  for (size_t i = 0; i < set.prompts.size(); ++i) {
    const Prompt& p = set.prompts[i];
    if (p.k_count() == 0) continue;
    if (set.labels[i]) {
      // locate the trigger's first token position
      int trig_pos = -1;
      for (size_t j = 0; j + set.trigger_tokens.size() <= p.token_ids.size(); ++j) {
        bool hit = true;
        for (size_t q = 0; q < set.trigger_tokens.size(); ++q) {
          if (p.token_ids[j + q] != set.trigger_tokens[q]) {
            hit = false;
            break;
          }
        }
        if (hit) {
          trig_pos = static_cast<int>(j);
          break;
        }
      }
      if (trig_pos < 0) continue;
      trig.pairs.emplace_back(p, mask_position(p, trig_pos, vocab));
      std::vector<int> others;
      for (int pos : p.nonstop_positions) {
        if (pos < trig_pos ||
            pos >= trig_pos + static_cast<int>(set.trigger_tokens.size())) {
          others.push_back(pos);
        }
      }
      if (!others.empty()) {
        int pos = others[rng.integer(others.size())];
        mal_benign.pairs.emplace_back(p, mask_position(p, pos, vocab));
      }
    } else {
      int pos = p.nonstop_positions[rng.integer(p.nonstop_positions.size())];
      ben.pairs.emplace_back(p, mask_position(p, pos, vocab));
    }
  }

  std::vector<StepCurvePoint> points;
  DetectorConfig cfg;
  for (int step = 1; step <= sched.steps(); step += step_stride) {
    int t = sched.steps() - step + 1;
    double sig = sched.sigma(t);
    Rng arng(cfg.noise_seed);
    std::vector<double> anchor = model.data_mean();
    for (auto& v : anchor) v += sig * arng.normal();
    for (const auto* cls : {&trig, &mal_benign, &ben}) {
      double sum = 0.0, sum2 = 0.0;
      size_t n = cls->pairs.size();
      if (n == 0) continue;
      for (const auto& [p, masked] : cls->pairs) {
        ActivationTrace ta, tb;
        model.forward(anchor, t, enc.encode(p), sched, &ta);
        model.forward(anchor, t, enc.encode(masked), sched, &tb);
        double v = nc_variation(ta, tb, nc_threshold);
        sum += v;
        sum2 += v * v;
      }
      double mean = sum / static_cast<double>(n);
      double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
      points.push_back(StepCurvePoint{step, cls->name, mean, std::sqrt(var)});
    }
  }
  return points;
}

void write_eval_json(const EvalReport& report, const std::string& path,
                     const std::string& header_meta) {
  nlohmann::json j{{"meta", header_meta},
                   {"method", report.method},
                   {"auroc", report.auroc_value},
                   {"acc", report.acc},
                   {"n_pos", report.n_pos},
                   {"n_neg", report.n_neg},
                   {"true_pos", report.true_pos},
                   {"true_neg", report.true_neg},
                   {"false_pos", report.false_pos},
                   {"false_neg", report.false_neg},
                   {"encoder_calls", report.encoder_calls},
                   {"denoiser_forwards", report.denoiser_forwards},
                   {"mean_k", report.mean_k},
                   {"tau", report.tau},
                   {"threshold_mu", report.threshold_mu},
                   {"threshold_sigma", report.threshold_sigma},
                   {"threshold_m", report.threshold_m},
                   {"warnings", report.warnings}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write eval report: " + path);
  out << j.dump(2) << '\n';
}

void write_eval_csv(const EvalReport& report, const std::string& path,
                    const std::string& header_meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write eval csv: " + path);
  out << "# " << header_meta << '\n';
  out << "metric,value\n";
  char buf[96];
  auto row = [&](const char* key, double value) {
    std::snprintf(buf, sizeof(buf), "%s,%.10g\n", key, value);
    out << buf;
  };
  out << "method," << report.method << '\n';
  row("auroc", report.auroc_value);
  row("acc", report.acc);
  row("n_pos", report.n_pos);
  row("n_neg", report.n_neg);
  row("true_pos", report.true_pos);
  row("true_neg", report.true_neg);
  row("false_pos", report.false_pos);
  row("false_neg", report.false_neg);
  row("encoder_calls", static_cast<double>(report.encoder_calls));
  row("denoiser_forwards", static_cast<double>(report.denoiser_forwards));
  row("mean_k", report.mean_k);
  row("tau", report.tau);
  row("threshold_mu", report.threshold_mu);
  row("threshold_sigma", report.threshold_sigma);
  row("threshold_m", report.threshold_m);
}

void write_verdicts_csv(const LabeledPromptSet& set, const EvalReport& report,
                        const Vocabulary& vocab, const std::string& path,
                        const std::string& header_meta) {
  if (set.prompts.size() != report.scores.size()) {
    throw LengthMismatchError("verdict csv: set/report size mismatch");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write verdicts: " + path);
  out << "# " << header_meta << '\n';
  out << "prompt_id,score,tau,verdict,argmax_position,warnings,prompt\n";
  char buf[128];
  for (size_t i = 0; i < set.prompts.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%d,%d,", i, report.scores[i],
                  report.tau, report.verdicts[i] ? 1 : 0, report.argmax_positions[i]);
    const char* warn = report.argmax_positions[i] < 0 ? "NoMaskableTokens" : "";
    out << buf << warn << ',' << '"' << prompt_text(set.prompts[i], vocab) << '"' << '\n';
  }
}

void write_ablation_csv(const AblationGrid& grid, const std::string& path,
                        const std::string& header_meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ablation grid: " + path);
  out << "# " << header_meta << '\n';
  out << "axis,value,metric,score\n";
  char buf[160];
  const char* axis = ablation_axis_name(grid.axis);
  for (size_t i = 0; i < grid.values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s,%s,auroc,%.10g\n", axis, grid.values[i].c_str(),
                  grid.reports[i].auroc_value);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%s,%s,acc,%.10g\n", axis, grid.values[i].c_str(),
                  grid.reports[i].acc);
    out << buf;
  }
}

void write_curves_csv(const std::vector<StepCurvePoint>& points, const std::string& path,
                      const std::string& header_meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curves: " + path);
  out << "# " << header_meta << '\n';
  out << "step,token_class,mean,stddev\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.10g,%.10g\n", p.step, p.token_class.c_str(),
                  p.mean, p.stddev);
    out << buf;
  }
}

}  // namespace actscan
