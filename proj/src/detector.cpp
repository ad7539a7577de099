#include "actscan/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace actscan {

std::string ScoreRule::name() const {
  switch (mode) {
    case Mode::MeanAll: return "mean";
    case Mode::ExcludeMax: return "exmax";
    case Mode::Percentile: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", percentile);
      return buf;
    }
  }
  return "mean";
}

ScoreRule ScoreRule::parse(const std::string& name) {
  ScoreRule rule;
  if (name == "mean") {
    rule.mode = Mode::MeanAll;
  } else if (name == "exmax") {
    rule.mode = Mode::ExcludeMax;
  } else {
    rule.mode = Mode::Percentile;
    try {
      rule.percentile = std::stod(name);
    } catch (const std::exception&) {
      throw Error("unknown score rule '" + name + "'");
    }
    if (!(rule.percentile > 0.0 && rule.percentile < 1.0)) {
      throw Error("score percentile must lie in (0, 1)");
    }
  }
  return rule;
}

void DetectorConfig::validate(int t_iter) const {
  if (t_step < 1 || t_step > t_iter) {
    throw Error("detector: t_step must lie in [1, T_iter]");
  }
  if (score_rule.mode == ScoreRule::Mode::Percentile &&
      !(score_rule.percentile > 0.0 && score_rule.percentile < 1.0)) {
    throw Error("detector: percentile must lie in (0, 1)");
  }
  if (!(distance_floor > 0.0)) {
    throw Error("detector: distance_floor must be positive");
  }
}

FeatureVector feature_vector(const ToyDenoiser& model, const Prompt& c,
                             const Vocabulary& vocab, const TextEncoder& enc,
                             const DetectorConfig& cfg, const NoiseSchedule& sched,
                             CallCounters* counters) {
  cfg.validate(sched.steps());
  int k = c.k_count();
  if (k == 0) {
    throw NoMaskableTokensError("feature_vector: prompt has no maskable tokens");
  }

  // Generation step t_step runs at diffusion time T - t_step + 1; the same
  // anchor state serves the prompt and every masked variant.
  int t = sched.steps() - cfg.t_step + 1;
  double sig = sched.sigma(t);
  Rng rng(cfg.noise_seed);
  std::vector<double> anchor = model.data_mean();
  for (auto& v : anchor) v += sig * rng.normal();

  Mat emb_c = enc.encode(c, counters);
  ActivationTrace trace_c;
  model.forward(anchor, t, emb_c, sched, &trace_c, counters);

  FeatureVector out;
  out.deltas.reserve(k);
  out.dists.reserve(k);
  out.values.reserve(k);
  out.positions.reserve(k);
  for (int i = 0; i < k; ++i) {
    Prompt masked = mask_token(c, i, vocab);
    Mat emb_m = enc.encode(masked, counters);
    ActivationTrace trace_m;
    model.forward(anchor, t, emb_m, sched, &trace_m, counters);
    double delta = delta_model(trace_c, trace_m, cfg.selection);
    double dist = embedding_distance(emb_c, emb_m);
    out.deltas.push_back(delta);
    out.dists.push_back(dist);
    out.values.push_back(delta / std::max(dist, cfg.distance_floor));
    out.positions.push_back(c.nonstop_positions[i]);
  }
  return out;
}

double score_values(const std::vector<double>& values, const ScoreRule& rule) {
  if (values.empty()) throw Error("score: empty feature vector");
  double vmax = *std::max_element(values.begin(), values.end());

  std::vector<double> kept;
  switch (rule.mode) {
    case ScoreRule::Mode::MeanAll:
      kept = values;
      break;
    case ScoreRule::Mode::ExcludeMax: {
      // drop a single instance of the maximum
      bool dropped = false;
      for (double v : values) {
        if (!dropped && v == vmax) {
          dropped = true;
          continue;
        }
        kept.push_back(v);
      }
      break;
    }
    case ScoreRule::Mode::Percentile: {
      // nearest-rank percentile: value at index ceil(p * K) of the
      // ascending sort; entries >= that value are excluded.
      std::vector<double> sorted = values;
      std::sort(sorted.begin(), sorted.end());
      size_t rank = static_cast<size_t>(
          std::ceil(rule.percentile * static_cast<double>(sorted.size())));
      rank = std::max<size_t>(rank, 1);
      double q = sorted[rank - 1];
      for (double v : values) {
        if (v < q) kept.push_back(v);
      }
      break;
    }
  }
  if (kept.empty()) kept = values;  // degenerate vectors fall back to the plain mean
  double mean = 0.0;
  for (double v : kept) mean += v;
  mean /= static_cast<double>(kept.size());
  return vmax / mean;
}

double score(const FeatureVector& v, const ScoreRule& rule) {
  return score_values(v.values, rule);
}

ThresholdModel fit_threshold(const std::vector<double>& clean_scores, double m) {
  if (clean_scores.size() < 2) {
    throw InsufficientCleanDataError("fit_threshold: need at least two clean scores");
  }
  ThresholdModel th;
  th.m = m;
  th.n_calibration = static_cast<int>(clean_scores.size());
  double mu = 0.0;
  for (double s : clean_scores) mu += s;
  mu /= static_cast<double>(clean_scores.size());
  double var = 0.0;
  for (double s : clean_scores) var += (s - mu) * (s - mu);
  var /= static_cast<double>(clean_scores.size());  // population convention
  th.mu = mu;
  th.sigma = std::sqrt(var);
  th.tau = th.mu + th.m * th.sigma;
  return th;
}

void save_threshold(const ThresholdModel& th, const std::string& path) {
  nlohmann::json j{{"mu", th.mu},
                   {"sigma", th.sigma},
                   {"m", th.m},
                   {"tau", th.tau},
                   {"n_calibration", th.n_calibration},
                   {"config_hash", th.config_hash}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write threshold file: " + path);
  out << j.dump(2) << '\n';
}

ThresholdModel load_threshold(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open threshold file: " + path);
  nlohmann::json j;
  in >> j;
  ThresholdModel th;
  th.mu = j.at("mu").get<double>();
  th.sigma = j.at("sigma").get<double>();
  th.m = j.at("m").get<double>();
  th.tau = j.at("tau").get<double>();
  th.n_calibration = j.value("n_calibration", 0);
  th.config_hash = j.value("config_hash", "");
  if (th.sigma < 0.0) throw Error("threshold: sigma must be nonnegative");
  return th;
}

DetectionVerdict detect(const ToyDenoiser& model, const Prompt& c, const Vocabulary& vocab,
                        const TextEncoder& enc, const ThresholdModel& th,
                        const DetectorConfig& cfg, const NoiseSchedule& sched,
                        CallCounters* counters) {
  DetectionVerdict verdict;
  if (c.k_count() == 0) {
    verdict.scoreable = false;
    verdict.is_malicious = false;
    verdict.score = 0.0;
    verdict.warnings.push_back("NoMaskableTokens: all-stopword prompt, benign by default");
    return verdict;
  }
  auto fv = feature_vector(model, c, vocab, enc, cfg, sched, counters);
  verdict.score = score(fv, cfg.score_rule);
  verdict.is_malicious = verdict.score > th.tau;
  size_t argmax = 0;
  for (size_t i = 1; i < fv.values.size(); ++i) {
    if (fv.values[i] > fv.values[argmax]) argmax = i;
  }
  verdict.argmax_position = fv.positions[argmax];
  return verdict;
}

}  // namespace actscan
