// Command-line front end: reproducible runs driven by a JSON config with
// flag overrides (flags win). Exit codes: 0 success, 1 user/config error,
// 2 internal assertion (counter mismatch, bound violation).

#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "actscan/checkpoint.hpp"
#include "actscan/experiment.hpp"
#include "actscan/theorem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace actscan;

namespace {

constexpr const char* kToolVersion = "actscan 0.1.0";

struct App {
  json cfg = json::object();
  std::string out_dir = "out";
  std::optional<uint64_t> seed_model_flag;
  std::optional<uint64_t> seed_data_flag;
  std::optional<int> threads_flag;

  template <typename T>
  T get(const std::string& pointer, T fallback) const {
    const json* node = &cfg;
    std::istringstream path(pointer);
    std::string key;
    while (std::getline(path, key, '.')) {
      if (!node->is_object() || !node->contains(key)) return fallback;
      node = &(*node)[key];
    }
    return node->get<T>();
  }

  uint64_t seed_model() const {
    return seed_model_flag ? *seed_model_flag : get<uint64_t>("seed_model", 1001);
  }
  uint64_t seed_data() const {
    return seed_data_flag ? *seed_data_flag : get<uint64_t>("seed_data", 1002);
  }
  int threads() const { return threads_flag ? *threads_flag : get<int>("threads", 1); }

  std::string config_hash() const {
    json effective = cfg;
    effective["seed_model"] = seed_model();
    effective["seed_data"] = seed_data();
    return to_hex(fnv1a64(effective.dump()));
  }
  std::string header_meta() const {
    return std::string("tool=") + kToolVersion + " config_hash=" + config_hash();
  }

  NoiseSchedule schedule() const {
    return NoiseSchedule::geometric(get<double>("schedule.sigma_min", 0.02),
                                    get<double>("schedule.sigma_max", 20.0),
                                    get<int>("schedule.steps", 50));
  }

  ArchConfig arch(int data_dim) const {
    ArchConfig a;
    a.data_dim = data_dim;
    a.text_dim = get<int>("arch.text_dim", 16);
    a.time_dim = get<int>("arch.time_dim", 4);
    a.grid = get<int>("arch.grid", 4);
    a.attn_dim = get<int>("arch.attn_dim", 8);
    a.conv_channels = get<int>("arch.conv_channels", 2);
    a.n_self_attn = get<int>("arch.n_self_attn", 1);
    a.n_cross_attn = get<int>("arch.n_cross_attn", 1);
    a.n_conv = get<int>("arch.n_conv", 1);
    a.n_other_linear = get<int>("arch.n_other_linear", 3);
    a.time_steps = get<int>("schedule.steps", 50);
    return a;
  }

  DetectorConfig detector() const {
    DetectorConfig d;
    d.t_step = get<int>("detector.t_step", 1);
    d.score_rule = ScoreRule::parse(get<std::string>("detector.percentile", "0.75"));
    d.selection = LayerSelection::parse(get<std::string>("detector.layers", "all"));
    d.noise_seed = get<uint64_t>("detector.noise_seed", 2024);
    d.distance_floor = get<double>("detector.distance_floor", 1e-8);
    return d;
  }

  TrainConfig train_config(const NoiseSchedule& sched) const {
    TrainConfig t;
    t.steps = get<int>("train.steps", 6000);
    t.lr = get<double>("train.lr", 0.05);
    t.batch = get<int>("train.batch", 32);
    t.adaptive_alpha = get<double>("train.adaptive_alpha", 0.0);
    t.seed = seed_data();
    // The CLI default is the uniform-weight experiment configuration; the
    // raw schedule weights span six orders of magnitude and need a much
    // smaller learning rate ("elbo" with train.lr around 2e-4).
    std::string weights = get<std::string>("train.weights", "uniform");
    if (weights == "uniform") {
      t.loss_weights = uniform_loss_weights(sched.steps());
    } else if (weights != "elbo") {
      throw Error("train.weights must be 'elbo' or 'uniform'");
    }
    return t;
  }

  std::string out_path(const std::string& name) const {
    fs::create_directories(out_dir);
    return (fs::path(out_dir) / name).string();
  }

  void sidecar_log(const std::string& command) const {
    std::ofstream log(out_path("run.log"), std::ios::app);
    log << std::time(nullptr) << " " << command << " " << header_meta() << '\n';
  }
};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw IoError(what + " not found: " + path);
  }
}

void write_loss_curve(const std::vector<double>& curve, const std::string& path,
                      const std::string& meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss curve: " + path);
  out << "# " << meta << '\n';
  out << "step,loss\n";
  char buf[64];
  for (size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", i, curve[i]);
    out << buf;
  }
}

int cmd_train(const App& app, const std::string& vocab_path, const std::string& dataset_path) {
  require_file(vocab_path, "vocabulary file");
  require_file(dataset_path, "dataset file");
  auto vocab = load_vocabulary(vocab_path);
  auto ds = load_dataset(dataset_path);
  auto sched = app.schedule();
  sched.validate_for_data_norm(ds.max_norm());

  auto model = ToyDenoiser::init(app.arch(ds.dim()), app.seed_model());
  TextEncoder enc(vocab.size(), model.arch().text_dim, app.seed_model());
  auto result = train(model, ds, vocab, enc, sched, app.train_config(sched));

  Checkpoint ckpt{std::move(model), std::move(enc), std::move(vocab)};
  save_checkpoint(ckpt, app.out_path("checkpoint.json"));
  write_loss_curve(result.loss_curve, app.out_path("loss_curve.csv"), app.header_meta());
  app.sidecar_log("train");
  std::cout << "trained " << result.loss_curve.size() << " steps, final loss "
            << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n"
            << "checkpoint: " << app.out_path("checkpoint.json") << std::endl;
  return 0;
}

int cmd_inject(const App& app, const std::string& vocab_path, const std::string& dataset_path,
               const std::string& trigger, int target, const std::string& mode) {
  require_file(vocab_path, "vocabulary file");
  require_file(dataset_path, "dataset file");
  auto vocab = load_vocabulary(vocab_path);
  auto ds = load_dataset(dataset_path);
  BackdoorSpec spec;
  spec.trigger_token_ids = tokens_to_ids(vocab, trigger);
  spec.target_point_index = target;
  if (mode == "remap") {
    spec.mode = BackdoorSpec::Mode::PriorRemap;
  } else if (mode == "trained") {
    spec.mode = BackdoorSpec::Mode::TrainedPoison;
  } else {
    throw Error("mode must be 'remap' or 'trained'");
  }
  auto poisoned = inject_backdoor(ds, spec, vocab);
  save_dataset(poisoned, app.out_path("dataset_poisoned.json"));
  app.sidecar_log("inject");
  std::cout << "poisoned dataset: " << app.out_path("dataset_poisoned.json") << std::endl;
  return 0;
}

int cmd_detect(const App& app, const std::string& checkpoint_path,
               const std::string& threshold_path, const std::string& prompts_path) {
  require_file(checkpoint_path, "checkpoint");
  require_file(threshold_path, "threshold file");
  require_file(prompts_path, "prompts file");
  auto ckpt = load_checkpoint(checkpoint_path);
  auto th = load_threshold(threshold_path);
  auto sched = app.schedule();
  auto cfg = app.detector();

  std::ifstream in(prompts_path);
  std::string line;
  std::vector<std::string> texts;
  while (std::getline(in, line)) {
    if (!line.empty()) texts.push_back(line);
  }
  if (texts.empty()) throw EmptyPromptError("prompts file is empty");

  std::ofstream csv(app.out_path("verdicts.csv"));
  csv << "# " << app.header_meta() << '\n';
  csv << "prompt_id,score,tau,verdict,argmax_position,warnings,prompt\n";
  char buf[128];
  for (size_t i = 0; i < texts.size(); ++i) {
    auto prompt = tokenize(texts[i], ckpt.vocab);
    auto verdict = detect(ckpt.model, prompt, ckpt.vocab, ckpt.encoder, th, cfg, sched);
    std::string warn = verdict.warnings.empty() ? "" : verdict.warnings.front();
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%d,%d,", i, verdict.score, th.tau,
                  verdict.is_malicious ? 1 : 0, verdict.argmax_position);
    csv << buf << warn << ',' << '"' << texts[i] << '"' << '\n';
    std::cout << "prompt " << i << ": score=" << verdict.score << " tau=" << th.tau
              << " verdict=" << (verdict.is_malicious ? "malicious" : "benign");
    if (!warn.empty()) std::cout << " [" << warn << "]";
    std::cout << "\n";
  }
  app.sidecar_log("detect");
  std::cout << "verdicts: " << app.out_path("verdicts.csv") << std::endl;
  return 0;
}

struct EvalArtifacts {
  LabeledPromptSet set;
  std::vector<Prompt> clean;
  EvalReport report;
};

EvalArtifacts run_eval(const App& app, const Checkpoint& ckpt, Method method) {
  auto sched = app.schedule();
  auto cfg = app.detector();
  auto templates = PromptTemplates::builtin();
  std::string trigger = app.get<std::string>("eval.trigger", "sks");
  int n = app.get<int>("eval.n", 400);
  int n_cal = app.get<int>("eval.calibration_n", 200);

  EvalArtifacts art;
  art.set = generate_prompt_set(ckpt.vocab, templates, tokens_to_ids(ckpt.vocab, trigger),
                                n, app.seed_data());
  art.clean = generate_clean_prompts(ckpt.vocab, templates, n_cal,
                                     app.seed_data() ^ 0x5eedcafe);
  EvalOptions opts;
  opts.method = method;
  opts.m = app.get<double>("detector.m", 1.2);
  opts.nc_threshold = app.get<double>("detector.nc_threshold", 0.25);
  opts.threads = app.threads();
  art.report = evaluate(ckpt.model, ckpt.vocab, ckpt.encoder, sched, art.set, art.clean,
                        cfg, opts);
  return art;
}

int cmd_eval(const App& app, const std::string& checkpoint_path, const std::string& method) {
  require_file(checkpoint_path, "checkpoint");
  auto ckpt = load_checkpoint(checkpoint_path);
  auto art = run_eval(app, ckpt, parse_method(method));

  write_eval_json(art.report, app.out_path("eval_report.json"), app.header_meta());
  write_eval_csv(art.report, app.out_path("eval_report.csv"), app.header_meta());
  write_verdicts_csv(art.set, art.report, ckpt.vocab, app.out_path("verdicts.csv"),
                     app.header_meta());
  ThresholdModel th;
  th.mu = art.report.threshold_mu;
  th.sigma = art.report.threshold_sigma;
  th.m = art.report.threshold_m;
  th.tau = art.report.tau;
  th.n_calibration = static_cast<int>(art.clean.size());
  th.config_hash = app.config_hash();
  save_threshold(th, app.out_path("threshold.json"));
  {
    std::ofstream prompts(app.out_path("prompts.txt"));
    for (const auto& p : art.set.prompts) {
      prompts << prompt_text(p, ckpt.vocab) << '\n';
    }
  }
  app.sidecar_log("eval");
  std::cout << "method=" << art.report.method << " auroc=" << art.report.auroc_value
            << " acc=" << art.report.acc << " tau=" << art.report.tau
            << " mean_k=" << art.report.mean_k
            << " calls=" << art.report.denoiser_forwards << std::endl;
  return 0;
}

int cmd_ablate(const App& app, const std::string& checkpoint_path, const std::string& axis,
               std::vector<std::string> values) {
  require_file(checkpoint_path, "checkpoint");
  auto ckpt = load_checkpoint(checkpoint_path);
  if (values.empty()) {
    values = app.get<std::vector<std::string>>("ablate.values", {});
  }
  auto parsed_axis = parse_ablation_axis(axis);

  auto sched = app.schedule();
  auto cfg = app.detector();
  auto templates = PromptTemplates::builtin();
  std::string trigger = app.get<std::string>("eval.trigger", "sks");
  auto set = generate_prompt_set(ckpt.vocab, templates,
                                 tokens_to_ids(ckpt.vocab, trigger),
                                 app.get<int>("eval.n", 400), app.seed_data());
  auto clean = generate_clean_prompts(ckpt.vocab, templates,
                                      app.get<int>("eval.calibration_n", 200),
                                      app.seed_data() ^ 0x5eedcafe);
  EvalOptions opts;
  opts.m = app.get<double>("detector.m", 1.2);
  opts.nc_threshold = app.get<double>("detector.nc_threshold", 0.25);
  opts.threads = app.threads();

  auto grid = run_ablation(parsed_axis, values, ckpt.model, ckpt.vocab, ckpt.encoder,
                           sched, set, clean, cfg, opts);
  write_ablation_csv(grid, app.out_path("ablation.csv"), app.header_meta());
  app.sidecar_log("ablate");
  for (size_t i = 0; i < grid.values.size(); ++i) {
    std::cout << ablation_axis_name(grid.axis) << "=" << grid.values[i]
              << " auroc=" << grid.reports[i].auroc_value
              << " acc=" << grid.reports[i].acc << "\n";
  }
  std::cout << "grid: " << app.out_path("ablation.csv") << std::endl;
  return 0;
}

int cmd_verify_theorem(const App& app, const std::vector<std::string>& dataset_paths) {
  auto sigmas = log_spaced(app.get<double>("theorem.sigma_min", 0.02),
                           app.get<double>("theorem.sigma_max", 20.0),
                           app.get<int>("theorem.sigma_points", 20));
  auto epsilons = app.get<std::vector<double>>("theorem.epsilons", {1e-2, 1e-4});
  uint64_t seed = app.seed_data();

  std::vector<TheoremAuditCase> cases;
  if (dataset_paths.empty()) {
    cases = builtin_theorem_grid();
  } else {
    for (const auto& path : dataset_paths) {
      require_file(path, "dataset file");
      cases.push_back(TheoremAuditCase{fs::path(path).stem().string(), load_dataset(path)});
    }
  }

  std::vector<std::pair<std::string, TheoremReport>> reports;
  bool all_ok = true;
  for (size_t i = 0; i < cases.size(); ++i) {
    auto pairs = all_condition_pairs(cases[i].ds);
    auto report = verify_theorem1(cases[i].ds, sigmas, pairs, epsilons, seed,
                                  static_cast<int>(i));
    int violations = 0;
    for (const auto& row : report.rows) {
      if (!row.satisfied) ++violations;
    }
    std::cout << "dataset " << cases[i].name << ": rows=" << report.rows.size()
              << " violations=" << violations
              << " critical_exists=" << (report.all_critical_exist ? "yes" : "no") << "\n";
    all_ok = all_ok && report.all_satisfied;
    reports.emplace_back(cases[i].name, std::move(report));
  }
  write_theorem_csv(reports, app.out_path("theorem.csv"), app.header_meta());
  app.sidecar_log("verify-theorem");
  std::cout << "report: " << app.out_path("theorem.csv") << std::endl;
  if (!all_ok) {
    std::cerr << "bound violation detected" << std::endl;
    return 2;
  }
  return 0;
}

int cmd_plot_data(const App& app, const std::string& checkpoint_path, int n, int stride) {
  require_file(checkpoint_path, "checkpoint");
  auto ckpt = load_checkpoint(checkpoint_path);
  auto sched = app.schedule();
  std::string trigger = app.get<std::string>("eval.trigger", "sks");
  auto points = nc_variation_curves(ckpt.model, ckpt.vocab, ckpt.encoder, sched,
                                    tokens_to_ids(ckpt.vocab, trigger), n,
                                    app.seed_data(),
                                    app.get<double>("detector.nc_threshold", 0.25), stride);
  write_curves_csv(points, app.out_path("curves.csv"), app.header_meta());
  app.sidecar_log("plot-data");
  std::cout << "curves: " << app.out_path("curves.csv") << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"toy conditional diffusion engine with an activation-variation "
               "input screen"};
  cli.require_subcommand(1);
  cli.fallthrough();

  App app;
  std::string config_path;
  cli.add_option("--config", config_path, "JSON config file (flags override)");
  uint64_t seed_model = 0, seed_data = 0;
  int threads = 0;
  auto* opt_sm = cli.add_option("--seed-model", seed_model, "model/encoder seed");
  auto* opt_sd = cli.add_option("--seed-data", seed_data, "data/batch seed");
  auto* opt_th = cli.add_option("--threads", threads, "worker thread cap");
  cli.add_option("--out", app.out_dir, "output directory");

  std::string vocab_path = "data/vocab.txt";
  std::string dataset_path = "data/dataset.json";
  std::string checkpoint_path = "out/checkpoint.json";
  std::string threshold_path = "out/threshold.json";
  std::string prompts_path;
  std::string trigger = "sks";
  std::string mode = "trained";
  std::string method = "actvar";
  std::string axis = "t_step";
  std::vector<std::string> axis_values;
  std::vector<std::string> theorem_datasets;
  int target = 3;
  int plot_n = 50;
  int plot_stride = 1;

  auto* sc_train = cli.add_subcommand("train", "train a denoiser on a dataset");
  sc_train->add_option("--vocab", vocab_path, "vocabulary file");
  sc_train->add_option("--dataset", dataset_path, "dataset file");

  auto* sc_inject = cli.add_subcommand("inject", "remap priors of trigger conditions");
  sc_inject->add_option("--vocab", vocab_path, "vocabulary file");
  sc_inject->add_option("--dataset", dataset_path, "dataset file");
  sc_inject->add_option("--trigger", trigger, "trigger token(s), space separated");
  sc_inject->add_option("--target", target, "target point index");
  sc_inject->add_option("--mode", mode, "remap | trained");

  auto* sc_detect = cli.add_subcommand("detect", "score prompts against a threshold");
  sc_detect->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  sc_detect->add_option("--threshold", threshold_path, "calibrated threshold file");
  sc_detect->add_option("--prompts", prompts_path, "prompt file, one per line")->required();

  auto* sc_eval = cli.add_subcommand("eval", "labeled-set evaluation with calibration");
  sc_eval->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  sc_eval->add_option("--method", method, "nc | ncvar | actvar");

  auto* sc_ablate = cli.add_subcommand("ablate", "sweep one detector axis");
  sc_ablate->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  sc_ablate->add_option("--axis", axis, "t_step | layers | percentile | m");
  sc_ablate->add_option("--values", axis_values, "axis values");

  auto* sc_theorem = cli.add_subcommand("verify-theorem",
                                        "audit the prediction-difference bound");
  sc_theorem->add_option("--dataset", theorem_datasets,
                         "dataset file(s); default: built-in audit grid");

  auto* sc_plot = cli.add_subcommand("plot-data", "per-step coverage-variation curves");
  sc_plot->add_option("--checkpoint", checkpoint_path, "model checkpoint");
  sc_plot->add_option("--n", plot_n, "samples per token class");
  sc_plot->add_option("--stride", plot_stride, "step stride");

  CLI11_PARSE(cli, argc, argv);

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open config file: " + config_path);
      in >> app.cfg;
      if (app.cfg.contains("out") && app.out_dir == "out") {
        app.out_dir = app.cfg["out"].get<std::string>();
      }
      if (app.cfg.contains("vocab")) vocab_path = app.cfg["vocab"].get<std::string>();
      if (app.cfg.contains("dataset") && dataset_path == "data/dataset.json") {
        dataset_path = app.cfg["dataset"].get<std::string>();
      }
      if (app.cfg.contains("checkpoint") && checkpoint_path == "out/checkpoint.json") {
        checkpoint_path = app.cfg["checkpoint"].get<std::string>();
      }
    }
    if (opt_sm->count()) app.seed_model_flag = seed_model;
    if (opt_sd->count()) app.seed_data_flag = seed_data;
    if (opt_th->count()) app.threads_flag = threads;

    if (sc_train->parsed()) return cmd_train(app, vocab_path, dataset_path);
    if (sc_inject->parsed()) return cmd_inject(app, vocab_path, dataset_path, trigger,
                                               target, mode);
    if (sc_detect->parsed()) return cmd_detect(app, checkpoint_path, threshold_path,
                                               prompts_path);
    if (sc_eval->parsed()) return cmd_eval(app, checkpoint_path, method);
    if (sc_ablate->parsed()) return cmd_ablate(app, checkpoint_path, axis, axis_values);
    if (sc_theorem->parsed()) return cmd_verify_theorem(app, theorem_datasets);
    if (sc_plot->parsed()) return cmd_plot_data(app, checkpoint_path, plot_n, plot_stride);
  } catch (const CounterMismatchError& e) {
    std::cerr << "internal assertion: " << e.what() << std::endl;
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
