#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"

#include "actscan/checkpoint.hpp"
#include "actscan/diffusion.hpp"
#include "actscan/train.hpp"

using namespace actscan;

namespace {

ArchConfig small_arch(int steps = 8) {
  ArchConfig arch;
  arch.data_dim = 2;
  arch.time_steps = steps;
  return arch;
}

struct GradCheckSetup {
  ToyDenoiser model;
  NoiseSchedule sched;
  Mat emb;
  struct Tuple {
    std::vector<double> x, x0;
    int t;
  };
  std::vector<Tuple> tuples;
  std::vector<double> weights;

  double loss(ToyDenoiser& m) const {
    double total = 0.0;
    ToyDenoiser::Cache cache;
    for (const auto& tp : tuples) {
      auto pred = m.forward_cached(tp.x, tp.t, emb, sched, cache);
      double e2 = 0.0;
      for (size_t i = 0; i < pred.size(); ++i) {
        double e = pred[i] - tp.x0[i];
        e2 += e * e;
      }
      total += weights[tp.t - 1] * e2;
    }
    return total;
  }

  std::vector<double> analytic_grad() const {
    std::vector<double> grad(model.param_count(), 0.0);
    ToyDenoiser::Cache cache;
    for (const auto& tp : tuples) {
      auto pred = model.forward_cached(tp.x, tp.t, emb, sched, cache);
      std::vector<double> gp(pred.size());
      for (size_t i = 0; i < pred.size(); ++i) {
        gp[i] = 2.0 * weights[tp.t - 1] * (pred[i] - tp.x0[i]);
      }
      model.backward(cache, gp, nullptr, grad);
    }
    return grad;
  }
};

GradCheckSetup make_grad_setup(uint64_t seed, std::vector<double> weights) {
  GradCheckSetup s{ToyDenoiser::init(small_arch(), seed),
                   NoiseSchedule::geometric(0.02, 20.0, 8), Mat{}, {}, std::move(weights)};
  auto vocab = builtin_vocabulary();
  TextEncoder enc(vocab.size(), 16, seed + 1);
  s.emb = enc.encode(tokenize("the red cat sits near the blix boat", vocab));
  Rng rng(seed + 2);
  for (int t = 1; t <= s.sched.steps(); ++t) {
    for (int rep = 0; rep < 2; ++rep) {
      GradCheckSetup::Tuple tp;
      tp.x0 = {rng.uniform(), rng.uniform()};
      tp.t = t;
      double sg = s.sched.sigma(t);
      tp.x = {tp.x0[0] + sg * rng.normal(), tp.x0[1] + sg * rng.normal()};
      s.tuples.push_back(tp);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("init covers every layer kind deterministically") {
  auto model = ToyDenoiser::init(small_arch(), 42);
  std::map<LayerKind, int> counts;
  for (const auto& d : model.registry()) counts[d.kind]++;
  CHECK(counts[LayerKind::OtherLinear] >= 1);
  CHECK(counts[LayerKind::SelfAttnLinear] >= 1);
  CHECK(counts[LayerKind::CrossAttnLinear] >= 1);
  CHECK(counts[LayerKind::Conv] >= 1);

  auto again = ToyDenoiser::init(small_arch(), 42);
  CHECK(model.params() == again.params());

  auto other = ToyDenoiser::init(small_arch(), 43);
  CHECK(model.params() != other.params());

  ArchConfig no_conv = small_arch();
  no_conv.n_conv = 0;
  CHECK_THROWS_AS(ToyDenoiser::init(no_conv, 1), InvalidArchError);
  ArchConfig thin = small_arch();
  thin.n_other_linear = 1;
  CHECK_THROWS_AS(ToyDenoiser::init(thin, 1), InvalidArchError);
}

TEST_CASE("traced forward records every layer without perturbing the output") {
  auto model = ToyDenoiser::init(small_arch(), 42);
  auto sched = NoiseSchedule::geometric(0.02, 20.0, 8);
  auto vocab = builtin_vocabulary();
  TextEncoder enc(vocab.size(), 16, 5);
  Mat emb = enc.encode(tokenize("a golden bird glows", vocab));

  auto [pred, trace] = forward_traced(model, {0.3, 0.4}, 3, emb, sched);
  CHECK(trace.size() == model.registry().size());

  auto plain = model.forward({0.3, 0.4}, 3, emb, sched);
  CHECK(pred == plain);  // bitwise

  for (size_t i = 0; i < trace.size(); ++i) {
    const auto& rec = trace.records[i];
    const auto& desc = model.registry()[i];
    CHECK(rec.kind == desc.kind);
    size_t expect = 1;
    for (int s : rec.shape) expect *= static_cast<size_t>(s);
    CHECK(rec.values.size() == expect);
    if (rec.kind == LayerKind::Conv) {
      CHECK(rec.shape.size() == 3);
    } else {
      CHECK(rec.shape.size() == 2);
    }
  }

  CHECK_THROWS_AS(model.forward({0.3}, 3, emb, sched), ShapeMismatchError);
  CHECK_THROWS_AS(model.forward({0.3, 0.4}, 9, emb, sched), IndexOutOfRangeError);
  auto wrong_sched = NoiseSchedule::geometric(0.02, 20.0, 10);
  CHECK_THROWS_AS(model.forward({0.3, 0.4}, 3, emb, wrong_sched), ShapeMismatchError);

  // counters see each forward exactly once
  CallCounters counters;
  model.forward({0.3, 0.4}, 3, emb, sched, nullptr, &counters);
  forward_traced(model, {0.3, 0.4}, 3, emb, sched, &counters);
  CHECK(counters.denoiser_forwards == 2);
}

TEST_CASE("analytic gradients match central finite differences for all kinds") {
  auto setup = make_grad_setup(42, uniform_loss_weights(8));
  auto grad = setup.analytic_grad();

  // layer coverage sanity: every kind owns at least one checked parameter
  CHECK(setup.model.param_count() == grad.size());

  auto& model = setup.model;
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t i = 0; i < model.param_count(); ++i) {
    double orig = model.params()[i];
    model.params()[i] = orig + h;
    double lp = setup.loss(model);
    model.params()[i] = orig - h;
    double lm = setup.loss(model);
    model.params()[i] = orig;
    double fd = (lp - lm) / (2.0 * h);
    double rel = std::abs(grad[i] - fd) /
                 (std::max(std::abs(grad[i]), std::abs(fd)) + 1e-7);
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round-trips bitwise") {
  auto vocab = builtin_vocabulary();
  Checkpoint ckpt;
  ckpt.model = ToyDenoiser::init(small_arch(), 77);
  ckpt.model.set_data_mean({0.25, 0.75});
  ckpt.encoder = TextEncoder(vocab.size(), 16, 78);
  ckpt.vocab = vocab;

  auto path = std::filesystem::temp_directory_path() / "actscan_ckpt_test.json";
  save_checkpoint(ckpt, path.string());
  auto loaded = load_checkpoint(path.string());

  CHECK(loaded.model.params() == ckpt.model.params());
  CHECK(loaded.model.data_mean() == ckpt.model.data_mean());
  CHECK(loaded.vocab.tokens == vocab.tokens);
  CHECK(loaded.encoder.table().v == ckpt.encoder.table().v);

  auto sched = NoiseSchedule::geometric(0.02, 20.0, 8);
  Mat emb = ckpt.encoder.encode(tokenize("a quiet river drifts", vocab));
  auto a = ckpt.model.forward({0.1, 0.9}, 5, emb, sched);
  Mat emb2 = loaded.encoder.encode(tokenize("a quiet river drifts", loaded.vocab));
  auto b = loaded.model.forward({0.1, 0.9}, 5, emb2, sched);
  CHECK(a == b);  // bitwise forward reproduction

  // unknown format versions are rejected
  {
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    auto pos = text.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"format_version\": 9");
    std::ofstream out(path);
    out << text;
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("training reduces the loss and honors the no-op contract") {
  auto vocab = builtin_vocabulary();
  auto sched = NoiseSchedule::geometric(0.02, 20.0, 8);
  DiscreteDataset ds;
  ds.points = {{0.2, 0.3}, {0.8, 0.7}};
  ds.conditions = {"a red cat sits", "a blue dog runs"};
  ds.priors = {{0.9, 0.1}, {0.1, 0.9}};

  auto model = ToyDenoiser::init(small_arch(), 1);
  TextEncoder enc(vocab.size(), 16, 1);

  TrainConfig cfg;
  cfg.steps = 0;
  auto before = model.params();
  auto mean_before = model.data_mean();
  auto result0 = train(model, ds, vocab, enc, sched, cfg);
  CHECK(result0.loss_curve.empty());
  CHECK(model.params() == before);
  CHECK(model.data_mean() == mean_before);

  cfg.steps = 400;
  cfg.lr = 0.05;
  cfg.loss_weights = uniform_loss_weights(8);
  auto result = train(model, ds, vocab, enc, sched, cfg);
  REQUIRE(result.loss_curve.size() == 400);
  CHECK(result.loss_curve.back() < result.loss_curve.front());
  CHECK(model.data_mean() == ds.mean_point());

  // reproducibility end to end
  auto m2 = ToyDenoiser::init(small_arch(), 1);
  train(m2, ds, vocab, enc, sched, cfg);
  auto m3 = ToyDenoiser::init(small_arch(), 1);
  train(m3, ds, vocab, enc, sched, cfg);
  CHECK(m2.params() == m3.params());

  // divergence guard
  auto m4 = ToyDenoiser::init(small_arch(), 1);
  TrainConfig bad = cfg;
  bad.lr = 1e9;
  CHECK_THROWS_AS(train(m4, ds, vocab, enc, sched, bad), DivergenceDetectedError);
}

TEST_CASE("single-point dataset trains onto the closed-form denoiser") {
  auto vocab = builtin_vocabulary();
  auto sched = NoiseSchedule::geometric(0.02, 20.0, 8);
  DiscreteDataset ds;
  ds.points = {{0.4, 0.6}};
  ds.conditions = {"the shiny robot waits"};
  ds.priors = {{1.0}};

  auto model = ToyDenoiser::init(small_arch(), 3);
  TextEncoder enc(vocab.size(), 16, 3);
  TrainConfig cfg;
  cfg.steps = 6000;
  cfg.lr = 0.15;
  cfg.loss_weights = uniform_loss_weights(8);
  cfg.seed = 3;
  train(model, ds, vocab, enc, sched, cfg);

  // the optimal prediction equals the point everywhere; probe the sigma grid
  Mat emb = enc.encode(tokenize(ds.conditions[0], vocab));
  Rng rng(9);
  for (int t = 1; t <= sched.steps(); ++t) {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<double> x{0.4 + sched.sigma(t) * rng.normal(),
                            0.6 + sched.sigma(t) * rng.normal()};
      auto oracle = optimal_denoiser(x, t, 0, ds, sched);
      CHECK(oracle[0] == doctest::Approx(0.4).epsilon(1e-12));
      auto pred = model.forward(x, t, emb, sched);
      double err = std::hypot(pred[0] - oracle[0], pred[1] - oracle[1]);
      CHECK(err <= 0.05);
    }
  }
}

TEST_CASE("backdoor injection remaps only trigger conditions") {
  auto vocab = builtin_vocabulary();
  DiscreteDataset ds;
  ds.points = {{0.1, 0.1}, {0.5, 0.5}, {0.9, 0.9}};
  ds.conditions = {"a red cat sits", "a sks red cat sits", "the blue dog runs"};
  ds.priors = {{0.6, 0.2, 0.2}, {0.6, 0.2, 0.2}, {0.2, 0.6, 0.2}};
  ds.alpha_regular = true;
  ds.alpha = 0.2;

  BackdoorSpec spec;
  spec.trigger_token_ids = {vocab.id_of("sks")};
  spec.target_point_index = 2;

  auto poisoned = inject_backdoor(ds, spec, vocab);
  CHECK(poisoned.priors[0] == ds.priors[0]);  // bit-identical benign priors
  CHECK(poisoned.priors[2] == ds.priors[2]);
  CHECK(poisoned.priors[1][2] == doctest::Approx(0.98).epsilon(1e-15));
  CHECK(poisoned.priors[1][0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(poisoned.priors[1][1] == doctest::Approx(0.01).epsilon(1e-12));
  double sum = poisoned.priors[1][0] + poisoned.priors[1][1] + poisoned.priors[1][2];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(poisoned.alpha == doctest::Approx(0.01).epsilon(1e-12));
  CHECK_NOTHROW(poisoned.validate());

  BackdoorSpec absent;
  absent.trigger_token_ids = {vocab.id_of("blix")};
  absent.target_point_index = 0;
  CHECK_THROWS_AS(inject_backdoor(ds, absent, vocab), TriggerNotRepresentableError);

  // multi-token triggers match contiguously and in order
  BackdoorSpec two;
  two.trigger_token_ids = {vocab.id_of("red"), vocab.id_of("cat")};
  two.target_point_index = 0;
  auto p2 = inject_backdoor(ds, two, vocab);
  CHECK(p2.priors[0][0] == doctest::Approx(0.98));
  CHECK(p2.priors[1][0] == doctest::Approx(0.98));
  CHECK(p2.priors[2] == ds.priors[2]);

  BackdoorSpec reversed;
  reversed.trigger_token_ids = {vocab.id_of("cat"), vocab.id_of("red")};
  reversed.target_point_index = 0;
  CHECK_THROWS_AS(inject_backdoor(ds, reversed, vocab), TriggerNotRepresentableError);
}
