#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "xel/data.hpp"
#include "xel/errors.hpp"
#include "xel/ops.hpp"
#include "xel/train.hpp"

using namespace xel;
namespace fs = std::filesystem;

namespace {

/// y = 0.5 x + 0.2 with one input and one output token.
Dataset linear_dataset(std::size_t count, std::uint64_t seed) {
  Dataset ds;
  Rng rng(seed);
  for (Split* s : {&ds.train, &ds.val, &ds.test}) {
    s->m = 1;
    s->n = 1;
    s->spec.variant = "linear";
    for (std::size_t i = 0; i < count; ++i) {
      const double x = rng.uniform(-1.0, 1.0);
      s->x.push_back(x);
      s->y.push_back(0.5 * x + 0.2);
    }
  }
  return ds;
}

ModelConfig tiny_config(std::size_t m, std::size_t n) {
  ModelConfig c;
  c.h = 2;
  c.d = 8;
  c.r = 8;
  c.L_enc = 1;
  c.L_dec = 1;
  c.m = m;
  c.n = n;
  return c;
}

Dataset suite_dataset(std::size_t count, std::optional<std::size_t> k) {
  DatasetSpec spec;
  spec.n_train = count;
  spec.n_val = count / 2;
  spec.n_test = count / 2;
  spec.seed = 3;
  spec.k_classes = k;
  spec.d = 8;
  return generate(spec);
}

}  // namespace

TEST_CASE("loss examples") {
  Tape tape(false);
  Targets t;
  t.values = {1.0, -2.0, 0.5};
  CHECK(loss(tape, Tensor::from({1, 3}, t.values), t, LossKind::mse).item() == 0.0);
  CHECK(loss(tape, Tensor::from({1, 3}, {2.0, -1.0, 1.5}), t, LossKind::mse).item() == doctest::Approx(1.0));

  Targets c;
  c.classes = {0, 3};
  const double ce = loss(tape, Tensor::zeros({5, 2}), c, LossKind::cross_entropy).item();
  CHECK(std::abs(ce - std::log(5.0)) < 1e-12);
  CHECK(std::abs(ce - 1.609438) < 1e-6);
  c.classes = {5, 0};
  CHECK_THROWS_AS(loss(tape, Tensor::zeros({5, 2}), c, LossKind::cross_entropy), DomainError);
}

TEST_CASE("schedule shape") {
  TrainConfig cfg;
  cfg.max_steps = 1000;
  cfg.warmup_fraction = 0.25;
  cfg.learning_rate = 0.01;
  CHECK(learning_rate_at(cfg, 0) == 0.0);
  CHECK(learning_rate_at(cfg, 250) == 0.01);
  double peak = 0.0;
  std::size_t arg = 0;
  for (std::size_t s = 0; s <= 1000; ++s) {
    const double lr = learning_rate_at(cfg, s);
    if (lr > peak) {
      peak = lr;
      arg = s;
    }
    if (s > 0 && s <= 250) CHECK(lr > learning_rate_at(cfg, s - 1));
    if (s > 250) CHECK(lr < learning_rate_at(cfg, s - 1));
  }
  CHECK(arg == 250);
  CHECK(learning_rate_at(cfg, 1000) == 0.0);
  CHECK(learning_rate_at(cfg, 999) == doctest::Approx(0.01 / 750.0));
  cfg.schedule = Schedule::constant;
  CHECK(learning_rate_at(cfg, 900) == 0.01);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate_search_space());
  cfg.batch_size = 64;
  CHECK_NOTHROW(cfg.validate());
  CHECK_THROWS_AS(cfg.validate_search_space(), DomainError);
  cfg = TrainConfig{};
  cfg.learning_rate = 2e-2;
  CHECK_THROWS_AS(cfg.validate_search_space(), DomainError);
  cfg = TrainConfig{};
  cfg.dropout = 0.25;
  CHECK_THROWS_AS(cfg.validate_search_space(), DomainError);
  cfg = TrainConfig{};
  cfg.max_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);

  cfg = TrainConfig{};
  cfg.seed = 77;
  cfg.loss_kind = LossKind::cross_entropy;
  cfg.schedule = Schedule::constant;
  CHECK(nlohmann::json(cfg).get<TrainConfig>().seed == 77);
  CHECK(nlohmann::json(cfg).get<TrainConfig>().loss_kind == LossKind::cross_entropy);
}

TEST_CASE("one small optimizer step decreases the batch loss") {
  const Dataset ds = suite_dataset(32, std::nullopt);
  std::vector<std::size_t> idx(16);
  for (std::size_t i = 0; i < 16; ++i) idx[i] = i;
  const Targets tg = batch_targets(ds.train, idx);
  const Tensor tokens = tokenize_batch(ds.train, idx, 8);
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Model model(tiny_config(4, 3), seed);
    const auto ctx = model.context(false, nullptr);
    auto batch_loss = [&] {
      Tape tape;
      return loss(tape, model.head(tape, model.forward(tape, tokens, ctx, &tg)), tg, LossKind::mse).item();
    };
    model.set_requires_grad(true);
    Tape tape;
    const Tensor l = loss(tape, model.head(tape, model.forward(tape, tokens, ctx, &tg)), tg, LossKind::mse);
    const double before = l.item();
    tape.backward(l);
    Adam adam;
    adam.step(model.parameters(), 1e-3);
    model.clear_grads();
    model.set_requires_grad(false);
    if (!(batch_loss() < before)) ++failures;
  }
  CHECK(failures <= 1);
}

TEST_CASE("adam matches a hand-computed first update") {
  std::vector<Model::Param> params{{"w", Tensor::from({2}, {1.0, -1.0})}};
  params[0].value.set_requires_grad(true);
  params[0].value.storage().grad_buffer() = {0.3, -0.4};  // norm 0.5, below the clip
  Adam adam(1.0);
  adam.step(params, 0.1);
  // First bias-corrected step is lr * g / (|g| + eps).
  CHECK(params[0].value[0] == doctest::Approx(1.0 - 0.1 * 0.3 / (0.3 + 1e-8)).epsilon(1e-14));
  CHECK(params[0].value[1] == doctest::Approx(-1.0 + 0.1 * 0.4 / (0.4 + 1e-8)).epsilon(1e-14));

  // Clipping rescales, which leaves the first Adam step direction unchanged.
  std::vector<Model::Param> big{{"w", Tensor::from({1}, {0.0})}};
  big[0].value.set_requires_grad(true);
  big[0].value.storage().grad_buffer() = {30.0};
  Adam clipped(1.0);
  CHECK(clipped.step(big, 0.1) == 30.0);
  CHECK(big[0].value[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("training fits a linear function") {
  const Dataset ds = linear_dataset(64, 1);
  Model model(tiny_config(1, 1), 5);
  const double initial = evaluation_loss(model, ds.train, LossKind::mse);
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.max_steps = 300;
  cfg.learning_rate = 1e-2;
  cfg.warmup_fraction = 0.1;
  cfg.dropout = 0.0;
  cfg.eval_every = 50;
  const auto res = train(model, ds, cfg);
  const double final_mse = evaluation_loss(model, ds.train, LossKind::mse);
  CHECK(final_mse < 0.1 * initial);
  CHECK(res.train_losses.size() == 300);
  CHECK(res.record.runtime_s > 0.0);
  CHECK(res.record.failure_rate >= 0.0);
  CHECK(res.record.failure_rate <= 1.0);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
  const Dataset ds = suite_dataset(32, std::nullopt);
  Model model(tiny_config(4, 3), 9);
  const auto before = model.snapshot();
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_steps = 5;
  cfg.learning_rate = 0.0;
  cfg.eval_every = 5;
  train(model, ds, cfg);
  CHECK(model.snapshot() == before);
}

TEST_CASE("training is deterministic and the best checkpoint reproduces its loss") {
  const Dataset ds = suite_dataset(64, 4);
  ModelConfig mc = tiny_config(4, 3);
  mc.output = OutputKind::classification;
  mc.k_classes = 4;
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_steps = 20;
  cfg.learning_rate = 5e-3;
  cfg.loss_kind = LossKind::cross_entropy;
  cfg.eval_every = 5;
  cfg.seed = 12;
  Model a(mc, 1), b(mc, 1);
  const auto ra = train(a, ds, cfg, {.ks = {2, 5}});
  const auto rb = train(b, ds, cfg, {.ks = {2, 5}});
  CHECK(ra.record.failure_rate == rb.record.failure_rate);
  CHECK(ra.record.failure_rate_at_k == rb.record.failure_rate_at_k);
  CHECK(ra.record.best_val_loss == rb.record.best_val_loss);
  CHECK(ra.record.failure_rate_at_k.count(2) == 1);
  CHECK(ra.record.failure_rate_at_k.count(5) == 0);  // beyond k_classes

  const auto path = fs::temp_directory_path() / "xel_best.ckpt";
  save_checkpoint(a, path);
  const Model back = load_checkpoint(path);
  const double again = evaluation_loss(back, ds.val, LossKind::cross_entropy);
  CHECK(std::abs(again - ra.record.best_val_loss) <= 1e-10);

  CHECK_THROWS_AS(train(a, ds, TrainConfig{.max_steps = 2}), DomainError);  // mse on a classifier
}

TEST_CASE("divergence is reported") {
  const Dataset ds = linear_dataset(16, 2);
  Model model(tiny_config(1, 1), 1);
  model.parameter("head.b").data()[0] = std::nan("");
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_steps = 3;
  try {
    train(model, ds, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    const std::string what = e.what();
    CHECK(what.find("step 0") != std::string::npos);
    CHECK(what.find("lr=") != std::string::npos);
    CHECK(what.find("loss tail") != std::string::npos);
  }
}

TEST_CASE("run records serialize as JSON lines") {
  RunRecord r;
  r.experiment_id = "x";
  r.expt_kind = "expt1";
  r.failure_rate = 0.25;
  r.failure_rate_at_k = {{2, 0.125}, {5, 0.0}};
  r.runtime_s = 1.5;
  const auto path = fs::temp_directory_path() / "xel_runs.jsonl";
  fs::remove(path);
  append_jsonl(path, r);
  append_jsonl(path, r);
  const auto back = read_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].failure_rate_at_k == r.failure_rate_at_k);
  CHECK(back[0].optimizer == r.optimizer);
}

TEST_CASE("random search") {
  SearchSpace space;
  space.emb_dim = 6;
  CHECK(head_choices(6) == std::vector<std::size_t>{2, 4, 6});
  CHECK(head_choices(64).back() == 16);
  CHECK(head_choices(1).empty());
  const auto a = sample_search(space, 200, 4);
  const auto b = sample_search(space, 200, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].heads <= 6);
    CHECK(a[i].heads % 2 == 0);
    CHECK_NOTHROW(a[i].train.validate_search_space());
    CHECK(a[i].train.learning_rate == b[i].train.learning_rate);
    CHECK(a[i].heads == b[i].heads);
  }
  auto objective = [](const SearchDraw& d) {
    RunRecord r;
    r.best_val_loss = d.train.learning_rate;
    return r;
  };
  const auto one = random_search(space, 1, 4, objective);
  CHECK(one.records.size() == 1);
  CHECK(one.best.train.learning_rate == a[0].train.learning_rate);
  const auto many = random_search(space, 20, 4, objective);
  for (const auto& r : many.records) CHECK(many.best.train.learning_rate <= r.best_val_loss);

  space.emb_dim = 1;
  CHECK_THROWS_AS(sample_search(space, 1, 0), DomainError);
  CHECK_THROWS_AS(sample_search(SearchSpace{}, 0, 0), DomainError);
}
