#include "xel/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xel/errors.hpp"
#include "xel/metrics.hpp"
#include "xel/ops.hpp"
#include "xel/rng.hpp"

namespace xel {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "mse") return LossKind::mse;
  if (name == "cross_entropy") return LossKind::cross_entropy;
  throw DomainError("unknown loss kind '" + name + "'");
}

std::string to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "cross_entropy"; }

Schedule parse_schedule(const std::string& name) {
  if (name == "linear") return Schedule::linear;
  if (name == "constant") return Schedule::constant;
  throw DomainError("unknown schedule '" + name + "'");
}

std::string to_string(Schedule schedule) { return schedule == Schedule::linear ? "linear" : "constant"; }

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (max_steps < 1) throw DomainError("max_steps must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw DomainError("learning_rate must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw DomainError("warmup_fraction must be in [0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must be in [0, 1)");
  if (eval_every < 1) throw DomainError("eval_every must be >= 1");
  if (!(clip_norm > 0.0)) throw DomainError("clip_norm must be > 0");
}

void TrainConfig::validate_search_space() const {
  validate();
  const SearchSpace s;
  auto in = [](const std::vector<std::size_t>& set, std::size_t v) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  if (!in(s.batch_sizes, batch_size)) throw DomainError("batch_size outside {128, 256, 512}");
  if (!in(s.max_steps, max_steps)) throw DomainError("max_steps outside {1200, 1400, 1600}");
  if (learning_rate < s.lr_lo || learning_rate > s.lr_hi) throw DomainError("learning_rate outside [5e-6, 1e-2]");
  if (warmup_fraction < s.warmup_lo || warmup_fraction > s.warmup_hi)
    throw DomainError("warmup_fraction outside [0.2, 0.4]");
  if (dropout < s.dropout_lo || dropout > s.dropout_hi) throw DomainError("dropout outside [0.1, 0.2]");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},
                     {"max_steps", c.max_steps},
                     {"learning_rate", c.learning_rate},
                     {"warmup_fraction", c.warmup_fraction},
                     {"dropout", c.dropout},
                     {"seed", c.seed},
                     {"loss_kind", to_string(c.loss_kind)},
                     {"eval_every", c.eval_every},
                     {"schedule", to_string(c.schedule)},
                     {"clip_norm", c.clip_norm}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.warmup_fraction = j.at("warmup_fraction").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss_kind = parse_loss_kind(j.at("loss_kind").get<std::string>());
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.schedule = parse_schedule(j.at("schedule").get<std::string>());
  c.clip_norm = j.at("clip_norm").get<double>();
}

double learning_rate_at(const TrainConfig& cfg, std::size_t step) {
  const double total = static_cast<double>(cfg.max_steps);
  const double warm = std::round(cfg.warmup_fraction * total);
  const double s = static_cast<double>(step);
  if (s >= total) return 0.0;
  if (s < warm) return cfg.learning_rate * s / warm;
  if (cfg.schedule == Schedule::constant) return cfg.learning_rate;
  return cfg.learning_rate * (total - s) / (total - warm);
}

double Adam::step(std::vector<Model::Param>& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  double sq = 0.0;
  for (const auto& p : params)
    if (p.value.has_grad())
      for (double g : p.value.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  const double factor = norm > clip_norm_ ? clip_norm_ / norm : 1.0;

  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].value;
    if (!w.has_grad()) continue;
    auto g = w.grad();
    auto x = w.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double gk = g[k] * factor;
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * gk;
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * gk * gk;
      x[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEps);
    }
  }
  return norm;
}

Tensor loss(Tape& tape, const Tensor& pred, const Targets& target, LossKind kind) {
  if (kind == LossKind::mse) {
    if (pred.size() != target.values.size())
      throw DimensionError("mse: " + std::to_string(pred.size()) + " predictions vs " +
                           std::to_string(target.values.size()) + " targets");
    return mean_squared_error(tape, pred, Tensor::from(pred.shape(), target.values));
  }
  return cross_entropy(tape, pred, target.classes);
}

namespace {

constexpr std::size_t kEvalChunk = 256;

void check_kind(const Model& model, const Split& split, LossKind kind) {
  const bool classify = model.config().output == OutputKind::classification;
  if (kind == LossKind::mse && classify) throw DomainError("mse loss needs a regression model");
  if (kind == LossKind::cross_entropy && !classify) throw DomainError("cross_entropy loss needs a classification model");
  if (kind == LossKind::cross_entropy && !split.has_classes()) throw DomainError("cross_entropy loss needs class targets");
  if (split.m != model.config().m || split.n != model.config().n)
    throw DimensionError("split has m=" + std::to_string(split.m) + ", n=" + std::to_string(split.n) +
                         " but the model expects m=" + std::to_string(model.config().m) +
                         ", n=" + std::to_string(model.config().n));
}

std::vector<std::size_t> chunk(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return idx;
}

std::string tail(const std::vector<double>& losses, std::size_t n) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  const std::size_t from = losses.size() > n ? losses.size() - n : 0;
  for (std::size_t i = from; i < losses.size(); ++i) os << (i > from ? ", " : "") << losses[i];
  os << "]";
  return os.str();
}

}  // namespace

double evaluation_loss(const Model& model, const Split& split, LossKind kind) {
  check_kind(model, split, kind);
  const std::size_t count = split.size();
  if (count == 0) throw DomainError("evaluation on an empty split");
  const auto ctx = model.context(false, nullptr);
  double total = 0.0;
  for (std::size_t b = 0; b < count; b += kEvalChunk) {
    const auto idx = chunk(b, std::min(count, b + kEvalChunk));
    Tape tape(false);
    const Targets tg = batch_targets(split, idx);
    const Tensor tokens = tokenize_batch(split, idx, model.config().d);
    const Tensor out = model.head(tape, model.forward(tape, tokens, ctx, &tg));
    total += loss(tape, out, tg, kind).item() * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(count);
}

Metrics evaluate(const Model& model, const Split& split, std::span<const std::size_t> ks) {
  const auto& cfg = model.config();
  const std::size_t count = split.size(), n = split.n;
  if (split.m != cfg.m || n != cfg.n) throw DimensionError("evaluate: split and model token counts differ");
  Metrics out;
  std::vector<std::size_t> counts;
  std::size_t k_limit = 0;
  if (cfg.output == OutputKind::regression) {
    RegressionEvalSet e;
    e.dim = n;
    e.targets = split.y;
    e.predictions.reserve(split.y.size());
    for (std::size_t b = 0; b < count; b += kEvalChunk) {
      const auto idx = chunk(b, std::min(count, b + kEvalChunk));
      const Tensor pred = model.predict(tokenize_batch(split, idx, cfg.d));
      e.predictions.insert(e.predictions.end(), pred.data().begin(), pred.data().end());
    }
    counts = closer_counts(e);
    k_limit = count;
  } else {
    if (!split.has_classes()) throw DomainError("evaluate: classification needs class targets");
    ClassificationEvalSet e;
    e.k_classes = cfg.k_classes;
    e.positions = n;
    e.targets.assign(split.classes.begin(), split.classes.end());
    e.probabilities.reserve(split.classes.size() * cfg.k_classes);
    for (std::size_t b = 0; b < count; b += kEvalChunk) {
      const auto idx = chunk(b, std::min(count, b + kEvalChunk));
      const Tensor probs = model.predict(tokenize_batch(split, idx, cfg.d));
      const std::size_t cols = probs.cols();
      for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < cfg.k_classes; ++r) e.probabilities.push_back(probs.at(r, c));
    }
    counts = outranking_counts(e);
    k_limit = cfg.k_classes;
  }
  out.failure_rate = failure_rate_from_counts(counts, 1);
  for (std::size_t k : ks)
    if (k >= 1 && k <= k_limit) out.failure_rate_at_k[k] = failure_rate_from_counts(counts, k);
  return out;
}

void to_json(nlohmann::json& j, const RunRecord& r) {
  nlohmann::json at_k = nlohmann::json::object();
  for (const auto& [k, v] : r.failure_rate_at_k) at_k[std::to_string(k)] = v;
  j = nlohmann::json{{"experiment_id", r.experiment_id},
                     {"expt_kind", r.expt_kind},
                     {"seed", r.seed},
                     {"model", r.model},
                     {"train", r.train},
                     {"data", r.data},
                     {"failure_rate", r.failure_rate},
                     {"failure_rate_at_k", at_k},
                     {"best_val_loss", r.best_val_loss},
                     {"best_step", r.best_step},
                     {"runtime_s", r.runtime_s},
                     {"optimizer", r.optimizer},
                     {"clip_norm", r.train.clip_norm},
                     {"status", r.status},
                     {"error", r.error},
                     {"axis", r.axis},
                     {"axis_value", r.axis_value}};
}

void from_json(const nlohmann::json& j, RunRecord& r) {
  r.experiment_id = j.at("experiment_id").get<std::string>();
  r.expt_kind = j.at("expt_kind").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.model = j.at("model").get<ModelConfig>();
  r.train = j.at("train").get<TrainConfig>();
  r.data = j.at("data").get<DatasetSpec>();
  r.failure_rate = j.at("failure_rate").get<double>();
  r.failure_rate_at_k.clear();
  for (const auto& [k, v] : j.at("failure_rate_at_k").items())
    r.failure_rate_at_k[static_cast<std::size_t>(std::stoull(k))] = v.get<double>();
  r.best_val_loss = j.at("best_val_loss").get<double>();
  r.best_step = j.at("best_step").get<std::size_t>();
  r.runtime_s = j.at("runtime_s").get<double>();
  r.optimizer = j.at("optimizer").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.axis = j.value("axis", std::string());
  r.axis_value = j.value("axis_value", std::string());
}

void append_jsonl(const std::filesystem::path& path, const RunRecord& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open " + path.string() + " for appending");
  out << nlohmann::json(record).dump() << '\n';
}

std::vector<RunRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line).get<RunRecord>());
  return out;
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  check_kind(model, data.train, cfg.loss_kind);
  check_kind(model, data.val, cfg.loss_kind);

  TrainResult result;
  RunRecord& rec = result.record;
  rec.experiment_id = opt.experiment_id;
  rec.expt_kind = model.config().output == OutputKind::regression ? "expt1" : "expt2";
  rec.seed = cfg.seed;
  rec.model = model.config();
  rec.train = cfg;
  rec.data = data.train.spec;

  Rng rng(mix64(cfg.seed ^ 0x7261696EULL));
  Rng shuffle_rng = rng.fork(1);
  Rng dropout_rng = rng.fork(2);

  const std::size_t n_train = data.train.size();
  const std::size_t batch = std::min(cfg.batch_size, n_train);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n_train;  // forces a shuffle before the first batch

  ForwardContext ctx = model.context(true, &dropout_rng);
  ctx.dropout = cfg.dropout;

  Adam adam(cfg.clip_norm);
  model.set_requires_grad(true);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_weights;
  std::vector<std::size_t> idx(batch);

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    const double lr = learning_rate_at(cfg, step);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == n_train) {
        for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        cursor = 0;
      }
      idx[b] = order[cursor++];
    }
    const Targets tg = batch_targets(data.train, idx);
    const Tensor tokens = tokenize_batch(data.train, idx, model.config().d);
    double value = 0.0;
    try {
      Tape tape;
      const Tensor out = model.head(tape, model.forward(tape, tokens, ctx, &tg));
      const Tensor l = loss(tape, out, tg, cfg.loss_kind);
      value = l.item();
      result.train_losses.push_back(value);
      if (!std::isfinite(value)) throw NumericError("loss is not finite");
      tape.backward(l);
    } catch (const NumericError& e) {
      model.clear_grads();
      model.set_requires_grad(false);
      std::ostringstream os;
      os << "diverged at step " << step << " (lr=" << lr << "): " << e.what()
         << "; loss tail " << tail(result.train_losses, 10);
      throw DivergenceError(os.str());
    }
    adam.step(model.parameters(), lr);
    model.clear_grads();

    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.max_steps) {
      const double val = evaluation_loss(model, data.val, cfg.loss_kind);
      result.val_losses.emplace_back(step + 1, val);
      if (!std::isfinite(val)) {
        model.set_requires_grad(false);
        throw DivergenceError("validation loss not finite at step " + std::to_string(step + 1) + "; loss tail " +
                              tail(result.train_losses, 10));
      }
      if (val < best) {
        best = val;
        rec.best_step = step + 1;
        best_weights = model.snapshot();
      }
    }
  }
  model.set_requires_grad(false);
  model.restore(best_weights);
  rec.best_val_loss = best;

  if (opt.evaluate_test) {
    const Metrics m = evaluate(model, data.test, opt.ks);
    rec.failure_rate = m.failure_rate;
    rec.failure_rate_at_k = m.failure_rate_at_k;
  }
  rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<std::size_t> head_choices(std::size_t emb_dim) {
  std::vector<std::size_t> out;
  for (std::size_t h = 2; h <= std::min<std::size_t>(16, emb_dim); h += 2) out.push_back(h);
  return out;
}

std::vector<SearchDraw> sample_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed) {
  if (budget < 1) throw DomainError("search budget must be >= 1");
  const auto heads = head_choices(space.emb_dim);
  if (heads.empty() || space.batch_sizes.empty() || space.max_steps.empty() || space.layers.empty())
    throw DomainError("search space is empty after constraint filtering");
  Rng rng(mix64(seed ^ 0x736561726368ULL));
  std::vector<SearchDraw> draws;
  for (std::size_t i = 0; i < budget; ++i) {
    SearchDraw d;
    d.train.batch_size = space.batch_sizes[rng.below(space.batch_sizes.size())];
    d.train.max_steps = space.max_steps[rng.below(space.max_steps.size())];
    d.layers = space.layers[rng.below(space.layers.size())];
    d.heads = heads[rng.below(heads.size())];
    d.train.learning_rate = rng.uniform(space.lr_lo, space.lr_hi);
    d.train.warmup_fraction = rng.uniform(space.warmup_lo, space.warmup_hi);
    d.train.dropout = rng.uniform(space.dropout_lo, space.dropout_hi);
    d.train.seed = rng.next();
    draws.push_back(d);
  }
  return draws;
}

SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const std::function<RunRecord(const SearchDraw&)>& objective) {
  const auto draws = sample_search(space, budget, seed);
  SearchResult out;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& d : draws) {
    out.records.push_back(objective(d));
    const double v = out.records.back().best_val_loss;
    if (out.records.size() == 1 || v < best) {
      best = v;
      out.best = d;
    }
  }
  return out;
}

}  // namespace xel
