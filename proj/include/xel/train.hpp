#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "xel/data.hpp"
#include "xel/tensor.hpp"
#include "xel/transformer.hpp"

namespace xel {

enum class LossKind { mse, cross_entropy };
enum class Schedule { linear, constant };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);
Schedule parse_schedule(const std::string& name);
std::string to_string(Schedule schedule);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t max_steps = 1200;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.2;
  double dropout = 0.1;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::mse;
  std::size_t eval_every = 100;
  Schedule schedule = Schedule::linear;
  double clip_norm = 1.0;

  /// Structural checks (positive counts, probabilities in range).
  void validate() const;
  /// Exact hyperparameter search-space membership.
  void validate_search_space() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Learning rate applied at update `step` (0-based): linear warmup from 0 to
/// the peak at round(warmup_fraction * max_steps), then linear decay to 0 at
/// max_steps (or constant).
double learning_rate_at(const TrainConfig& cfg, std::size_t step);

/// Adaptive moment estimation with global-norm gradient clipping.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  explicit Adam(double clip_norm = 1.0) : clip_norm_(clip_norm) {}

  /// Applies one update from the accumulated gradients. Returns the
  /// gradient norm before clipping.
  double step(std::vector<Model::Param>& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  double clip_norm_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// mse: mean squared error of 1 x N predictions against target values.
/// cross_entropy: mean negative log-softmax of k x N logits at the classes.
Tensor loss(Tape& tape, const Tensor& pred, const Targets& target, LossKind kind);

/// Teacher-forced loss over a whole split without dropout, in fixed chunks.
double evaluation_loss(const Model& model, const Split& split, LossKind kind);

struct Metrics {
  double failure_rate = 0.0;
  std::map<std::size_t, double> failure_rate_at_k;  // only k within range
};

/// Greedy rollout on the split, scored with failure-rate metrics.
Metrics evaluate(const Model& model, const Split& split, std::span<const std::size_t> ks);

struct RunRecord {
  std::string experiment_id;
  std::string expt_kind;  // "expt1" (regression) or "expt2" (classification)
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  DatasetSpec data;
  double failure_rate = 0.0;
  std::map<std::size_t, double> failure_rate_at_k;
  double best_val_loss = 0.0;
  std::size_t best_step = 0;
  double runtime_s = 0.0;
  std::string optimizer = "adam(beta1=0.9,beta2=0.999,eps=1e-8)";
  std::string status = "ok";
  std::string error;
  std::string axis;        // sweep axis, empty for single runs
  std::string axis_value;
};

void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

/// Appends one JSON object per line.
void append_jsonl(const std::filesystem::path& path, const RunRecord& record);
std::vector<RunRecord> read_jsonl(const std::filesystem::path& path);

struct TrainResult {
  RunRecord record;
  std::vector<double> train_losses;                        // per step
  std::vector<std::pair<std::size_t, double>> val_losses;  // (step, loss)
};

struct TrainOptions {
  std::vector<std::size_t> ks = {2, 5};
  std::string experiment_id;
  bool evaluate_test = true;
};

/// Trains in place and leaves the best-validation weights in the model.
/// Throws DivergenceError on a non-finite loss or activation.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& opt = {});

struct SearchSpace {
  std::vector<std::size_t> batch_sizes = {128, 256, 512};
  std::vector<std::size_t> max_steps = {1200, 1400, 1600};
  std::vector<std::size_t> layers = {2, 4, 6};
  double lr_lo = 5e-6, lr_hi = 1e-2;
  double warmup_lo = 0.2, warmup_hi = 0.4;
  double dropout_lo = 0.1, dropout_hi = 0.2;
  std::size_t emb_dim = 32;  // heads are even values up to min(16, emb_dim)
};

struct SearchDraw {
  TrainConfig train;
  std::size_t layers = 2;
  std::size_t heads = 2;
};

/// Even head counts allowed for the embedding dimension.
std::vector<std::size_t> head_choices(std::size_t emb_dim);

/// Reproducible i.i.d. draws from the space.
std::vector<SearchDraw> sample_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed);

struct SearchResult {
  SearchDraw best;
  std::vector<RunRecord> records;
};

/// Runs every draw through `objective` and keeps the lowest validation loss.
SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                           const std::function<RunRecord(const SearchDraw&)>& objective);

}  // namespace xel
