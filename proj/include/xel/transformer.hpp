#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xel/ops.hpp"
#include "xel/rng.hpp"
#include "xel/tensor.hpp"

namespace xel {

enum class PeScheme { sinusoidal, learned, none };
enum class OutputKind { regression, classification };

PeScheme parse_pe_scheme(const std::string& name);
std::string to_string(PeScheme scheme);
OutputKind parse_output_kind(const std::string& name);
std::string to_string(OutputKind kind);

struct ModelConfig {
  std::size_t h = 2;      // heads
  std::size_t d = 8;      // embedding dimension
  std::size_t r = 8;      // FFN hidden dimension
  std::size_t L_enc = 1;
  std::size_t L_dec = 1;
  std::size_t m = 4;      // input tokens
  std::size_t n = 3;      // output tokens
  PeScheme pe_scheme = PeScheme::none;
  double dropout = 0.0;
  bool use_layernorm = false;
  bool scale_attention = false;  // divide scores by sqrt(d)
  OutputKind output = OutputKind::regression;
  std::size_t k_classes = 0;     // classification only

  /// Throws DomainError on out-of-range fields.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Multi-head attention weights. Per-head projections are d x d.
struct AttentionWeights {
  std::vector<Tensor> wq, wk, wv;  // h each
  Tensor wo;                       // d x (h*d)
};

struct FfnWeights {
  Tensor w1, b1, w2, b2;  // r x d, r, d x r, d
};

struct LayerNormWeights {
  Tensor gain, bias;
};

struct BlockWeights {
  AttentionWeights self_attn;
  std::optional<AttentionWeights> cross_attn;  // decoder blocks only
  FfnWeights ffn;
  std::vector<LayerNormWeights> norms;         // empty when layernorm is off
};

/// Per-call forward state.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;        // required when training with dropout > 0
  double score_scale = 1.0;
};

// Block equations on batched input: columns are grouped by sample, `len`
// tokens per sample.
Tensor self_attention(Tape& tape, const Tensor& x, const AttentionWeights& w, std::size_t len,
                      const ForwardContext& ctx);
Tensor cross_attention(Tape& tape, const Tensor& x, std::size_t x_len, const Tensor& y_prefix,
                       std::size_t j, const AttentionWeights& w, const ForwardContext& ctx);
Tensor ffn(Tape& tape, const Tensor& x, const FfnWeights& w, const ForwardContext& ctx);

/// Fixed table for sinusoidal/none; for learned, the initial table.
Tensor positional_embedding(PeScheme scheme, std::size_t d, std::size_t t);
Tensor positional_embedding(const std::string& scheme, std::size_t d, std::size_t t);

/// Teacher-forcing targets for one batch, laid out sample-major (B*n).
struct Targets {
  std::vector<double> values;        // regression
  std::vector<std::size_t> classes;  // classification
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  // Tensors are handles, so a member-wise copy would alias the weights.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deep copy of every parameter value, in parameters() order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

  const ModelConfig& config() const { return config_; }

  struct Param {
    std::string name;
    Tensor value;
  };
  std::vector<Param>& parameters() { return params_; }
  const std::vector<Param>& parameters() const { return params_; }
  Tensor& parameter(const std::string& name);

  const BlockWeights& encoder_block(std::size_t i) const { return enc_[i]; }
  const BlockWeights& decoder_block(std::size_t i) const { return dec_[i]; }
  BlockWeights& encoder_block(std::size_t i) { return enc_[i]; }
  BlockWeights& decoder_block(std::size_t i) { return dec_[i]; }

  /// Input tokens d x (B*m) -> encoder output d x (B*m).
  Tensor encode(Tape& tape, const Tensor& tokens, const ForwardContext& ctx) const;

  /// Decoder states d x (B*n). With targets: teacher forcing. Without:
  /// greedy rollout through the output head.
  Tensor forward(Tape& tape, const Tensor& tokens, const ForwardContext& ctx,
                 const Targets* teacher = nullptr) const;

  /// Output head over decoder states: 1 x N (regression) or k x N logits.
  Tensor head(Tape& tape, const Tensor& states) const;

  /// Rollout without recording. Returns 1 x (B*n) values or k x (B*n) class
  /// probabilities.
  Tensor predict(const Tensor& tokens) const;

  ForwardContext context(bool training, Rng* rng) const;

  void set_requires_grad(bool on);
  void clear_grads();

 private:
  Tensor register_param(const std::string& name, Tensor t);
  AttentionWeights make_attention(const std::string& prefix, Rng& rng);
  Tensor embed_inputs(Tape& tape, const Tensor& tokens) const;
  Tensor start_piece(Tape& tape, std::size_t batch) const;
  Tensor feedback_piece(Tape& tape, const Tensor& values) const;
  Tensor feedback_piece(Tape& tape, std::span<const std::size_t> classes) const;
  Tensor decode_prefix(Tape& tape, const std::vector<Tensor>& pieces, std::size_t batch,
                       const std::vector<Tensor>& cross_k, const std::vector<Tensor>& cross_v,
                       const ForwardContext& ctx) const;
  Tensor tiled_pe(Tape& tape, bool decoder, std::size_t len, std::size_t batch) const;

  ModelConfig config_;
  std::vector<Param> params_;
  std::vector<BlockWeights> enc_, dec_;
  Tensor in_w_, in_b_, start_, fb_w_, fb_b_, class_table_, head_w_, head_b_;
  Tensor pe_enc_, pe_dec_;
};

/// Binary checkpoint: "XELCKPT", version, JSON config, named parameter blocks.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace xel
