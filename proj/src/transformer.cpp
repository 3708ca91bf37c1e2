#include "xel/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xel/binary_io.hpp"
#include "xel/errors.hpp"

namespace xel {

PeScheme parse_pe_scheme(const std::string& name) {
  if (name == "sinusoidal") return PeScheme::sinusoidal;
  if (name == "learned") return PeScheme::learned;
  if (name == "none") return PeScheme::none;
  throw UnknownIdError("unknown positional embedding scheme '" + name + "'");
}

std::string to_string(PeScheme scheme) {
  switch (scheme) {
    case PeScheme::sinusoidal: return "sinusoidal";
    case PeScheme::learned: return "learned";
    case PeScheme::none: return "none";
  }
  return "none";
}

OutputKind parse_output_kind(const std::string& name) {
  if (name == "regression") return OutputKind::regression;
  if (name == "classification") return OutputKind::classification;
  throw UnknownIdError("unknown output kind '" + name + "'");
}

std::string to_string(OutputKind kind) {
  return kind == OutputKind::regression ? "regression" : "classification";
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw DomainError(std::string("model.") + name + " must be >= 1");
  };
  positive(h, "h");
  positive(d, "d");
  positive(r, "r");
  positive(L_enc, "L_enc");
  positive(L_dec, "L_dec");
  positive(m, "m");
  positive(n, "n");
  if (!(dropout >= 0.0 && dropout <= 0.5)) throw DomainError("model.dropout must be in [0, 0.5]");
  if (output == OutputKind::classification && k_classes < 2) {
    throw DomainError("model.k_classes must be >= 2 for classification");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"h", c.h},
                     {"d", c.d},
                     {"r", c.r},
                     {"L_enc", c.L_enc},
                     {"L_dec", c.L_dec},
                     {"m", c.m},
                     {"n", c.n},
                     {"pe_scheme", to_string(c.pe_scheme)},
                     {"dropout", c.dropout},
                     {"use_layernorm", c.use_layernorm},
                     {"scale_attention", c.scale_attention},
                     {"output", to_string(c.output)},
                     {"k_classes", c.k_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("h").get_to(c.h);
  j.at("d").get_to(c.d);
  j.at("r").get_to(c.r);
  j.at("L_enc").get_to(c.L_enc);
  j.at("L_dec").get_to(c.L_dec);
  j.at("m").get_to(c.m);
  j.at("n").get_to(c.n);
  c.pe_scheme = parse_pe_scheme(j.at("pe_scheme").get<std::string>());
  j.at("dropout").get_to(c.dropout);
  j.at("use_layernorm").get_to(c.use_layernorm);
  j.at("scale_attention").get_to(c.scale_attention);
  c.output = parse_output_kind(j.at("output").get<std::string>());
  j.at("k_classes").get_to(c.k_classes);
}

namespace {

void check_finite(const Tensor& t, const std::string& where) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError("non-finite activation in " + where);
  }
}

Tensor maybe_dropout(Tape& tape, const Tensor& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0) return x;
  if (!ctx.rng) throw DomainError("dropout in training mode needs an rng");
  return dropout(tape, x, ctx.dropout, *ctx.rng);
}

Tensor stacked(Tape& tape, const std::vector<Tensor>& per_head) { return concat_embed(tape, per_head); }

// residual + W_O * concat_i(V_i softmax(K_i^T Q_i)), queries taken from `y`.
Tensor attend(Tape& tape, const Tensor& y, std::size_t y_len, const Tensor& k, const Tensor& v,
              std::size_t kv_len, const AttentionWeights& w, const ForwardContext& ctx) {
  auto q = matmul(tape, stacked(tape, w.wq), y);
  auto a = attention(tape, q, k, v, w.wq.size(), y_len, kv_len, ctx.score_scale);
  auto branch = maybe_dropout(tape, matmul(tape, w.wo, a), ctx);
  return add(tape, y, branch);
}

void require_tokens(const Tensor& x, std::size_t len, const char* what) {
  if (len == 0 || x.rank() > 2 || x.cols() % len != 0) {
    throw DimensionError(std::string(what) + ": " + shape_string(x.shape()) +
                         " does not split into sequences of length " + std::to_string(len));
  }
}

Tensor layer_norm_or_identity(Tape& tape, const Tensor& x, const BlockWeights& b, std::size_t i) {
  if (b.norms.empty()) return x;
  return layer_norm(tape, x, b.norms[i].gain, b.norms[i].bias);
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  auto t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Tensor self_attention(Tape& tape, const Tensor& x, const AttentionWeights& w, std::size_t len,
                      const ForwardContext& ctx) {
  require_tokens(x, len, "self_attention");
  auto k = matmul(tape, stacked(tape, w.wk), x);
  auto v = matmul(tape, stacked(tape, w.wv), x);
  return attend(tape, x, len, k, v, len, w, ctx);
}

Tensor cross_attention(Tape& tape, const Tensor& x, std::size_t x_len, const Tensor& y_prefix,
                       std::size_t j, const AttentionWeights& w, const ForwardContext& ctx) {
  if (j == 0) throw DimensionError("cross_attention: empty prefix");
  require_tokens(x, x_len, "cross_attention");
  require_tokens(y_prefix, j, "cross_attention");
  auto k = matmul(tape, stacked(tape, w.wk), x);
  auto v = matmul(tape, stacked(tape, w.wv), x);
  return attend(tape, y_prefix, j, k, v, x_len, w, ctx);
}

Tensor ffn(Tape& tape, const Tensor& x, const FfnWeights& w, const ForwardContext& ctx) {
  auto hidden = relu(tape, add_bias(tape, matmul(tape, w.w1, x), w.b1));
  auto branch = maybe_dropout(tape, add_bias(tape, matmul(tape, w.w2, hidden), w.b2), ctx);
  return add(tape, x, branch);
}

Tensor positional_embedding(PeScheme scheme, std::size_t d, std::size_t t) {
  if (t == 0 || d == 0) throw DimensionError("positional_embedding: d and t must be >= 1");
  auto pe = Tensor::zeros({d, t});
  if (scheme == PeScheme::none) return pe;
  if (scheme == PeScheme::learned) {
    Rng rng(0x5045ULL);
    for (auto& v : pe.data()) v = rng.uniform(-0.02, 0.02);
    return pe;
  }
  auto data = pe.data();
  for (std::size_t row = 0; row < d; ++row) {
    const double i = static_cast<double>(row / 2);
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(d));
    for (std::size_t pos = 0; pos < t; ++pos) {
      const double angle = static_cast<double>(pos) * freq;
      data[row * t + pos] = row % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Tensor positional_embedding(const std::string& scheme, std::size_t d, std::size_t t) {
  return positional_embedding(parse_pe_scheme(scheme), d, t);
}

Tensor Model::register_param(const std::string& name, Tensor t) {
  params_.push_back({name, t});
  return t;
}

AttentionWeights Model::make_attention(const std::string& prefix, Rng& rng) {
  const std::size_t d = config_.d, h = config_.h;
  const double bound = std::sqrt(1.0 / static_cast<double>(d));
  AttentionWeights w;
  for (std::size_t i = 0; i < h; ++i) {
    const auto idx = std::to_string(i);
    w.wq.push_back(register_param(prefix + ".wq." + idx, uniform_tensor({d, d}, bound, rng)));
    w.wk.push_back(register_param(prefix + ".wk." + idx, uniform_tensor({d, d}, bound, rng)));
    w.wv.push_back(register_param(prefix + ".wv." + idx, uniform_tensor({d, d}, bound, rng)));
  }
  w.wo = register_param(prefix + ".wo",
                        uniform_tensor({d, h * d}, std::sqrt(1.0 / static_cast<double>(h * d)), rng));
  return w;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(mix64(seed ^ 0x4D4F44454CULL));
  const std::size_t d = config_.d, r = config_.r;
  const double bd = std::sqrt(1.0 / static_cast<double>(d));
  const double br = std::sqrt(1.0 / static_cast<double>(r));

  in_w_ = register_param("in.w", uniform_tensor({d, d}, bd, rng));
  in_b_ = register_param("in.b", uniform_tensor({d}, bd, rng));
  if (config_.pe_scheme == PeScheme::learned) {
    pe_enc_ = register_param("pe.enc", uniform_tensor({d, config_.m}, 0.02, rng));
    pe_dec_ = register_param("pe.dec", uniform_tensor({d, config_.n}, 0.02, rng));
  } else {
    pe_enc_ = positional_embedding(config_.pe_scheme, d, config_.m);
    pe_dec_ = positional_embedding(config_.pe_scheme, d, config_.n);
  }

  auto make_block = [&](const std::string& prefix, bool decoder) {
    BlockWeights b;
    b.self_attn = make_attention(prefix + ".sa", rng);
    if (decoder) b.cross_attn = make_attention(prefix + ".ca", rng);
    b.ffn.w1 = register_param(prefix + ".ffn.w1", uniform_tensor({r, d}, bd, rng));
    b.ffn.b1 = register_param(prefix + ".ffn.b1", uniform_tensor({r}, bd, rng));
    b.ffn.w2 = register_param(prefix + ".ffn.w2", uniform_tensor({d, r}, br, rng));
    b.ffn.b2 = register_param(prefix + ".ffn.b2", uniform_tensor({d}, br, rng));
    if (config_.use_layernorm) {
      const std::size_t count = decoder ? 3 : 2;
      for (std::size_t i = 0; i < count; ++i) {
        const auto name = prefix + ".ln" + std::to_string(i);
        b.norms.push_back({register_param(name + ".g", Tensor::filled({d}, 1.0)),
                           register_param(name + ".b", Tensor::zeros({d}))});
      }
    }
    return b;
  };
  for (std::size_t i = 0; i < config_.L_enc; ++i) enc_.push_back(make_block("enc." + std::to_string(i), false));

  start_ = register_param("start", uniform_tensor({d}, 1.0, rng));
  if (config_.output == OutputKind::regression) {
    fb_w_ = register_param("fb.w", uniform_tensor({d, 1}, 1.0, rng));
    fb_b_ = register_param("fb.b", uniform_tensor({d}, 1.0, rng));
  } else {
    class_table_ = register_param("class_table", uniform_tensor({d, config_.k_classes}, 1.0, rng));
  }
  for (std::size_t i = 0; i < config_.L_dec; ++i) dec_.push_back(make_block("dec." + std::to_string(i), true));

  const std::size_t out = config_.output == OutputKind::regression ? 1 : config_.k_classes;
  head_w_ = register_param("head.w", uniform_tensor({out, d}, bd, rng));
  head_b_ = register_param("head.b", uniform_tensor({out}, bd, rng));
}

Tensor& Model::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p.value;
  throw UnknownIdError("no parameter named '" + name + "'");
}

std::vector<std::vector<double>> Model::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void Model::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) throw DimensionError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = params_[i].value.data();
    if (values[i].size() != dst.size()) throw DimensionError("restore: size mismatch for " + params_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

void Model::set_requires_grad(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

void Model::clear_grads() {
  for (auto& p : params_) p.value.clear_grad();
}

ForwardContext Model::context(bool training, Rng* rng) const {
  ForwardContext ctx;
  ctx.training = training;
  ctx.dropout = training ? config_.dropout : 0.0;
  ctx.rng = rng;
  ctx.score_scale = config_.scale_attention ? 1.0 / std::sqrt(static_cast<double>(config_.d)) : 1.0;
  return ctx;
}

Tensor Model::tiled_pe(Tape& tape, bool decoder, std::size_t len, std::size_t batch) const {
  const Tensor& table = decoder ? pe_dec_ : pe_enc_;
  std::vector<std::size_t> idx;
  idx.reserve(len * batch);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < len; ++t) idx.push_back(t);
  return select_columns(tape, table, idx);
}

Tensor Model::embed_inputs(Tape& tape, const Tensor& tokens) const {
  if (tokens.rank() > 2 || tokens.rows() != config_.d) {
    throw DimensionError("model input " + shape_string(tokens.shape()) + " needs " + std::to_string(config_.d) +
                         " rows");
  }
  require_tokens(tokens, config_.m, "model input");
  auto x = add_bias(tape, matmul(tape, in_w_, tokens), in_b_);
  if (config_.pe_scheme != PeScheme::none) x = add(tape, x, tiled_pe(tape, false, config_.m, tokens.cols() / config_.m));
  return x;
}

Tensor Model::encode(Tape& tape, const Tensor& tokens, const ForwardContext& ctx) const {
  auto x = embed_inputs(tape, tokens);
  for (std::size_t l = 0; l < enc_.size(); ++l) {
    const auto& b = enc_[l];
    x = layer_norm_or_identity(tape, self_attention(tape, x, b.self_attn, config_.m, ctx), b, 0);
    x = layer_norm_or_identity(tape, ffn(tape, x, b.ffn, ctx), b, 1);
    check_finite(x, "encoder block " + std::to_string(l));
  }
  return x;
}

Tensor Model::start_piece(Tape& tape, std::size_t batch) const {
  std::vector<std::size_t> zeros(batch, 0);
  return select_columns(tape, start_, zeros);
}

Tensor Model::feedback_piece(Tape& tape, const Tensor& values) const {
  auto fb = add_bias(tape, matmul(tape, fb_w_, values), fb_b_);
  return add_bias(tape, fb, start_);
}

Tensor Model::feedback_piece(Tape& tape, std::span<const std::size_t> classes) const {
  return add_bias(tape, select_columns(tape, class_table_, classes), start_);
}

Tensor Model::decode_prefix(Tape& tape, const std::vector<Tensor>& pieces, std::size_t batch,
                            const std::vector<Tensor>& cross_k, const std::vector<Tensor>& cross_v,
                            const ForwardContext& ctx) const {
  const std::size_t j = pieces.size();
  // pieces are position-major; attention wants sample-major columns
  auto raw = concat_columns(tape, pieces);
  std::vector<std::size_t> order;
  order.reserve(j * batch);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < j; ++t) order.push_back(t * batch + b);
  auto x = select_columns(tape, raw, order);
  if (config_.pe_scheme != PeScheme::none) x = add(tape, x, tiled_pe(tape, true, j, batch));
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    const auto& b = dec_[l];
    x = layer_norm_or_identity(tape, self_attention(tape, x, b.self_attn, j, ctx), b, 0);
    x = layer_norm_or_identity(tape, attend(tape, x, j, cross_k[l], cross_v[l], config_.m, *b.cross_attn, ctx), b,
                               1);
    x = layer_norm_or_identity(tape, ffn(tape, x, b.ffn, ctx), b, 2);
    check_finite(x, "decoder block " + std::to_string(l));
  }
  std::vector<std::size_t> last;
  last.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) last.push_back(b * j + j - 1);
  return select_columns(tape, x, last);
}

Tensor Model::forward(Tape& tape, const Tensor& tokens, const ForwardContext& ctx, const Targets* teacher) const {
  auto enc = encode(tape, tokens, ctx);
  const std::size_t n = config_.n, batch = tokens.cols() / config_.m;
  const bool regression = config_.output == OutputKind::regression;
  if (teacher) {
    const std::size_t got = regression ? teacher->values.size() : teacher->classes.size();
    if (got != batch * n) {
      throw DimensionError("teacher targets: expected " + std::to_string(batch * n) + " values, got " +
                           std::to_string(got));
    }
  }

  std::vector<Tensor> cross_k, cross_v;
  for (const auto& b : dec_) {
    cross_k.push_back(matmul(tape, stacked(tape, b.cross_attn->wk), enc));
    cross_v.push_back(matmul(tape, stacked(tape, b.cross_attn->wv), enc));
  }

  std::vector<Tensor> pieces{start_piece(tape, batch)};
  std::vector<Tensor> outputs;
  for (std::size_t j = 1; j <= n; ++j) {
    outputs.push_back(decode_prefix(tape, pieces, batch, cross_k, cross_v, ctx));
    if (j == n) break;
    if (teacher) {
      if (regression) {
        auto row = Tensor::zeros({1, batch});
        for (std::size_t b = 0; b < batch; ++b) row.data()[b] = teacher->values[b * n + j - 1];
        pieces.push_back(feedback_piece(tape, row));
      } else {
        std::vector<std::size_t> cls(batch);
        for (std::size_t b = 0; b < batch; ++b) cls[b] = teacher->classes[b * n + j - 1];
        pieces.push_back(feedback_piece(tape, cls));
      }
    } else {
      auto out = head(tape, outputs.back());
      if (regression) {
        pieces.push_back(feedback_piece(tape, out));
      } else {
        const std::size_t k = config_.k_classes;
        std::vector<std::size_t> cls(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          std::size_t best = 0;
          for (std::size_t c = 1; c < k; ++c)
            if (out.at(c, b) > out.at(best, b)) best = c;
          cls[b] = best;
        }
        pieces.push_back(feedback_piece(tape, cls));
      }
    }
  }

  auto stacked_out = concat_columns(tape, outputs);
  std::vector<std::size_t> order;
  order.reserve(batch * n);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < n; ++t) order.push_back(t * batch + b);
  return select_columns(tape, stacked_out, order);
}

Tensor Model::head(Tape& tape, const Tensor& states) const {
  return add_bias(tape, matmul(tape, head_w_, states), head_b_);
}

Tensor Model::predict(const Tensor& tokens) const {
  Tape tape(false);
  auto ctx = context(false, nullptr);
  auto out = head(tape, forward(tape, tokens, ctx));
  if (config_.output == OutputKind::classification) return softmax(tape, out, 0);
  return out;
}

namespace {
constexpr char kCheckpointMagic[8] = {'X', 'E', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  bin::Writer w;
  w.put_bytes(kCheckpointMagic);
  w.put(kCheckpointVersion);
  nlohmann::json cfg = model.config();
  w.put_string(cfg.dump());
  const auto header_end = w.size();
  w.put(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.put_string(p.name);
    w.put(static_cast<std::uint8_t>(p.value.rank()));
    for (auto dim : p.value.shape()) w.put(static_cast<std::uint64_t>(dim));
    for (double v : p.value.data()) w.put(v);
  }
  auto& bytes = w.bytes();
  const auto sum = bin::fnv1a(std::span<const char>(bytes).subspan(header_end));
  w.put(sum);
  bin::write_file(path.string(), w.bytes());
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = bin::read_file(path.string());
  bin::Reader r(bytes);
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin())) {
    throw BadMagicError(path.string() + " is not an XELCKPT file");
  }
  r.get_bytes(sizeof(kCheckpointMagic));
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  }
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(r.get_string()).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  const auto header_end = r.position();
  if (r.remaining() < sizeof(std::uint64_t)) throw ChecksumError("checkpoint truncated");
  const auto body = std::span<const char>(bytes).subspan(header_end, r.remaining() - sizeof(std::uint64_t));
  bin::Reader tail(std::span<const char>(bytes).subspan(bytes.size() - sizeof(std::uint64_t)));
  if (bin::fnv1a(body) != tail.get<std::uint64_t>()) throw ChecksumError("checkpoint checksum mismatch");

  Model model(cfg, 0);
  const auto count = r.get<std::uint32_t>();
  if (count != model.parameters().size()) throw FormatError("checkpoint parameter count mismatch");
  for (auto& p : model.parameters()) {
    const auto name = r.get_string();
    if (name != p.name) throw FormatError("checkpoint parameter '" + name + "' where '" + p.name + "' expected");
    const auto ndim = r.get<std::uint8_t>();
    Shape shape(ndim);
    for (auto& dim : shape) dim = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape != p.value.shape()) throw FormatError("checkpoint shape mismatch for " + name);
    for (auto& v : p.value.data()) v = r.get<double>();
  }
  return model;
}

}  // namespace xel
