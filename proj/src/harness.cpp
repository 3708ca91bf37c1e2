#include "xel/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "xel/bound.hpp"
#include "xel/errors.hpp"
#include "xel/functions.hpp"
#include "xel/rng.hpp"

namespace xel {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

/// Reads fields of one JSON object, tracking which keys were consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw SchemaError(where() + "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw SchemaError(join(path_, key) + ": required field missing");
    return j_.at(key);
  }

  std::string str(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    seen_.insert(key);
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(join(path_, key) + ": required field missing");
    }
    const json& v = j_.at(key);
    if (!v.is_string()) throw SchemaError(join(path_, key) + ": expected a string");
    return v.get<std::string>();
  }

  std::uint64_t uint(const std::string& key, std::uint64_t lo, std::uint64_t hi,
                     std::optional<std::uint64_t> fallback = std::nullopt) {
    seen_.insert(key);
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(join(path_, key) + ": required field missing");
    }
    return as_uint(j_.at(key), join(path_, key), lo, hi);
  }

  double number(const std::string& key, double lo, double hi, std::optional<double> fallback = std::nullopt) {
    seen_.insert(key);
    if (!has(key)) {
      if (fallback) return *fallback;
      throw SchemaError(join(path_, key) + ": required field missing");
    }
    const json& v = j_.at(key);
    if (!v.is_number()) throw SchemaError(join(path_, key) + ": expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) {
      std::ostringstream os;
      os << join(path_, key) << ": value " << x << " outside [" << lo << ", " << hi << "]";
      throw SchemaError(os.str());
    }
    return x;
  }

  bool boolean(const std::string& key, bool fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw SchemaError(join(path_, key) + ": expected true or false");
    return v.get<bool>();
  }

  Fields object(const std::string& key) { return Fields(raw(key), join(path_, key)); }
  const std::string& path() const { return path_; }

  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw SchemaError(join(path_, k) + ": unknown field");
  }

  static std::uint64_t as_uint(const json& v, const std::string& path, std::uint64_t lo, std::uint64_t hi) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw SchemaError(path + ": expected a non-negative integer");
    const auto x = v.get<std::uint64_t>();
    if (x < lo || x > hi)
      throw SchemaError(path + ": value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    return x;
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

constexpr std::uint64_t kModelSalt = 0x6D6F64656CULL;
constexpr std::size_t kMaxLayers = 15, kMaxHeads = 16, kMaxEmb = 512, kMaxFfn = 1024;

void sync_variant(RunConfig& c) {
  c.model.m = suite_inputs(c.data.variant);
  c.model.n = suite_outputs(c.data.variant);
  c.data.d = c.model.d;
}

}  // namespace

RunConfig parse_run_config(const json& j, const std::string& path) {
  Fields top(j, path);
  RunConfig c;
  c.experiment_id = top.str("experiment_id");
  c.experiment = top.str("experiment");
  if (c.experiment != "expt1" && c.experiment != "expt2")
    throw SchemaError(join(path, "experiment") + ": expected \"expt1\" or \"expt2\", got \"" + c.experiment + "\"");
  c.seed = top.uint("seed", 0, UINT64_MAX);
  const bool classify = c.experiment == "expt2";

  {
    Fields d = top.object("data");
    c.data.variant = d.str("variant");
    if (!is_suite_variant(c.data.variant))
      throw SchemaError(join(d.path(), "variant") + ": unknown variant \"" + c.data.variant + "\"");
    c.data.n_train = d.uint("n_train", 1, 100000000);
    c.data.n_val = d.uint("n_val", 1, 100000000);
    c.data.n_test = d.uint("n_test", 1, 100000000);
    c.data.seed = d.uint("seed", 0, UINT64_MAX, 0);
    if (classify) {
      c.data.k_classes = d.uint("k_classes", 2, 65535);
    } else if (d.has("k_classes")) {
      throw SchemaError(join(d.path(), "k_classes") + ": only valid for expt2");
    } else {
      d.str("k_classes", "");  // allows an explicit null
    }
    if (d.has("dir")) c.data_dir = d.str("dir");
    d.finish();
  }
  {
    Fields m = top.object("model");
    const auto layers = m.uint("layers", 1, kMaxLayers);
    c.model.L_enc = c.model.L_dec = layers;
    c.model.h = m.uint("heads", 1, kMaxHeads);
    c.model.d = m.uint("d", 1, kMaxEmb);
    c.model.r = m.uint("r", 1, kMaxFfn);
    const auto pe = m.str("pe_scheme", "sinusoidal");
    try {
      c.model.pe_scheme = parse_pe_scheme(pe);
    } catch (const Error&) {
      throw SchemaError(join(m.path(), "pe_scheme") + ": expected sinusoidal, learned or none, got \"" + pe + "\"");
    }
    c.model.use_layernorm = m.boolean("layernorm", false);
    c.model.scale_attention = m.boolean("scale_attention", false);
    m.finish();
  }
  {
    Fields t = top.object("train");
    c.train.batch_size = t.uint("batch_size", 1, 1u << 20);
    c.train.max_steps = t.uint("max_steps", 1, 100000000);
    c.train.learning_rate = t.number("learning_rate", 0.0, 1.0);
    c.train.warmup_fraction = t.number("warmup_fraction", 0.0, 1.0);
    c.train.dropout = t.number("dropout", 0.0, 0.5);
    c.train.eval_every = t.uint("eval_every", 1, 100000000, 100);
    const auto sched = t.str("schedule", "linear");
    if (sched != "linear" && sched != "constant")
      throw SchemaError(join(t.path(), "schedule") + ": expected linear or constant, got \"" + sched + "\"");
    c.train.schedule = parse_schedule(sched);
    c.train.clip_norm = t.number("clip_norm", 1e-12, 1e12, 1.0);
    t.finish();
  }
  if (top.has("eval")) {
    Fields e = top.object("eval");
    if (e.has("ks")) {
      const json& ks = e.raw("ks");
      if (!ks.is_array()) throw SchemaError(join(e.path(), "ks") + ": expected an array");
      c.ks.clear();
      for (std::size_t i = 0; i < ks.size(); ++i)
        c.ks.push_back(Fields::as_uint(ks[i], join(e.path(), "ks") + "[" + std::to_string(i) + "]", 1, 100000000));
    }
    e.finish();
  } else {
    top.str("eval", "");
  }
  top.finish();

  c.model.output = classify ? OutputKind::classification : OutputKind::regression;
  c.model.k_classes = classify ? *c.data.k_classes : 0;
  c.model.dropout = c.train.dropout;
  c.train.loss_kind = classify ? LossKind::cross_entropy : LossKind::mse;
  c.train.seed = c.seed;
  sync_variant(c);
  return c;
}

json run_config_json(const RunConfig& c) {
  json data{{"variant", c.data.variant}, {"n_train", c.data.n_train}, {"n_val", c.data.n_val},
            {"n_test", c.data.n_test},   {"seed", c.data.seed}};
  if (c.data.k_classes) data["k_classes"] = *c.data.k_classes;
  if (c.data_dir) data["dir"] = c.data_dir->string();
  return json{{"experiment_id", c.experiment_id},
              {"experiment", c.experiment},
              {"seed", c.seed},
              {"data", data},
              {"model",
               {{"layers", c.model.L_enc},
                {"heads", c.model.h},
                {"d", c.model.d},
                {"r", c.model.r},
                {"pe_scheme", to_string(c.model.pe_scheme)},
                {"layernorm", c.model.use_layernorm},
                {"scale_attention", c.model.scale_attention}}},
              {"train",
               {{"batch_size", c.train.batch_size},
                {"max_steps", c.train.max_steps},
                {"learning_rate", c.train.learning_rate},
                {"warmup_fraction", c.train.warmup_fraction},
                {"dropout", c.train.dropout},
                {"eval_every", c.train.eval_every},
                {"schedule", to_string(c.train.schedule)},
                {"clip_norm", c.train.clip_norm}}},
              {"eval", {{"ks", c.ks}}}};
}

namespace {

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(file.string() + ": " + e.what());
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& file) { return parse_run_config(read_json_file(file)); }

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("XEL_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0' || v[0] == '-') throw SchemaError(std::string("XEL_SEED: expected an unsigned integer, got \"") + v + "\"");
  return s;
}

RunRecord execute(const RunConfig& config) {
  RunConfig c = config;
  sync_variant(c);
  c.model.validate();
  c.data.validate();
  Dataset ds = c.data_dir ? load_dataset(*c.data_dir) : generate(c.data);
  if (c.data_dir && !(ds.train.spec.variant == c.data.variant && ds.train.spec.k_classes == c.data.k_classes))
    throw SchemaError("data.dir: files hold variant " + ds.train.spec.variant + ", config asks for " + c.data.variant);
  Model model(c.model, mix64(c.seed ^ kModelSalt));
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  TrainOptions opt;
  opt.ks = c.ks;
  opt.experiment_id = c.experiment_id;
  RunRecord rec = train(model, ds, tc, opt).record;
  rec.data = c.data;
  return rec;
}

Axis parse_axis(const std::string& name) {
  static const std::map<std::string, Axis> names = {
      {"layers", Axis::layers},       {"heads", Axis::heads},         {"ffn_dim", Axis::ffn_dim},
      {"emb_dim", Axis::emb_dim},     {"n_inputs", Axis::n_inputs},   {"n_outputs", Axis::n_outputs},
      {"pe_scheme", Axis::pe_scheme}, {"n_classes", Axis::n_classes}, {"data_size", Axis::data_size},
      {"k_of_topk", Axis::k_of_topk}};
  auto it = names.find(name);
  if (it == names.end()) throw SchemaError("axis: unknown axis \"" + name + "\"");
  return it->second;
}

std::string to_string(Axis axis) {
  switch (axis) {
    case Axis::layers: return "layers";
    case Axis::heads: return "heads";
    case Axis::ffn_dim: return "ffn_dim";
    case Axis::emb_dim: return "emb_dim";
    case Axis::n_inputs: return "n_inputs";
    case Axis::n_outputs: return "n_outputs";
    case Axis::pe_scheme: return "pe_scheme";
    case Axis::n_classes: return "n_classes";
    case Axis::data_size: return "data_size";
    case Axis::k_of_topk: return "k_of_topk";
  }
  return "?";
}

std::string axis_value_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

RunConfig apply_axis(const RunConfig& base, Axis axis, const json& value, const std::string& path) {
  RunConfig c = base;
  auto uint_in = [&](std::uint64_t lo, std::uint64_t hi) { return Fields::as_uint(value, path, lo, hi); };
  switch (axis) {
    case Axis::layers: c.model.L_enc = c.model.L_dec = uint_in(1, kMaxLayers); break;
    case Axis::heads: c.model.h = uint_in(1, kMaxHeads); break;
    case Axis::ffn_dim: c.model.r = uint_in(1, kMaxFfn); break;
    case Axis::emb_dim: c.model.d = c.model.r = uint_in(1, kMaxEmb); break;
    case Axis::n_inputs:
    case Axis::n_outputs: {
      const auto v = uint_in(1, 9);
      const std::size_t m = axis == Axis::n_inputs ? v : suite_inputs(c.data.variant);
      const std::size_t n = axis == Axis::n_outputs ? v : suite_outputs(c.data.variant);
      const std::string variant = "m" + std::to_string(m) + "n" + std::to_string(n);
      if (!is_suite_variant(variant)) throw SchemaError(path + ": no dataset variant " + variant);
      c.data.variant = variant;
      break;
    }
    case Axis::pe_scheme:
      if (!value.is_string()) throw SchemaError(path + ": expected a string");
      try {
        c.model.pe_scheme = parse_pe_scheme(value.get<std::string>());
      } catch (const Error&) {
        throw SchemaError(path + ": expected sinusoidal, learned or none");
      }
      break;
    case Axis::n_classes:
      if (c.experiment != "expt2") throw SchemaError(path + ": n_classes applies to expt2 only");
      c.data.k_classes = uint_in(2, 65535);
      c.model.k_classes = *c.data.k_classes;
      break;
    case Axis::data_size: c.data.n_train = uint_in(1, 100000000); break;
    case Axis::k_of_topk: c.ks = {static_cast<std::size_t>(uint_in(1, 100000000))}; break;
  }
  sync_variant(c);
  return c;
}

SweepSpec parse_sweep_spec(const json& j) {
  Fields top(j, "");
  SweepSpec s;
  s.sweep_id = top.str("sweep_id");
  const auto axis = top.str("axis");
  try {
    s.axis = parse_axis(axis);
  } catch (const SchemaError&) {
    throw SchemaError("axis: unknown axis \"" + axis + "\"");
  }
  const json& values = top.raw("values");
  if (!values.is_array() || values.empty()) throw SchemaError("values: expected a nonempty array");
  s.values.assign(values.begin(), values.end());
  const json& seeds = top.raw("seeds");
  if (!seeds.is_array()) throw SchemaError("seeds: expected an array");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    s.seeds.push_back(Fields::as_uint(seeds[i], "seeds[" + std::to_string(i) + "]", 0, UINT64_MAX));
  if (s.seeds.size() < 2) throw SchemaError("seeds: at least 2 seeds are needed for a standard deviation");
  const json& ex = top.raw("experiments");
  if (!ex.is_array() || ex.empty()) throw SchemaError("experiments: expected a nonempty array");
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const std::string p = "experiments[" + std::to_string(i) + "]";
    if (!ex[i].is_string() || (ex[i] != "expt1" && ex[i] != "expt2"))
      throw SchemaError(p + ": expected \"expt1\" or \"expt2\"");
    s.experiments.push_back(ex[i].get<std::string>());
  }
  Fields base = top.object("base");
  for (const auto& e : s.experiments) {
    const std::string p = join("base", e);
    RunConfig c = parse_run_config(base.raw(e), p);
    if (c.experiment != e) throw SchemaError(join(p, "experiment") + ": expected \"" + e + "\"");
    s.base[e] = c;
  }
  base.finish();
  top.finish();
  // Validate every axis value against every base up front.
  for (std::size_t i = 0; i < s.values.size(); ++i)
    for (const auto& e : s.experiments) apply_axis(s.base.at(e), s.axis, s.values[i], "values[" + std::to_string(i) + "]");
  return s;
}

json sweep_spec_json(const SweepSpec& s) {
  json base = json::object();
  for (const auto& [k, v] : s.base) base[k] = run_config_json(v);
  return json{{"sweep_id", s.sweep_id},   {"axis", to_string(s.axis)},         {"values", s.values},
              {"seeds", s.seeds},         {"experiments", s.experiments},      {"base", base}};
}

std::vector<SweepCell> expand(const SweepSpec& spec) {
  std::vector<SweepCell> cells;
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    const std::string value = axis_value_string(spec.values[i]);
    for (const auto& e : spec.experiments)
      for (std::uint64_t seed : spec.seeds) {
        RunConfig c = apply_axis(spec.base.at(e), spec.axis, spec.values[i], "values[" + std::to_string(i) + "]");
        c.seed = seed;
        c.train.seed = seed;
        c.experiment_id = spec.sweep_id + ":" + to_string(spec.axis) + "=" + value;
        cells.push_back({std::move(c), value});
      }
  }
  return cells;
}

Scale parse_scale(const std::string& name) {
  if (name == "smoke") return Scale::smoke;
  if (name == "desk") return Scale::desk;
  if (name == "paper") return Scale::paper;
  throw SchemaError("scale: expected smoke, desk or paper, got \"" + name + "\"");
}

std::string to_string(Scale scale) {
  switch (scale) {
    case Scale::smoke: return "smoke";
    case Scale::desk: return "desk";
    case Scale::paper: return "paper";
  }
  return "?";
}

RunConfig default_run_config(const std::string& experiment, Scale scale) {
  if (experiment != "expt1" && experiment != "expt2") throw SchemaError("experiment: expected expt1 or expt2");
  const bool classify = experiment == "expt2";
  json j;
  j["experiment_id"] = experiment;
  j["experiment"] = experiment;
  j["seed"] = 1;
  json data{{"variant", "m4n3"}};
  json train{{"batch_size", 128}, {"max_steps", 1200}, {"learning_rate", 1e-3}, {"warmup_fraction", 0.2},
             {"dropout", 0.1},    {"eval_every", 100},  {"schedule", "linear"}, {"clip_norm", 1.0}};
  switch (scale) {
    case Scale::smoke:
      data.update({{"n_train", 256}, {"n_val", 64}, {"n_test", 128}});
      train.update({{"batch_size", 32}, {"max_steps", 20}, {"eval_every", 10}});
      break;
    case Scale::desk: data.update({{"n_train", 20000}, {"n_val", 1000}, {"n_test", 2000}}); break;
    case Scale::paper: data.update({{"n_train", 200000}, {"n_val", 10000}, {"n_test", 20000}}); break;
  }
  if (classify) data["k_classes"] = 5;
  const std::size_t d = classify ? 128 : 32;
  j["data"] = data;
  j["model"] = {{"layers", 2}, {"heads", 2}, {"d", d}, {"r", d}, {"pe_scheme", "sinusoidal"}};
  j["train"] = train;
  j["eval"] = {{"ks", {2, 5}}};
  return parse_run_config(j);
}

std::vector<std::string> preset_names() {
  return {"fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b", "fig6", "fig8", "fig9", "fig10"};
}

SweepSpec preset(const std::string& name, Scale scale) {
  SweepSpec s;
  s.sweep_id = name;
  s.experiments = {"expt1", "expt2"};
  s.seeds = scale == Scale::smoke ? std::vector<std::uint64_t>{1, 2} : std::vector<std::uint64_t>{1, 2, 3, 4, 5};
  for (const auto& e : s.experiments) s.base[e] = default_run_config(e, scale);
  const bool smoke = scale == Scale::smoke;
  auto ints = [&](std::vector<int> full, std::size_t smoke_count) {
    if (smoke && full.size() > smoke_count) full.resize(smoke_count);
    s.values.assign(full.begin(), full.end());
  };
  if (name == "fig3a") {
    s.axis = Axis::layers;
    ints({1, 2, 4, 6, 8, 10, 12, 15}, 3);
  } else if (name == "fig3b") {
    s.axis = Axis::heads;
    ints({1, 2, 4, 8, 16}, 3);
  } else if (name == "fig4a") {
    s.axis = Axis::ffn_dim;
    for (auto& [k, c] : s.base) c.model.d = c.data.d = 64;
    ints({8, 16, 32, 64, 128, 256, 512, 1024}, 3);
  } else if (name == "fig4b") {
    s.axis = Axis::emb_dim;
    ints({4, 8, 16, 32, 64, 128, 256, 512}, 3);
  } else if (name == "fig5a") {
    s.axis = Axis::n_outputs;
    ints({1, 2, 3}, 3);
  } else if (name == "fig5b") {
    s.axis = Axis::n_inputs;
    ints({2, 3, 4}, 3);
  } else if (name == "fig6") {
    s.axis = Axis::k_of_topk;
    ints({1, 2, 5, 10}, 4);
  } else if (name == "fig8") {
    s.axis = Axis::emb_dim;
    s.experiments = {"expt2"};
    s.base.erase("expt1");
    s.base["expt2"].data.k_classes = 20;
    s.base["expt2"].model.k_classes = 20;
    ints({4, 8, 16, 32, 64, 128, 256, 512}, 3);
  } else if (name == "fig9") {
    s.axis = Axis::pe_scheme;
    s.values = {"sinusoidal", "learned"};
  } else if (name == "fig10") {
    s.axis = Axis::data_size;
    const int base = static_cast<int>(s.base["expt1"].data.n_train);
    ints({base, 2 * base}, 2);
  } else {
    throw UnknownIdError("unknown preset \"" + name + "\"");
  }
  for (auto& [k, c] : s.base) c.experiment_id = name;
  return s;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool all_numeric(const std::vector<std::string>& values) {
  for (const auto& v : values) {
    char* end = nullptr;
    std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') return false;
  }
  return true;
}

/// Metric a record contributes to its trend cell, if any.
std::optional<double> trend_metric(const RunRecord& r) {
  if (r.axis == "k_of_topk") {
    const auto it = r.failure_rate_at_k.find(static_cast<std::size_t>(std::stoull(r.axis_value)));
    if (it == r.failure_rate_at_k.end()) return std::nullopt;
    return it->second;
  }
  return r.failure_rate;
}

}  // namespace

TrendTable aggregate(const std::vector<RunRecord>& records) {
  TrendTable t;
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : records) {
    if (r.status != "ok") continue;
    if (t.axis.empty()) t.axis = r.axis;
    const auto v = trend_metric(r);
    if (v) groups[{r.axis_value, r.expt_kind}].push_back(*v);
  }
  t.metric = t.axis == "k_of_topk" ? "failure_rate_at_k" : "failure_rate";

  std::vector<std::string> values;
  for (const auto& [key, v] : groups)
    if (std::find(values.begin(), values.end(), key.first) == values.end()) values.push_back(key.first);
  if (all_numeric(values))
    std::sort(values.begin(), values.end(),
              [](const std::string& a, const std::string& b) { return std::stod(a) < std::stod(b); });

  for (const auto& value : values)
    for (const auto& kind : {"expt1", "expt2"}) {
      auto it = groups.find({value, kind});
      if (it == groups.end()) continue;
      std::vector<double> xs = it->second;
      std::sort(xs.begin(), xs.end());
      TrendRow row;
      row.axis_value = value;
      row.expt_kind = kind;
      row.runs = xs.size();
      double sum = 0.0;
      for (double x : xs) sum += x;
      row.mean = sum / static_cast<double>(xs.size());
      if (xs.size() >= 2) {
        double ss = 0.0;
        for (double x : xs) ss += (x - row.mean) * (x - row.mean);
        row.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
      }
      t.rows.push_back(row);
    }
  return t;
}

std::string csv_header() {
  return "experiment_id,expt_kind,seed,variant,L,h,d,r,m,n,k_classes,pe_scheme,n_train,failure_rate,"
         "failure_rate_at_2,failure_rate_at_5,val_loss,runtime_s";
}

std::string csv_row(const RunRecord& r) {
  auto at = [&](std::size_t k) {
    const auto it = r.failure_rate_at_k.find(k);
    return it == r.failure_rate_at_k.end() ? std::string() : format_double(it->second);
  };
  std::ostringstream os;
  os << csv_field(r.experiment_id) << ',' << r.expt_kind << ',' << r.seed << ',' << r.data.variant << ','
     << r.model.L_enc << ',' << r.model.h << ',' << r.model.d << ',' << r.model.r << ',' << r.model.m << ','
     << r.model.n << ',' << (r.data.k_classes ? std::to_string(*r.data.k_classes) : std::string()) << ','
     << to_string(r.model.pe_scheme) << ',' << r.data.n_train << ',' << format_double(r.failure_rate) << ','
     << at(2) << ',' << at(5) << ',' << format_double(r.best_val_loss) << ',' << format_double(r.runtime_s);
  return os.str();
}

std::string runs_csv(const std::vector<RunRecord>& records) {
  std::string out = csv_header() + "\n";
  for (const auto& r : records)
    if (r.status == "ok") out += csv_row(r) + "\n";
  return out;
}

std::string trend_csv(const TrendTable& t) {
  std::string out = "axis,axis_value,expt_kind,metric,runs,mean,std\n";
  for (const auto& row : t.rows)
    out += t.axis + "," + csv_field(row.axis_value) + "," + row.expt_kind + "," + t.metric + "," +
           std::to_string(row.runs) + "," + format_double(row.mean) + "," +
           (row.std ? format_double(*row.std) : std::string()) + "\n";
  return out;
}

std::string render_svg(const TrendTable& t, const std::string& title) {
  constexpr double W = 640, H = 400, left = 60, right = 130, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  std::vector<std::string> values;
  for (const auto& r : t.rows)
    if (std::find(values.begin(), values.end(), r.axis_value) == values.end()) values.push_back(r.axis_value);
  auto xpos = [&](const std::string& v) {
    const auto i = static_cast<double>(std::find(values.begin(), values.end(), v) - values.begin());
    return values.size() < 2 ? left + pw / 2 : left + pw * i / static_cast<double>(values.size() - 1);
  };
  auto ypos = [&](double y) { return top + ph * (1.0 - std::clamp(y, 0.0, 1.0)); };
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };
  auto esc = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '<') out += "&lt;";
      else if (c == '>') out += "&gt;";
      else if (c == '&') out += "&amp;";
      else out += c;
    }
    return out;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << f(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << esc(title) << "</text>\n";
  os << "<line x1=\"" << f(left) << "\" y1=\"" << f(top + ph) << "\" x2=\"" << f(left + pw) << "\" y2=\"" << f(top + ph)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << f(left) << "\" y1=\"" << f(top) << "\" x2=\"" << f(left) << "\" y2=\"" << f(top + ph)
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = ypos(i / 5.0);
    os << "<line x1=\"" << f(left - 4) << "\" y1=\"" << f(y) << "\" x2=\"" << f(left) << "\" y2=\"" << f(y)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << f(left - 8) << "\" y=\"" << f(y + 4) << "\" text-anchor=\"end\">" << f(i / 5.0)
       << "</text>\n";
  }
  for (const auto& v : values) {
    const double x = xpos(v);
    os << "<line x1=\"" << f(x) << "\" y1=\"" << f(top + ph) << "\" x2=\"" << f(x) << "\" y2=\"" << f(top + ph + 4)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << f(x) << "\" y=\"" << f(top + ph + 18) << "\" text-anchor=\"middle\">" << esc(v)
       << "</text>\n";
  }
  os << "<text x=\"" << f(left + pw / 2) << "\" y=\"" << f(H - 10) << "\" text-anchor=\"middle\">" << esc(t.axis)
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << f(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << f(top + ph / 2) << ")\">" << esc(t.metric) << "</text>\n";

  const std::vector<std::pair<std::string, std::string>> kinds = {{"expt1", "#d62728"}, {"expt2", "#1f77b4"}};
  double legend_y = top + 10;
  for (const auto& [kind, color] : kinds) {
    std::vector<const TrendRow*> rows;
    for (const auto& r : t.rows)
      if (r.expt_kind == kind) rows.push_back(&r);
    if (rows.empty()) continue;
    std::string upper, lower;
    bool band = true;
    for (const auto* r : rows) band = band && r->std.has_value();
    if (band) {
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (const auto* r : rows) os << f(xpos(r->axis_value)) << "," << f(ypos(r->mean + *r->std)) << " ";
      for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        os << f(xpos((*it)->axis_value)) << "," << f(ypos((*it)->mean - *(*it)->std)) << " ";
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto* r : rows) os << f(xpos(r->axis_value)) << "," << f(ypos(r->mean)) << " ";
    os << "\"/>\n";
    for (const auto* r : rows)
      os << "<circle cx=\"" << f(xpos(r->axis_value)) << "\" cy=\"" << f(ypos(r->mean)) << "\" r=\"3\" fill=\""
         << color << "\"/>\n";
    os << "<rect x=\"" << f(left + pw + 15) << "\" y=\"" << f(legend_y - 9) << "\" width=\"12\" height=\"12\" fill=\""
       << color << "\"/>\n";
    os << "<text x=\"" << f(left + pw + 32) << "\" y=\"" << f(legend_y + 1) << "\">" << kind << "</text>\n";
    legend_y += 20;
  }
  os << "</svg>\n";
  return os.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string sweep_title(const TrendTable& t) { return t.metric + " vs " + t.axis; }

void write_trend(const std::filesystem::path& out, const TrendTable& table) {
  write_text(out / "trend.csv", trend_csv(table));
  write_text(out / "trend.svg", render_svg(table, sweep_title(table)));
}

}  // namespace

SweepOutcome sweep(const SweepSpec& spec, std::size_t workers, const std::filesystem::path& out) {
  const auto cells = expand(spec);
  const std::string axis = to_string(spec.axis);

  // Top-k cells differ only in evaluation k: train once per (kind, seed).
  std::vector<RunConfig> jobs;
  std::vector<std::size_t> job_of(cells.size());
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> shared;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (spec.axis == Axis::k_of_topk) {
      const auto key = std::make_pair(cells[i].config.experiment, cells[i].config.seed);
      auto it = shared.find(key);
      if (it == shared.end()) {
        RunConfig c = cells[i].config;
        c.ks.clear();
        for (const auto& v : spec.values) c.ks.push_back(v.get<std::size_t>());
        c.experiment_id = spec.sweep_id + ":" + axis;
        it = shared.emplace(key, jobs.size()).first;
        jobs.push_back(c);
      }
      job_of[i] = it->second;
    } else {
      job_of[i] = jobs.size();
      jobs.push_back(cells[i].config);
    }
  }

  std::vector<RunRecord> job_records(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        job_records[j] = execute(jobs[j]);
      } catch (const std::exception& e) {
        RunRecord r;
        r.experiment_id = jobs[j].experiment_id;
        r.expt_kind = jobs[j].experiment;
        r.seed = jobs[j].seed;
        r.model = jobs[j].model;
        r.train = jobs[j].train;
        r.data = jobs[j].data;
        r.status = "failed";
        r.error = "run " + jobs[j].experiment_id + " (seed " + std::to_string(jobs[j].seed) + "): " + e.what();
        job_records[j] = r;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, jobs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepOutcome outcome;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    RunRecord r = job_records[job_of[i]];
    r.experiment_id = cells[i].config.experiment_id;
    r.axis = axis;
    r.axis_value = cells[i].axis_value;
    if (spec.axis == Axis::k_of_topk && r.status == "ok" && !trend_metric(r)) continue;  // k beyond class count
    if (r.status != "ok") ++outcome.failures;
    outcome.records.push_back(r);
  }
  outcome.table = aggregate(outcome.records);
  outcome.table.axis = axis;

  std::filesystem::create_directories(out);
  std::string jsonl;
  for (const auto& r : outcome.records) jsonl += json(r).dump() + "\n";
  write_text(out / "runs.jsonl", jsonl);
  write_text(out / "runs.csv", runs_csv(outcome.records));
  write_trend(out, outcome.table);
  return outcome;
}

TrendTable aggregate_dir(const std::filesystem::path& out) {
  const auto records = read_jsonl(out / "runs.jsonl");
  TrendTable table = aggregate(records);
  write_text(out / "runs.csv", runs_csv(records));
  write_trend(out, table);
  return table;
}

std::string bound_report(const std::string& function_id, double epsilon, double p, const BoundReportOptions& opt) {
  const SmoothFunction& f = find_function(function_id);
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  if (!(p >= 1.0)) throw DomainError("p must be >= 1");
  std::ostringstream os;
  os.precision(6);
  os << "function: " << function_id << " (m=" << f.m() << ", n=" << f.n() << ", d=" << f.d() << ")\n";
  os << "epsilon: " << epsilon << "\n";
  os << "p: " << p << "\n";

  const BoundReport rep = delta_bound_general(f, epsilon, p);
  os << "analytic delta_max: " << rep.delta_max << "\n";
  os << "fixed-point iterations: " << rep.iterations
     << (rep.converged ? " (converged)" : rep.diverged ? " (diverged)" : " (not converged)") << "\n";
  os << "derivative mass: " << rep.derivative_mass << (rep.mass_estimated ? " (quasi-random estimate)" : "") << "\n";
  os << "unconstrained: " << (rep.unconstrained ? "yes" : "no") << "\n";
  if (opt.points) {
    if (f.input_size() != 1 || f.output_size() != 1) {
      os << "closed-form delta: unavailable (needs a scalar function)\n";
    } else {
      const Covering cov = Covering::with_points(f.support(), *opt.points);
      const Bound1D b = delta_bound_1d(f, epsilon, cov);
      os << "closed-form delta (K=" << *opt.points << "): " << b.delta
         << (b.unconstrained ? " (unconstrained)" : "") << "\n";
    }
  }
  if (opt.empirical) {
    try {
      const EmpiricalResult e = empirical_delta_star(f, epsilon, p);
      os << "empirical delta*: " << e.delta_star << (e.unconstrained ? " (unconstrained)" : "") << "\n";
      if (!rep.unconstrained && !e.unconstrained && e.delta_star > 0.0)
        os << "relative gap: " << std::abs(rep.delta_max - e.delta_star) / e.delta_star << "\n";
    } catch (const Error& e) {
      os << "empirical delta*: unavailable (" << e.what() << ")\n";
    }
  }
  os << "layer count estimate m*ceil((1/delta)^(d*m)): " << rep.layer_estimate.count
     << (rep.layer_estimate.floored ? " (delta > 1, floored at m)" : "") << "\n";
  return os.str();
}

}  // namespace xel
