#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xel/data.hpp"
#include "xel/train.hpp"
#include "xel/transformer.hpp"

namespace xel {

/// One fully specified training run. Layout documented in
/// docs/config-schema.md.
struct RunConfig {
  std::string experiment_id;
  std::string experiment;  // "expt1" | "expt2"
  std::uint64_t seed = 0;
  DatasetSpec data;
  std::optional<std::filesystem::path> data_dir;  // prebuilt XELDATA files
  ModelConfig model;
  TrainConfig train;
  std::vector<std::size_t> ks = {2, 5};
};

/// Strict parse; throws SchemaError naming the offending field path.
RunConfig parse_run_config(const nlohmann::json& j, const std::string& path = "");
nlohmann::json run_config_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& file);

/// Returns the XEL_SEED override, if set. Throws SchemaError if malformed.
std::optional<std::uint64_t> env_seed();

/// generate/load data, build, train, evaluate.
RunRecord execute(const RunConfig& config);

enum class Axis { layers, heads, ffn_dim, emb_dim, n_inputs, n_outputs, pe_scheme, n_classes, data_size, k_of_topk };
Axis parse_axis(const std::string& name);
std::string to_string(Axis axis);

struct SweepSpec {
  std::string sweep_id;
  Axis axis = Axis::layers;
  std::vector<nlohmann::json> values;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> experiments;      // subset of {expt1, expt2}
  std::map<std::string, RunConfig> base;     // per experiment kind
};

SweepSpec parse_sweep_spec(const nlohmann::json& j);
nlohmann::json sweep_spec_json(const SweepSpec& s);

/// Canonical text of an axis value ("4", "learned").
std::string axis_value_string(const nlohmann::json& v);

/// Base config with the axis value applied. Throws SchemaError on values
/// outside the supported range.
RunConfig apply_axis(const RunConfig& base, Axis axis, const nlohmann::json& value, const std::string& path);

struct SweepCell {
  RunConfig config;
  std::string axis_value;
};

/// Cells in (value, experiment, seed) order.
std::vector<SweepCell> expand(const SweepSpec& spec);

enum class Scale { smoke, desk, paper };
Scale parse_scale(const std::string& name);
std::string to_string(Scale scale);

/// Base run config for an experiment kind at a scale.
RunConfig default_run_config(const std::string& experiment, Scale scale);

std::vector<std::string> preset_names();
SweepSpec preset(const std::string& name, Scale scale);

struct TrendRow {
  std::string axis_value;
  std::string expt_kind;
  std::size_t runs = 0;
  double mean = 0.0;
  std::optional<double> std;  // sample standard deviation, needs >= 2 runs
};

struct TrendTable {
  std::string axis;
  std::string metric;
  std::vector<TrendRow> rows;
};

/// Mean and sample standard deviation per (axis value, kind) over
/// successful records. Independent of record order.
TrendTable aggregate(const std::vector<RunRecord>& records);

std::string csv_header();
std::string csv_row(const RunRecord& r);
std::string runs_csv(const std::vector<RunRecord>& records);
std::string trend_csv(const TrendTable& t);
std::string render_svg(const TrendTable& t, const std::string& title);

struct SweepOutcome {
  std::vector<RunRecord> records;  // all cells, failed ones included
  TrendTable table;
  std::size_t failures = 0;
};

/// Runs every cell on up to `workers` threads and writes runs.jsonl,
/// runs.csv, trend.csv and trend.svg under out.
SweepOutcome sweep(const SweepSpec& spec, std::size_t workers, const std::filesystem::path& out);

/// Rewrites trend.csv and trend.svg from out/runs.jsonl.
TrendTable aggregate_dir(const std::filesystem::path& out);

struct BoundReportOptions {
  std::optional<std::size_t> points;  // K covering points for the 1-D closed form
  bool empirical = true;
};

std::string bound_report(const std::string& function_id, double epsilon, double p,
                         const BoundReportOptions& opt = {});

}  // namespace xel
