#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "xel/data.hpp"
#include "xel/errors.hpp"
#include "xel/harness.hpp"

using namespace xel;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

DatasetSpec parse_data_config(const nlohmann::json& j) {
  // Accepts a bare data section or a full run config.
  if (j.contains("data") && j.contains("model")) {
    RunConfig c = parse_run_config(j);
    return c.data;
  }
  nlohmann::json wrapped = {{"experiment_id", "data"},
                            {"experiment", j.contains("k_classes") && !j["k_classes"].is_null() ? "expt2" : "expt1"},
                            {"seed", 0},
                            {"data", j},
                            {"model", {{"layers", 1}, {"heads", 1}, {"d", j.value("d", 1)}, {"r", 1}}},
                            {"train",
                             {{"batch_size", 1}, {"max_steps", 1}, {"learning_rate", 0.0}, {"warmup_fraction", 0.0},
                              {"dropout", 0.0}}}};
  wrapped["data"].erase("d");
  return parse_run_config(wrapped).data;
}

void print_split(const Split& s) {
  std::printf("split: %s\n", to_string(s.kind).c_str());
  std::printf("variant: %s (m=%zu, n=%zu)\n", s.spec.variant.c_str(), s.m, s.n);
  std::printf("samples: %zu\n", s.size());
  std::printf("seed: %llu\n", static_cast<unsigned long long>(s.spec.seed));
  std::printf("classes: %s\n", s.has_classes() ? std::to_string(*s.spec.k_classes).c_str() : "none");
  auto stats = [&](const char* name, const std::vector<double>& v, std::size_t width) {
    for (std::size_t c = 0; c < width; ++c) {
      double lo = INFINITY, hi = -INFINITY, sum = 0.0;
      for (std::size_t i = c; i < v.size(); i += width) {
        lo = std::min(lo, v[i]);
        hi = std::max(hi, v[i]);
        sum += v[i];
      }
      std::printf("  %s%zu: min %.6g  max %.6g  mean %.6g\n", name, c + 1, lo, hi,
                  sum / static_cast<double>(s.size()));
    }
  };
  stats("X", s.x, s.m);
  stats("Y", s.y, s.n);
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> out(count);
  std::iota(out.begin(), out.end(), first);
  return out;
}

void append_csv(const fs::path& path, const RunRecord& r) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::app);
  if (fresh) out << csv_header() << '\n';
  out << csv_row(r) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer smooth-function approximation laboratory"};
  app.require_subcommand(1);

  // data gen / data inspect
  auto* data = app.add_subcommand("data", "Dataset generation and inspection");
  data->require_subcommand(1);
  auto* gen = data->add_subcommand("gen", "Generate train/val/test XELDATA files");
  std::string data_config, data_out = "data";
  gen->add_option("--config", data_config, "Data section or full run config (JSON)")->required();
  gen->add_option("--out", data_out, "Output directory");
  auto* inspect = data->add_subcommand("inspect", "Print a summary of an XELDATA file");
  std::string inspect_path;
  inspect->add_option("file", inspect_path, "XELDATA file")->required();

  // run
  auto* run = app.add_subcommand("run", "Execute one run config");
  std::string run_config, run_out = "out";
  std::size_t run_seeds = 1;
  run->add_option("--config", run_config, "Run config (JSON)")->required();
  run->add_option("--seeds", run_seeds, "Number of consecutive seeds starting at the config seed")->check(CLI::PositiveNumber);
  run->add_option("--out", run_out, "Directory for runs.jsonl and runs.csv");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Run an ablation sweep");
  std::string sweep_config, sweep_preset, sweep_out = "sweep", scale_name = "desk", values_text;
  std::size_t sweep_seeds = 0, workers = 1;
  auto* cfg_opt = sw->add_option("--config", sweep_config, "Sweep spec (JSON)");
  sw->add_option("--preset", sweep_preset, "Preset name (fig3a ... fig10)")->excludes(cfg_opt);
  sw->add_option("--scale", scale_name, "Preset scale: smoke, desk or paper");
  sw->add_option("--seeds", sweep_seeds, "Number of seeds (overrides the spec)");
  sw->add_option("--values", values_text, "Comma-separated axis values (overrides the spec)");
  sw->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
  sw->add_option("--out", sweep_out, "Output directory");

  // bound-report
  auto* br = app.add_subcommand("bound-report", "Resolution-factor bound report");
  std::string fn_id;
  double eps = 0.1, p = 1.0;
  std::size_t points = 0;
  bool no_empirical = false;
  br->add_option("--function", fn_id, "Registered function id")->required();
  br->add_option("--epsilon", eps, "Adequacy threshold");
  br->add_option("--p", p, "Norm exponent");
  br->add_option("--points", points, "Covering points K for the 1-D closed form");
  br->add_flag("--no-empirical", no_empirical, "Skip the bisection oracle");

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Recompute trend.csv and trend.svg from runs.jsonl");
  std::string agg_out = "sweep";
  agg->add_option("--out", agg_out, "Sweep output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      DatasetSpec spec = parse_data_config(read_json(data_config));
      if (auto s = env_seed()) spec.seed = *s;
      const Dataset ds = generate(spec);
      save_dataset(ds, data_out);
      std::printf("wrote %s/{train,val,test}.xeldata (%zu/%zu/%zu samples)\n", data_out.c_str(), ds.train.size(),
                  ds.val.size(), ds.test.size());
      return 0;
    }
    if (inspect->parsed()) {
      print_split(load(inspect_path));
      return 0;
    }
    if (run->parsed()) {
      RunConfig c = load_run_config(run_config);
      if (auto s = env_seed()) c.seed = *s;
      fs::create_directories(run_out);
      int status = 0;
      for (std::uint64_t seed : seed_list(c.seed, run_seeds)) {
        RunConfig cs = c;
        cs.seed = cs.train.seed = seed;
        RunRecord r;
        try {
          r = execute(cs);
        } catch (const std::exception& e) {
          std::fprintf(stderr, "run %s (seed %llu): %s\n", cs.experiment_id.c_str(),
                       static_cast<unsigned long long>(seed), e.what());
          status = 1;
          continue;
        }
        append_jsonl(fs::path(run_out) / "runs.jsonl", r);
        append_csv(fs::path(run_out) / "runs.csv", r);
        std::printf("%s\n", nlohmann::json(r).dump().c_str());
      }
      return status;
    }
    if (sw->parsed()) {
      SweepSpec spec;
      if (!sweep_preset.empty()) {
        spec = preset(sweep_preset, parse_scale(scale_name));
      } else if (!sweep_config.empty()) {
        spec = parse_sweep_spec(read_json(sweep_config));
      } else {
        throw SchemaError("sweep: --config or --preset is required");
      }
      if (!values_text.empty()) {
        nlohmann::json j = sweep_spec_json(spec);
        j["values"] = nlohmann::json::array();
        std::stringstream ss(values_text);
        for (std::string item; std::getline(ss, item, ',');) {
          try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used == item.size()) {
              j["values"].push_back(v);
              continue;
            }
          } catch (const std::exception&) {
          }
          j["values"].push_back(item);
        }
        spec = parse_sweep_spec(j);
      }
      const auto env = env_seed();
      if (sweep_seeds > 0 || env) {
        const std::size_t count = sweep_seeds > 0 ? sweep_seeds : spec.seeds.size();
        nlohmann::json j = sweep_spec_json(spec);
        j["seeds"] = seed_list(env ? *env : spec.seeds.front(), count);
        spec = parse_sweep_spec(j);
      }
      const SweepOutcome o = sweep(spec, workers, sweep_out);
      for (const auto& r : o.records)
        if (r.status != "ok") std::fprintf(stderr, "%s\n", r.error.c_str());
      std::printf("%zu runs, %zu failed; outputs in %s\n", o.records.size(), o.failures, sweep_out.c_str());
      std::printf("%s", trend_csv(o.table).c_str());
      return o.failures == 0 ? 0 : 1;
    }
    if (br->parsed()) {
      BoundReportOptions opt;
      if (points > 0) opt.points = points;
      opt.empirical = !no_empirical;
      std::printf("%s", bound_report(fn_id, eps, p, opt).c_str());
      return 0;
    }
    if (agg->parsed()) {
      std::printf("%s", trend_csv(aggregate_dir(agg_out)).c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
