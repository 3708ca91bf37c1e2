// Acceptance criteria AC1-AC9. Prints one PASS/FAIL line per criterion.
// Usage: acceptance [AC1 AC2 ...]   (no arguments runs all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../support/finite_diff.hpp"
#include "../support/metric_oracles.hpp"
#include "xel/bound.hpp"
#include "xel/data.hpp"
#include "xel/errors.hpp"
#include "xel/functions.hpp"
#include "xel/harness.hpp"
#include "xel/metrics.hpp"
#include "xel/ops.hpp"
#include "xel/train.hpp"
#include "xel/transformer.hpp"

using namespace xel;
using xel::testing::central_difference;
using xel::testing::relative_error;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Tensor random_tokens(std::size_t d, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::zeros({d, cols});
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("xel_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ac1() {
  const auto& f = find_function("linear1d");
  const Bound1D b = delta_bound_1d(f, 0.1, Covering::with_points(f.support(), 10));
  const LayerEstimate est = layer_count_estimate(0.2, 1, 10);
  const bool ok = std::abs(b.delta - 0.2) <= 1e-12 && est.count == BigInt(97656250);
  return {ok, "delta=" + fmt("%.17g", b.delta) + " layers=" + est.count.str()};
}

Outcome ac2() {
  bool ok = true;
  std::ostringstream os;
  for (double eps : {0.05, 0.1, 0.2}) {
    const auto& f = find_function("linear1d");
    const double emp = empirical_delta_star(f, eps, 1.0).delta_star;
    const double ana = delta_bound_general(f, eps, 1.0).delta_max;
    const bool e_ok = std::abs(emp - 4 * eps) <= 0.01 * 4 * eps;
    const bool a_ok = std::abs(ana - emp) <= 0.05 * emp;
    ok = ok && e_ok && a_ok;
    os << "linear1d eps=" << eps << ": emp=" << fmt("%.5f", emp) << " ana=" << fmt("%.5f", ana) << "; ";
  }
  for (const char* id : {"square1d", "sin3x1d"})
    for (double eps : {0.05, 0.1, 0.2}) {
      const auto& f = find_function(id);
      const double emp = empirical_delta_star(f, eps, 1.0).delta_star;
      const double ana = delta_bound_general(f, eps, 1.0).delta_max;
      const double gap = std::abs(ana - emp) / emp;
      ok = ok && gap <= 0.15;
      os << id << " eps=" << eps << ": gap=" << fmt("%.3f", gap) << (std::string(id) == "sin3x1d" && eps == 0.2 ? "" : "; ");
    }
  return {ok, os.str()};
}

Outcome ac3() {
  ModelConfig cfg;
  cfg.h = 2;
  cfg.d = 8;
  cfg.r = 8;
  cfg.L_enc = 2;
  cfg.L_dec = 2;
  cfg.m = 4;
  cfg.n = 3;
  cfg.use_layernorm = true;
  cfg.pe_scheme = PeScheme::learned;
  Model model(cfg, 303);
  Rng rng(304);
  const std::size_t batch = 2;
  const Tensor x = random_tokens(cfg.d, cfg.m * batch, rng);
  Targets t;
  Tensor y = Tensor::zeros({1, batch * cfg.n});
  for (std::size_t i = 0; i < batch * cfg.n; ++i) t.values.push_back(y.data()[i] = rng.uniform(-1.0, 1.0));
  auto loss_fn = [&](Tape& tape) {
    const auto ctx = model.context(false, nullptr);
    return mean_squared_error(tape, model.head(tape, model.forward(tape, x, ctx, &t)), y);
  };
  model.set_requires_grad(true);
  Tape tape;
  tape.backward(loss_fn(tape));
  std::vector<std::vector<double>> grads;
  for (auto& p : model.parameters()) {
    if (!p.value.has_grad()) return {false, "no gradient reached " + p.name};
    grads.emplace_back(p.value.grad().begin(), p.value.grad().end());
  }

  Rng pick(305);
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  auto& params = model.parameters();
  for (std::size_t round = 0; checked < 240; ++round)
    for (std::size_t k = 0; k < params.size() && checked < 240; ++k) {
      const auto i = pick.below(params[k].value.size());
      const double numeric = central_difference(params[k].value, i, [&] {
        Tape t2(false);
        return loss_fn(t2).item();
      });
      const double err = relative_error(grads[k][i], numeric);
      worst = std::max(worst, err);
      if (err >= 1e-4) ++bad;
      ++checked;
    }
  return {bad == 0, std::to_string(checked) + " coordinates, worst relative error " + fmt("%.2e", worst)};
}

Outcome ac4() {
  ModelConfig cfg;
  cfg.h = 2;
  cfg.d = 8;
  cfg.r = 8;
  cfg.L_enc = 2;
  cfg.m = 6;
  cfg.pe_scheme = PeScheme::none;
  Model model(cfg, 404);
  Rng rng(405);
  const Tensor x = random_tokens(cfg.d, cfg.m, rng);
  Tape tape(false);
  const auto ctx = model.context(false, nullptr);
  const Tensor enc = model.encode(tape, x, ctx);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> perm(cfg.m);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = cfg.m; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const Tensor enc_p = model.encode(tape, select_columns(tape, x, perm), ctx);
    const Tensor expect = select_columns(tape, enc, perm);
    for (std::size_t i = 0; i < enc_p.size(); ++i) worst = std::max(worst, std::abs(enc_p[i] - expect[i]));
  }
  return {worst <= 1e-10, "20 permutations, max deviation " + fmt("%.2e", worst)};
}

Outcome ac5() {
  std::map<std::string, std::vector<double>> fr;
  for (const char* kind : {"expt1", "expt2"})
    for (std::uint64_t seed : {1, 2, 3}) {
      RunConfig c = default_run_config(kind, Scale::desk);
      c.seed = c.train.seed = seed;
      const RunRecord r = execute(c);
      fr[kind].push_back(r.failure_rate);
      std::printf("  AC5 %s seed %llu: failure_rate %.4f (%.0f s)\n", kind, static_cast<unsigned long long>(seed),
                  r.failure_rate, r.runtime_s);
      std::fflush(stdout);
    }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double m1 = mean(fr["expt1"]), m2 = mean(fr["expt2"]);
  return {m1 - m2 >= 0.2 && m1 >= 0.5,
          "mean FR Expt-I " + fmt("%.4f", m1) + ", Expt-II " + fmt("%.4f", m2) + ", gap " + fmt("%.4f", m1 - m2)};
}

Outcome ac6() {
  Rng rng(606);
  std::size_t mismatches = 0, nonmonotone = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = xel::testing::random_regression_set(rng);
    double prev = 2.0;
    if (failure_rate(r) != xel::testing::oracle_failure_at_k(r, 1)) ++mismatches;
    for (std::size_t k = 1; k <= r.size(); ++k) {
      const double v = failure_rate_at_k(r, k);
      if (v != xel::testing::oracle_failure_at_k(r, k)) ++mismatches;
      if (v > prev) ++nonmonotone;
      prev = v;
    }
    const auto c = xel::testing::random_classification_set(rng);
    prev = 2.0;
    if (failure_rate(c) != xel::testing::oracle_failure_at_k(c, 1)) ++mismatches;
    for (std::size_t k = 1; k <= c.k_classes; ++k) {
      const double v = failure_rate_at_k(c, k);
      if (v != xel::testing::oracle_failure_at_k(c, k)) ++mismatches;
      if (v > prev) ++nonmonotone;
      prev = v;
    }
  }
  return {mismatches == 0 && nonmonotone == 0, "1000 regression + 1000 classification sets, " +
                                                   std::to_string(mismatches) + " mismatches, " +
                                                   std::to_string(nonmonotone) + " monotonicity violations"};
}

Outcome ac7() {
  std::ostringstream os;
  bool ok = true;

  // Dataset round trip, compared as raw bits.
  DatasetSpec spec;
  spec.n_train = 500;
  spec.n_val = 100;
  spec.n_test = 200;
  spec.seed = 77;
  spec.k_classes = 5;
  const Dataset ds = generate(spec);
  const auto dir = scratch("ac7");
  save_dataset(ds, dir / "data");
  const Dataset back = load_dataset(dir / "data");
  auto same_bits = [](const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  };
  bool rt = true;
  for (auto [a, b] : {std::pair{&ds.train, &back.train}, {&ds.val, &back.val}, {&ds.test, &back.test}})
    rt = rt && same_bits(a->x, b->x) && same_bits(a->y, b->y) && a->classes == b->classes;
  rt = rt && same_bits(generate(spec).train.y, back.train.y);
  ok = ok && rt;
  os << "round trip " << (rt ? "bit-identical" : "DIFFERS") << "; ";

  // Two runs with the same config and seed.
  RunConfig c = default_run_config("expt2", Scale::smoke);
  c.seed = c.train.seed = 7;
  auto strip = [](const std::string& row) { return row.substr(0, row.rfind(',')); };
  const RunRecord r1 = execute(c), r2 = execute(c);
  const bool rows = strip(csv_row(r1)) == strip(csv_row(r2));
  ok = ok && rows;
  os << "CSV rows " << (rows ? "identical" : "DIFFER") << " (runtime_s excluded); ";

  // Checkpoint of the best model reproduces its validation loss.
  const Dataset sd = generate(c.data);
  Model model(c.model, 9);
  const TrainResult tr = train(model, sd, c.train);
  save_checkpoint(model, dir / "best.ckpt");
  const Model loaded = load_checkpoint(dir / "best.ckpt");
  const double val = evaluation_loss(loaded, sd.val, c.train.loss_kind);
  const double diff = std::abs(val - tr.record.best_val_loss);
  ok = ok && diff <= 1e-10;
  os << "checkpoint val loss diff " << fmt("%.1e", diff);
  return {ok, os.str()};
}

Outcome ac8() {
  Rng rng(808);
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (const auto& v : suite_variants()) {
    for (int s = 0; s < 100; ++s) {
      double x1 = rng.uniform(-0.95, 0.95);
      if (std::abs(x1) < 0.05) x1 += x1 < 0 ? -0.05 : 0.05;
      const auto analytic = partials(v, x1);
      const double h = 1e-6;
      const auto up = eval_suite(v, x1 + h).y, down = eval_suite(v, x1 - h).y;
      for (std::size_t j = 0; j < analytic.size(); ++j) {
        const double err = relative_error(analytic[j], (up[j] - down[j]) / (2 * h));
        worst = std::max(worst, err);
        bad += err >= 1e-5;
        ++checked;
      }
      // Token-wise partials of the registered function at the derived point.
      const auto& f = find_function(v);
      const auto p = eval_suite(v, x1);
      for (std::size_t i = 0; i < f.n(); ++i)
        for (std::size_t l = 0; l < f.m(); ++l) {
          auto xp = p.x, xm = p.x;
          xp[l] += h;
          xm[l] -= h;
          const double numeric = (f.eval(xp)[i] - f.eval(xm)[i]) / (2 * h);
          const double err = relative_error(f.partial(p.x, i, 0, 0, l), numeric, 1e-6);
          worst = std::max(worst, err);
          bad += err >= 1e-5;
          ++checked;
        }
    }
  }
  bool scan = true;
  for (const auto& v : suite_variants())
    for (int i = -9999; i <= 9999; ++i) {
      const auto p = eval_suite(v, i * 1e-4);
      for (double y : p.y) scan = scan && std::isfinite(y);
      if (p.x.size() >= 4) scan = scan && p.x[3] > 0.0;
    }
  return {bad == 0 && scan, std::to_string(checked) + " partials, worst relative error " + fmt("%.2e", worst) +
                                ", grid scan " + (scan ? "clean" : "FAILED")};
}

Outcome ac9() {
  SweepSpec s = preset("fig3a", Scale::smoke);
  s.values = {1, 2, 4};
  s.seeds = {1, 2};
  const auto a = scratch("ac9a"), b = scratch("ac9b");
  const SweepOutcome o = sweep(s, 1, a);
  sweep(s, 1, b);
  std::ostringstream os;
  bool ok = o.failures == 0;

  const std::string csv = read_text(a / "runs.csv");
  std::vector<std::string> lines;
  std::stringstream ss(csv);
  for (std::string l; std::getline(ss, l);) lines.push_back(l);
  const bool header = !lines.empty() && lines[0] == csv_header() &&
                      lines[0] == "experiment_id,expt_kind,seed,variant,L,h,d,r,m,n,k_classes,pe_scheme,n_train,"
                                  "failure_rate,failure_rate_at_2,failure_rate_at_5,val_loss,runtime_s";
  bool widths = true;
  for (const auto& l : lines) widths = widths && std::count(l.begin(), l.end(), ',') == 17;
  const bool count = lines.size() == 3 * 2 * 2 + 1;
  ok = ok && header && widths && count;
  os << lines.size() - 1 << " CSV rows, schema " << (header && widths ? "ok" : "BAD") << "; ";

  const bool svg = read_text(a / "trend.svg") == read_text(b / "trend.svg") && !read_text(a / "trend.svg").empty();
  ok = ok && svg;
  os << "SVG " << (svg ? "byte-identical" : "DIFFERS") << " across reruns; ";

  // Spreadsheet-style recomputation from runs.csv.
  std::map<std::pair<std::string, std::string>, std::vector<double>> g;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> cols;
    std::stringstream ls(lines[i]);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    g[{cols[4], cols[1]}].push_back(std::stod(cols[13]));
  }
  bool agg = o.table.rows.size() == 6;
  for (const auto& row : o.table.rows) {
    auto xs = g[{row.axis_value, row.expt_kind}];
    std::sort(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / xs.size();
    double ss2 = 0.0;
    for (double x : xs) ss2 += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss2 / (xs.size() - 1));
    agg = agg && row.mean == mean && row.std && *row.std == sd;
  }
  ok = ok && agg;
  os << "aggregation " << (agg ? "matches" : "DIFFERS from") << " recomputation";
  return {ok, os.str()};
}

struct Criterion {
  const char* id;
  const char* title;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"AC1", "worked-example fidelity", 1.0, ac1},
      {"AC2", "resolution bound validation", 30.0, ac2},
      {"AC3", "gradient correctness", 120.0, ac3},
      {"AC4", "permutation equivariance", 60.0, ac4},
      {"AC5", "qualitative gap at desk scale", 45.0 * 60.0, ac5},
      {"AC6", "metric oracle equivalence", 60.0, ac6},
      {"AC7", "determinism and persistence", 600.0, ac7},
      {"AC8", "function-suite fidelity", 600.0, ac8},
      {"AC9", "sweep mechanics", 600.0, ac9},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    std::printf("%s %s: %s; %s [%.2f s, limit %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.title, o.detail.c_str(),
                secs, c.limit_s, in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
    failures += !pass;
  }
  return failures == 0 ? 0 : 1;
}
