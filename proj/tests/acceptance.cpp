// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <path to tailforge CLI> <scratch directory>
//
// CLI-facing criteria drive the real binary; the algebra and gradient
// criteria run in-process against independent brute-force oracles.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "tailforge/curator.hpp"
#include "tailforge/gradcheck.hpp"
#include "tailforge/lmr.hpp"
#include "tailforge/metrics.hpp"
#include "tailforge/nn.hpp"
#include "tailforge/synth.hpp"
#include "tailforge/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tailforge;

namespace {

fs::path g_cli;
fs::path g_work;

struct Outcome {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    notes.push_back((cond ? "ok: " : "FAILED: ") + what);
  }
};

std::string num(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CliRun {
  int exit_code = -1;
  double seconds = 0.0;
};

// Runs the CLI with the given arguments; stdout and stderr go to log files.
CliRun cli(const std::string& args, const std::string& log_name, const std::string& env = "") {
  const auto log = g_work / (log_name + ".log");
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + g_cli.string() + "\" " + args +
                          " > \"" + log.string() + "\" 2>&1";
  const auto t0 = std::chrono::steady_clock::now();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.seconds = seconds_since(t0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  return json::parse(in);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// ------------------------------------------------------------------ 1

void check_recipe(Outcome& out, const std::string& name, const std::string& sets, double want_i,
                  double want_h, double want_f, std::optional<long long> want_total) {
  const auto dir = g_work / "c1" / name;
  const auto gen = cli("profile " + sets + " --out-dir " + q(dir), "c1_" + name + "_profile");
  out.expect(gen.exit_code == 0, name + " profile exit 0");
  const auto an = cli("analyze --profile " + q(dir / "profile.csv") + " --out-dir " + q(dir / "analysis"),
                      "c1_" + name + "_analyze");
  out.expect(an.exit_code == 0, name + " analyze exit 0");
  out.expect(gen.seconds < 1.0 && an.seconds < 1.0,
             name + " runtime " + num(gen.seconds, 3) + "s + " + num(an.seconds, 3) + "s < 1s each");
  if (an.exit_code != 0) return;
  const auto p = read_json(dir / "analysis" / "properties.json");
  const double h = p["H"], f = p["F"], i = p["I"];
  const long long total = p["total"];
  out.expect(i == want_i, name + " I = " + num(i) + " (want exactly " + num(want_i) + ")");
  out.expect(std::abs(h - want_h) <= 3.0, name + " H = " + num(h) + " (want " + num(want_h) + " +- 3)");
  out.expect(std::abs(f - want_f) <= 6.0, name + " F = " + num(f) + " (want " + num(want_f) + " +- 6)");
  if (want_total) {
    out.expect(std::abs(static_cast<double>(total - *want_total)) <= 0.15 * static_cast<double>(*want_total),
               name + " total = " + std::to_string(total) + " (want " + std::to_string(*want_total) + " +- 15%)");
  }
}

Outcome criterion1() {
  Outcome out;
  check_recipe(out, "ssv2",
               "--set curation.num_classes=174 --set curation.alpha=6 --set curation.max_count=2500 "
               "--set curation.min_count=5",
               500.0, 9.0, 32.0, 50418);
  check_recipe(out, "videolt",
               "--set curation.num_classes=772 --set curation.alpha=6 --set curation.max_count=550 "
               "--set curation.min_count=5",
               110.0, 12.0, 38.0, std::nullopt);
  return out;
}

// ------------------------------------------------------------------ 2

Outcome criterion2() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = fit_profile(174, 500.0, 50418, 6.0);
  const double secs = seconds_since(t0);
  out.expect(std::abs(static_cast<double>(fit.max_count) - 2500.0) <= 250.0,
             "fit max_count = " + std::to_string(fit.max_count) + " (want 2500 +- 10%)");
  out.expect(secs < 1.0, "fit runtime " + num(secs, 3) + "s < 1s");
  const auto dir = g_work / "c2";
  const auto run = cli("profile --set curation.num_classes=174 --set curation.fit_total=50418 "
                       "--set curation.fit_imbalance=500 --set curation.alpha=6 --out-dir " + q(dir),
                       "c2_profile");
  out.expect(run.exit_code == 0 && run.seconds < 1.0, "CLI fit exit 0 in " + num(run.seconds, 3) + "s");
  if (run.exit_code == 0) {
    const auto r = read_json(dir / "profile_report.json");
    out.expect(r["max_count"] == fit.max_count, "CLI fit agrees with the library");
  }
  return out;
}

// ------------------------------------------------------------------ 3

Matrix<double> random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix<double> m(r, c);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// Plain-loop transcription of contribution, mask, softmax, residual and
// mixing, sharing no code with the library.
struct OracleOut {
  std::vector<std::vector<double>> f, y;
};

OracleOut lmr_oracle(const std::vector<std::vector<double>>& z, const std::vector<std::vector<double>>& y,
                     const std::vector<long long>& counts, const std::vector<double>& c, long long omega,
                     const std::vector<double>& alpha, const std::vector<std::size_t>& beta) {
  const std::size_t b = z.size(), d = z[0].size();
  auto dot = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t k = 0; k < d; ++k) s += z[i][k] * z[j][k];
    return s;
  };
  std::vector<std::vector<double>> r(b, std::vector<double>(d));
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> w(b, 0.0);
    double denom = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i || counts[j] <= omega) continue;
      w[j] = std::exp(dot(i, j) / std::sqrt(dot(i, i) * dot(j, j)));
      denom += w[j];
      any = true;
    }
    for (std::size_t k = 0; k < d; ++k) {
      if (!any) {
        r[i][k] = z[i][k];
        continue;
      }
      double recon = 0.0;
      for (std::size_t j = 0; j < b; ++j) recon += w[j] / denom * z[j][k];
      r[i][k] = c[i] * recon + (1.0 - c[i]) * z[i][k];
    }
  }
  OracleOut o;
  o.f.assign(b, std::vector<double>(d));
  o.y.assign(b, std::vector<double>(y[0].size()));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < d; ++k) o.f[i][k] = alpha[i] * r[i][k] + (1 - alpha[i]) * r[beta[i]][k];
    for (std::size_t k = 0; k < y[0].size(); ++k) o.y[i][k] = alpha[i] * y[i][k] + (1 - alpha[i]) * y[beta[i]][k];
  }
  return o;
}

std::map<int, double> contribution_oracle(const std::vector<long long>& counts, double d, double eps, double l) {
  std::vector<double> w;
  for (auto cnt : counts) w.push_back(1.0 / std::log(static_cast<double>(cnt) * d + eps));
  const double lo = *std::min_element(w.begin(), w.end()), hi = *std::max_element(w.begin(), w.end());
  std::map<int, double> out;
  for (std::size_t i = 0; i < w.size(); ++i) out[static_cast<int>(i)] = (w[i] - lo) / (hi - lo) * l;
  return out;
}

void oracle_case(Outcome& out, const std::string& name, const std::vector<long long>& profile_counts,
                 const Matrix<double>& z, const std::vector<int>& classes, const MixPlan& plan) {
  const auto profile = ClassProfile::from_counts(profile_counts);
  const ContributionParams params{0.25, 1.0, 0.6};
  const auto table = contribution(profile, params);
  const auto cref = contribution_oracle(profile_counts, 0.25, 1.0, 0.6);
  double cerr = 0.0;
  for (const auto& [id, v] : cref) cerr = std::max(cerr, std::abs(table(id) - v));
  out.expect(cerr < 1e-12, name + " contributions match the oracle (" + num(cerr) + ")");

  Batch<double> batch;
  batch.features = constant(z);
  batch.labels = Matrix<double>(z.rows(), profile.size());
  std::vector<std::vector<double>> zz(z.rows()), yy(z.rows());
  std::vector<long long> counts;
  std::vector<double> c;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    batch.labels(i, static_cast<std::size_t>(classes[i])) = 1.0;
    batch.class_ids.push_back(classes[i]);
    batch.counts.push_back(profile.count_of(classes[i]));
    counts.push_back(profile.count_of(classes[i]));
    c.push_back(cref.at(classes[i]));
    zz[i].assign(z.row(i).begin(), z.row(i).end());
    yy[i].assign(batch.labels.row(i).begin(), batch.labels.row(i).end());
  }
  const auto got = mixed_reconstruction(batch, table, LmrOptions{}, plan);
  const auto want = lmr_oracle(zz, yy, counts, c, 20, plan.alpha, plan.beta);
  double ferr = 0.0, yerr = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t k = 0; k < z.cols(); ++k)
      ferr = std::max(ferr, std::abs(got.features->value()(i, k) - want.f[i][k]));
    for (std::size_t k = 0; k < profile.size(); ++k) yerr = std::max(yerr, std::abs(got.labels(i, k) - want.y[i][k]));
  }
  out.expect(ferr <= 1e-9 && yerr <= 1e-9,
             name + " end-to-end output matches brute force (features " + num(ferr) + ", labels " + num(yerr) + ")");
}

Outcome criterion3() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);

  // Contribution endpoints, monotonicity, log-base invariance.
  bool endpoints = true, monotone = true, base_invariant = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<long long> counts(2 + rng.below(50));
    for (auto& v : counts) v = 1 + static_cast<long long>(rng.below(3000));
    const auto profile = ClassProfile::from_counts(counts);
    if (profile.max_count() == profile.min_count()) continue;
    ContributionParams p;
    p.decay = 0.05 + rng.uniform();
    p.lowest = rng.uniform();
    const auto t = contribution(profile, p);
    for (const auto& e : profile.entries()) {
      if (e.count == profile.max_count() && t(e.class_id) != 0.0) endpoints = false;
      if (e.count == profile.min_count() && t(e.class_id) != p.lowest) endpoints = false;
      for (const auto& f : profile.entries())
        if (e.count <= f.count && t(e.class_id) < t(f.class_id)) monotone = false;
    }
    for (double base : {2.0, 10.0}) {
      auto pb = p;
      pb.log_base = base;
      const auto u = contribution(profile, pb);
      for (const auto& e : profile.entries())
        if (std::abs(u(e.class_id) - t(e.class_id)) > 1e-10) base_invariant = false;
    }
  }
  out.expect(endpoints, "contribution: c = 0 at max count, c = l at min count");
  out.expect(monotone, "contribution: non-increasing in class count");
  out.expect(base_invariant, "contribution: log-base invariant to 1e-10");

  // Masked softmax.
  bool softmax_ok = true;
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_matrix(6, 8, rng, -30.0, 30.0);
    Matrix<double> mask(6, 8);
    for (auto& m : mask.data()) m = rng.bernoulli(0.6) ? 1.0 : 0.0;
    const auto w = masked_row_softmax(constant(s), mask).weights->value();
    for (std::size_t i = 0; i < 6; ++i) {
      double total = 0.0;
      bool any = false;
      for (std::size_t j = 0; j < 8; ++j) {
        if (mask(i, j) == 0.0 && w(i, j) != 0.0) softmax_ok = false;
        any = any || mask(i, j) != 0.0;
        total += w(i, j);
      }
      if (any && std::abs(total - 1.0) > 1e-9) softmax_ok = false;
    }
  }
  out.expect(softmax_ok, "masked softmax: rows sum to 1 +- 1e-9, masked entries exactly 0");

  // Mix plan rows and output label rows.
  bool plan_ok = true, labels_ok = true;
  const auto profile = ClassProfile::from_counts({500, 120, 40, 18, 9, 5});
  const auto table = contribution(profile, ContributionParams{});
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t b = 2 + rng.below(12);
    const auto m = mix_plan(b, rng).matrix();
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < b; ++j) s += m(i, j);
      if (std::abs(s - 1.0) > 1e-12) plan_ok = false;
    }
    Batch<double> batch;
    batch.features = constant(random_matrix(b, 5, rng));
    batch.labels = Matrix<double>(b, 6);
    for (std::size_t i = 0; i < b; ++i) {
      const int cls = static_cast<int>(rng.below(6));
      batch.labels(i, static_cast<std::size_t>(cls)) = 1.0;
      batch.class_ids.push_back(cls);
      batch.counts.push_back(profile.count_of(cls));
    }
    const auto mixed = mixed_reconstruction(batch, table, LmrOptions{}, rng);
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (double v : mixed.labels.row(i)) s += v;
      if (std::abs(s - 1.0) > 1e-6) labels_ok = false;
    }
  }
  out.expect(plan_ok, "mix plan: rows sum to 1");
  out.expect(labels_ok, "mixed labels: rows sum to 1 +- 1e-6");

  // dR_i/dZ_j = 0 for masked contributors, by central differences.
  double worst = 0.0;
  const auto jprofile = ClassProfile::from_counts({300, 90, 25, 15, 4});
  const auto jtable = contribution(jprofile, ContributionParams{});
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t b = 3 + rng.below(5);
    std::vector<int> classes(b);
    for (auto& c : classes) c = static_cast<int>(rng.below(5));
    const auto z = random_matrix(b, 4, rng);
    auto make = [&](const Matrix<double>& at) {
      Batch<double> batch;
      batch.features = constant(at);
      batch.labels = Matrix<double>(b, 5);
      for (std::size_t i = 0; i < b; ++i) {
        batch.labels(i, static_cast<std::size_t>(classes[i])) = 1.0;
        batch.class_ids.push_back(classes[i]);
        batch.counts.push_back(jprofile.count_of(classes[i]));
      }
      return batch;
    };
    const auto jac = numeric_jacobian(
        [&](const Matrix<double>& at) { return reconstruct(make(at), jtable, LmrOptions{}).features->value(); },
        z, 1e-6);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        if (i == j || jprofile.count_of(classes[j]) > 20) continue;
        for (std::size_t di = 0; di < 4; ++di)
          for (std::size_t dj = 0; dj < 4; ++dj) worst = std::max(worst, std::abs(jac(i * 4 + di, j * 4 + dj)));
      }
  }
  out.expect(worst <= 1e-6, "exclusion: masked contributor Jacobian max " + num(worst) + " <= 1e-6");

  oracle_case(out, "B=2", {100, 20, 5}, Matrix<double>{{1, 2, 0}, {0.5, -1, 2}}, {2, 0},
              MixPlan{{0.5, 1.0}, {1, 0}});
  oracle_case(out, "B=3", {100, 20, 5, 50},
              Matrix<double>{{0.3, -0.2, 1.0, 0.5}, {1.2, 0.4, -0.7, 0.1}, {-0.5, 0.9, 0.2, 0.8}}, {1, 0, 3},
              MixPlan{{1.0, 0.3, 1.0}, {2, 0, 1}});

  const double secs = seconds_since(t0);
  out.expect(secs < 10.0, "runtime " + num(secs, 3) + "s < 10s");
  return out;
}

// ------------------------------------------------------------------ 4

Var<double> project(const Var<double>& v, const Matrix<double>& weights) {
  return sum(matmul(v, constant(weights)));
}

Outcome criterion4() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  auto report = [&](const std::string& name, const GradCheckResult& r) {
    out.expect(r.max_relative_error < 1e-4, name + " max rel err " + num(r.max_relative_error, 3));
  };
  auto w = [&](std::size_t r, std::size_t c) { return random_matrix(r, c, rng); };

  report("matmul", check_gradients([](std::span<const Var<double>> in) { return sum(matmul(in[0], in[1])); },
                                   {w(3, 4), w(4, 2)}));
  {
    const auto p = w(3, 2);
    report("add/add_row", check_gradients(
                              [&](std::span<const Var<double>> in) { return project(add_row(add(in[0], in[1]), in[2]), p); },
                              {w(4, 3), w(4, 3), w(1, 3)}));
  }
  {
    auto x = w(5, 4);
    for (auto& v : x.data())
      if (std::abs(v) < 0.05) v = 0.3;
    const auto p = w(4, 3);
    report("relu", check_gradients([&](std::span<const Var<double>> in) { return project(relu(in[0]), p); }, {x}));
  }
  {
    const auto p = w(3, 2);
    report("vstack", check_gradients([&](std::span<const Var<double>> in) { return project(vstack(in[0], in[1]), p); },
                                     {w(2, 3), w(3, 3)}));
  }
  {
    const auto p = w(5, 2);
    report("row cosine similarity",
           check_gradients([&](std::span<const Var<double>> in) { return project(row_cosine_similarity(in[0]), p); },
                           {w(5, 4)}));
  }
  {
    const auto p = w(6, 2);
    report("cosine similarity",
           check_gradients([&](std::span<const Var<double>> in) { return project(cosine_similarity(in[0], in[1]), p); },
                           {w(3, 4), w(6, 4)}));
  }
  {
    Matrix<double> mask(4, 5);
    for (auto& m : mask.data()) m = rng.bernoulli(0.6) ? 1.0 : 0.0;
    mask(0, 1) = 1.0;
    const auto p = w(5, 3);
    report("masked softmax", check_gradients(
                                 [&](std::span<const Var<double>> in) {
                                   return project(masked_row_softmax(in[0], mask).weights, p);
                                 },
                                 {random_matrix(4, 5, rng, -2.0, 2.0)}));
  }
  {
    Matrix<double> labels(4, 5);
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (std::size_t k = 0; k < 5; ++k) total += labels(i, k) = rng.uniform();
      for (std::size_t k = 0; k < 5; ++k) labels(i, k) /= total;
    }
    report("soft-label cross-entropy",
           check_gradients([&](std::span<const Var<double>> in) { return soft_label_cross_entropy(in[0], labels); },
                           {random_matrix(4, 5, rng, -3.0, 3.0)}));
  }
  {
    const std::vector<double> c{0.0, 0.3, 1.0};
    const auto p = w(2, 2);
    report("affine combine", check_gradients(
                                 [&](std::span<const Var<double>> in) {
                                   return project(affine_combine(in[0], in[1], std::span<const double>(c)), p);
                                 },
                                 {w(3, 2), w(3, 2)}));
  }
  {
    const auto x = w(6, 4);
    Matrix<double> y(6, 3);
    for (std::size_t i = 0; i < 6; ++i) y(i, i % 3) = 1.0;
    report("MLP", check_gradients(
                      [&](std::span<const Var<double>> in) {
                        std::vector<Linear<double>> layers{{in[0], in[1]}, {in[2], in[3]}};
                        return soft_label_cross_entropy(mlp_forward(x, std::span<const Linear<double>>(layers)), y);
                      },
                      {w(4, 5), random_matrix(1, 5, rng, 0.1, 0.5), w(5, 3), w(1, 3)}));
  }
  {
    // Full LMR loss through a two-layer encoder and a linear classifier.
    const auto profile = ClassProfile::from_counts({200, 80, 30, 12, 5});
    const auto table = contribution(profile, ContributionParams::preset_feature_level());
    const std::size_t b = 8;
    const auto x = w(b, 6);
    Matrix<double> labels(b, 5);
    std::vector<int> classes;
    std::vector<long long> counts;
    for (std::size_t i = 0; i < b; ++i) {
      const int cls = static_cast<int>(i % 5);
      classes.push_back(cls);
      counts.push_back(profile.count_of(cls));
      labels(i, static_cast<std::size_t>(cls)) = 1.0;
    }
    const auto plan = mix_plan(b, rng, 0.5);
    report("LMR through MLP", check_gradients(
                                  [&](std::span<const Var<double>> in) {
                                    std::vector<Linear<double>> enc{{in[0], in[1]}, {in[2], in[3]}};
                                    Batch<double> batch{mlp_forward(x, std::span<const Linear<double>>(enc)), labels,
                                                        classes, counts};
                                    auto mixed = mixed_reconstruction(batch, table, LmrOptions{}, plan);
                                    return soft_label_cross_entropy(add_row(matmul(mixed.features, in[4]), in[5]),
                                                                    mixed.labels);
                                  },
                                  {w(6, 7), random_matrix(1, 7, rng, 0.1, 0.4), w(7, 4), w(1, 4), w(4, 5), w(1, 5)}));
  }
  const double secs = seconds_since(t0);
  out.expect(secs < 60.0, "runtime " + num(secs, 3) + "s < 60s");
  return out;
}

// ------------------------------------------------------------------ 5

Outcome criterion5() {
  Outcome out;
  ParetoRecipe recipe;
  recipe.num_classes = 30;
  recipe.max_count = 500;
  const auto data = synth_longtail(pareto_profile(recipe), 32, 11, 0.5);
  TrainConfig crt;
  crt.mode = TrainMode::crt;
  crt.seed = 11;
  crt.stage1_epochs = 1;
  crt.stage2_epochs = 5;
  crt.max_steps_per_stage = 20;
  crt.evaluate_each_epoch = false;
  auto lmr = crt;
  lmr.mode = TrainMode::lmr;
  lmr.constant_contribution = 0.0;
  lmr.lmr.identity_probability = 1.0;
  const auto a = train(crt, data);
  const auto b = train(lmr, data);
  const auto stage1 = static_cast<std::size_t>(a.log.front().steps);
  out.expect(a.step_losses.size() == stage1 + 20, "cRT ran 20 stage-2 steps");
  out.expect(a.step_losses == b.step_losses,
             "loss sequences bit-identical over " + std::to_string(a.step_losses.size()) + " steps");
  out.expect(a.model.classifier.weight->value() == b.model.classifier.weight->value(),
             "final classifier weights bit-identical");
  return out;
}

// ------------------------------------------------------------------ 6

Outcome criterion6(const fs::path& ordering_ini) {
  Outcome out;
  const auto dir = g_work / "c6";
  const auto single = cli("train --config " + q(ordering_ini) + " --mode LMR --out-dir " + q(dir / "single"),
                          "c6_single");
  out.expect(single.exit_code == 0 && single.seconds < 120.0,
             "single LMR run exit 0 in " + num(single.seconds, 3) + "s (< 120s)");
  const std::vector<std::string> modes{"CE", "cRT", "Mixup", "LMR"};
  const auto run = cli("compare --config " + q(ordering_ini) + " --seeds 5 --out-dir " + q(dir / "compare"),
                       "c6_compare");
  const double per_run = run.seconds / 20.0;
  out.expect(run.exit_code == 0, "compare exit 0");
  out.expect(per_run < 120.0, "mean run time " + num(per_run, 3) + "s (< 120s)");
  if (run.exit_code != 0) return out;

  // Recompute seed means from each run's emitted metrics.
  std::map<std::string, double> few, avg;
  for (const auto& m : modes) {
    for (int s = 0; s < 5; ++s) {
      const auto j = read_json(dir / "compare" / "runs" / ("seed" + std::to_string(s)) / m / "metrics.json");
      few[m] += j["few"].get<double>() / 5.0;
      avg[m] += j["average_class_accuracy"].get<double>() / 5.0;
    }
  }
  const auto summary = read_json(dir / "compare" / "summary.json");
  bool agree = true;
  for (const auto& row : summary["means"]) {
    const std::string m = row["mode"];
    agree = agree && std::abs(row["few"].get<double>() - few[m]) < 1e-12 &&
            std::abs(row["average_class_accuracy"].get<double>() - avg[m]) < 1e-12;
  }
  out.expect(agree && summary["means"].size() == 4, "summary means match the per-run metrics");

  std::ostringstream table;
  for (const auto& m : modes) table << ' ' << m << " few " << num(few[m], 4) << " avg " << num(avg[m], 4) << ';';
  out.notes.push_back("seed means:" + table.str());
  out.expect(few["LMR"] > few["cRT"] && few["cRT"] > few["CE"], "few-shot Avg C/A: LMR > cRT > CE");
  out.expect(avg["LMR"] >= avg["cRT"] && avg["cRT"] > avg["CE"], "overall Avg C/A: LMR >= cRT > CE");
  return out;
}

// ------------------------------------------------------------------ 7

Outcome criterion7() {
  Outcome out;
  std::vector<int> truth(10, 0), pred(10, 0);
  truth[9] = 1;
  const GroupAssignment groups({{0, Group::head}, {1, Group::few}});
  const auto m = compute_metrics(truth, pred, groups, {0, 1});
  out.expect(m.overall == 0.9 && m.average_class == 0.5,
             "two-class example: overall " + num(m.overall, 17) + ", Avg C/A " + num(m.average_class, 17));

  Rng rng(5);
  bool identical = true;
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(40));
    const int per = 1 + static_cast<int>(rng.below(30));
    std::vector<int> t, p, classes;
    std::map<int, Group> g;
    for (int c = 0; c < k; ++c) {
      classes.push_back(c);
      g[c] = Group::tail;
      for (int i = 0; i < per; ++i) {
        t.push_back(c);
        p.push_back(rng.bernoulli(0.6) ? c : static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
      }
    }
    const auto r = compute_metrics(t, p, GroupAssignment(g), classes);
    if (r.overall != r.average_class) identical = false;
  }
  out.expect(identical, "balanced test sets: overall == Avg C/A exactly (500 random cases)");

  const auto dir = g_work / "c7";
  const auto tr = cli("train --mode cRT --set training.stage1_epochs=3 --set training.stage2_epochs=3 --out-dir " +
                          q(dir / "train"),
                      "c7_train");
  const auto ev = cli("eval --checkpoint " + q(dir / "train" / "model.tfck") + " --out-dir " + q(dir / "eval"),
                      "c7_eval");
  out.expect(tr.exit_code == 0 && ev.exit_code == 0, "CLI train and eval exit 0");
  if (ev.exit_code == 0) {
    const auto j = read_json(dir / "eval" / "metrics.json");
    out.expect(j["overall_accuracy"] == j["average_class_accuracy"],
               "CLI eval on the balanced synthetic test split: overall == Avg C/A");
  }
  return out;
}

// ------------------------------------------------------------------ 8

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_bytes(e.path());
  return out;
}

Outcome criterion8() {
  Outcome out;
  const auto root = g_work / "c8";
  fs::create_directories(root);
  {
    std::ofstream csv(root / "uniform.csv");
    csv << "class_id,count\n";
    for (int c = 0; c < 12; ++c) csv << c << ",300\n";
  }
  const std::string quick =
      " --set dataset.num_classes=12 --set dataset.max_count=200 --set training.stage1_epochs=3"
      " --set training.stage2_epochs=3 --set lmr.bank_capacity=56";
  const auto src = root / "source";
  const auto prep = cli("synth --profile " + q(root / "uniform.csv") +
                            " --set dataset.val_per_class=30 --set dataset.test_per_class=30 --out-dir " + q(src),
                        "c8_source");
  out.expect(prep.exit_code == 0, "source dataset generated");

  // Shared inputs, so both repetitions see exactly the same arguments.
  const auto in = root / "inputs";
  const auto prep_profile = cli("profile --set curation.num_classes=174 --out-dir " + q(in / "profile"), "c8_in_profile");
  const auto prep_synth = cli("synth" + quick + " --seed 3 --out-dir " + q(in / "synth"), "c8_in_synth");
  out.expect(prep_profile.exit_code == 0 && prep_synth.exit_code == 0, "shared inputs generated");

  struct Cmd {
    std::string name, args;
  };
  for (const char* rep : {"a", "b"}) {
    const auto d = root / rep;
    const std::vector<Cmd> cmds{
        {"profile", "profile --set curation.num_classes=174 --out-dir " + q(d / "profile")},
        {"analyze", "analyze --profile " + q(in / "profile" / "profile.csv") + " --out-dir " + q(d / "analyze")},
        {"synth", "synth" + quick + " --seed 3 --out-dir " + q(d / "synth")},
        {"curate", "curate --manifest " + q(src / "manifest.json") +
                       " --set curation.max_count=250 --set curation.val_per_class=10 --set curation.test_per_class=20"
                       " --seed 4 --out-dir " + q(d / "curate")},
        {"train", "train" + quick + " --seed 3 --manifest " + q(in / "synth" / "manifest.json") + " --out-dir " +
                      q(d / "train")},
        {"eval", "eval --checkpoint " + q(d / "train" / "model.tfck") + " --out-dir " + q(d / "eval")},
        {"compare", "compare" + quick + " --seeds 2 --out-dir " + q(d / "compare")},
    };
    for (const auto& c : cmds) {
      const auto r = cli(c.args, std::string("c8_") + rep + "_" + c.name, c.name == "compare" ? "TAILFORGE_THREADS=2" : "");
      if (r.exit_code != 0) out.expect(false, c.name + " (" + rep + ") exit " + std::to_string(r.exit_code));
    }
  }
  if (!out.ok) return out;
  for (const char* sub : {"profile", "analyze", "synth", "curate", "train", "eval", "compare"}) {
    const auto a = tree_bytes(root / "a" / sub);
    const auto b = tree_bytes(root / "b" / sub);
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) {
      auto it = b.find(name);
      if (it == b.end() || it->second != bytes) ++differing;
    }
    out.expect(!a.empty() && a.size() == b.size() && differing == 0,
               std::string(sub) + ": " + std::to_string(a.size()) + " output files byte-identical");
  }
  // Thread count must not leak into results.
  const auto serial = cli("compare" + quick + " --seeds 2 --out-dir " + q(root / "serial" / "compare"),
                          "c8_serial", "TAILFORGE_THREADS=1");
  const auto a = tree_bytes(root / "a" / "compare");
  out.expect(serial.exit_code == 0 && tree_bytes(root / "serial" / "compare") == a,
             "compare output identical with 1 and 2 threads");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <tailforge CLI> <scratch dir> [ordering.ini]\n";
    return 2;
  }
  g_cli = fs::absolute(argv[1]);
  g_work = fs::absolute(argv[2]);
  const fs::path ordering = argc > 3 ? fs::path(argv[3]) : fs::path(TAILFORGE_ORDERING_INI);
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"property reproduction (SSv2-LT, VideoLT-LT recipes)", criterion1},
      {"profile fitting", criterion2},
      {"LMR algebra suite", criterion3},
      {"gradient correctness", criterion4},
      {"degeneracy identity (cRT == LMR with c=0, alpha=1)", criterion5},
      {"behavioral ordering (5 seeds)", [&] { return criterion6(ordering); }},
      {"group-metric correctness", criterion7},
      {"determinism (byte-identical reruns)", criterion8},
  };

  int failed = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    for (const auto& n : o.notes) std::cout << "    " << n << '\n';
    const auto line = std::string(o.ok ? "PASS" : "FAIL") + "  criterion " + std::to_string(i + 1) + ": " +
                      criteria[i].first;
    std::cout << line << '\n' << std::flush;
    lines.push_back(line);
    failed += o.ok ? 0 : 1;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
  return failed == 0 ? 0 : 1;
}
