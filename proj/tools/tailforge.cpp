// tailforge command-line driver.
//
//   tailforge profile  [--config F] [--set k=v]...      Pareto or fitted profile
//   tailforge analyze  (--profile CSV | --manifest M)   long-tail properties
//   tailforge curate   --manifest SRC [--profile CSV]   -LT manifest
//   tailforge synth                                     synthetic dataset
//   tailforge train    [--mode M]                       train one model
//   tailforge eval     --checkpoint C [--baseline J]    metrics + per-class CSV
//   tailforge compare  [--seeds N] [--modes a,b,..]     multi-seed ordering run
//
// Exit codes: 0 ok, 1 other failure, 2 validation, 3 data deficit, 4 divergence.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tailforge/checkpoint.hpp"
#include "tailforge/config.hpp"
#include "tailforge/curator.hpp"
#include "tailforge/dataset.hpp"
#include "tailforge/manifest.hpp"
#include "tailforge/metrics.hpp"
#include "tailforge/synth.hpp"
#include "tailforge/tailprops.hpp"
#include "tailforge/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace tailforge;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::string out_dir = ".";
  std::string mode;
  std::string manifest;
  std::string features;
  std::string profile;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", o.sets, "override one key, e.g. --set training.batch_size=32");
  app->add_option("--seed", o.seed, "master seed (training.seed)");
  app->add_option("--out-dir", o.out_dir, "output directory");
  app->add_option("--mode", o.mode, "training mode: CE, cRT, Mixup or LMR");
  app->add_option("--manifest", o.manifest, "dataset manifest JSON");
  app->add_option("--features", o.features, "directory feature files resolve against");
  app->add_option("--profile", o.profile, "class profile CSV");
}

ExperimentConfig load_config(const CommonOptions& o, const std::string& base_text = {}) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ValidationError("cannot open config " + o.config);
    cfg = ExperimentConfig::parse(in, o.config);
  } else if (!base_text.empty()) {
    cfg = ExperimentConfig::parse_string(base_text, "checkpoint config");
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects section.key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1), "--set");
  }
  if (o.seed) cfg.set("training.seed", std::to_string(*o.seed), "--seed");
  if (!o.mode.empty()) cfg.set("training.mode", o.mode, "--mode");
  if (!o.manifest.empty()) cfg.set("dataset.manifest", o.manifest, "--manifest");
  if (!o.features.empty()) cfg.set("dataset.features", o.features, "--features");
  if (!o.profile.empty()) cfg.set("dataset.profile", o.profile, "--profile");
  return cfg;
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Every key grouped by section, in table order.
json config_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& k : kConfigKeys)
    j[std::string(k.section)][std::string(k.key)] = cfg.get(std::string(k.section) + "." + std::string(k.key));
  return j;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

ClassProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open profile " + path);
  try {
    return read_profile_csv(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

json properties_json(const LongTailProperties& p, const GroupAssignment& g) {
  json groups = json::object();
  for (Group grp : {Group::head, Group::tail, Group::few})
    groups[std::string(to_string(grp))] = g.members(grp);
  return {{"H", p.head_length_pct},
          {"F", p.fewshot_length_pct},
          {"I", p.imbalance},
          {"n", p.num_classes},
          {"total", p.total},
          {"x", p.head_data_fraction},
          {"omega", p.fewshot_threshold},
          {"groups", groups}};
}

// Rounds values through 32-bit floats so in-memory synthetic data matches
// what a round trip through a feature file would give.
void cast_through_f32(Matrix<double>& m) {
  for (auto& v : m.data()) v = static_cast<double>(static_cast<float>(v));
}

ClassProfile dataset_profile(const ExperimentConfig& cfg) {
  const auto& path = cfg.get("dataset.profile");
  if (!path.empty()) return load_profile(path);
  return pareto_profile(synth_recipe_from(cfg));
}

Dataset synth_dataset(const ExperimentConfig& cfg) {
  const auto dim = cfg.get_int("dataset.dim");
  if (dim < 2) throw ValidationError("key 'dataset.dim' must be >= 2");
  auto data = synth_longtail(dataset_profile(cfg), static_cast<std::size_t>(dim),
                             static_cast<std::uint64_t>(cfg.get_int("training.seed")),
                             cfg.get_double("dataset.confusability"), synth_options_from(cfg));
  cast_through_f32(data.features);
  return data;
}

// A manifest on disk when dataset.manifest is set, synthetic data otherwise.
Dataset load_data(const ExperimentConfig& cfg) {
  const auto& manifest = cfg.get("dataset.manifest");
  if (manifest.empty()) return synth_dataset(cfg);
  fs::path base = cfg.get("dataset.features");
  if (base.empty()) base = fs::path(manifest).parent_path();
  return load_dataset(load_manifest(manifest), base);
}

GroupAssignment report_groups(const ExperimentConfig& cfg, const Dataset& data) {
  return assign_groups(data.train_profile(), cfg.get_double("analysis.head_fraction"),
                       cfg.get_int("analysis.omega"));
}

// ---------------------------------------------------------------- profile

int cmd_profile(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const auto out = prepare_out_dir(o.out_dir);
  const auto n = cfg.get_int("curation.num_classes");
  if (n < 2) throw ValidationError("key 'curation.num_classes' must be >= 2 for the profile command");
  const double x = cfg.get_double("analysis.head_fraction");
  const auto omega = cfg.get_int("analysis.omega");
  const double alpha = cfg.get_double("curation.alpha");

  json report;
  ClassProfile profile;
  if (const auto fit_total = cfg.get_int("curation.fit_total"); fit_total > 0) {
    const auto fit = fit_profile(static_cast<std::size_t>(n), cfg.get_double("curation.fit_imbalance"),
                                 fit_total, alpha);
    profile = fit.profile;
    report["method"] = "fit";
    report["target_total"] = fit_total;
    report["max_count"] = fit.max_count;
    report["min_count"] = fit.min_count;
  } else {
    ParetoRecipe r;
    r.num_classes = static_cast<std::size_t>(n);
    r.alpha = alpha;
    r.max_count = cfg.get_int("curation.max_count");
    r.min_count = cfg.get_int("curation.min_count");
    profile = pareto_profile(r);
    report["method"] = "pareto";
    report["max_count"] = r.max_count;
    report["min_count"] = r.min_count;
  }
  report["num_classes"] = n;
  report["alpha"] = alpha;
  report["properties"] = properties_json(compute_properties(profile, x, omega),
                                         assign_groups(profile, x, omega));
  report["config"] = config_json(cfg);

  std::ostringstream csv;
  write_profile_csv(csv, profile);
  write_text(out / "profile.csv", csv.str());
  write_json(out / "profile_report.json", report);
  std::cout << report["properties"].dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- analyze

int cmd_analyze(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const auto& profile_path = cfg.get("dataset.profile");
  const auto& manifest_path = cfg.get("dataset.manifest");
  if (profile_path.empty() == manifest_path.empty())
    throw ValidationError("analyze needs exactly one of --profile or --manifest");
  const auto profile = profile_path.empty() ? load_manifest(manifest_path).profile(Split::train)
                                            : load_profile(profile_path);
  const double x = cfg.get_double("analysis.head_fraction");
  const auto omega = cfg.get_int("analysis.omega");
  auto report = properties_json(compute_properties(profile, x, omega), assign_groups(profile, x, omega));
  report["source"] = profile_path.empty() ? manifest_path : profile_path;
  const auto out = prepare_out_dir(o.out_dir);
  write_json(out / "properties.json", report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- curate

std::string relative_to(const fs::path& target, const fs::path& dir) {
  const auto rel = fs::absolute(target).lexically_normal().lexically_relative(
      fs::absolute(dir).lexically_normal());
  return rel.empty() ? target.generic_string() : rel.generic_string();
}

json split_sizes(const DatasetManifest& m) {
  return {{"train", m.split_size(Split::train)},
          {"val", m.split_size(Split::val)},
          {"test", m.split_size(Split::test)}};
}

int cmd_curate(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const auto& manifest_path = cfg.get("dataset.manifest");
  if (manifest_path.empty()) throw ValidationError("curate needs --manifest (the source dataset)");
  const auto source = load_manifest(manifest_path);
  const auto spec = split_spec_from(cfg);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("training.seed"));
  const auto kept = kept_classes(source, spec);

  json report;
  DatasetManifest curated;
  if (cfg.get_bool("curation.identity")) {
    // Source records of the surviving classes, splits untouched.
    std::vector<ClassInfo> classes;
    for (const auto& c : source.classes())
      if (std::find(kept.begin(), kept.end(), c.id) != kept.end()) classes.push_back(c);
    std::vector<SampleRecord> samples;
    for (const auto& s : source.samples())
      if (std::find(kept.begin(), kept.end(), s.class_id) != kept.end()) samples.push_back(s);
    curated = DatasetManifest(std::move(classes), std::move(samples));
    report["recipe"] = "identity";
  } else {
    ClassProfile profile;
    if (!cfg.get("dataset.profile").empty()) {
      profile = load_profile(cfg.get("dataset.profile"));
      report["recipe"] = "profile " + cfg.get("dataset.profile");
    } else {
      ParetoRecipe r;
      const auto n = cfg.get_int("curation.num_classes");
      r.num_classes = n > 0 ? static_cast<std::size_t>(n) : kept.size();
      r.alpha = cfg.get_double("curation.alpha");
      r.max_count = cfg.get_int("curation.max_count");
      r.min_count = cfg.get_int("curation.min_count");
      if (const auto fit_total = cfg.get_int("curation.fit_total"); fit_total > 0) {
        profile = fit_profile(r.num_classes, cfg.get_double("curation.fit_imbalance"), fit_total,
                              r.alpha)
                      .profile;
        report["recipe"] = "fit";
      } else {
        profile = pareto_profile(r);
        report["recipe"] = "pareto";
      }
    }
    curated = resample_manifest(source, profile, spec, seed);
  }

  const auto out = prepare_out_dir(o.out_dir);
  fs::path base = cfg.get("dataset.features");
  if (base.empty()) base = fs::path(manifest_path).parent_path();
  std::vector<SampleRecord> samples = curated.samples();
  for (auto& s : samples)
    if (!s.feature_file.empty()) s.feature_file = relative_to(base / s.feature_file, out);
  curated = DatasetManifest(curated.classes(), std::move(samples));
  save_manifest(out / "manifest.json", curated);

  const double x = cfg.get_double("analysis.head_fraction");
  const auto omega = cfg.get_int("analysis.omega");
  const auto achieved = curated.profile(Split::train);
  report["source"] = manifest_path;
  report["source_classes"] = source.classes().size();
  report["kept_classes"] = kept.size();
  report["dropped_classes"] = source.classes().size() - kept.size();
  report["seed"] = seed;
  report["splits"] = split_sizes(curated);
  report["properties"] = properties_json(compute_properties(achieved, x, omega),
                                         assign_groups(achieved, x, omega));
  report["config"] = config_json(cfg);
  write_json(out / "curation_report.json", report);
  std::cout << json{{"splits", report["splits"]}, {"kept_classes", kept.size()}}.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const auto out = prepare_out_dir(o.out_dir);
  const auto data = synth_dataset(cfg);
  save_features(out / "features.tffm", data.features);
  save_manifest(out / "manifest.json", data.manifest);
  const auto profile = data.train_profile();
  const double x = cfg.get_double("analysis.head_fraction");
  const auto omega = cfg.get_int("analysis.omega");
  json report{{"splits", split_sizes(data.manifest)},
              {"dim", data.dim()},
              {"confusability", cfg.get_double("dataset.confusability")},
              {"seed", cfg.get_int("training.seed")},
              {"properties", properties_json(compute_properties(profile, x, omega),
                                             assign_groups(profile, x, omega))},
              {"config", config_json(cfg)}};
  write_json(out / "synth_report.json", report);
  std::cout << report["splits"].dump() << '\n';
  return 0;
}

// ---------------------------------------------------------------- train

struct RunOutput {
  MetricsReport test;
  TrainResult result;
};

RunOutput train_and_test(const ExperimentConfig& cfg, const Dataset& data, const fs::path& out) {
  const auto tc = train_config_from(cfg);
  std::ofstream log(out / "train_log.jsonl", std::ios::binary);
  if (!log) throw Error("cannot write " + (out / "train_log.jsonl").string());
  RunOutput run;
  run.result = train(tc, data, [&](const EpochRecord& r) { log << to_json(r).dump() << '\n'; });
  const auto echo = cfg.echo();
  save_checkpoint(out / "model.tfck", run.result.model, echo);
  write_text(out / "config.ini", echo);
  run.test = evaluate(run.result.model, data, Split::test, report_groups(cfg, data));
  return run;
}

json summary_json(const MetricsReport& m) {
  return {{"few", opt_json(m.few)},
          {"tail", opt_json(m.tail)},
          {"head", opt_json(m.head)},
          {"average_class_accuracy", m.average_class},
          {"overall_accuracy", m.overall}};
}

int cmd_train(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const auto tc = train_config_from(cfg);  // validate before touching data
  const auto out = prepare_out_dir(o.out_dir);
  const auto data = load_data(cfg);
  const auto run = train_and_test(cfg, data, out);
  json summary{{"mode", std::string(to_string(tc.mode))},
               {"seed", tc.seed},
               {"steps", run.result.step_losses.size()},
               {"final_loss", run.result.step_losses.empty() ? 0.0 : run.result.step_losses.back()},
               {"test", summary_json(run.test)}};
  write_json(out / "train_summary.json", summary);
  write_json(out / "metrics.json", to_json(run.test));
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const CommonOptions& o, const std::string& checkpoint, const std::string& split_name,
             const std::string& baseline_path, bool random_init) {
  if (checkpoint.empty() == !random_init)
    throw ValidationError("eval needs exactly one of --checkpoint or --random-init");
  std::optional<Checkpoint> ck;
  if (!checkpoint.empty()) ck = load_checkpoint(checkpoint);
  const auto cfg = load_config(o, ck ? ck->config_echo : std::string{});
  const auto data = load_data(cfg);
  Model model;
  if (ck) {
    model = ck->model;
  } else {
    const auto tc = train_config_from(cfg);
    Rng rng = Rng::stream(tc.seed, "init");
    model = init_model(data.dim(), tc.encoder_dims, data.class_ids, rng);
  }
  if (model.input_dim != data.dim())
    throw DimensionError("model expects " + std::to_string(model.input_dim) +
                         "-dim features, dataset has " + std::to_string(data.dim()));
  if (model.class_ids != data.class_ids)
    throw ValidationError("model classes do not match the dataset's class table");

  const auto report = evaluate(model, data, split_from_string(split_name), report_groups(cfg, data));
  std::optional<MetricsReport> baseline;
  if (!baseline_path.empty()) {
    std::ifstream in(baseline_path);
    if (!in) throw ValidationError("cannot open baseline " + baseline_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("baseline " + baseline_path + ": " + e.what());
    }
    baseline = metrics_from_json(j);
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';

  const auto out = prepare_out_dir(o.out_dir);
  auto j = to_json(report);
  j["split"] = split_name;
  if (baseline) j["baseline"] = baseline_path;
  write_json(out / "metrics.json", j);
  std::ostringstream csv;
  write_per_class_csv(csv, report, baseline ? &*baseline : nullptr);
  write_text(out / "per_class.csv", csv.str());
  std::cout << summary_json(report).dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- compare

std::size_t thread_budget() {
  const char* env = std::getenv("TAILFORGE_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ValidationError(std::string("TAILFORGE_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << *v;
  return s.str();
}

int cmd_compare(const CommonOptions& o, int seeds, const std::string& modes_text) {
  const auto base = load_config(o);
  if (seeds < 1) throw ValidationError("--seeds must be >= 1");
  std::vector<TrainMode> modes;
  for (const auto& m : split_list(modes_text)) modes.push_back(mode_from_string(m));
  if (modes.empty()) throw ValidationError("--modes is empty");
  const auto first_seed = base.get_int("training.seed");
  const auto threads = thread_budget();
  const auto out = prepare_out_dir(o.out_dir);

  struct Job {
    long long seed;
    TrainMode mode;
    ExperimentConfig cfg;
    fs::path dir;
    std::optional<MetricsReport> metrics;
    std::exception_ptr error;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < seeds; ++s) {
    for (auto m : modes) {
      Job job{first_seed + s, m, base, {}, {}, {}};
      job.cfg.set("training.seed", std::to_string(job.seed));
      job.cfg.set("training.mode", std::string(to_string(m)));
      (void)train_config_from(job.cfg);
      job.dir = out / "runs" / ("seed" + std::to_string(job.seed)) / std::string(to_string(m));
      jobs.push_back(std::move(job));
    }
  }

  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next == jobs.size()) return;
        i = next++;
      }
      auto& job = jobs[i];
      try {
        prepare_out_dir(job.dir.string());
        const auto data = load_data(job.cfg);
        auto run = train_and_test(job.cfg, data, job.dir);
        write_json(job.dir / "metrics.json", to_json(run.test));
        job.metrics = std::move(run.test);
        std::lock_guard lock(mu);
        std::cerr << "done seed " << job.seed << ' ' << to_string(job.mode) << ": few "
                  << fmt(job.metrics->few) << " avg " << fmt(job.metrics->average_class) << '\n';
      } catch (...) {
        job.error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, jobs.size()); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& job : jobs)
    if (job.error) std::rethrow_exception(job.error);

  // Seed means per mode. A group missing from a run (no classes) is skipped.
  struct Means {
    std::optional<double> few, tail, head, avg, overall;
  };
  auto mean_of = [&](TrainMode m, auto field) -> std::optional<double> {
    double total = 0.0;
    int n = 0;
    for (const auto& job : jobs) {
      if (job.mode != m) continue;
      const std::optional<double> v = field(*job.metrics);
      if (v) {
        total += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return total / n;
  };
  std::map<TrainMode, Means> means;
  for (auto m : modes) {
    means[m] = {mean_of(m, [](const MetricsReport& r) { return r.few; }),
                mean_of(m, [](const MetricsReport& r) { return r.tail; }),
                mean_of(m, [](const MetricsReport& r) { return r.head; }),
                mean_of(m, [](const MetricsReport& r) { return std::optional<double>(r.average_class); }),
                mean_of(m, [](const MetricsReport& r) { return std::optional<double>(r.overall); })};
  }

  json table = json::array();
  std::ostringstream csv;
  csv << "mode,few,tail,head,avg_class_accuracy,overall_accuracy\n";
  for (auto m : modes) {
    const auto& v = means[m];
    table.push_back({{"mode", std::string(to_string(m))},
                     {"few", opt_json(v.few)},
                     {"tail", opt_json(v.tail)},
                     {"head", opt_json(v.head)},
                     {"average_class_accuracy", opt_json(v.avg)},
                     {"overall_accuracy", opt_json(v.overall)}});
    csv << to_string(m) << ',' << fmt(v.few) << ',' << fmt(v.tail) << ',' << fmt(v.head) << ','
        << fmt(v.avg) << ',' << fmt(v.overall) << '\n';
  }

  json runs = json::array();
  for (const auto& job : jobs) {
    runs.push_back({{"seed", job.seed},
                    {"mode", std::string(to_string(job.mode))},
                    {"metrics", relative_to(job.dir / "metrics.json", out)},
                    {"result", summary_json(*job.metrics)}});
  }

  json summary{{"seeds", seeds}, {"first_seed", first_seed}, {"means", table}, {"runs", runs}};
  auto has = [&](TrainMode m) { return means.count(m) != 0; };
  if (has(TrainMode::ce) && has(TrainMode::crt) && has(TrainMode::lmr)) {
    const auto& ce = means[TrainMode::ce];
    const auto& crt = means[TrainMode::crt];
    const auto& lmr = means[TrainMode::lmr];
    const bool few_ok = ce.few && crt.few && lmr.few && *lmr.few > *crt.few && *crt.few > *ce.few;
    const bool avg_ok = *lmr.avg >= *crt.avg && *crt.avg > *ce.avg;
    summary["ordering"] = {{"few: LMR > cRT > CE", few_ok}, {"avg: LMR >= cRT > CE", avg_ok}};
  }
  summary["config"] = config_json(base);
  write_json(out / "summary.json", summary);
  write_text(out / "summary.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailforge: long-tail dataset curation, analysis and training"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  CommonOptions common;
  auto* profile = app.add_subcommand("profile", "write a Pareto (or fitted) class profile");
  auto* analyze = app.add_subcommand("analyze", "long-tail properties of a profile or manifest");
  auto* curate = app.add_subcommand("curate", "resample a source manifest into an -LT manifest");
  auto* synth = app.add_subcommand("synth", "generate a synthetic long-tail feature dataset");
  auto* train_cmd = app.add_subcommand("train", "train one model and write logs and a checkpoint");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* compare = app.add_subcommand("compare", "train every mode over several seeds and summarise");
  for (auto* sub : {profile, analyze, curate, synth, train_cmd, eval, compare}) add_common(sub, common);

  std::string checkpoint, split = "test", baseline;
  bool random_init = false;
  eval->add_option("--checkpoint", checkpoint, "model checkpoint (.tfck)");
  eval->add_option("--split", split, "split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--baseline", baseline, "metrics.json of a baseline run for per-class deltas");
  eval->add_flag("--random-init", random_init, "evaluate an untrained model initialised from the seed");

  int seeds = 5;
  std::string modes = "CE,cRT,Mixup,LMR";
  compare->add_option("--seeds", seeds, "number of consecutive seeds, starting at training.seed");
  compare->add_option("--modes", modes, "comma-separated modes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::validation);
  }

  try {
    if (*profile) return cmd_profile(common);
    if (*analyze) return cmd_analyze(common);
    if (*curate) return cmd_curate(common);
    if (*synth) return cmd_synth(common);
    if (*train_cmd) return cmd_train(common);
    if (*eval) return cmd_eval(common, checkpoint, split, baseline, random_init);
    if (*compare) return cmd_compare(common, seeds, modes);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::validation);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::failure);
  }
  return static_cast<int>(ExitCode::failure);
}
