#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tailforge/dataset.hpp"
#include "tailforge/manifest.hpp"
#include "tailforge/rng.hpp"
#include "tailforge/tailprops.hpp"

namespace tailforge {

struct SynthOptions {
  long long val_per_class = 10;
  long long test_per_class = 20;
  double separation = 4.0;   // norm of each class mean
  double noise = 1.0;        // per-dimension standard deviation
  long long omega = kDefaultFewShotThreshold;
  std::string feature_file = "features.tffm";
};

namespace detail {

inline std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace detail

// Gaussian cluster per class. Most class means are random directions of
// length `separation`. Each few-shot class is instead centred at
// `confusability * separation` from the mean of a randomly chosen head class,
// so confusability 0 makes it indistinguishable from that head class.
// Train counts follow the profile; val and test are balanced.
inline Dataset synth_longtail(const ClassProfile& profile, std::size_t dim, std::uint64_t seed,
                              double confusability, const SynthOptions& options = {}) {
  profile.require_non_empty();
  if (dim < 2) throw ValidationError("synthetic features need dim >= 2");
  if (confusability < 0.0) throw ValidationError("confusability must be >= 0");
  if (options.val_per_class < 0 || options.test_per_class < 0)
    throw ValidationError("split sizes must be non-negative");

  Rng rng = Rng::stream(seed, "synth");
  const auto groups = assign_groups(profile, kDefaultHeadFraction, options.omega);
  const auto head = groups.members(Group::head);

  std::map<int, std::vector<double>> means;
  for (const auto& e : profile.entries()) {
    auto u = detail::random_unit(dim, rng);
    for (auto& x : u) x *= options.separation;
    means[e.class_id] = std::move(u);
  }
  for (const auto& e : profile.entries()) {
    if (groups.of(e.class_id) != Group::few || head.empty()) continue;
    const int anchor = head[rng.below(head.size())];
    auto offset = detail::random_unit(dim, rng);
    auto& m = means[e.class_id];
    for (std::size_t k = 0; k < dim; ++k)
      m[k] = means[anchor][k] + confusability * options.separation * offset[k];
  }

  std::vector<ClassInfo> classes;
  std::vector<SampleRecord> samples;
  std::vector<double> data;
  for (const auto& e : profile.entries()) {
    classes.push_back({e.class_id, "class_" + std::to_string(e.class_id)});
    const std::pair<Split, long long> plan[] = {
        {Split::train, e.count}, {Split::val, options.val_per_class}, {Split::test, options.test_per_class}};
    for (const auto& [split, n] : plan) {
      for (long long k = 0; k < n; ++k) {
        SampleRecord r;
        r.id = "c" + std::to_string(e.class_id) + "_" + std::string(to_string(split)) + "_" +
               std::to_string(k);
        r.class_id = e.class_id;
        r.split = split;
        r.feature_file = options.feature_file;
        r.row = samples.size();
        samples.push_back(std::move(r));
        for (std::size_t d = 0; d < dim; ++d)
          data.push_back(means[e.class_id][d] + options.noise * rng.normal());
      }
    }
  }
  const auto rows = samples.size();
  return make_dataset(DatasetManifest(std::move(classes), std::move(samples)),
                      Matrix<double>(rows, dim, std::move(data)));
}

// Manifest-only source with the given per-class split sizes; rows index into
// one feature file in record order. Used to stand in for an original
// dataset when curating.
inline DatasetManifest make_source_manifest(const std::vector<long long>& train,
                                            const std::vector<long long>& val,
                                            const std::vector<long long>& test,
                                            const std::string& feature_file = "source.tffm") {
  if (train.size() != val.size() || train.size() != test.size())
    throw DimensionError("source split count vectors differ in length");
  std::vector<ClassInfo> classes;
  std::vector<SampleRecord> samples;
  for (std::size_t c = 0; c < train.size(); ++c) {
    const int id = static_cast<int>(c);
    classes.push_back({id, "class_" + std::to_string(id)});
    const std::pair<Split, long long> plan[] = {
        {Split::train, train[c]}, {Split::val, val[c]}, {Split::test, test[c]}};
    for (const auto& [split, n] : plan) {
      for (long long k = 0; k < n; ++k) {
        samples.push_back({"c" + std::to_string(id) + "_" + std::string(to_string(split)) + "_" +
                               std::to_string(k),
                           id, split, feature_file, samples.size()});
      }
    }
  }
  return DatasetManifest(std::move(classes), std::move(samples));
}

}  // namespace tailforge
