#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <map>
#include <vector>

#include "tailforge/feature_store.hpp"
#include "tailforge/manifest.hpp"

namespace tailforge {

// A manifest with its feature rows resolved into memory. Row i of `features`
// belongs to manifest.samples()[i].
struct Dataset {
  DatasetManifest manifest;
  Matrix<double> features;
  std::vector<int> class_ids;  // sorted ids of the class table

  std::size_t num_classes() const noexcept { return class_ids.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  std::size_t class_index(int class_id) const {
    auto it = std::lower_bound(class_ids.begin(), class_ids.end(), class_id);
    if (it == class_ids.end() || *it != class_id)
      throw ValidationError("class " + std::to_string(class_id) + " not in dataset");
    return static_cast<std::size_t>(it - class_ids.begin());
  }

  int label(std::size_t sample) const { return manifest.samples()[sample].class_id; }

  std::vector<std::size_t> indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest.samples().size(); ++i)
      if (manifest.samples()[i].split == split) out.push_back(i);
    return out;
  }

  std::map<int, std::vector<std::size_t>> indices_by_class(Split split) const {
    std::map<int, std::vector<std::size_t>> out;
    for (int c : class_ids) out[c];
    for (std::size_t i = 0; i < manifest.samples().size(); ++i)
      if (manifest.samples()[i].split == split) out[label(i)].push_back(i);
    return out;
  }

  ClassProfile train_profile() const { return manifest.profile(Split::train); }
};

inline Dataset make_dataset(DatasetManifest manifest, Matrix<double> features) {
  if (features.rows() != manifest.samples().size()) {
    throw DimensionError("feature rows (" + std::to_string(features.rows()) +
                         ") do not match manifest samples (" +
                         std::to_string(manifest.samples().size()) + ")");
  }
  Dataset d{std::move(manifest), std::move(features), {}};
  for (const auto& c : d.manifest.classes()) d.class_ids.push_back(c.id);
  std::sort(d.class_ids.begin(), d.class_ids.end());
  return d;
}

// Resolves every record's (feature_file, row) relative to base_dir.
inline Dataset load_dataset(DatasetManifest manifest, const std::filesystem::path& base_dir) {
  FeatureCache cache(base_dir);
  const auto& samples = manifest.samples();
  std::size_t dim = 0;
  Matrix<double> features;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& rec = samples[i];
    const auto& source = cache.get(rec.feature_file);
    if (i == 0) {
      dim = source.cols();
      features = Matrix<double>(samples.size(), dim);
    }
    if (source.cols() != dim)
      throw DimensionError("feature file " + rec.feature_file + " has " +
                           std::to_string(source.cols()) + " columns, expected " +
                           std::to_string(dim));
    if (rec.row >= source.rows())
      throw ValidationError("sample '" + rec.id + "' references row " + std::to_string(rec.row) +
                            " of " + rec.feature_file + " which has " +
                            std::to_string(source.rows()) + " rows");
    auto src = source.row(rec.row);
    std::copy(src.begin(), src.end(), features.row(i).begin());
  }
  return make_dataset(std::move(manifest), std::move(features));
}

}  // namespace tailforge
