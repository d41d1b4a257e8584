#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "tailforge/error.hpp"
#include "tailforge/tailprops.hpp"

namespace tailforge {

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct ClassInfo {
  int id = 0;
  std::string name;

  friend bool operator==(const ClassInfo&, const ClassInfo&) = default;
};

struct SampleRecord {
  std::string id;
  int class_id = 0;
  Split split = Split::train;
  std::string feature_file;  // relative to the manifest's directory
  std::size_t row = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

// Sample records plus the class table they refer to. Each sample id appears
// once, which also makes the splits disjoint.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  DatasetManifest(std::vector<ClassInfo> classes, std::vector<SampleRecord> samples)
      : classes_(std::move(classes)), samples_(std::move(samples)) {
    validate();
  }

  const std::vector<ClassInfo>& classes() const noexcept { return classes_; }
  const std::vector<SampleRecord>& samples() const noexcept { return samples_; }

  bool has_class(int id) const {
    for (const auto& c : classes_)
      if (c.id == id) return true;
    return false;
  }

  // Per-class sample counts in one split; classes with no samples map to 0.
  std::map<int, long long> counts(Split split) const {
    std::map<int, long long> out;
    for (const auto& c : classes_) out[c.id] = 0;
    for (const auto& s : samples_)
      if (s.split == split) ++out[s.class_id];
    return out;
  }

  std::size_t split_size(Split split) const {
    std::size_t n = 0;
    for (const auto& s : samples_) n += s.split == split ? 1 : 0;
    return n;
  }

  // Profile of the classes that have at least one sample in the split.
  ClassProfile profile(Split split = Split::train) const {
    std::vector<ClassCount> entries;
    for (const auto& [id, n] : counts(split))
      if (n > 0) entries.push_back({id, n});
    return ClassProfile(std::move(entries));
  }

  void validate() const {
    std::set<int> class_ids;
    for (const auto& c : classes_) {
      if (!class_ids.insert(c.id).second)
        throw ValidationError("manifest: duplicate class id " + std::to_string(c.id));
    }
    std::set<std::string_view> sample_ids;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const auto& s = samples_[i];
      if (!sample_ids.insert(s.id).second)
        throw ValidationError("manifest: duplicate sample id '" + s.id + "' (record " +
                              std::to_string(i) + ")");
      if (class_ids.count(s.class_id) == 0)
        throw ValidationError("manifest: sample '" + s.id + "' (record " + std::to_string(i) +
                              ") references unknown class " + std::to_string(s.class_id));
    }
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;

 private:
  std::vector<ClassInfo> classes_;
  std::vector<SampleRecord> samples_;
};

inline nlohmann::ordered_json to_json(const DatasetManifest& m) {
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& c : m.classes()) classes.push_back({{"id", c.id}, {"name", c.name}});
  nlohmann::ordered_json samples = nlohmann::ordered_json::array();
  for (const auto& s : m.samples()) {
    samples.push_back({{"id", s.id},
                       {"class", s.class_id},
                       {"split", std::string(to_string(s.split))},
                       {"feature_file", s.feature_file},
                       {"row", s.row}});
  }
  return {{"classes", std::move(classes)}, {"samples", std::move(samples)}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  std::vector<ClassInfo> classes;
  std::vector<SampleRecord> samples;
  try {
    for (const auto& c : j.at("classes")) classes.push_back({c.at("id").get<int>(), c.value("name", "")});
    std::size_t index = 0;
    for (const auto& s : j.at("samples")) {
      try {
        SampleRecord r;
        r.id = s.at("id").is_string() ? s.at("id").get<std::string>()
                                      : s.at("id").dump();
        r.class_id = s.at("class").get<int>();
        r.split = split_from_string(s.at("split").get<std::string>());
        r.feature_file = s.value("feature_file", "");
        r.row = s.value("row", std::size_t{0});
        samples.push_back(std::move(r));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("manifest: sample record " + std::to_string(index) + ": " + e.what());
      }
      ++index;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return DatasetManifest(std::move(classes), std::move(samples));
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << to_json(m).dump(1) << '\n';
}

}  // namespace tailforge
