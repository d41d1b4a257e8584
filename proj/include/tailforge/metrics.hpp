#pragma once

#include <cstddef>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tailforge/error.hpp"
#include "tailforge/tailprops.hpp"

namespace tailforge {

struct ClassAccuracy {
  int class_id = 0;
  long long train_count = 0;
  Group group = Group::tail;
  long long evaluated = 0;
  long long correct = 0;
  double accuracy = 0.0;
};

struct MetricsReport {
  double overall = 0.0;        // correct / evaluated samples
  double average_class = 0.0;  // unweighted mean of per-class accuracies
  std::optional<double> few;
  std::optional<double> tail;
  std::optional<double> head;
  std::vector<ClassAccuracy> per_class;
  std::vector<std::string> warnings;
  GroupAssignment groups;
  std::string group_source = "train profile";

  std::optional<double> group_accuracy(Group g) const {
    switch (g) {
      case Group::few: return few;
      case Group::tail: return tail;
      case Group::head: return head;
    }
    return std::nullopt;
  }
};

// Aggregates predictions over the classes in `evaluate_classes`. Classes with
// no evaluated samples are left out of every average and reported in
// `warnings`. `train_counts` is carried into the per-class rows.
inline MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                                     const GroupAssignment& groups,
                                     const std::vector<int>& evaluate_classes,
                                     const std::map<int, long long>& train_counts = {}) {
  if (truth.size() != predicted.size())
    throw DimensionError("truth and prediction lengths differ");
  if (truth.empty()) throw ValidationError("evaluation split is empty");
  std::map<int, std::pair<long long, long long>> tally;  // class -> (n, correct)
  for (int c : evaluate_classes) {
    if (!groups.contains(c))
      throw ValidationError("class " + std::to_string(c) + " has no group assignment");
    tally[c];
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto it = tally.find(truth[i]);
    if (it == tally.end())
      throw ValidationError("sample of class " + std::to_string(truth[i]) +
                            " outside the evaluated classes");
    ++it->second.first;
    if (predicted[i] == truth[i]) ++it->second.second;
  }

  MetricsReport r;
  r.groups = groups;
  long long n = 0;
  long long correct = 0;
  std::map<Group, std::pair<double, int>> group_sums;
  double class_sum = 0.0;
  for (const auto& [cls, counts] : tally) {
    if (counts.first == 0) {
      r.warnings.push_back("class " + std::to_string(cls) + " has no evaluation samples; excluded");
      continue;
    }
    ClassAccuracy ca;
    ca.class_id = cls;
    auto tc = train_counts.find(cls);
    ca.train_count = tc == train_counts.end() ? 0 : tc->second;
    ca.group = groups.of(cls);
    ca.evaluated = counts.first;
    ca.correct = counts.second;
    ca.accuracy = static_cast<double>(counts.second) / static_cast<double>(counts.first);
    n += counts.first;
    correct += counts.second;
    class_sum += ca.accuracy;
    auto& gs = group_sums[ca.group];
    gs.first += ca.accuracy;
    gs.second += 1;
    r.per_class.push_back(ca);
  }
  if (r.per_class.empty()) throw ValidationError("no class has evaluation samples");
  r.overall = static_cast<double>(correct) / static_cast<double>(n);
  r.average_class = class_sum / static_cast<double>(r.per_class.size());
  // Evaluate the mean of per-class ratios exactly over a common denominator
  // when it is small enough; on balanced sets this makes it equal `overall`
  // bit for bit.
  long long common = 1;
  for (const auto& c : r.per_class) {
    common = std::lcm(common, c.evaluated);
    if (common > 1'000'000'000'000LL) break;
  }
  if (common <= 1'000'000'000'000LL && r.per_class.size() < 1'000'000) {
    long long numerator = 0;
    for (const auto& c : r.per_class) numerator += c.correct * (common / c.evaluated);
    r.average_class = static_cast<double>(numerator) /
                      static_cast<double>(common * static_cast<long long>(r.per_class.size()));
  }
  for (const auto& [g, s] : group_sums) {
    const double mean = s.first / s.second;
    if (g == Group::few) r.few = mean;
    if (g == Group::tail) r.tail = mean;
    if (g == Group::head) r.head = mean;
  }
  return r;
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"class_id", c.class_id},
                         {"train_count", c.train_count},
                         {"group", std::string(to_string(c.group))},
                         {"evaluated", c.evaluated},
                         {"correct", c.correct},
                         {"accuracy", c.accuracy}});
  }
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (Group g : {Group::few, Group::tail, Group::head}) {
    groups[std::string(to_string(g))] = r.groups.members(g);
  }
  return {{"overall_accuracy", r.overall},
          {"average_class_accuracy", r.average_class},
          {"few", opt(r.few)},
          {"tail", opt(r.tail)},
          {"head", opt(r.head)},
          {"group_source", r.group_source},
          {"groups", groups},
          {"per_class", per_class},
          {"warnings", r.warnings}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.overall = j.at("overall_accuracy").get<double>();
    r.average_class = j.at("average_class_accuracy").get<double>();
    for (const char* key : {"few", "tail", "head"}) {
      if (j.contains(key) && !j.at(key).is_null()) {
        const double v = j.at(key).get<double>();
        const auto g = group_from_string(key);
        if (g == Group::few) r.few = v;
        if (g == Group::tail) r.tail = v;
        if (g == Group::head) r.head = v;
      }
    }
    std::map<int, Group> groups;
    for (const auto& c : j.at("per_class")) {
      ClassAccuracy ca;
      ca.class_id = c.at("class_id").get<int>();
      ca.train_count = c.at("train_count").get<long long>();
      ca.group = group_from_string(c.at("group").get<std::string>());
      ca.evaluated = c.at("evaluated").get<long long>();
      ca.correct = c.at("correct").get<long long>();
      ca.accuracy = c.at("accuracy").get<double>();
      groups[ca.class_id] = ca.group;
      r.per_class.push_back(ca);
    }
    r.groups = GroupAssignment(std::move(groups));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("metrics report: ") + e.what());
  }
  return r;
}

// class_id,count,group,accuracy,delta. delta is against `baseline` when
// given (empty when the baseline lacks the class).
inline void write_per_class_csv(std::ostream& out, const MetricsReport& report,
                                const MetricsReport* baseline = nullptr) {
  std::map<int, double> base;
  if (baseline != nullptr)
    for (const auto& c : baseline->per_class) base[c.class_id] = c.accuracy;
  out << "class_id,count,group,accuracy,delta\n";
  out << std::setprecision(6) << std::fixed;
  for (const auto& c : report.per_class) {
    out << c.class_id << ',' << c.train_count << ',' << to_string(c.group) << ',' << c.accuracy
        << ',';
    auto it = base.find(c.class_id);
    if (it != base.end()) out << (c.accuracy - it->second);
    out << '\n';
  }
}

}  // namespace tailforge
