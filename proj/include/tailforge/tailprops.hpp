#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tailforge/error.hpp"

namespace tailforge {

struct ClassCount {
  int class_id = 0;
  long long count = 0;

  friend bool operator==(const ClassCount&, const ClassCount&) = default;
};

// Per-class training counts. Counts are positive and class ids unique.
class ClassProfile {
 public:
  ClassProfile() = default;

  explicit ClassProfile(std::vector<ClassCount> entries) : entries_(std::move(entries)) {
    std::set<int> seen;
    for (const auto& e : entries_) {
      if (e.count < 1) {
        throw ValidationError("class " + std::to_string(e.class_id) + " has count " +
                              std::to_string(e.count) + "; counts must be >= 1");
      }
      if (!seen.insert(e.class_id).second) {
        throw ValidationError("duplicate class id " + std::to_string(e.class_id));
      }
    }
  }

  // Class ids 0..n-1 in the given order.
  static ClassProfile from_counts(const std::vector<long long>& counts) {
    std::vector<ClassCount> entries;
    entries.reserve(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      entries.push_back({static_cast<int>(i), counts[i]});
    return ClassProfile(std::move(entries));
  }

  const std::vector<ClassCount>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  long long total() const noexcept {
    long long t = 0;
    for (const auto& e : entries_) t += e.count;
    return t;
  }
  long long max_count() const {
    require_non_empty();
    return std::max_element(entries_.begin(), entries_.end(), by_count)->count;
  }
  long long min_count() const {
    require_non_empty();
    return std::min_element(entries_.begin(), entries_.end(), by_count)->count;
  }

  long long count_of(int class_id) const {
    for (const auto& e : entries_)
      if (e.class_id == class_id) return e.count;
    throw ValidationError("class " + std::to_string(class_id) + " not in profile");
  }

  std::vector<long long> counts() const {
    std::vector<long long> out;
    for (const auto& e : entries_) out.push_back(e.count);
    return out;
  }

  // Size-descending ranking; equal counts ordered by ascending class id.
  std::vector<ClassCount> ranked() const {
    auto out = entries_;
    std::sort(out.begin(), out.end(), [](const ClassCount& a, const ClassCount& b) {
      if (a.count != b.count) return a.count > b.count;
      return a.class_id < b.class_id;
    });
    return out;
  }

  void require_non_empty() const {
    if (entries_.empty()) throw EmptyProfileError("class profile is empty");
  }

  friend bool operator==(const ClassProfile&, const ClassProfile&) = default;

 private:
  static bool by_count(const ClassCount& a, const ClassCount& b) { return a.count < b.count; }

  std::vector<ClassCount> entries_;
};

inline constexpr double kDefaultHeadFraction = 0.5;
inline constexpr long long kDefaultFewShotThreshold = 20;

struct LongTailProperties {
  double head_length_pct = 0.0;     // H%
  double fewshot_length_pct = 0.0;  // F%
  double imbalance = 1.0;           // I
  double head_data_fraction = kDefaultHeadFraction;
  long long fewshot_threshold = kDefaultFewShotThreshold;
  std::size_t num_classes = 0;
  long long total = 0;
};

namespace detail {

inline void check_head_fraction(double x) {
  if (!(x > 0.0 && x <= 1.0)) {
    throw ValidationError("head data fraction must be in (0, 1], got " + std::to_string(x));
  }
}

// Length of the minimal size-descending prefix holding at least x of the data.
inline std::size_t head_prefix_length(const std::vector<ClassCount>& ranked, long long total,
                                      double x) {
  const double target = x * static_cast<double>(total);
  long long cumulative = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    cumulative += ranked[i].count;
    if (static_cast<double>(cumulative) >= target) return i + 1;
  }
  return ranked.size();
}

}  // namespace detail

inline LongTailProperties compute_properties(const ClassProfile& profile,
                                             double x = kDefaultHeadFraction,
                                             long long omega = kDefaultFewShotThreshold) {
  profile.require_non_empty();
  detail::check_head_fraction(x);
  const auto ranked = profile.ranked();
  const auto n = static_cast<double>(profile.size());
  const auto total = profile.total();

  LongTailProperties p;
  p.head_data_fraction = x;
  p.fewshot_threshold = omega;
  p.num_classes = profile.size();
  p.total = total;
  p.head_length_pct =
      100.0 * static_cast<double>(detail::head_prefix_length(ranked, total, x)) / n;
  const auto few = std::count_if(ranked.begin(), ranked.end(),
                                 [omega](const ClassCount& e) { return e.count <= omega; });
  p.fewshot_length_pct = 100.0 * static_cast<double>(few) / n;
  p.imbalance = static_cast<double>(profile.max_count()) / static_cast<double>(profile.min_count());
  return p;
}

enum class Group { head, tail, few };

inline std::string_view to_string(Group g) {
  switch (g) {
    case Group::head: return "head";
    case Group::tail: return "tail";
    case Group::few: return "few";
  }
  return "?";
}

inline Group group_from_string(std::string_view s) {
  if (s == "head") return Group::head;
  if (s == "tail") return Group::tail;
  if (s == "few") return Group::few;
  throw ValidationError("unknown group '" + std::string(s) + "'");
}

class GroupAssignment {
 public:
  GroupAssignment() = default;
  explicit GroupAssignment(std::map<int, Group> groups) : groups_(std::move(groups)) {}

  Group of(int class_id) const {
    auto it = groups_.find(class_id);
    if (it == groups_.end())
      throw ValidationError("class " + std::to_string(class_id) + " has no group");
    return it->second;
  }
  bool contains(int class_id) const { return groups_.count(class_id) != 0; }

  std::vector<int> members(Group g) const {
    std::vector<int> out;
    for (const auto& [id, grp] : groups_)
      if (grp == g) out.push_back(id);
    return out;
  }

  const std::map<int, Group>& map() const noexcept { return groups_; }

  friend bool operator==(const GroupAssignment&, const GroupAssignment&) = default;

 private:
  std::map<int, Group> groups_;
};

// Head = the prefix that defines H%; few-shot = count <= omega outside the
// head; tail = everything else.
inline GroupAssignment assign_groups(const ClassProfile& profile,
                                     double x = kDefaultHeadFraction,
                                     long long omega = kDefaultFewShotThreshold) {
  profile.require_non_empty();
  detail::check_head_fraction(x);
  const auto ranked = profile.ranked();
  const auto head_len = detail::head_prefix_length(ranked, profile.total(), x);
  std::map<int, Group> groups;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    Group g = Group::tail;
    if (i < head_len) {
      g = Group::head;
    } else if (ranked[i].count <= omega) {
      g = Group::few;
    }
    groups.emplace(ranked[i].class_id, g);
  }
  return GroupAssignment(std::move(groups));
}

// Profile CSV: one "class_id,count" pair per line. A header line and lines
// starting with '#' are skipped.
inline ClassProfile read_profile_csv(std::istream& in) {
  std::vector<ClassCount> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const bool numeric_start =
        std::isdigit(static_cast<unsigned char>(line[first])) || line[first] == '-';
    if (line_no == 1 && !numeric_start) continue;  // header
    std::istringstream fields(line);
    std::string id_text, count_text, extra;
    if (!std::getline(fields, id_text, ',') || !std::getline(fields, count_text, ',') ||
        std::getline(fields, extra, ',')) {
      throw ValidationError("profile line " + std::to_string(line_no) +
                            ": expected 'class_id,count'");
    }
    try {
      std::size_t used_id = 0;
      std::size_t used_count = 0;
      const int id = std::stoi(id_text, &used_id);
      const long long count = std::stoll(count_text, &used_count);
      auto trailing = [](const std::string& s, std::size_t used) {
        return s.find_first_not_of(" \t", used) != std::string::npos;
      };
      if (trailing(id_text, used_id) || trailing(count_text, used_count))
        throw std::invalid_argument("trailing characters");
      entries.push_back({id, count});
    } catch (const std::logic_error&) {
      throw ValidationError("profile line " + std::to_string(line_no) + ": cannot parse '" +
                            line + "'");
    }
  }
  try {
    return ClassProfile(std::move(entries));
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("profile: ") + e.what());
  }
}

inline void write_profile_csv(std::ostream& out, const ClassProfile& profile) {
  out << "class_id,count\n";
  for (const auto& e : profile.entries()) out << e.class_id << ',' << e.count << '\n';
}

}  // namespace tailforge
