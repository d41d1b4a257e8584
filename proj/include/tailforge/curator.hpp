#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tailforge/error.hpp"
#include "tailforge/manifest.hpp"
#include "tailforge/rng.hpp"
#include "tailforge/tailprops.hpp"

namespace tailforge {

struct ParetoRecipe {
  std::size_t num_classes = 174;
  double alpha = 6.0;
  long long max_count = 2500;
  long long min_count = 5;
  // Echoed into reports; the profile construction itself draws no randomness.
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2)
      throw ValidationError("profile too small: a Pareto profile needs at least 2 classes, got " +
                            std::to_string(num_classes));
    if (!(alpha > 0.0)) throw ValidationError("Pareto alpha must be > 0");
    if (min_count < 1) throw ValidationError("min_count must be >= 1");
    if (max_count < min_count) throw ValidationError("max_count must be >= min_count");
  }
};

// Long-tail class counts from a Pareto (Lomax) density. Rank r in [0, n-1]
// sits at t = r/(n-1) and gets
//
//   count(t) = max_count * (1 + k t)^-(alpha+1),   k = I^(1/(alpha+1)) - 1,
//
// with I = max_count/min_count, i.e. the density of Pareto draws binned into
// n equal-width classes, scaled so both endpoints are hit exactly. Counts are
// rounded after scaling and the endpoints pinned, so I is exact.
inline ClassProfile pareto_profile(const ParetoRecipe& recipe) {
  recipe.validate();
  const std::size_t n = recipe.num_classes;
  const double ratio = static_cast<double>(recipe.max_count) / static_cast<double>(recipe.min_count);
  const double exponent = recipe.alpha + 1.0;
  const double k = std::pow(ratio, 1.0 / exponent) - 1.0;
  std::vector<long long> counts(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double t = static_cast<double>(r) / static_cast<double>(n - 1);
    const double value = static_cast<double>(recipe.max_count) * std::pow(1.0 + k * t, -exponent);
    counts[r] = std::clamp(std::llround(value), recipe.min_count, recipe.max_count);
  }
  counts.front() = recipe.max_count;
  counts.back() = recipe.min_count;
  for (std::size_t r = 1; r < n; ++r) counts[r] = std::min(counts[r], counts[r - 1]);
  return ClassProfile::from_counts(counts);
}

struct ProfileFit {
  ClassProfile profile;
  long long max_count = 0;
  long long min_count = 0;
  long long total = 0;
  LongTailProperties properties;
};

// Finds the max_count (with min_count = round(max_count / I)) whose Pareto
// profile total is nearest the requested total. Total grows with max_count,
// so a bisection brackets the answer; neighbours are then scanned because
// rounding min_count makes the total only piecewise monotone.
inline ProfileFit fit_profile(std::size_t num_classes, double imbalance, long long total,
                              double alpha) {
  if (num_classes < 2)
    throw ValidationError("profile too small: need at least 2 classes, got " +
                          std::to_string(num_classes));
  if (!(imbalance >= 1.0)) throw ValidationError("imbalance must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("Pareto alpha must be > 0");

  auto min_for = [imbalance](long long max_count) {
    return std::max<long long>(1, std::llround(static_cast<double>(max_count) / imbalance));
  };
  auto build = [&](long long max_count) {
    return pareto_profile({num_classes, alpha, max_count, std::min(max_count, min_for(max_count))});
  };

  const long long lo = std::max<long long>(1, static_cast<long long>(std::ceil(imbalance / 2.0)));
  const long long lo_total = build(lo).total();
  if (total < lo_total) {
    throw InfeasibleProfileError("total " + std::to_string(total) + " infeasible for n=" +
                                     std::to_string(num_classes) + ", I=" +
                                     std::to_string(imbalance) + "; achievable totals are >= " +
                                     std::to_string(lo_total),
                                 lo_total, -1);
  }
  // Every profile holds at least max_count samples, so max_count = total
  // always overshoots.
  long long a = lo;
  long long b = std::max(lo, total);
  while (b - a > 1) {
    const long long mid = a + (b - a) / 2;
    if (build(mid).total() < total) {
      a = mid;
    } else {
      b = mid;
    }
  }
  long long best = a;
  long long best_gap = -1;
  for (long long m = std::max(lo, a - 8); m <= b + 8; ++m) {
    const long long gap = std::llabs(build(m).total() - total);
    if (best_gap < 0 || gap < best_gap) {
      best = m;
      best_gap = gap;
    }
  }
  ProfileFit fit;
  fit.profile = build(best);
  fit.max_count = fit.profile.max_count();
  fit.min_count = fit.profile.min_count();
  fit.total = fit.profile.total();
  fit.properties = compute_properties(fit.profile);
  return fit;
}

struct SplitSpec {
  long long val_per_class = 40;
  long long test_per_class = 15;
  // Classes with fewer test-source samples are dropped before ranking.
  long long min_test_per_class = 0;
  // Source splits the balanced val/test sets are drawn from.
  Split val_source = Split::train;
  Split test_source = Split::val;

  void validate() const {
    if (val_per_class < 0 || test_per_class < 0 || min_test_per_class < 0)
      throw ValidationError("split sizes must be non-negative");
  }
};

// Classes that survive the min_test_per_class drop rule, in class-table order.
inline std::vector<int> kept_classes(const DatasetManifest& source, const SplitSpec& spec) {
  const auto test_counts = source.counts(spec.test_source);
  std::vector<int> kept;
  for (const auto& c : source.classes())
    if (test_counts.at(c.id) >= spec.min_test_per_class) kept.push_back(c.id);
  return kept;
}

namespace detail {

// Chooses `take` entries of pool uniformly without replacement; the chosen
// entries are removed from pool.
inline std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t>& pool,
                                                         std::size_t take, Rng& rng) {
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(pool.begin(), pool.end());
  return chosen;
}

}  // namespace detail

// Builds an -LT manifest: kept classes are ranked by source train size and
// receive the profile's counts in the same rank order, so the largest source
// class stays the largest. Train, val and test samples are drawn uniformly
// without replacement per class. Output records keep the source order.
inline DatasetManifest resample_manifest(const DatasetManifest& source, const ClassProfile& profile,
                                         const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  profile.require_non_empty();
  const auto kept = kept_classes(source, spec);
  if (kept.size() != profile.size()) {
    throw ValidationError("profile has " + std::to_string(profile.size()) + " classes but " +
                          std::to_string(kept.size()) + " source classes survive the drop rule");
  }

  std::map<int, std::map<Split, std::vector<std::size_t>>> pools;
  for (std::size_t i = 0; i < source.samples().size(); ++i) {
    const auto& s = source.samples()[i];
    pools[s.class_id][s.split].push_back(i);
  }
  auto available = [&](int cls, Split split) -> long long {
    auto it = pools.find(cls);
    if (it == pools.end()) return 0;
    auto jt = it->second.find(split);
    return jt == it->second.end() ? 0 : static_cast<long long>(jt->second.size());
  };

  std::vector<ClassCount> source_rank;
  for (int cls : kept) source_rank.push_back({cls, available(cls, Split::train)});
  std::stable_sort(source_rank.begin(), source_rank.end(), [](const ClassCount& a, const ClassCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.class_id < b.class_id;
  });
  const auto target_rank = profile.ranked();
  std::map<int, long long> train_target;
  for (std::size_t r = 0; r < source_rank.size(); ++r)
    train_target[source_rank[r].class_id] = target_rank[r].count;

  std::vector<ClassDeficit> deficits;
  for (int cls : kept) {
    std::map<Split, long long> need;
    need[Split::train] += train_target[cls];
    need[spec.val_source] += spec.val_per_class;
    need[spec.test_source] += spec.test_per_class;
    for (const auto& [split, n] : need) {
      if (available(cls, split) < n)
        deficits.push_back({cls, std::string(to_string(split)), n, available(cls, split)});
    }
  }
  if (!deficits.empty()) throw DataDeficitError(std::move(deficits));

  Rng rng = Rng::stream(seed, "resample");
  std::vector<std::optional<Split>> assigned(source.samples().size());
  auto take = [&](int cls, Split from, long long n, Split as) {
    auto& pool = pools[cls][from];
    for (auto idx : detail::draw_without_replacement(pool, static_cast<std::size_t>(n), rng))
      assigned[idx] = as;
  };
  for (int cls : kept) {
    take(cls, Split::train, train_target[cls], Split::train);
    take(cls, spec.val_source, spec.val_per_class, Split::val);
    take(cls, spec.test_source, spec.test_per_class, Split::test);
  }

  std::vector<ClassInfo> classes;
  for (const auto& c : source.classes())
    if (std::find(kept.begin(), kept.end(), c.id) != kept.end()) classes.push_back(c);
  std::vector<SampleRecord> samples;
  for (std::size_t i = 0; i < source.samples().size(); ++i) {
    if (!assigned[i]) continue;
    SampleRecord r = source.samples()[i];
    r.split = *assigned[i];
    samples.push_back(std::move(r));
  }
  return DatasetManifest(std::move(classes), std::move(samples));
}

enum class CapPolicy { clamp, strict };

struct AugmentedProfile {
  ClassProfile profile;
  // Groups of the profile before augmentation, kept so results can be
  // compared class-for-class.
  GroupAssignment original_groups;
};

// Adds x samples to every class. With caps, a class may not exceed its cap:
// CapPolicy::clamp stops at the cap, CapPolicy::strict raises a deficit.
inline AugmentedProfile add_samples_per_class(const ClassProfile& profile, long long x,
                                              const std::map<int, long long>* caps = nullptr,
                                              CapPolicy policy = CapPolicy::clamp,
                                              double head_fraction = kDefaultHeadFraction,
                                              long long omega = kDefaultFewShotThreshold) {
  if (x < 0) throw ValidationError("samples to add must be >= 0");
  profile.require_non_empty();
  std::vector<ClassCount> entries;
  std::vector<ClassDeficit> deficits;
  for (const auto& e : profile.entries()) {
    long long target = e.count + x;
    if (caps != nullptr) {
      auto it = caps->find(e.class_id);
      if (it != caps->end() && it->second < target) {
        if (policy == CapPolicy::strict) {
          deficits.push_back({e.class_id, "train", target, it->second});
        }
        target = std::max(e.count, it->second);
      }
    }
    entries.push_back({e.class_id, target});
  }
  if (!deficits.empty()) throw DataDeficitError(std::move(deficits));
  return {ClassProfile(std::move(entries)), assign_groups(profile, head_fraction, omega)};
}

}  // namespace tailforge
