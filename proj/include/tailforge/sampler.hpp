#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "tailforge/error.hpp"
#include "tailforge/rng.hpp"

namespace tailforge {

using BatchIndices = std::vector<std::size_t>;

namespace detail {

inline std::vector<BatchIndices> chunk(const std::vector<std::size_t>& order, std::size_t batch,
                                       std::size_t min_batch) {
  std::vector<BatchIndices> out;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const auto end = std::min(order.size(), start + batch);
    if (end - start < min_batch) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace detail

// One epoch is a shuffled pass over every sample. A trailing batch with fewer
// than min_batch samples is dropped.
class InstanceSampler {
 public:
  InstanceSampler(std::vector<std::size_t> samples, std::size_t batch_size, Rng rng,
                  std::size_t min_batch = 1)
      : samples_(std::move(samples)), batch_(batch_size), min_batch_(min_batch), rng_(rng) {
    if (samples_.empty()) throw ValidationError("instance sampler: empty split");
    if (batch_ == 0) throw ValidationError("batch size must be > 0");
  }

  std::vector<BatchIndices> next_epoch() {
    auto order = samples_;
    rng_.shuffle(std::span<std::size_t>(order));
    return detail::chunk(order, batch_, min_batch_);
  }

 private:
  std::vector<std::size_t> samples_;
  std::size_t batch_;
  std::size_t min_batch_;
  Rng rng_;
};

// Each draw picks a class uniformly, then a sample of that class uniformly
// (with replacement). An epoch has as many draws as there are samples.
class ClassBalancedSampler {
 public:
  ClassBalancedSampler(std::map<int, std::vector<std::size_t>> by_class, std::size_t batch_size,
                       Rng rng, std::size_t min_batch = 1)
      : batch_(batch_size), min_batch_(min_batch), rng_(rng) {
    if (batch_ == 0) throw ValidationError("batch size must be > 0");
    if (by_class.empty()) throw ValidationError("class-balanced sampler: empty split");
    for (auto& [cls, idx] : by_class) {
      if (idx.empty())
        throw ValidationError("class-balanced sampler: class " + std::to_string(cls) +
                              " has no training samples");
      epoch_length_ += idx.size();
      pools_.push_back(std::move(idx));
    }
  }

  std::size_t epoch_length() const noexcept { return epoch_length_; }

  std::vector<BatchIndices> next_epoch() {
    std::vector<std::size_t> order(epoch_length_);
    for (auto& slot : order) {
      const auto& pool = pools_[rng_.below(pools_.size())];
      slot = pool[rng_.below(pool.size())];
    }
    return detail::chunk(order, batch_, min_batch_);
  }

 private:
  std::vector<std::vector<std::size_t>> pools_;
  std::size_t epoch_length_ = 0;
  std::size_t batch_;
  std::size_t min_batch_;
  Rng rng_;
};

}  // namespace tailforge
