#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tailforge/error.hpp"
#include "tailforge/ops.hpp"
#include "tailforge/rng.hpp"
#include "tailforge/tailprops.hpp"

namespace tailforge {

// Smallest epsilon that keeps C*d + epsilon > 1 for every class, with margin:
// max(1, 1.1 - min_count * d).
inline double default_epsilon(long long min_count, double decay) {
  return std::max(1.0, 1.1 - static_cast<double>(min_count) * decay);
}

struct ContributionParams {
  double decay = 0.25;                   // d
  std::optional<double> epsilon;         // default_epsilon() when unset
  double lowest = 0.6;                   // l, contribution of the smallest class
  double log_base = std::numbers::e;     // c(y) does not depend on it

  static ContributionParams preset_feature_level() { return {0.25, std::nullopt, 0.6}; }
  // For profiles whose smallest class has a single sample.
  static ContributionParams preset_min_count_one() { return {0.15, std::nullopt, 1.0}; }
};

// Class weights 1 / log(C_y d + epsilon).
inline std::map<int, double> class_weights(const ClassProfile& profile, double decay,
                                           double epsilon, double log_base = std::numbers::e) {
  profile.require_non_empty();
  if (!(decay > 0.0)) throw ValidationError("decay d must be > 0");
  if (!(log_base > 0.0 && log_base != 1.0)) throw ValidationError("log base must be > 0 and != 1");
  const double required = 1.0 - static_cast<double>(profile.min_count()) * decay;
  if (!(static_cast<double>(profile.min_count()) * decay + epsilon > 1.0)) {
    throw EpsilonTooSmallError("epsilon " + std::to_string(epsilon) +
                                   " too small: C*d + epsilon must exceed 1 for every class; "
                                   "need epsilon > " + std::to_string(required),
                               required);
  }
  const double log_scale = std::log(log_base);
  std::map<int, double> out;
  for (const auto& e : profile.entries()) {
    out[e.class_id] =
        1.0 / (std::log(static_cast<double>(e.count) * decay + epsilon) / log_scale);
  }
  return out;
}

struct Contribution {
  int class_id = 0;
  long long count = 0;
  double value = 0.0;
};

// Per-class contribution c(y) in [0, l]: class weights min-max normalised and
// scaled by l. Fixed at construction from the training profile.
class ContributionTable {
 public:
  ContributionTable(const ClassProfile& profile, const ContributionParams& params)
      : decay_(params.decay),
        epsilon_(params.epsilon.value_or(default_epsilon(profile.min_count(), params.decay))),
        lowest_(params.lowest) {
    if (!(lowest_ >= 0.0 && lowest_ <= 1.0)) throw ValidationError("l must be in [0, 1]");
    const auto weights = class_weights(profile, decay_, epsilon_, params.log_base);
    double lo = weights.begin()->second;
    double hi = lo;
    for (const auto& [id, w] : weights) {
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
    for (const auto& e : profile.entries()) {
      // A balanced profile needs no reconstruction.
      const double c = hi > lo ? (weights.at(e.class_id) - lo) / (hi - lo) * lowest_ : 0.0;
      entries_.emplace(e.class_id, Contribution{e.class_id, e.count, c});
    }
  }

  // Same value for every class (ablations).
  static ContributionTable constant(const ClassProfile& profile, double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("contribution must be in [0, 1]");
    ContributionTable t;
    t.lowest_ = value;
    for (const auto& e : profile.entries())
      t.entries_.emplace(e.class_id, Contribution{e.class_id, e.count, value});
    return t;
  }

  double operator()(int class_id) const { return at(class_id).value; }
  long long count(int class_id) const { return at(class_id).count; }
  bool contains(int class_id) const { return entries_.count(class_id) != 0; }
  std::size_t size() const noexcept { return entries_.size(); }

  double decay() const noexcept { return decay_; }
  double epsilon() const noexcept { return epsilon_; }
  double lowest() const noexcept { return lowest_; }

  std::vector<Contribution> entries() const {
    std::vector<Contribution> out;
    for (const auto& [id, c] : entries_) out.push_back(c);
    return out;
  }

  nlohmann::ordered_json to_json() const {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [id, c] : entries_)
      arr.push_back({{"class_id", id}, {"count", c.count}, {"c", c.value}});
    return arr;
  }

  friend bool operator==(const ContributionTable& a, const ContributionTable& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (const auto& [id, c] : a.entries_) {
      auto it = b.entries_.find(id);
      if (it == b.entries_.end() || it->second.value != c.value || it->second.count != c.count)
        return false;
    }
    return a.decay_ == b.decay_ && a.epsilon_ == b.epsilon_ && a.lowest_ == b.lowest_;
  }

 private:
  ContributionTable() = default;

  const Contribution& at(int class_id) const {
    auto it = entries_.find(class_id);
    if (it == entries_.end())
      throw ValidationError("class " + std::to_string(class_id) + " has no contribution");
    return it->second;
  }

  double decay_ = 0.0;
  double epsilon_ = 0.0;
  double lowest_ = 0.0;
  std::map<int, Contribution> entries_;
};

inline ContributionTable contribution(const ClassProfile& profile, const ContributionParams& params) {
  return ContributionTable(profile, params);
}

// Which index the few-shot test applies to. `contributor` masks few-shot
// samples as contributors (columns); `row` masks rows whose own class is
// few-shot, i.e. those samples are never reconstructed.
enum class MaskRule { contributor, row };

// E over (batch rows) x (candidate pool). The first batch_counts.size() pool
// entries are the batch itself; the rest are bank entries, never "self".
template <typename T = double>
Matrix<T> pool_exclusion_mask(std::span<const long long> batch_counts,
                              std::span<const long long> bank_counts, long long omega,
                              MaskRule rule = MaskRule::contributor) {
  const std::size_t b = batch_counts.size();
  const std::size_t p = b + bank_counts.size();
  Matrix<T> e(b, p);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const long long tested = rule == MaskRule::row
                                   ? batch_counts[i]
                                   : (j < b ? batch_counts[j] : bank_counts[j - b]);
      e(i, j) = (j == i || tested <= omega) ? T{0} : T{1};
    }
  }
  return e;
}

template <typename T = double>
Matrix<T> exclusion_mask(std::span<const long long> batch_counts, long long omega,
                         MaskRule rule = MaskRule::contributor) {
  return pool_exclusion_mask<T>(batch_counts, {}, omega, rule);
}

template <typename T = double>
struct Batch {
  Var<T> features;            // Z, B x D
  Matrix<T> labels;           // Y, B x K, rows sum to 1
  std::vector<int> class_ids;
  std::vector<long long> counts;  // training count of each sample's class

  std::size_t size() const { return class_ids.size(); }

  void validate() const {
    const auto b = features->value().rows();
    if (labels.rows() != b || class_ids.size() != b || counts.size() != b) {
      throw DimensionError("batch parts disagree on size: features " + features->value().shape() +
                           ", labels " + labels.shape() + ", " +
                           std::to_string(class_ids.size()) + " class ids, " +
                           std::to_string(counts.size()) + " counts");
    }
    for (std::size_t i = 0; i < labels.rows(); ++i) {
      T s{0};
      for (T v : labels.row(i)) s += v;
      if (std::abs(s - T{1}) > T(1e-6))
        throw ValidationError("batch label row " + std::to_string(i) + " does not sum to 1");
    }
  }
};

// FIFO store of features from earlier iterations. Stored values are plain
// constants; no gradient flows into them.
template <typename T = double>
class FeatureBank {
 public:
  struct Entry {
    std::vector<T> feature;
    std::vector<T> label;
    int class_id = 0;
    long long count = 0;
  };

  explicit FeatureBank(std::size_t capacity = 0) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  void clear() { entries_.clear(); }

  void push(const Matrix<T>& features, const Matrix<T>& labels, std::span<const int> class_ids,
            std::span<const long long> counts) {
    if (capacity_ == 0) return;
    if (!entries_.empty() && features.cols() != entries_.front().feature.size()) {
      throw DimensionError("feature bank holds " + std::to_string(entries_.front().feature.size()) +
                           "-d features, got " + features.shape());
    }
    for (std::size_t i = 0; i < features.rows(); ++i) {
      auto f = features.row(i);
      auto l = labels.row(i);
      entries_.push_back({{f.begin(), f.end()}, {l.begin(), l.end()}, class_ids[i], counts[i]});
      if (entries_.size() > capacity_) entries_.pop_front();
    }
  }

  std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().feature.size(); }

  Matrix<T> features() const {
    Matrix<T> m(entries_.size(), dim());
    for (std::size_t i = 0; i < entries_.size(); ++i)
      std::copy(entries_[i].feature.begin(), entries_[i].feature.end(), m.row(i).begin());
    return m;
  }

  std::vector<long long> counts() const {
    std::vector<long long> out;
    for (const auto& e : entries_) out.push_back(e.count);
    return out;
  }

  const std::deque<Entry>& entries() const noexcept { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

struct LmrOptions {
  long long omega = kDefaultFewShotThreshold;
  MaskRule mask_rule = MaskRule::contributor;
  // When false, W is computed from detached features so no gradient flows
  // through the similarity matrix.
  bool similarity_gradients = true;
  // Probability that a sample passes through the mixing step unmixed.
  double identity_probability = 0.5;
  bool reconstruct = true;
  bool mix = true;
};

template <typename T = double>
struct Reconstruction {
  Var<T> features;                              // R, B x D
  Matrix<T> weights;                            // W over the candidate pool
  std::vector<std::size_t> no_contributor_rows; // rows that fell back to R_i = Z_i
};

// R = c(Y) W Z_pool + (1 - c(Y)) Z, with W the masked softmax of cosine
// similarities between the batch and the pool (batch rows followed by bank
// rows). Rows without any eligible contributor keep R_i = Z_i.
template <typename T = double>
Reconstruction<T> reconstruct(const Batch<T>& batch, const ContributionTable& table,
                              const LmrOptions& options, const FeatureBank<T>* bank = nullptr) {
  batch.validate();
  const auto& z = batch.features;
  const std::size_t b = batch.size();
  const bool use_bank = bank != nullptr && !bank->empty();
  if (b < 2 && !use_bank)
    throw ValidationError("reconstruction needs a batch of at least 2 or a non-empty bank");
  if (use_bank && bank->dim() != z->value().cols()) {
    throw DimensionError("bank features are " + std::to_string(bank->dim()) +
                         "-d but batch features are " + z->value().shape());
  }

  const auto bank_counts = use_bank ? bank->counts() : std::vector<long long>{};
  const Var<T> pool = use_bank ? vstack(z, constant(bank->features())) : z;
  const Var<T> z_sim = options.similarity_gradients ? z : detach(z);
  const Var<T> pool_sim = use_bank ? vstack(z_sim, constant(bank->features())) : z_sim;
  const Var<T> s = use_bank ? cosine_similarity(z_sim, pool_sim) : row_cosine_similarity(z_sim);
  const auto mask = pool_exclusion_mask<T>(batch.counts, bank_counts, options.omega, options.mask_rule);
  auto softmax = masked_row_softmax(s, mask);

  std::vector<T> c(b);
  for (std::size_t i = 0; i < b; ++i) c[i] = static_cast<T>(table(batch.class_ids[i]));
  for (auto row : softmax.empty_rows) c[row] = T{0};

  Reconstruction<T> out;
  out.weights = softmax.weights->value();
  out.no_contributor_rows = softmax.empty_rows;
  out.features = affine_combine(matmul(softmax.weights, pool), z, std::span<const T>(c));
  return out;
}

// Per-sample mixing weights alpha and partners beta (beta_i != i).
struct MixPlan {
  std::vector<double> alpha;
  std::vector<std::size_t> beta;

  std::size_t size() const noexcept { return alpha.size(); }

  static MixPlan identity(std::size_t b) {
    MixPlan p;
    p.alpha.assign(b, 1.0);
    for (std::size_t i = 0; i < b; ++i) p.beta.push_back(b < 2 ? 0 : (i + 1) % b);
    return p;
  }

  void validate() const {
    if (alpha.size() != beta.size()) throw DimensionError("mix plan alpha/beta length mismatch");
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      if (!(alpha[i] >= 0.0 && alpha[i] <= 1.0))
        throw ValidationError("mix weight alpha_" + std::to_string(i) + " outside [0,1]");
      if (alpha[i] < 1.0 && (beta[i] == i || beta[i] >= alpha.size()))
        throw ValidationError("mix partner beta_" + std::to_string(i) + " invalid");
    }
  }

  // M_ii = alpha_i, M_{i,beta_i} = 1 - alpha_i.
  template <typename T = double>
  Matrix<T> matrix() const {
    validate();
    const std::size_t b = alpha.size();
    Matrix<T> m(b, b);
    for (std::size_t i = 0; i < b; ++i) {
      m(i, i) = static_cast<T>(alpha[i]);
      if (alpha[i] < 1.0) m(i, beta[i]) += static_cast<T>(1.0 - alpha[i]);
    }
    return m;
  }
};

// Each sample keeps alpha_i = 1 with probability identity_probability and
// otherwise draws alpha_i ~ U[0,1); beta_i is uniform over the other rows.
inline MixPlan mix_plan(std::size_t b, Rng& rng, double identity_probability = 0.5) {
  if (b < 2) throw ValidationError("mixing needs a batch of at least 2, got " + std::to_string(b));
  if (!(identity_probability >= 0.0 && identity_probability <= 1.0))
    throw ValidationError("identity probability must be in [0,1]");
  MixPlan plan;
  plan.alpha.resize(b);
  plan.beta.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    plan.alpha[i] = rng.bernoulli(identity_probability) ? 1.0 : rng.uniform();
    auto j = static_cast<std::size_t>(rng.below(b - 1));
    plan.beta[i] = j >= i ? j + 1 : j;
  }
  return plan;
}

template <typename T = double>
struct MixedBatch {
  Var<T> features;   // M R
  Matrix<T> labels;  // M Y
  MixPlan plan;
  std::vector<std::size_t> no_contributor_rows;
};

// mr(Z, Y) = (M R, M Y) for a given mixing plan. Pushes the batch features
// (values only) into the bank afterwards.
template <typename T = double>
MixedBatch<T> mixed_reconstruction(const Batch<T>& batch, const ContributionTable& table,
                                   const LmrOptions& options, const MixPlan& plan,
                                   FeatureBank<T>* bank = nullptr) {
  if (plan.size() != batch.size())
    throw DimensionError("mix plan covers " + std::to_string(plan.size()) + " rows, batch has " +
                         std::to_string(batch.size()));
  MixedBatch<T> out;
  Var<T> r = batch.features;
  if (options.reconstruct) {
    auto rec = reconstruct(batch, table, options, bank);
    r = rec.features;
    out.no_contributor_rows = std::move(rec.no_contributor_rows);
  } else {
    batch.validate();
  }
  out.plan = options.mix ? plan : MixPlan::identity(batch.size());
  const auto m = out.plan.template matrix<T>();
  out.features = matmul(constant(m), r);
  out.labels = matmul(m, batch.labels);
  if (bank != nullptr)
    bank->push(batch.features->value(), batch.labels, batch.class_ids, batch.counts);
  return out;
}

template <typename T = double>
MixedBatch<T> mixed_reconstruction(const Batch<T>& batch, const ContributionTable& table,
                                   const LmrOptions& options, Rng& rng,
                                   FeatureBank<T>* bank = nullptr) {
  const auto plan = options.mix ? mix_plan(batch.size(), rng, options.identity_probability)
                                : MixPlan::identity(batch.size());
  return mixed_reconstruction(batch, table, options, plan, bank);
}

}  // namespace tailforge
