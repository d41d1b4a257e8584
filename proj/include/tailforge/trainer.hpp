#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "tailforge/dataset.hpp"
#include "tailforge/lmr.hpp"
#include "tailforge/metrics.hpp"
#include "tailforge/nn.hpp"
#include "tailforge/sampler.hpp"

namespace tailforge {

enum class TrainMode { ce, crt, mixup, lmr };

inline std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::ce: return "CE";
    case TrainMode::crt: return "cRT";
    case TrainMode::mixup: return "Mixup";
    case TrainMode::lmr: return "LMR";
  }
  return "?";
}

inline TrainMode mode_from_string(std::string_view s) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "ce") return TrainMode::ce;
  if (lower == "crt") return TrainMode::crt;
  if (lower == "mixup") return TrainMode::mixup;
  if (lower == "lmr") return TrainMode::lmr;
  throw ValidationError("unknown mode '" + std::string(s) + "' (expected CE, cRT, Mixup or LMR)");
}

struct TrainConfig {
  // Encoder layer widths; the last entry is the feature dimension. Empty
  // means the identity encoder (features are the inputs).
  std::vector<std::size_t> encoder_dims{64, 32};
  std::size_t batch_size = 56;
  int stage1_epochs = 30;
  int stage2_epochs = 30;
  double stage1_lr = 1e-3;
  std::optional<double> stage2_lr;  // stage1_lr / 10 when unset
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::lmr;
  ContributionParams contribution = ContributionParams::preset_feature_level();
  std::optional<double> constant_contribution;
  LmrOptions lmr;
  std::size_t bank_capacity = 0;
  bool freeze_encoder_stage2 = false;
  bool evaluate_each_epoch = true;
  // Stops a stage after this many optimiser steps.
  std::optional<long long> max_steps_per_stage;

  double effective_stage2_lr() const { return stage2_lr.value_or(stage1_lr / 10.0); }

  void validate() const {
    if (batch_size == 0) throw ValidationError("training.batch_size must be > 0");
    if (stage1_epochs <= 0) throw ValidationError("training.stage1_epochs must be > 0");
    if (mode != TrainMode::ce && stage2_epochs <= 0)
      throw ValidationError("training.stage2_epochs must be > 0");
    if (!(stage1_lr > 0.0)) throw ValidationError("training.stage1_lr must be > 0");
    if (stage2_lr && !(*stage2_lr > 0.0)) throw ValidationError("training.stage2_lr must be > 0");
    for (auto d : encoder_dims)
      if (d == 0) throw ValidationError("model.encoder_dims entries must be > 0");
    if ((mode == TrainMode::lmr || mode == TrainMode::mixup) && batch_size < 2)
      throw ValidationError("training.batch_size must be >= 2 for mixing modes");
  }
};

struct Model {
  std::size_t input_dim = 0;
  std::vector<Linear<double>> encoder;
  Linear<double> classifier;
  std::vector<int> class_ids;  // output column -> class id

  std::size_t feature_dim() const {
    return encoder.empty() ? input_dim : encoder.back().out_features();
  }

  Var<double> encode(const Var<double>& x) const {
    if (encoder.empty()) return x;
    return mlp_forward(x, std::span<const Linear<double>>(encoder), Activation::relu, false);
  }

  Var<double> classify(const Var<double>& features) const {
    return add_row(matmul(features, classifier.weight), classifier.bias);
  }

  std::vector<Var<double>> encoder_parameters() const {
    return parameters_of(std::span<const Linear<double>>(encoder));
  }
  std::vector<Var<double>> classifier_parameters() const {
    return {classifier.weight, classifier.bias};
  }

  std::vector<int> predict(const Matrix<double>& x) const {
    const auto logits = classify(encode(constant(x)))->value();
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < logits.cols(); ++k)
        if (logits(i, k) > logits(i, best)) best = k;
      out[i] = class_ids[best];
    }
    return out;
  }
};

inline Model init_model(std::size_t input_dim, const std::vector<std::size_t>& encoder_dims,
                        std::vector<int> class_ids, Rng& rng) {
  if (input_dim == 0) throw ValidationError("input dimension must be > 0");
  if (class_ids.empty()) throw ValidationError("model needs at least one class");
  Model m;
  m.input_dim = input_dim;
  std::size_t in = input_dim;
  for (auto width : encoder_dims) {
    m.encoder.push_back(init_linear<double>(in, width, rng));
    in = width;
  }
  m.classifier = init_linear<double>(in, class_ids.size(), rng);
  m.class_ids = std::move(class_ids);
  return m;
}

inline MetricsReport evaluate(const Model& model, const Dataset& data, Split split,
                              const GroupAssignment& groups) {
  const auto idx = data.indices(split);
  if (idx.empty()) throw ValidationError(std::string(to_string(split)) + " split is empty");
  const auto x = gather_rows(data.features, std::span<const std::size_t>(idx));
  const auto predicted = model.predict(x);
  std::vector<int> truth;
  for (auto i : idx) truth.push_back(data.label(i));
  std::map<int, long long> train_counts = data.manifest.counts(Split::train);
  return compute_metrics(truth, predicted, groups, data.class_ids, train_counts);
}

struct EpochRecord {
  int stage = 1;
  int epoch = 0;
  long long steps = 0;
  double loss = 0.0;  // mean over the epoch's batches
  std::optional<MetricsReport> validation;
};

inline nlohmann::ordered_json to_json(const EpochRecord& r) {
  nlohmann::ordered_json j{{"stage", r.stage}, {"epoch", r.epoch}, {"steps", r.steps}, {"loss", r.loss}};
  if (r.validation) {
    auto opt = [](const std::optional<double>& v) {
      return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    j["metrics"] = {{"split", "val"},
                    {"overall_accuracy", r.validation->overall},
                    {"average_class_accuracy", r.validation->average_class},
                    {"few", opt(r.validation->few)},
                    {"tail", opt(r.validation->tail)},
                    {"head", opt(r.validation->head)}};
  }
  return j;
}

struct TrainResult {
  Model model;
  std::vector<EpochRecord> log;
  std::vector<double> step_losses;
  GroupAssignment groups;
};

namespace detail {

inline Matrix<double> one_hot(const Dataset& data, std::span<const std::size_t> rows) {
  Matrix<double> y(rows.size(), data.num_classes());
  for (std::size_t i = 0; i < rows.size(); ++i) y(i, data.class_index(data.label(rows[i]))) = 1.0;
  return y;
}

}  // namespace detail

using EpochCallback = std::function<void(const EpochRecord&)>;

// Stage 1: instance-balanced sampling, cross-entropy, encoder and classifier
// trained jointly. CE stops there. Other modes reset the classifier and run
// stage 2 with class-balanced sampling:
//   cRT    plain cross-entropy,
//   Mixup  pairwise mixing of encoder inputs and labels,
//   LMR    mixed reconstruction between encoder and classifier.
// The encoder keeps training in stage 2 unless freeze_encoder_stage2 is set.
inline TrainResult train(const TrainConfig& config, const Dataset& data,
                         const EpochCallback& on_epoch = {}) {
  config.validate();
  const auto train_idx = data.indices(Split::train);
  if (train_idx.empty()) throw ValidationError("train split is empty");
  const auto profile = data.train_profile();
  const auto train_counts = data.manifest.counts(Split::train);
  const bool has_val = !data.indices(Split::val).empty();

  TrainResult result;
  result.groups = assign_groups(profile, kDefaultHeadFraction, config.lmr.omega);
  Rng init_rng = Rng::stream(config.seed, "init");
  result.model = init_model(data.dim(), config.encoder_dims, data.class_ids, init_rng);
  Model& model = result.model;

  long long global_step = 0;
  auto run_stage = [&](int stage, int epochs, double lr, auto&& next_epoch, auto&& batch_loss,
                       std::vector<Var<double>> params, std::vector<Var<double>> frozen) {
    OptimizerConfig oc;
    oc.kind = config.optimizer;
    oc.learning_rate = lr;
    oc.momentum = config.momentum;
    oc.weight_decay = config.weight_decay;
    Optimizer<double> opt(oc);
    long long stage_steps = 0;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
      double loss_sum = 0.0;
      long long batches = 0;
      for (const auto& rows : next_epoch()) {
        if (config.max_steps_per_stage && stage_steps >= *config.max_steps_per_stage) break;
        auto loss = batch_loss(std::span<const std::size_t>(rows));
        const double value = loss->value()(0, 0);
        if (!std::isfinite(value)) throw DivergenceError("non-finite loss", global_step);
        backward(loss);
        opt.step(params, global_step);
        for (auto& p : frozen) p->zero_grad();
        result.step_losses.push_back(value);
        loss_sum += value;
        ++batches;
        ++stage_steps;
        ++global_step;
      }
      EpochRecord rec;
      rec.stage = stage;
      rec.epoch = epoch;
      rec.steps = stage_steps;
      rec.loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
      if (config.evaluate_each_epoch && has_val)
        rec.validation = evaluate(model, data, Split::val, result.groups);
      if (on_epoch) on_epoch(rec);
      result.log.push_back(std::move(rec));
      if (config.max_steps_per_stage && stage_steps >= *config.max_steps_per_stage) break;
    }
  };

  auto params_all = model.encoder_parameters();
  for (auto& p : model.classifier_parameters()) params_all.push_back(p);

  InstanceSampler stage1(train_idx, config.batch_size, Rng::stream(config.seed, "stage1"));
  auto plain_loss = [&](std::span<const std::size_t> rows) {
    const auto x = constant(gather_rows(data.features, rows));
    return soft_label_cross_entropy(model.classify(model.encode(x)), detail::one_hot(data, rows));
  };
  run_stage(1, config.stage1_epochs, config.stage1_lr, [&] { return stage1.next_epoch(); },
            plain_loss, params_all, {});

  if (config.mode == TrainMode::ce) return result;

  Rng reset_rng = Rng::stream(config.seed, "classifier-reset");
  model.classifier = init_linear<double>(model.feature_dim(), data.num_classes(), reset_rng);

  const bool mixing = config.mode == TrainMode::lmr || config.mode == TrainMode::mixup;
  ClassBalancedSampler stage2(data.indices_by_class(Split::train), config.batch_size,
                              Rng::stream(config.seed, "stage2"), mixing ? 2 : 1);
  Rng mix_rng = Rng::stream(config.seed, "mix");
  const ContributionTable table = config.constant_contribution
                                      ? ContributionTable::constant(profile, *config.constant_contribution)
                                      : ContributionTable(profile, config.contribution);
  FeatureBank<double> bank(config.bank_capacity);

  std::function<Var<double>(std::span<const std::size_t>)> stage2_loss;
  switch (config.mode) {
    case TrainMode::crt:
      stage2_loss = plain_loss;
      break;
    case TrainMode::mixup:
      stage2_loss = [&](std::span<const std::size_t> rows) {
        const auto plan = mix_plan(rows.size(), mix_rng, config.lmr.identity_probability);
        const auto m = plan.matrix<double>();
        const auto x = constant(matmul(m, gather_rows(data.features, rows)));
        return soft_label_cross_entropy(model.classify(model.encode(x)),
                                        matmul(m, detail::one_hot(data, rows)));
      };
      break;
    case TrainMode::lmr:
      stage2_loss = [&](std::span<const std::size_t> rows) {
        Batch<double> batch;
        batch.features = model.encode(constant(gather_rows(data.features, rows)));
        batch.labels = detail::one_hot(data, rows);
        for (auto r : rows) {
          batch.class_ids.push_back(data.label(r));
          batch.counts.push_back(train_counts.at(data.label(r)));
        }
        auto mixed = mixed_reconstruction(batch, table, config.lmr, mix_rng, &bank);
        return soft_label_cross_entropy(model.classify(mixed.features), mixed.labels);
      };
      break;
    case TrainMode::ce:
      break;
  }

  auto stage2_params = model.classifier_parameters();
  std::vector<Var<double>> frozen;
  if (config.freeze_encoder_stage2) {
    frozen = model.encoder_parameters();
  } else {
    for (auto& p : model.encoder_parameters()) stage2_params.push_back(p);
  }
  run_stage(2, config.stage2_epochs, config.effective_stage2_lr(),
            [&] { return stage2.next_epoch(); }, stage2_loss, stage2_params, frozen);
  return result;
}

}  // namespace tailforge
