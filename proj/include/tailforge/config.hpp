#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tailforge/curator.hpp"
#include "tailforge/error.hpp"
#include "tailforge/synth.hpp"
#include "tailforge/trainer.hpp"

namespace tailforge {

struct ConfigKey {
  std::string_view section;
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

// Every recognised key with its default. configs/defaults.ini mirrors this
// table and a test keeps the two in sync.
inline constexpr ConfigKey kConfigKeys[] = {
    {"dataset", "manifest", "", "dataset manifest JSON"},
    {"dataset", "features", "", "directory feature files resolve against (default: manifest dir)"},
    {"dataset", "profile", "", "class profile CSV (class_id,count)"},
    {"dataset", "num_classes", "30", "synthetic: number of classes"},
    {"dataset", "alpha", "6", "synthetic: Pareto shape of the train profile"},
    {"dataset", "max_count", "500", "synthetic: largest class"},
    {"dataset", "min_count", "5", "synthetic: smallest class"},
    {"dataset", "dim", "32", "synthetic: feature dimension"},
    {"dataset", "confusability", "0.5", "synthetic: few-shot mean offset from a head mean, in units of separation"},
    {"dataset", "separation", "4", "synthetic: norm of class means"},
    {"dataset", "noise", "1", "synthetic: per-dimension noise std"},
    {"dataset", "val_per_class", "10", "synthetic: balanced val size"},
    {"dataset", "test_per_class", "20", "synthetic: balanced test size"},
    {"analysis", "head_fraction", "0.5", "fraction of training data the head holds"},
    {"analysis", "omega", "20", "few-shot threshold"},
    {"curation", "num_classes", "0", "profile size; 0 = number of classes surviving the drop rule"},
    {"curation", "alpha", "6", "Pareto shape"},
    {"curation", "max_count", "2500", "largest class"},
    {"curation", "min_count", "5", "smallest class"},
    {"curation", "fit_total", "0", "if > 0, fit max_count to this train total (with fit_imbalance)"},
    {"curation", "fit_imbalance", "500", "imbalance used when fitting"},
    {"curation", "identity", "false", "keep source train counts (no Pareto profile)"},
    {"curation", "val_per_class", "40", "balanced val samples per class"},
    {"curation", "test_per_class", "15", "balanced test samples per class"},
    {"curation", "min_test_per_class", "0", "drop classes with fewer test-source samples"},
    {"curation", "val_source", "train", "source split for val"},
    {"curation", "test_source", "val", "source split for test"},
    {"model", "encoder_dims", "64,32", "encoder widths, comma separated; empty = identity encoder"},
    {"training", "mode", "LMR", "CE | cRT | Mixup | LMR"},
    {"training", "batch_size", "56", "samples per batch"},
    {"training", "stage1_epochs", "30", "instance-balanced epochs"},
    {"training", "stage2_epochs", "30", "class-balanced epochs"},
    {"training", "stage1_lr", "0.001", "stage 1 learning rate"},
    {"training", "stage2_lr", "0", "stage 2 learning rate; 0 = stage1_lr / 10"},
    {"training", "optimizer", "adam", "adam | sgd"},
    {"training", "momentum", "0.9", "sgd momentum"},
    {"training", "weight_decay", "0", "L2 weight decay"},
    {"training", "freeze_encoder", "false", "freeze the encoder in stage 2"},
    {"training", "max_steps_per_stage", "0", "0 = no cap"},
    {"training", "evaluate_each_epoch", "true", "log validation metrics every epoch"},
    {"training", "seed", "0", "master seed"},
    {"lmr", "omega", "20", "few-shot threshold for the exclusion mask and groups"},
    {"lmr", "decay", "0.25", "contribution decay d"},
    {"lmr", "epsilon", "auto", "contribution epsilon; auto = max(1, 1.1 - min_count*d)"},
    {"lmr", "lowest", "0.6", "contribution l of the smallest class"},
    {"lmr", "constant_contribution", "none", "none, or a constant c in [0,1] for every class"},
    {"lmr", "mask_rule", "contributor", "contributor | row"},
    {"lmr", "similarity_gradients", "true", "backpropagate through the similarity weights"},
    {"lmr", "identity_probability", "0.5", "probability a sample is left unmixed"},
    {"lmr", "reconstruct", "true", "apply reconstruction"},
    {"lmr", "mix", "true", "apply pairwise mixing"},
    {"lmr", "bank_capacity", "0", "feature bank size (0 disables)"},
};

class ExperimentConfig {
 public:
  ExperimentConfig() {
    for (const auto& k : kConfigKeys) values_[full_name(k.section, k.key)] = std::string(k.default_value);
  }

  static ExperimentConfig parse(std::istream& in, const std::string& source = "config") {
    ExperimentConfig cfg;
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto text = trim(strip_comment(line));
      if (text.empty()) continue;
      const auto where = source + ":" + std::to_string(line_no);
      if (text.front() == '[') {
        if (text.back() != ']') throw ValidationError(where + ": malformed section header");
        section = trim(text.substr(1, text.size() - 2));
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
      const auto key = trim(text.substr(0, eq));
      if (section.empty()) throw ValidationError(where + ": key '" + key + "' outside a section");
      cfg.set(section + "." + key, trim(text.substr(eq + 1)), where);
    }
    return cfg;
  }

  static ExperimentConfig parse_string(const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    return parse(in, source);
  }

  // name is "section.key".
  void set(const std::string& name, const std::string& value, const std::string& where = "override") {
    auto it = values_.find(name);
    if (it == values_.end()) throw ValidationError(where + ": unknown key '" + name + "'");
    it->second = value;
  }

  const std::string& get(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw ValidationError("unknown key '" + name + "'");
    return it->second;
  }

  long long get_int(const std::string& name) const {
    const auto& v = get(name);
    try {
      std::size_t used = 0;
      const long long out = std::stoll(v, &used);
      if (used == v.size()) return out;
    } catch (const std::logic_error&) {
    }
    throw ValidationError("key '" + name + "': expected an integer, got '" + v + "'");
  }

  double get_double(const std::string& name) const {
    const auto& v = get(name);
    try {
      std::size_t used = 0;
      const double out = std::stod(v, &used);
      if (used == v.size() && std::isfinite(out)) return out;
    } catch (const std::logic_error&) {
    }
    throw ValidationError("key '" + name + "': expected a number, got '" + v + "'");
  }

  bool get_bool(const std::string& name) const {
    const auto& v = get(name);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("key '" + name + "': expected true/false, got '" + v + "'");
  }

  std::vector<std::size_t> get_sizes(const std::string& name) const {
    std::vector<std::size_t> out;
    std::istringstream in(get(name));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        std::size_t used = 0;
        const long long v = std::stoll(item, &used);
        if (used != item.size() || v <= 0) throw std::invalid_argument("bad");
        out.push_back(static_cast<std::size_t>(v));
      } catch (const std::logic_error&) {
        throw ValidationError("key '" + name + "': expected positive integers, got '" + get(name) + "'");
      }
    }
    return out;
  }

  // Canonical text of every key, defaults included, in table order.
  std::string echo() const {
    std::ostringstream out;
    std::string_view section;
    for (const auto& k : kConfigKeys) {
      if (k.section != section) {
        if (!section.empty()) out << '\n';
        section = k.section;
        out << '[' << section << "]\n";
      }
      out << k.key << " = " << get(full_name(k.section, k.key)) << '\n';
    }
    return out.str();
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  static std::string full_name(std::string_view section, std::string_view key) {
    return std::string(section) + "." + std::string(key);
  }
  static std::string strip_comment(const std::string& s) {
    const auto pos = s.find_first_of("#;");
    return pos == std::string::npos ? s : s.substr(0, pos);
  }
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

inline TrainConfig train_config_from(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.encoder_dims = cfg.get_sizes("model.encoder_dims");
  tc.mode = mode_from_string(cfg.get("training.mode"));
  const auto batch = cfg.get_int("training.batch_size");
  if (batch <= 0) throw ValidationError("key 'training.batch_size' must be > 0");
  tc.batch_size = static_cast<std::size_t>(batch);
  tc.stage1_epochs = static_cast<int>(cfg.get_int("training.stage1_epochs"));
  tc.stage2_epochs = static_cast<int>(cfg.get_int("training.stage2_epochs"));
  tc.stage1_lr = cfg.get_double("training.stage1_lr");
  if (const double lr2 = cfg.get_double("training.stage2_lr"); lr2 != 0.0) tc.stage2_lr = lr2;
  const auto& opt = cfg.get("training.optimizer");
  if (opt == "adam") {
    tc.optimizer = OptimizerKind::adam;
  } else if (opt == "sgd") {
    tc.optimizer = OptimizerKind::sgd;
  } else {
    throw ValidationError("key 'training.optimizer': expected adam or sgd, got '" + opt + "'");
  }
  tc.momentum = cfg.get_double("training.momentum");
  tc.weight_decay = cfg.get_double("training.weight_decay");
  tc.freeze_encoder_stage2 = cfg.get_bool("training.freeze_encoder");
  if (const auto cap = cfg.get_int("training.max_steps_per_stage"); cap > 0) tc.max_steps_per_stage = cap;
  tc.evaluate_each_epoch = cfg.get_bool("training.evaluate_each_epoch");
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("training.seed"));

  tc.lmr.omega = cfg.get_int("lmr.omega");
  tc.contribution.decay = cfg.get_double("lmr.decay");
  if (cfg.get("lmr.epsilon") != "auto") tc.contribution.epsilon = cfg.get_double("lmr.epsilon");
  tc.contribution.lowest = cfg.get_double("lmr.lowest");
  if (cfg.get("lmr.constant_contribution") != "none")
    tc.constant_contribution = cfg.get_double("lmr.constant_contribution");
  const auto& rule = cfg.get("lmr.mask_rule");
  if (rule == "contributor") {
    tc.lmr.mask_rule = MaskRule::contributor;
  } else if (rule == "row") {
    tc.lmr.mask_rule = MaskRule::row;
  } else {
    throw ValidationError("key 'lmr.mask_rule': expected contributor or row, got '" + rule + "'");
  }
  tc.lmr.similarity_gradients = cfg.get_bool("lmr.similarity_gradients");
  tc.lmr.identity_probability = cfg.get_double("lmr.identity_probability");
  if (!(tc.lmr.identity_probability >= 0.0 && tc.lmr.identity_probability <= 1.0))
    throw ValidationError("key 'lmr.identity_probability' must be in [0,1]");
  tc.lmr.reconstruct = cfg.get_bool("lmr.reconstruct");
  tc.lmr.mix = cfg.get_bool("lmr.mix");
  const auto bank = cfg.get_int("lmr.bank_capacity");
  if (bank < 0) throw ValidationError("key 'lmr.bank_capacity' must be >= 0");
  tc.bank_capacity = static_cast<std::size_t>(bank);
  try {
    tc.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return tc;
}

inline SplitSpec split_spec_from(const ExperimentConfig& cfg) {
  SplitSpec s;
  s.val_per_class = cfg.get_int("curation.val_per_class");
  s.test_per_class = cfg.get_int("curation.test_per_class");
  s.min_test_per_class = cfg.get_int("curation.min_test_per_class");
  try {
    s.val_source = split_from_string(cfg.get("curation.val_source"));
    s.test_source = split_from_string(cfg.get("curation.test_source"));
    s.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config key curation.*: ") + e.what());
  }
  return s;
}

inline ParetoRecipe synth_recipe_from(const ExperimentConfig& cfg) {
  ParetoRecipe r;
  const auto n = cfg.get_int("dataset.num_classes");
  if (n < 2) throw ValidationError("key 'dataset.num_classes' must be >= 2");
  r.num_classes = static_cast<std::size_t>(n);
  r.alpha = cfg.get_double("dataset.alpha");
  r.max_count = cfg.get_int("dataset.max_count");
  r.min_count = cfg.get_int("dataset.min_count");
  r.seed = static_cast<std::uint64_t>(cfg.get_int("training.seed"));
  try {
    r.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config key dataset.*: ") + e.what());
  }
  return r;
}

inline SynthOptions synth_options_from(const ExperimentConfig& cfg) {
  SynthOptions o;
  o.val_per_class = cfg.get_int("dataset.val_per_class");
  o.test_per_class = cfg.get_int("dataset.test_per_class");
  o.separation = cfg.get_double("dataset.separation");
  o.noise = cfg.get_double("dataset.noise");
  o.omega = cfg.get_int("analysis.omega");
  return o;
}

}  // namespace tailforge
