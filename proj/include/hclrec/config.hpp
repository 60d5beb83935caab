#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hclrec/augment.hpp"
#include "hclrec/model.hpp"
#include "hclrec/objective.hpp"
#include "hclrec/similarity.hpp"
#include "json.hpp"

namespace hclrec {

struct TrainConfig {
  int batch_size = 256;
  int epochs = 50;
  int warmup_epochs = 5;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int dim = 64;
  int heads = 2;
  int layers = 2;
  int max_len = 50;
  int levels = 3;  // M
  double dropout = 0.2;
  uint64_t seed = 42;
  int early_stop_patience = 0;  // 0 disables early stopping
  double grad_clip = 0.0;       // global-norm clip; 0 disables

  std::vector<double> lambdas;       // empty -> LossWeights::defaults(levels)
  std::vector<double> temperatures;  // empty -> LossWeights::defaults(levels)
  int threshold = 4;
  Intensities intensities;
  std::vector<AugmentationKind> short_set = AugmentationPolicy{}.short_set;
  std::vector<AugmentationKind> long_set = AugmentationPolicy{}.long_set;
  SimilarityWeighting weighting = SimilarityWeighting::IufLog;
  Pooling pooling = Pooling::Last;
  Similarity similarity = Similarity::Dot;

  bool contrastive = true;  // false: next-item loss only, no views generated
  bool use_blocks = true;   // false: every level contrasts at the encoder output
  bool flat_aug = false;    // one view pair made by applying M operators at once
  bool exclude_seen = true;
  int eval_batch_size = 256;
  bool audit_views = false;  // dump the augmentation audit trail

  void validate() const;
  LossWeights loss_weights() const;
  AugmentationPolicy policy() const;
  ModelConfig model_config(int32_t num_items) const;
  /// Number of contrastive levels actually trained (1 under flat_aug).
  int contrastive_levels() const { return flat_aug ? 1 : levels; }

  /// Sets one field from its textual form; throws ConfigError on unknown keys
  /// or malformed values.
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;
};

/// Reads a JSON object or flat key=value file (# comments allowed).
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void apply_json(TrainConfig& cfg, const nlohmann::json& j);
/// Applies "key=value" overrides in order.
void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides);
/// HCLREC_SEED, when set, replaces cfg.seed.
void apply_environment(TrainConfig& cfg);

}  // namespace hclrec
