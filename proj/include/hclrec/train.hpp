#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hclrec/augment.hpp"
#include "hclrec/config.hpp"
#include "hclrec/corpus.hpp"
#include "hclrec/eval.hpp"
#include "hclrec/model.hpp"
#include "hclrec/similarity.hpp"

namespace hclrec {

/// Adam with bias correction over a fixed list of parameters.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps);
  void step();
  long steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Mat> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainBatch {
  std::vector<size_t> users;
  IndexBatch inputs;              // train prefix minus its last item
  std::vector<ItemId> targets;    // next item per position, 0 where none
  std::vector<ItemId> negatives;  // one sampled negative per target
  std::vector<MultiLevelViews> views;  // empty during warm-up
};

/// Builds one batch. Per-user randomness comes from streams forked off
/// `epoch_rng`, so a user's negatives and views do not depend on which
/// other users share the batch.
TrainBatch build_batch(const SplitDataset& data, std::span<const size_t> users,
                       const TrainConfig& cfg, const SimilarityIndex& index, const Rng& epoch_rng,
                       bool with_views, AugmentCounters* counters = nullptr);

struct StepLosses {
  double sr = 0.0;
  std::vector<double> cl;  // per contrastive level (zeros when inactive)
  double cl_total = 0.0;
  double total = 0.0;
  double block_grad_max_abs = 0.0;
};

struct EpochMetrics {
  int epoch = 0;
  int steps = 0;
  bool contrastive_active = false;
  double sr_loss = 0.0;  // mean over steps
  std::vector<double> cl_losses;
  double cl_total = 0.0;
  double total_loss = 0.0;
  double block_grad_max_abs = 0.0;
  RoutingCounters routing;
  AugmentCounters augment;
  std::optional<RankingReport> valid;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = -1;
  double best_valid_ndcg10 = -1.0;
  RankingReport test;  // test report of the best-on-validation parameters
};

/// Forward and backward of the joint objective on one batch. Gradients are
/// zeroed first, then accumulated into the model's parameters; nothing is
/// updated. Dropout streams are forked from `step_rng`.
StepLosses joint_loss_and_gradients(Model& model, const TrainBatch& batch, const TrainConfig& cfg,
                                    bool contrastive, const Rng& step_rng);

class Trainer {
 public:
  Trainer(TrainConfig cfg, SplitDataset data, SimilarityIndex index);

  /// One pass over all users in a seeded random order.
  EpochMetrics train_epoch(int epoch);

  /// Forward/backward/update on one batch. `epoch` gates the contrastive
  /// losses; `step` keys the dropout stream.
  StepLosses train_step(const TrainBatch& batch, int epoch, long step);

  /// Full run: writes run.json before training, then per-epoch metrics,
  /// per-step losses, timing, best/last checkpoints into `out_dir` (if set).
  TrainResult fit(const std::optional<std::filesystem::path>& out_dir = std::nullopt, bool verbose = false);

  bool contrastive_active(int epoch) const;
  std::vector<size_t> epoch_order(int epoch) const;

  Model& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const SplitDataset& data() const { return data_; }
  const SimilarityIndex& index() const { return index_; }

  /// Optional per-step callback (after the update).
  void set_step_observer(std::function<void(int epoch, long step, const StepLosses&)> fn) {
    observer_ = std::move(fn);
  }

 private:
  TrainConfig cfg_;
  SplitDataset data_;
  SimilarityIndex index_;
  Model model_;
  Adam optimizer_;
  Rng master_;
  long global_step_ = 0;
  std::function<void(int, long, const StepLosses&)> observer_;
  std::shared_ptr<std::ofstream> audit_;
};

/// Reads a preprocessed dataset directory and builds the leakage-free
/// similarity index, caching it next to the data keyed by content hash.
struct LoadedData {
  SplitDataset split;
  SimilarityIndex index;
  std::string hash;
};
LoadedData load_training_data(const std::filesystem::path& dir, const TrainConfig& cfg);

void write_metrics_header(std::ostream& out, int levels);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

}  // namespace hclrec
