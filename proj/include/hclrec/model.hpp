#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hclrec/layers.hpp"
#include "hclrec/rng.hpp"
#include "hclrec/tensor.hpp"

namespace hclrec {

/// How a view's hidden states are reduced to one vector for contrastive
/// similarity.
enum class Pooling { Last, Mean, Flatten };

Pooling parse_pooling(const std::string& name);
std::string to_string(Pooling p);

struct ModelConfig {
  int32_t num_items = 0;  // |V|; the embedding table has |V| + 1 rows
  int dim = 64;
  int heads = 2;
  int layers = 2;
  int max_len = 50;
  int num_blocks = 2;  // additional blocks, M - 1 (0 when blocks are disabled)
  double dropout = 0.2;

  void validate() const;
};

/// Closed-form parameter count for a configuration.
int64_t expected_parameter_count(const ModelConfig& cfg);

struct EncoderTrace {
  IndexBatch batch;
  std::vector<uint8_t> mask;
  Packing packing;
  Mat embed_drop;
  std::vector<EncoderLayer::Cache> layers;
  LayerNorm::Cache final_ln;
};

struct HierarchyTrace {
  int batch = 0;
  int length = 0;
  std::vector<uint8_t> mask;
  Packing packing;
  std::vector<Block::Cache> blocks;
};

/// Instrumentation for level routing: for each level m (index m-1), how many
/// hierarchical_forward calls happened and how many blocks they traversed.
struct RoutingCounters {
  std::vector<long> calls;
  std::vector<long> blocks_traversed;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  /// Truncated normal (std 0.02) weights and embeddings, zero biases, unit
  /// norm scales; padding row of the item embedding pinned at zero.
  void initialize(uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// h0[b, t] = E[item] + P[position]; zero rows at padding.
  HiddenStates embed(const IndexBatch& batch) const;

  /// The L-layer causal encoder followed by a final layer norm.
  HiddenStates encode(const HiddenStates& h0, Rng* dropout = nullptr,
                      EncoderTrace* trace = nullptr) const;

  /// embed -> dropout -> encode. `dropout == nullptr` runs in eval mode.
  HiddenStates forward(const IndexBatch& batch, Rng* dropout = nullptr,
                       EncoderTrace* trace = nullptr) const;

  /// Backpropagates d_hidden (same shape as the forward output) through the
  /// encoder and the embedding tables.
  void backward(const EncoderTrace& trace, const Mat& d_hidden);

  HiddenStates block_forward(const HiddenStates& h, size_t block, Rng* dropout = nullptr,
                             Block::Cache* cache = nullptr) const;

  /// Level-m routing: m = 1 returns h unchanged, m >= 2 applies blocks
  /// 1..m-1 in order. Levels beyond num_blocks + 1 are an error.
  HiddenStates hierarchical_forward(const HiddenStates& h, int level, Rng* dropout = nullptr,
                                    HierarchyTrace* trace = nullptr) const;
  Mat hierarchical_backward(const HierarchyTrace& trace, const Mat& d_out);

  /// B x |V| scores; column c is item c + 1. Uses the last real position.
  Mat predict_scores(const HiddenStates& h) const;

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> encoder_parameters();
  std::vector<Parameter*> block_parameters();
  int64_t parameter_count();

  Parameter& item_embedding() { return item_embedding_; }
  const Parameter& item_embedding() const { return item_embedding_; }
  Parameter& position_embedding() { return position_embedding_; }

  void zero_grad();
  /// Zeroes the padding row of the item embedding (value and grad).
  void clear_padding();

  size_t num_blocks() const { return blocks_.size(); }
  /// Drops all additional blocks (inference never uses them).
  void remove_blocks();

  const std::vector<long>& block_call_counts() const { return block_calls_; }
  const RoutingCounters& routing() const { return routing_; }
  void reset_counters();

 private:
  ModelConfig cfg_;
  Parameter item_embedding_;
  Parameter position_embedding_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_ln_;
  std::vector<Block> blocks_;

  mutable std::vector<long> block_calls_;
  mutable RoutingCounters routing_;
};

/// Representation per sequence (B x d for Last/Mean, B x length*d for
/// Flatten). Throws if a row has no real position.
Mat sequence_representation(const HiddenStates& h, Pooling pooling = Pooling::Last);

/// Gradient of sequence_representation w.r.t. h.values.
Mat representation_backward(const HiddenStates& h, const Mat& d_reps, Pooling pooling);

struct CheckpointMeta {
  uint64_t seed = 0;
  int epoch = 0;
  int levels = 3;
};

/// Single-file archive: magic, JSON header (config, meta, tensor table),
/// then raw little-endian doubles for every tensor in header order.
void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta);
Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace hclrec
