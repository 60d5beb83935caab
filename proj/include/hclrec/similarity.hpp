#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hclrec/corpus.hpp"

namespace hclrec {

enum class SimilarityWeighting {
  IufLog,   // w(u) = 1 / log(1 + |s_u|)
  Uniform,  // w(u) = 1
};

SimilarityWeighting parse_weighting(const std::string& name);
std::string to_string(SimilarityWeighting w);

/// Sparse, symmetric item-item co-occurrence scores with a precomputed
/// neighbour list per item. Read-only after construction.
class SimilarityIndex {
 public:
  SimilarityIndex() = default;

  static SimilarityIndex build(std::span<const UserSequence> train_sequences, int32_t num_items,
                               SimilarityWeighting weighting = SimilarityWeighting::IufLog,
                               int top_k = 1);

  /// Co-occurrence score; 0 when the pair never co-occurs or i == j.
  double score(ItemId i, ItemId j) const;

  /// Neighbours sorted by descending score, ties by lower index.
  std::span<const ItemId> neighbors(ItemId item) const;

  /// Top-1 neighbour, or 0 if the item has none.
  ItemId most_similar(ItemId item) const;

  int32_t num_items() const { return num_items_; }
  int top_k() const { return top_k_; }

  void save(const std::filesystem::path& path) const;
  static SimilarityIndex load(const std::filesystem::path& path);

  /// Constructs an index from explicit neighbour lists (tests, fixtures).
  static SimilarityIndex from_neighbors(int32_t num_items,
                                        const std::unordered_map<ItemId, std::vector<ItemId>>& nbrs);

 private:
  int32_t num_items_ = 0;
  int top_k_ = 1;
  // rows_[i] maps j -> score(i, j)
  std::vector<std::unordered_map<ItemId, double>> rows_;
  std::vector<std::vector<ItemId>> top_;
};

double user_weight(size_t sequence_length, SimilarityWeighting weighting);

/// Loads `cache_path` when its key matches, otherwise builds and writes it.
SimilarityIndex load_or_build_index(const std::filesystem::path& cache_path, const std::string& key,
                                    std::span<const UserSequence> train_sequences,
                                    int32_t num_items, SimilarityWeighting weighting);

}  // namespace hclrec
