#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "hclrec/corpus.hpp"
#include "hclrec/model.hpp"

namespace hclrec {

/// 1-based rank of `target` among all items not in `exclude`. Items scoring
/// at least as high as the target are ranked ahead of it (pessimistic ties).
/// `scores[v - 1]` is the score of item v.
int rank_target(std::span<const double> scores, ItemId target, const std::unordered_set<ItemId>& exclude);

/// Single-relevant-item NDCG: 1 / log2(rank + 1) if rank <= k, else 0.
double ndcg_at_k(int rank, int k);
inline double hit_at_k(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

struct RankingReport {
  std::map<int32_t, int> per_user_rank;
  std::map<std::string, double> metrics;  // "Hit@5", "NDCG@10", ...
  std::string cohort = "all";

  double metric(const std::string& name) const;
  bool operator==(const RankingReport&) const = default;
};

/// Aggregates Hit@k / NDCG@k over the given ranks.
RankingReport report_from_ranks(const std::map<int32_t, int>& ranks, std::span<const int> ks,
                                std::string cohort = "all");

enum class EvalTarget { Valid, Test };

struct EvalOptions {
  EvalTarget target = EvalTarget::Test;
  std::vector<int> ks = {5, 10};
  bool exclude_seen = true;
  int batch_size = 256;
};

/// Encoder-only forward on every user's prefix, full-catalogue ranking of the
/// held-out target.
RankingReport evaluate(const Model& model, const SplitDataset& split, const EvalOptions& options = {});

/// Reports for "all", "short" (prefix length < threshold) and "long".
std::map<std::string, RankingReport> evaluate_cohorts(const Model& model, const SplitDataset& split,
                                                      int threshold, const EvalOptions& options = {});

void write_report_json(const std::filesystem::path& path, const std::vector<RankingReport>& reports);
void write_ranks_csv(const std::filesystem::path& path, const std::vector<RankingReport>& reports);

}  // namespace hclrec
