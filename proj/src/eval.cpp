#include "hclrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hclrec/error.hpp"
#include "json.hpp"

namespace hclrec {

int rank_target(std::span<const double> scores, ItemId target, const std::unordered_set<ItemId>& exclude) {
  if (target < 1 || target > static_cast<ItemId>(scores.size())) throw DataError("target item out of range");
  if (exclude.count(target)) throw DataError("target item is in the exclusion set");
  const double ts = scores[static_cast<size_t>(target - 1)];
  int rank = 1;
  for (size_t i = 0; i < scores.size(); ++i) {
    const auto v = static_cast<ItemId>(i + 1);
    if (v == target || exclude.count(v)) continue;
    if (scores[i] >= ts) ++rank;
  }
  return rank;
}

double ndcg_at_k(int rank, int k) {
  if (rank < 1 || k < 1) throw ConfigError("rank and k must be >= 1");
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double RankingReport::metric(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) throw ConfigError("report has no metric " + name);
  return it->second;
}

RankingReport report_from_ranks(const std::map<int32_t, int>& ranks, std::span<const int> ks,
                                std::string cohort) {
  RankingReport r;
  r.per_user_rank = ranks;
  r.cohort = std::move(cohort);
  for (int k : ks) {
    double hit = 0.0, ndcg = 0.0;
    for (const auto& [u, rank] : ranks) {
      hit += hit_at_k(rank, k);
      ndcg += ndcg_at_k(rank, k);
    }
    const double n = ranks.empty() ? 1.0 : static_cast<double>(ranks.size());
    r.metrics["Hit@" + std::to_string(k)] = hit / n;
    r.metrics["NDCG@" + std::to_string(k)] = ndcg / n;
  }
  return r;
}

namespace {

struct Prefixes {
  std::vector<ItemSeq> inputs;
  std::vector<ItemId> targets;
};

Prefixes collect(const SplitDataset& split, EvalTarget target) {
  Prefixes p;
  for (size_t u = 0; u < split.num_users(); ++u) {
    auto [prefix, t] = target == EvalTarget::Test ? split.test(u) : split.valid(u);
    p.inputs.push_back(std::move(prefix));
    p.targets.push_back(t);
  }
  return p;
}

std::map<int32_t, int> rank_users(const Model& model, const SplitDataset& split, const EvalOptions& opt,
                                  const Prefixes& p) {
  std::map<int32_t, int> ranks;
  const int T = model.config().max_len;
  const size_t bs = static_cast<size_t>(std::max(1, opt.batch_size));
  for (size_t start = 0; start < p.inputs.size(); start += bs) {
    const size_t end = std::min(p.inputs.size(), start + bs);
    std::vector<ItemSeq> chunk;
    for (size_t u = start; u < end; ++u) chunk.push_back(truncate_recent(p.inputs[u], T));
    const IndexBatch batch = pad_batch(chunk, T);
    const Mat scores = model.predict_scores(model.forward(batch));
    for (size_t u = start; u < end; ++u) {
      std::unordered_set<ItemId> exclude;
      if (opt.exclude_seen) {
        // The whole history is seen, including items beyond the T window.
        exclude.insert(p.inputs[u].begin(), p.inputs[u].end());
        exclude.erase(p.targets[u]);
      }
      const auto row = static_cast<Eigen::Index>(u - start);
      std::span<const double> s(scores.data() + row * scores.cols(), static_cast<size_t>(scores.cols()));
      ranks[split.sequences[u].user_index] = rank_target(s, p.targets[u], exclude);
    }
  }
  return ranks;
}

}  // namespace

RankingReport evaluate(const Model& model, const SplitDataset& split, const EvalOptions& options) {
  const auto p = collect(split, options.target);
  return report_from_ranks(rank_users(model, split, options, p), options.ks);
}

std::map<std::string, RankingReport> evaluate_cohorts(const Model& model, const SplitDataset& split,
                                                      int threshold, const EvalOptions& options) {
  const auto p = collect(split, options.target);
  const auto ranks = rank_users(model, split, options, p);
  std::map<int32_t, int> short_ranks, long_ranks;
  for (size_t u = 0; u < split.num_users(); ++u) {
    const auto id = split.sequences[u].user_index;
    (static_cast<int>(p.inputs[u].size()) < threshold ? short_ranks : long_ranks)[id] = ranks.at(id);
  }
  std::map<std::string, RankingReport> out;
  out["all"] = report_from_ranks(ranks, options.ks, "all");
  out["short"] = report_from_ranks(short_ranks, options.ks, "short");
  out["long"] = report_from_ranks(long_ranks, options.ks, "long");
  return out;
}

void write_report_json(const std::filesystem::path& path, const std::vector<RankingReport>& reports) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    j.push_back({{"cohort", r.cohort}, {"users", r.per_user_rank.size()}, {"metrics", r.metrics}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_ranks_csv(const std::filesystem::path& path, const std::vector<RankingReport>& reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user,rank,cohort\n";
  for (const auto& r : reports) {
    for (const auto& [u, rank] : r.per_user_rank) out << u << ',' << rank << ',' << r.cohort << '\n';
  }
}

}  // namespace hclrec
