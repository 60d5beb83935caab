#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hclrec/error.hpp"
#include "hclrec/similarity.hpp"
#include "test_util.hpp"

using namespace hclrec;
using hclrec::testing::TempDir;

namespace {

std::vector<UserSequence> users_of(const std::vector<ItemSeq>& seqs) {
  std::vector<UserSequence> out;
  for (size_t u = 0; u < seqs.size(); ++u) out.push_back({static_cast<int32_t>(u), seqs[u]});
  return out;
}

// O(U * L^2): for every user, every ordered pair of distinct items it holds.
std::vector<std::vector<double>> brute_force_scores(const std::vector<ItemSeq>& seqs, int n,
                                                    SimilarityWeighting w) {
  std::vector<std::vector<double>> s(n + 1, std::vector<double>(n + 1, 0.0));
  for (const auto& seq : seqs) {
    const double weight = w == SimilarityWeighting::Uniform ? 1.0 : 1.0 / std::log(1.0 + seq.size());
    const std::set<ItemId> items(seq.begin(), seq.end());
    for (ItemId i : items) {
      for (ItemId j : items) {
        if (i != j) s[i][j] += weight;
      }
    }
  }
  return s;
}

std::vector<ItemSeq> random_corpus(Rng& rng, int users, int items, int max_len) {
  std::vector<ItemSeq> out;
  for (int u = 0; u < users; ++u) {
    ItemSeq s(1 + rng.index(max_len));
    for (auto& x : s) x = static_cast<ItemId>(1 + rng.index(items));
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Similarity, TwoUsersSharingTwoItems) {
  const auto users = users_of({{1, 2}, {2, 1}});
  const auto idx = SimilarityIndex::build(users, 2);
  const double w = 1.0 / std::log(3.0);
  EXPECT_NEAR(idx.score(1, 2), 2 * w, 1e-9);
  EXPECT_GT(idx.score(1, 2), 0.0);
  EXPECT_EQ(idx.most_similar(1), 2);
  EXPECT_EQ(idx.most_similar(2), 1);
}

TEST(Similarity, SingleItemSequenceHasNoNeighbours) {
  const auto idx = SimilarityIndex::build(users_of({{3}, {1, 2}}), 3);
  EXPECT_TRUE(idx.neighbors(3).empty());
  EXPECT_EQ(idx.most_similar(3), 0);
}

TEST(Similarity, FiveItemCorpusMatchesBruteForce) {
  const std::vector<ItemSeq> seqs = {{1, 2, 3}, {2, 3, 4, 5}, {5, 1}, {4, 4, 2}, {3, 1, 2, 5, 4}};
  for (auto w : {SimilarityWeighting::IufLog, SimilarityWeighting::Uniform}) {
    const auto idx = SimilarityIndex::build(users_of(seqs), 5, w);
    const auto oracle = brute_force_scores(seqs, 5, w);
    for (ItemId i = 1; i <= 5; ++i) {
      for (ItemId j = 1; j <= 5; ++j) EXPECT_NEAR(idx.score(i, j), oracle[i][j], 1e-8) << i << "," << j;
    }
  }
}

TEST(Similarity, RandomCorpusMatchesBruteForceAndTopOrder) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 12;
    const auto seqs = random_corpus(rng, 30, n, 8);
    const auto idx = SimilarityIndex::build(users_of(seqs), n, SimilarityWeighting::IufLog, 4);
    const auto oracle = brute_force_scores(seqs, n, SimilarityWeighting::IufLog);
    for (ItemId i = 1; i <= n; ++i) {
      for (ItemId j = 1; j <= n; ++j) {
        EXPECT_NEAR(idx.score(i, j), oracle[i][j], 1e-8);
        EXPECT_EQ(idx.score(i, j) > 0, idx.score(j, i) > 0);
      }
      // Oracle top-4: descending score, lower index on ties.
      std::vector<ItemId> cand;
      for (ItemId j = 1; j <= n; ++j) {
        if (j != i && oracle[i][j] > 0) cand.push_back(j);
      }
      std::stable_sort(cand.begin(), cand.end(),
                       [&](ItemId a, ItemId b) { return idx.score(i, a) > idx.score(i, b); });
      if (cand.size() > 4) cand.resize(4);
      const auto got = idx.neighbors(i);
      EXPECT_EQ(std::vector<ItemId>(got.begin(), got.end()), cand);
      EXPECT_NE(idx.most_similar(i), i);
    }
  }
}

TEST(Similarity, TieBreaksToLowerIndex) {
  const auto idx = SimilarityIndex::build(users_of({{2, 5, 3}}), 5, SimilarityWeighting::Uniform, 2);
  const auto n = idx.neighbors(2);
  ASSERT_EQ(n.size(), 2u);
  EXPECT_EQ(n[0], 3);
  EXPECT_EQ(n[1], 5);
}

TEST(Similarity, InvariantToUserAndItemOrder) {
  Rng rng(4);
  auto seqs = random_corpus(rng, 40, 15, 10);
  const auto a = SimilarityIndex::build(users_of(seqs), 15);
  rng.shuffle(std::span<ItemSeq>(seqs));
  for (auto& s : seqs) rng.shuffle(std::span<ItemId>(s));
  const auto b = SimilarityIndex::build(users_of(seqs), 15);
  for (ItemId i = 1; i <= 15; ++i) {
    for (ItemId j = 1; j <= 15; ++j) EXPECT_EQ(a.score(i, j), b.score(i, j));
    EXPECT_EQ(a.most_similar(i), b.most_similar(i));
  }
}

TEST(Similarity, UnrelatedUserLeavesScoreUnchanged) {
  Rng rng(5);
  auto seqs = random_corpus(rng, 20, 10, 6);
  const auto before = SimilarityIndex::build(users_of(seqs), 12);
  seqs.push_back({11, 12});
  const auto after = SimilarityIndex::build(users_of(seqs), 12);
  for (ItemId i = 1; i <= 10; ++i) {
    for (ItemId j = 1; j <= 10; ++j) EXPECT_EQ(before.score(i, j), after.score(i, j));
  }
}

TEST(Similarity, CacheRoundTripAndKeyMismatch) {
  TempDir dir("sim_cache");
  Rng rng(6);
  const auto seqs = users_of(random_corpus(rng, 25, 10, 6));
  const auto built = load_or_build_index(dir / "sim.cache", "k1", seqs, 10, SimilarityWeighting::IufLog);
  const auto loaded = SimilarityIndex::load(dir / "sim.cache");
  for (ItemId i = 1; i <= 10; ++i) {
    for (ItemId j = 1; j <= 10; ++j) EXPECT_EQ(built.score(i, j), loaded.score(i, j));
    EXPECT_EQ(built.most_similar(i), loaded.most_similar(i));
  }
  // A different key rebuilds from the given sequences.
  const auto other = users_of({{1, 2}});
  const auto rebuilt = load_or_build_index(dir / "sim.cache", "k2", other, 10, SimilarityWeighting::IufLog);
  EXPECT_EQ(rebuilt.most_similar(1), 2);
  EXPECT_EQ(rebuilt.score(3, 4), 0.0);
}

TEST(Similarity, ParseWeighting) {
  EXPECT_EQ(parse_weighting("iuf-log"), SimilarityWeighting::IufLog);
  EXPECT_EQ(parse_weighting("uniform"), SimilarityWeighting::Uniform);
  EXPECT_THROW(parse_weighting("cosine"), ConfigError);
}
