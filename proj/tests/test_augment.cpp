#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hclrec/augment.hpp"
#include "hclrec/error.hpp"
#include "json.hpp"

using namespace hclrec;
using K = AugmentationKind;

namespace {

SimilarityIndex chain_index(int32_t n) {
  // i -> i + 1 (wrapping), so insertions and substitutions are predictable.
  std::unordered_map<ItemId, std::vector<ItemId>> nbrs;
  for (ItemId i = 1; i <= n; ++i) nbrs[i] = {i == n ? 1 : i + 1};
  return SimilarityIndex::from_neighbors(n, nbrs);
}

ItemSeq random_seq(Rng& rng, size_t len, int32_t n) {
  ItemSeq s(len);
  for (auto& x : s) x = static_cast<ItemId>(1 + rng.index(static_cast<uint64_t>(n)));
  return s;
}

bool is_subsequence(const ItemSeq& sub, const ItemSeq& full) {
  size_t j = 0;
  for (size_t i = 0; i < full.size() && j < sub.size(); ++i) {
    if (full[i] == sub[j]) ++j;
  }
  return j == sub.size();
}

bool is_contiguous_slice(const ItemSeq& sub, const ItemSeq& full) {
  return std::search(full.begin(), full.end(), sub.begin(), sub.end()) != full.end();
}

size_t edit_distance(const ItemSeq& a, const ItemSeq& b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Independent re-statement of one remove-one chain, written against the raw
// random stream: draw a kind from the unused candidates, drop it if its
// length precondition fails, otherwise apply it.
std::vector<ItemSeq> oracle_chain(const ItemSeq& original, const AugmentationPolicy& p,
                                  const SimilarityIndex& idx, Rng rng) {
  std::vector<K> unused = static_cast<int>(original.size()) < p.threshold ? p.short_set : p.long_set;
  std::vector<ItemSeq> levels;
  ItemSeq cur = original;
  for (int m = 0; m < p.max_level; ++m) {
    std::vector<K> cand = unused;
    while (!cand.empty()) {
      const size_t pick = rng.index(cand.size());
      const K k = cand[pick];
      const bool ok = (k == K::Insert || k == K::Substitute) ? !cur.empty() : cur.size() >= 2;
      if (!ok) {
        cand.erase(cand.begin() + static_cast<long>(pick));
        continue;
      }
      const double rho = p.intensities.of(k);
      const size_t count = std::max<size_t>(1, static_cast<size_t>(std::ceil(rho * cur.size() - 1e-9)));
      auto positions = [&](size_t len, size_t c) {
        std::vector<size_t> idx(len);
        for (size_t i = 0; i < len; ++i) idx[i] = i;
        for (size_t i = 0; i < c; ++i) std::swap(idx[i], idx[i + rng.index(len - i)]);
        idx.resize(c);
        std::sort(idx.begin(), idx.end());
        return idx;
      };
      ItemSeq next;
      if (k == K::Insert) {
        const auto pos = positions(cur.size(), std::min(count, cur.size()));
        for (size_t i = 0, q = 0; i < cur.size(); ++i) {
          if (q < pos.size() && pos[q] == i) {
            next.push_back(idx.most_similar(i == 0 ? cur[0] : cur[i - 1]));
            ++q;
          }
          next.push_back(cur[i]);
        }
        if (static_cast<int>(next.size()) > p.max_len) next.erase(next.begin(), next.end() - p.max_len);
      } else if (k == K::Substitute) {
        const auto pos = positions(cur.size(), std::min(count, cur.size()));
        next = cur;
        for (size_t q : pos) next[q] = idx.most_similar(cur[q]);
      } else if (k == K::Mask) {
        const auto pos = positions(cur.size(), std::min(count, cur.size() - 1));
        for (size_t i = 0, q = 0; i < cur.size(); ++i) {
          if (q < pos.size() && pos[q] == i) {
            ++q;
          } else {
            next.push_back(cur[i]);
          }
        }
      } else {
        const size_t sub = std::min(count, cur.size());
        const size_t start = rng.index(cur.size() - sub + 1);
        if (k == K::Crop) {
          next.assign(cur.begin() + static_cast<long>(start), cur.begin() + static_cast<long>(start + sub));
        } else {
          next = cur;
          for (size_t i = sub; i > 1; --i) std::swap(next[start + i - 1], next[start + rng.index(i)]);
        }
      }
      cur = next;
      unused.erase(std::find(unused.begin(), unused.end(), k));
      break;
    }
    levels.push_back(cur);
  }
  return levels;
}

}  // namespace

TEST(AffectedCount, CeilingWithFloor) {
  EXPECT_EQ(affected_count(0.3, 10), 3u);
  EXPECT_EQ(affected_count(0.25, 10), 3u);
  EXPECT_EQ(affected_count(1e-6, 5), 1u);
  EXPECT_EQ(affected_count(1.0, 4), 4u);
  EXPECT_EQ(affected_count(1.0 / 3.0, 3), 1u);
}

TEST(Insert, SingleItemSequence) {
  const auto idx = SimilarityIndex::from_neighbors(9, {{5, {7}}});
  Rng rng(1);
  const ItemSeq out = insert({5}, 1e-6, idx, rng, 50);
  EXPECT_EQ(out, (ItemSeq{7, 5}));
}

TEST(Insert, HandTraceBeforeChosenPosition) {
  const auto idx = SimilarityIndex::from_neighbors(9, {{2, {9}}});
  Rng rng(0);
  const std::vector<size_t> pos = {2};
  EXPECT_EQ(insert_at({1, 2, 3}, pos, idx, rng, 50), (ItemSeq{1, 2, 9, 3}));
}

TEST(Insert, NeighbourlessItemsFallBackToRandom) {
  const SimilarityIndex empty = SimilarityIndex::from_neighbors(20, {});
  Rng rng(2);
  AugmentCounters c;
  const ItemSeq seq = {3, 4, 5, 6, 7};
  const ItemSeq out = insert(seq, 0.4, empty, rng, 50, &c);
  EXPECT_EQ(out.size(), seq.size() + 2);
  EXPECT_EQ(c.random_insertions, 2);
  for (ItemId i : out) {
    EXPECT_GE(i, 1);
    EXPECT_LE(i, 20);
  }
}

TEST(Insert, LeftTruncatesToMaxLen) {
  const auto idx = chain_index(10);
  Rng rng(3);
  const ItemSeq seq = {1, 2, 3, 4, 5, 6};
  const ItemSeq out = insert(seq, 0.5, idx, rng, 7);
  EXPECT_EQ(out.size(), 7u);
  EXPECT_EQ(out.back(), 6);
}

TEST(Substitute, SingleItem) {
  const auto idx = SimilarityIndex::from_neighbors(9, {{4, {8}}});
  Rng rng(1);
  EXPECT_EQ(substitute({4}, 0.1, idx, rng), (ItemSeq{8}));
}

TEST(Substitute, HandTrace) {
  const auto idx = SimilarityIndex::from_neighbors(9, {{2, {5}}, {4, {6}}});
  const std::vector<size_t> pos = {1, 3};
  EXPECT_EQ(substitute_at({1, 2, 3, 4}, pos, idx), (ItemSeq{1, 5, 3, 6}));
}

TEST(Substitute, NeighbourlessKept) {
  const auto idx = SimilarityIndex::from_neighbors(9, {});
  AugmentCounters c;
  const std::vector<size_t> pos = {0};
  EXPECT_EQ(substitute_at({3, 4}, pos, idx, &c), (ItemSeq{3, 4}));
  EXPECT_EQ(c.kept_substitutions, 1);
}

TEST(Mask, DeletesChosenItem) {
  const std::vector<size_t> pos = {1};
  EXPECT_EQ(mask_at({10, 20, 30, 40}, pos), (ItemSeq{10, 30, 40}));
}

TEST(Mask, LengthTwoRemovesOne) {
  Rng rng(4);
  const ItemSeq out = mask({1, 2}, 0.5, rng);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0] == 1 || out[0] == 2);
}

TEST(Mask, LengthOneSkipped) {
  Rng rng(4);
  AugmentCounters c;
  EXPECT_EQ(mask({9}, 0.5, rng, &c), (ItemSeq{9}));
  EXPECT_EQ(c.skipped_short, 1);
}

TEST(Reorder, SubsequenceOfOneIsIdentity) {
  Rng rng(5);
  const ItemSeq seq = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(reorder(seq, 0.05, rng), seq);
}

TEST(Reorder, SwapOfFirstTwoIsReachable) {
  const ItemSeq seq = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  bool seen = false;
  for (uint64_t s = 0; s < 500 && !seen; ++s) {
    Rng rng(s);
    seen = reorder(seq, 0.2, rng) == ItemSeq{2, 1, 3, 4, 5, 6, 7, 8, 9, 10};
  }
  EXPECT_TRUE(seen);
}

TEST(Crop, RhoOneIsIdentity) {
  Rng rng(6);
  const ItemSeq seq = {1, 2, 3, 4, 5};
  EXPECT_EQ(crop(seq, 1.0, rng), seq);
}

TEST(Crop, MiddleSliceReachable) {
  const ItemSeq seq = {1, 2, 3, 4, 5};
  bool seen = false;
  for (uint64_t s = 0; s < 200 && !seen; ++s) {
    Rng rng(s);
    seen = crop(seq, 0.6, rng) == ItemSeq{2, 3, 4};
  }
  EXPECT_TRUE(seen);
}

TEST(Policy, ValidateRejectsSmallSets) {
  AugmentationPolicy p;
  p.short_set = {K::Insert, K::Mask};
  EXPECT_THROW(p.validate(), ConfigError);
  p = AugmentationPolicy{};
  p.intensities.crop = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_NO_THROW(AugmentationPolicy{}.validate());
}

TEST(Policy, ParseNames) {
  EXPECT_EQ(parse_augmentation_set("insert,crop"), (std::vector<K>{K::Insert, K::Crop}));
  EXPECT_THROW(parse_augmentation("shuffle"), ConfigError);
  for (K k : kAllAugmentations) EXPECT_EQ(parse_augmentation(to_string(k)), k);
}

TEST(MultiLevel, SingleLevelIsOneOperatorPerView) {
  AugmentationPolicy p;
  p.max_level = 1;
  const auto idx = chain_index(30);
  const auto v = generate_multilevel_views({0, {1, 2, 3, 4, 5, 6, 7, 8}}, p, idx, Rng(9));
  ASSERT_EQ(v.levels(), 1u);
  EXPECT_EQ(v.chains[0].size(), 1u);
  EXPECT_TRUE(v.chains[0][0].has_value());
}

TEST(MultiLevel, LongSequenceHasThreeDistinctKinds) {
  const auto idx = chain_index(30);
  const auto v = generate_multilevel_views({0, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}}, AugmentationPolicy{}, idx, Rng(10));
  for (const auto& chain : v.chains) {
    ASSERT_EQ(chain.size(), 3u);
    std::set<K> kinds;
    for (const auto& k : chain) kinds.insert(k.value());
    EXPECT_EQ(kinds.size(), 3u);
  }
}

TEST(MultiLevel, ShortSequenceUsesShortSet) {
  const auto idx = chain_index(30);
  for (uint64_t s = 0; s < 200; ++s) {
    const auto v = generate_multilevel_views({0, {4, 5, 6}}, AugmentationPolicy{}, idx, Rng(s));
    for (const auto& chain : v.chains) {
      for (const auto& k : chain) {
        ASSERT_TRUE(k.has_value());
        EXPECT_TRUE(*k == K::Insert || *k == K::Substitute || *k == K::Mask);
      }
    }
  }
}

TEST(MultiLevel, SeededTraceMatchesOracle) {
  const auto idx = chain_index(40);
  AugmentationPolicy p;
  for (uint64_t s = 0; s < 300; ++s) {
    Rng gen(s);
    const ItemSeq seq = random_seq(gen, 1 + gen.index(15), 40);
    const Rng rng(1000 + s);
    const auto v = generate_multilevel_views({0, seq}, p, idx, rng);
    const auto a = oracle_chain(seq, p, idx, rng.fork({0}));
    const auto b = oracle_chain(seq, p, idx, rng.fork({1}));
    for (int m = 0; m < p.max_level; ++m) {
      ASSERT_EQ(v.pairs[m].first, a[m]) << "seed " << s << " level " << m + 1;
      ASSERT_EQ(v.pairs[m].second, b[m]) << "seed " << s << " level " << m + 1;
    }
  }
}

TEST(MultiLevel, CarryForwardWhenNothingApplies) {
  AugmentationPolicy p;
  p.short_set = {K::Mask, K::Reorder, K::Crop};
  const auto idx = chain_index(10);
  AugmentCounters c;
  const auto v = generate_multilevel_views({0, {7}}, p, idx, Rng(1), &c);
  for (const auto& pair : v.pairs) {
    EXPECT_EQ(pair.first, (ItemSeq{7}));
    EXPECT_EQ(pair.second, (ItemSeq{7}));
  }
  EXPECT_FALSE(v.chains[0][0].has_value());
  EXPECT_EQ(c.carried_forward, 6);
}

TEST(MultiLevel, FlatViewsKeepTopLevelOnly) {
  const auto idx = chain_index(30);
  const ItemSeq seq = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto multi = generate_multilevel_views({0, seq}, AugmentationPolicy{}, idx, Rng(3));
  const auto flat = generate_flat_views({0, seq}, AugmentationPolicy{}, idx, Rng(3));
  ASSERT_EQ(flat.levels(), 1u);
  EXPECT_EQ(flat.pairs[0], multi.pairs.back());
  EXPECT_EQ(flat.chains[0].size(), 3u);
}

TEST(MultiLevel, AuditRecordIsJson) {
  const auto idx = chain_index(30);
  const auto v = generate_multilevel_views({4, {1, 2, 3, 4, 5}}, AugmentationPolicy{}, idx, Rng(3));
  const auto j = nlohmann::json::parse(audit_record(v));
  EXPECT_EQ(j["user"], 4);
  EXPECT_EQ(j["levels"].size(), 3u);
  EXPECT_EQ(j["levels"][2]["kinds_a"].size(), 3u);
}

// ------------------------------------------------------------ property suites

TEST(Properties, RemoveOneDistinctness) {
  const auto idx = chain_index(50);
  for (uint64_t s = 0; s < 1000; ++s) {
    Rng gen(s);
    AugmentationPolicy p;
    p.max_level = 1 + static_cast<int>(gen.index(3));
    const ItemSeq seq = random_seq(gen, 1 + gen.index(30), 50);
    const auto v = generate_multilevel_views({0, seq}, p, idx, gen.fork({7}));
    ASSERT_EQ(v.levels(), static_cast<size_t>(p.max_level));
    for (const auto& chain : v.chains) {
      std::set<K> seen;
      for (const auto& k : chain) {
        if (!k) continue;
        ASSERT_TRUE(seen.insert(*k).second) << "seed " << s;
      }
    }
    for (const auto& pair : v.pairs) {
      ASSERT_FALSE(pair.first.empty());
      ASSERT_FALSE(pair.second.empty());
    }
  }
}

TEST(Properties, ReorderPreservesMultiset) {
  for (uint64_t s = 0; s < 1000; ++s) {
    Rng rng(s);
    const ItemSeq seq = random_seq(rng, 1 + rng.index(40), 20);
    const double rho = 0.05 + 0.95 * rng.uniform();
    ItemSeq out = reorder(seq, rho, rng);
    ASSERT_EQ(out.size(), seq.size());
    ItemSeq a = seq;
    std::sort(a.begin(), a.end());
    std::sort(out.begin(), out.end());
    ASSERT_EQ(a, out) << "seed " << s;
  }
}

TEST(Properties, ReorderOnlyTouchesOneContiguousSlice) {
  for (uint64_t s = 0; s < 1000; ++s) {
    Rng rng(s);
    ItemSeq seq(2 + rng.index(30));
    for (size_t i = 0; i < seq.size(); ++i) seq[i] = static_cast<ItemId>(i + 1);
    const ItemSeq out = reorder(seq, 0.2, rng);
    size_t first = seq.size(), last = 0;
    for (size_t i = 0; i < seq.size(); ++i) {
      if (out[i] != seq[i]) {
        first = std::min(first, i);
        last = std::max(last, i);
      }
    }
    if (first < seq.size()) ASSERT_LE(last - first + 1, affected_count(0.2, seq.size()));
  }
}

TEST(Properties, CropContiguity) {
  for (uint64_t s = 0; s < 1000; ++s) {
    Rng rng(s);
    const ItemSeq seq = random_seq(rng, 1 + rng.index(40), 30);
    const double rho = 0.05 + 0.95 * rng.uniform();
    const ItemSeq out = crop(seq, rho, rng);
    ASSERT_TRUE(is_contiguous_slice(out, seq)) << "seed " << s;
    ASSERT_EQ(out.size(), seq.size() < 2 ? seq.size() : affected_count(rho, seq.size()));
  }
}

TEST(Properties, MaskDeletionSemantics) {
  for (uint64_t s = 0; s < 1000; ++s) {
    Rng rng(s);
    const ItemSeq seq = random_seq(rng, 1 + rng.index(40), 30);
    const double rho = 0.05 + 0.95 * rng.uniform();
    const ItemSeq out = mask(seq, rho, rng);
    ASSERT_FALSE(out.empty());
    ASSERT_TRUE(is_subsequence(out, seq));
    const size_t expected =
        seq.size() < 2 ? seq.size() : seq.size() - std::min(affected_count(rho, seq.size()), seq.size() - 1);
    ASSERT_EQ(out.size(), expected) << "seed " << s;
    for (ItemId i : out) ASSERT_NE(i, 0);
  }
}

TEST(Properties, SeededDeterminism) {
  const auto idx = chain_index(50);
  for (uint64_t s = 0; s < 1000; ++s) {
    Rng gen(s);
    const ItemSeq seq = random_seq(gen, 1 + gen.index(30), 50);
    const Rng rng(s * 7919 + 1);
    const auto a = generate_multilevel_views({1, seq}, AugmentationPolicy{}, idx, rng);
    const auto b = generate_multilevel_views({1, seq}, AugmentationPolicy{}, idx, rng);
    ASSERT_EQ(a.pairs, b.pairs);
    ASSERT_EQ(a.chains, b.chains);
  }
}

TEST(Properties, PairIndependence) {
  // Chain a depends only on fork({0}): reproduce it from that stream alone,
  // under a policy where chain b's draws differ.
  const auto idx = chain_index(50);
  for (uint64_t s = 0; s < 1000; ++s) {
    Rng gen(s);
    const ItemSeq seq = random_seq(gen, 1 + gen.index(30), 50);
    const Rng rng(s + 17);
    const auto v = generate_multilevel_views({0, seq}, AugmentationPolicy{}, idx, rng);
    const auto a = oracle_chain(seq, AugmentationPolicy{}, idx, rng.fork({0}));
    for (size_t m = 0; m < v.levels(); ++m) ASSERT_EQ(v.pairs[m].first, a[m]);
  }
}

TEST(Properties, EditDistanceNonDecreasingInLevel) {
  const auto idx = chain_index(50);
  ItemSeq seq(20);
  for (size_t i = 0; i < seq.size(); ++i) seq[i] = static_cast<ItemId>(i + 1);
  std::vector<double> mean(3, 0.0);
  for (uint64_t s = 0; s < 1000; ++s) {
    const auto v = generate_multilevel_views({0, seq}, AugmentationPolicy{}, idx, Rng(s));
    for (size_t m = 0; m < 3; ++m) {
      mean[m] += 0.5 * static_cast<double>(edit_distance(v.pairs[m].first, seq) + edit_distance(v.pairs[m].second, seq));
    }
  }
  EXPECT_LE(mean[0], mean[1]);
  EXPECT_LE(mean[1], mean[2]);
}
