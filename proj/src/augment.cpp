#include "hclrec/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hclrec/error.hpp"
#include "json.hpp"

namespace hclrec {

std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::Insert: return "insert";
    case AugmentationKind::Substitute: return "substitute";
    case AugmentationKind::Mask: return "mask";
    case AugmentationKind::Reorder: return "reorder";
    case AugmentationKind::Crop: return "crop";
  }
  return "?";
}

AugmentationKind parse_augmentation(const std::string& name) {
  for (auto k : kAllAugmentations) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown augmentation '" + name + "'");
}

std::vector<AugmentationKind> parse_augmentation_set(const std::string& csv) {
  std::vector<AugmentationKind> out;
  std::stringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(parse_augmentation(tok));
  }
  return out;
}

double Intensities::of(AugmentationKind kind) const {
  switch (kind) {
    case AugmentationKind::Insert: return insert;
    case AugmentationKind::Substitute: return substitute;
    case AugmentationKind::Mask: return mask;
    case AugmentationKind::Reorder: return reorder;
    case AugmentationKind::Crop: return crop;
  }
  return 0.0;
}

void AugmentationPolicy::validate() const {
  if (max_level < 1) throw ConfigError("max_level must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  auto distinct = [](std::vector<AugmentationKind> s) {
    std::sort(s.begin(), s.end());
    return static_cast<int>(std::unique(s.begin(), s.end()) - s.begin());
  };
  if (distinct(short_set) != static_cast<int>(short_set.size()) ||
      distinct(long_set) != static_cast<int>(long_set.size())) {
    throw ConfigError("augmentation sets must not repeat kinds");
  }
  if (static_cast<int>(short_set.size()) < max_level || static_cast<int>(long_set.size()) < max_level) {
    throw ConfigError("each augmentation set needs at least max_level kinds");
  }
  for (auto k : kAllAugmentations) {
    const double r = intensities.of(k);
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("intensity for " + to_string(k) + " must be in (0, 1]");
  }
}

const std::vector<AugmentationKind>& AugmentationPolicy::applicable_set(size_t original_length) const {
  return static_cast<int>(original_length) < threshold ? short_set : long_set;
}

AugmentCounters& AugmentCounters::operator+=(const AugmentCounters& o) {
  random_insertions += o.random_insertions;
  kept_substitutions += o.kept_substitutions;
  skipped_short += o.skipped_short;
  carried_forward += o.carried_forward;
  return *this;
}

size_t affected_count(double rho, size_t len) {
  if (len == 0) return 0;
  const double raw = std::ceil(rho * static_cast<double>(len) - 1e-9);
  return std::clamp<size_t>(static_cast<size_t>(std::max(raw, 1.0)), 1, len);
}

std::vector<size_t> sample_positions(size_t len, size_t count, Rng& rng) {
  std::vector<size_t> idx(len);
  std::iota(idx.begin(), idx.end(), size_t{0});
  count = std::min(count, len);
  for (size_t i = 0; i < count; ++i) {
    const size_t j = i + rng.index(len - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ItemSeq insert_at(const ItemSeq& seq, std::span<const size_t> positions,
                  const SimilarityIndex& index, Rng& rng, int max_len, AugmentCounters* counters) {
  ItemSeq out;
  out.reserve(seq.size() + positions.size());
  size_t next = 0;
  for (size_t i = 0; i < seq.size(); ++i) {
    while (next < positions.size() && positions[next] == i) {
      const ItemId anchor = i == 0 ? seq[0] : seq[i - 1];
      ItemId inserted = index.most_similar(anchor);
      if (inserted == 0) {
        inserted = static_cast<ItemId>(1 + rng.index(static_cast<uint64_t>(std::max(1, index.num_items()))));
        if (counters) ++counters->random_insertions;
      }
      out.push_back(inserted);
      ++next;
    }
    out.push_back(seq[i]);
  }
  return truncate_recent(out, max_len);
}

ItemSeq substitute_at(const ItemSeq& seq, std::span<const size_t> positions,
                      const SimilarityIndex& index, AugmentCounters* counters) {
  ItemSeq out = seq;
  for (size_t p : positions) {
    const ItemId repl = index.most_similar(seq[p]);
    if (repl == 0) {
      if (counters) ++counters->kept_substitutions;
      continue;
    }
    out[p] = repl;
  }
  return out;
}

ItemSeq mask_at(const ItemSeq& seq, std::span<const size_t> positions) {
  ItemSeq out;
  size_t next = 0;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (next < positions.size() && positions[next] == i) {
      ++next;
      continue;
    }
    out.push_back(seq[i]);
  }
  return out;
}

ItemSeq insert(const ItemSeq& seq, double rho, const SimilarityIndex& index, Rng& rng,
               int max_len, AugmentCounters* counters) {
  if (seq.empty()) return seq;
  const auto pos = sample_positions(seq.size(), affected_count(rho, seq.size()), rng);
  return insert_at(seq, pos, index, rng, max_len, counters);
}

ItemSeq substitute(const ItemSeq& seq, double rho, const SimilarityIndex& index, Rng& rng,
                   AugmentCounters* counters) {
  if (seq.empty()) return seq;
  const auto pos = sample_positions(seq.size(), affected_count(rho, seq.size()), rng);
  return substitute_at(seq, pos, index, counters);
}

ItemSeq mask(const ItemSeq& seq, double rho, Rng& rng, AugmentCounters* counters) {
  if (seq.size() < 2) {
    if (counters) ++counters->skipped_short;
    return seq;
  }
  const size_t count = std::min(affected_count(rho, seq.size()), seq.size() - 1);
  const auto pos = sample_positions(seq.size(), count, rng);
  return mask_at(seq, pos);
}

ItemSeq reorder(const ItemSeq& seq, double rho, Rng& rng, AugmentCounters* counters) {
  if (seq.size() < 2) {
    if (counters) ++counters->skipped_short;
    return seq;
  }
  const size_t sub = affected_count(rho, seq.size());
  const size_t start = rng.index(seq.size() - sub + 1);
  ItemSeq out = seq;
  rng.shuffle(std::span<ItemId>(out).subspan(start, sub));
  return out;
}

ItemSeq crop(const ItemSeq& seq, double rho, Rng& rng, AugmentCounters* counters) {
  if (seq.size() < 2) {
    if (counters) ++counters->skipped_short;
    return seq;
  }
  const size_t sub = affected_count(rho, seq.size());
  const size_t start = rng.index(seq.size() - sub + 1);
  return ItemSeq(seq.begin() + static_cast<std::ptrdiff_t>(start),
                 seq.begin() + static_cast<std::ptrdiff_t>(start + sub));
}

bool is_applicable(AugmentationKind kind, size_t len) {
  switch (kind) {
    case AugmentationKind::Insert:
    case AugmentationKind::Substitute:
      return len >= 1;
    case AugmentationKind::Mask:
    case AugmentationKind::Reorder:
    case AugmentationKind::Crop:
      return len >= 2;
  }
  return false;
}

ItemSeq apply_augmentation(AugmentationKind kind, const ItemSeq& seq,
                           const AugmentationPolicy& policy, const SimilarityIndex& index,
                           Rng& rng, AugmentCounters* counters) {
  const double rho = policy.intensities.of(kind);
  switch (kind) {
    case AugmentationKind::Insert: return insert(seq, rho, index, rng, policy.max_len, counters);
    case AugmentationKind::Substitute: return substitute(seq, rho, index, rng, counters);
    case AugmentationKind::Mask: return mask(seq, rho, rng, counters);
    case AugmentationKind::Reorder: return reorder(seq, rho, rng, counters);
    case AugmentationKind::Crop: return crop(seq, rho, rng, counters);
  }
  return seq;
}

namespace {

struct ChainResult {
  std::vector<ItemSeq> levels;
  std::vector<std::optional<AugmentationKind>> kinds;
};

// Remove-one chain: at every level, draw a kind uniformly from the
// applicable set minus the kinds already used; kinds whose length
// precondition fails are dropped for this level and redrawn.
ChainResult run_chain(const ItemSeq& original, const AugmentationPolicy& policy,
                      const SimilarityIndex& index, Rng rng, AugmentCounters* counters) {
  const auto& set = policy.applicable_set(original.size());
  std::vector<AugmentationKind> unused = set;
  ChainResult result;
  ItemSeq current = original;
  for (int m = 1; m <= policy.max_level; ++m) {
    std::vector<AugmentationKind> candidates = unused;
    std::optional<AugmentationKind> chosen;
    while (!candidates.empty()) {
      const size_t pick = rng.index(candidates.size());
      const auto kind = candidates[pick];
      if (is_applicable(kind, current.size())) {
        chosen = kind;
        break;
      }
      candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    if (chosen) {
      current = apply_augmentation(*chosen, current, policy, index, rng, counters);
      unused.erase(std::find(unused.begin(), unused.end(), *chosen));
    } else if (counters) {
      ++counters->carried_forward;
    }
    result.levels.push_back(current);
    result.kinds.push_back(chosen);
  }
  return result;
}

}  // namespace

MultiLevelViews generate_multilevel_views(const UserSequence& seq, const AugmentationPolicy& policy,
                                          const SimilarityIndex& index, const Rng& rng,
                                          AugmentCounters* counters) {
  if (seq.items.empty()) throw DataError("cannot augment an empty sequence");
  auto a = run_chain(seq.items, policy, index, rng.fork({0}), counters);
  auto b = run_chain(seq.items, policy, index, rng.fork({1}), counters);
  MultiLevelViews views;
  views.user_index = seq.user_index;
  for (size_t m = 0; m < a.levels.size(); ++m) {
    views.pairs.emplace_back(std::move(a.levels[m]), std::move(b.levels[m]));
  }
  views.chains = {std::move(a.kinds), std::move(b.kinds)};
  return views;
}

MultiLevelViews generate_flat_views(const UserSequence& seq, const AugmentationPolicy& policy,
                                    const SimilarityIndex& index, const Rng& rng,
                                    AugmentCounters* counters) {
  if (seq.items.empty()) throw DataError("cannot augment an empty sequence");
  auto a = run_chain(seq.items, policy, index, rng.fork({0}), counters);
  auto b = run_chain(seq.items, policy, index, rng.fork({1}), counters);
  MultiLevelViews views;
  views.user_index = seq.user_index;
  views.pairs.emplace_back(std::move(a.levels.back()), std::move(b.levels.back()));
  views.chains = {std::move(a.kinds), std::move(b.kinds)};
  return views;
}

std::string audit_record(const MultiLevelViews& views) {
  nlohmann::json j;
  j["user"] = views.user_index;
  nlohmann::json levels = nlohmann::json::array();
  for (size_t m = 0; m < views.pairs.size(); ++m) {
    nlohmann::json level;
    level["level"] = m + 1;
    for (int c = 0; c < 2; ++c) {
      nlohmann::json kinds = nlohmann::json::array();
      const auto& chain = views.chains[static_cast<size_t>(c)];
      const size_t upto = views.pairs.size() == chain.size() ? m + 1 : chain.size();
      for (size_t i = 0; i < upto; ++i) {
        kinds.push_back(chain[i] ? to_string(*chain[i]) : "carry");
      }
      level[c == 0 ? "kinds_a" : "kinds_b"] = kinds;
    }
    level["view_a"] = views.pairs[m].first;
    level["view_b"] = views.pairs[m].second;
    levels.push_back(level);
  }
  j["levels"] = levels;
  return j.dump();
}

}  // namespace hclrec
