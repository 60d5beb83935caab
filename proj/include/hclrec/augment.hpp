#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hclrec/corpus.hpp"
#include "hclrec/rng.hpp"
#include "hclrec/similarity.hpp"

namespace hclrec {

enum class AugmentationKind { Insert, Substitute, Mask, Reorder, Crop };

inline constexpr std::array<AugmentationKind, 5> kAllAugmentations = {
    AugmentationKind::Insert, AugmentationKind::Substitute, AugmentationKind::Mask,
    AugmentationKind::Reorder, AugmentationKind::Crop};

std::string to_string(AugmentationKind kind);
AugmentationKind parse_augmentation(const std::string& name);
std::vector<AugmentationKind> parse_augmentation_set(const std::string& csv);

struct Intensities {
  double insert = 0.4;
  double substitute = 0.4;
  double mask = 0.3;
  double reorder = 0.2;
  double crop = 0.4;

  double of(AugmentationKind kind) const;
};

struct AugmentationPolicy {
  std::vector<AugmentationKind> short_set = {AugmentationKind::Insert, AugmentationKind::Substitute,
                                             AugmentationKind::Mask};
  std::vector<AugmentationKind> long_set = {kAllAugmentations.begin(), kAllAugmentations.end()};
  int threshold = 4;  // sequences shorter than this use short_set
  int max_level = 3;  // M
  int max_len = 50;   // T; insertion output is left-truncated to this
  Intensities intensities;

  /// Throws ConfigError when a set has fewer than M distinct kinds or an
  /// intensity is outside (0, 1].
  void validate() const;
  const std::vector<AugmentationKind>& applicable_set(size_t original_length) const;
};

/// Fallback/skip events. Operators never throw on degenerate input; they
/// record what happened here instead.
struct AugmentCounters {
  long random_insertions = 0;     // insert: neighbourless item, random item used
  long kept_substitutions = 0;    // substitute: neighbourless item kept
  long skipped_short = 0;         // mask/reorder/crop on length < 2
  long carried_forward = 0;       // no applicable kind left at some level

  AugmentCounters& operator+=(const AugmentCounters& o);
};

/// ceil(rho * len), computed with a small tolerance so that e.g. 0.3 * 10
/// gives 3, clamped to [1, len].
size_t affected_count(double rho, size_t len);

/// Uniform sample of `count` distinct positions in [0, len), sorted.
std::vector<size_t> sample_positions(size_t len, size_t count, Rng& rng);

// Deterministic cores: callers choose the positions / slice.
ItemSeq insert_at(const ItemSeq& seq, std::span<const size_t> positions,
                  const SimilarityIndex& index, Rng& rng, int max_len,
                  AugmentCounters* counters = nullptr);
ItemSeq substitute_at(const ItemSeq& seq, std::span<const size_t> positions,
                      const SimilarityIndex& index, AugmentCounters* counters = nullptr);
ItemSeq mask_at(const ItemSeq& seq, std::span<const size_t> positions);

// Sampling operators.
ItemSeq insert(const ItemSeq& seq, double rho, const SimilarityIndex& index, Rng& rng,
               int max_len, AugmentCounters* counters = nullptr);
ItemSeq substitute(const ItemSeq& seq, double rho, const SimilarityIndex& index, Rng& rng,
                   AugmentCounters* counters = nullptr);
ItemSeq mask(const ItemSeq& seq, double rho, Rng& rng, AugmentCounters* counters = nullptr);
ItemSeq reorder(const ItemSeq& seq, double rho, Rng& rng, AugmentCounters* counters = nullptr);
ItemSeq crop(const ItemSeq& seq, double rho, Rng& rng, AugmentCounters* counters = nullptr);

/// Whether `kind` can run on a sequence of this length without being skipped.
bool is_applicable(AugmentationKind kind, size_t len);

ItemSeq apply_augmentation(AugmentationKind kind, const ItemSeq& seq,
                           const AugmentationPolicy& policy, const SimilarityIndex& index,
                           Rng& rng, AugmentCounters* counters = nullptr);

struct MultiLevelViews {
  int32_t user_index = 0;
  // pairs[m - 1] holds the two level-m views.
  std::vector<std::pair<ItemSeq, ItemSeq>> pairs;
  // Kinds applied per chain, in order; nullopt marks a carried-forward level.
  std::array<std::vector<std::optional<AugmentationKind>>, 2> chains;

  size_t levels() const { return pairs.size(); }
};

/// Two independent remove-one chains of length policy.max_level. Chain a
/// draws from rng.fork({0}), chain b from rng.fork({1}).
MultiLevelViews generate_multilevel_views(const UserSequence& seq,
                                          const AugmentationPolicy& policy,
                                          const SimilarityIndex& index, const Rng& rng,
                                          AugmentCounters* counters = nullptr);

/// Single view pair, each view produced by applying max_level distinct
/// operators at once to the original sequence. Only the top-level views are
/// kept (the "w/o hierarchical augmentation" ablation).
MultiLevelViews generate_flat_views(const UserSequence& seq, const AugmentationPolicy& policy,
                                    const SimilarityIndex& index, const Rng& rng,
                                    AugmentCounters* counters = nullptr);

/// One JSON-lines record describing the views (debug audit trail).
std::string audit_record(const MultiLevelViews& views);

}  // namespace hclrec
