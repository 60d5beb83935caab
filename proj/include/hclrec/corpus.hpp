#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace hclrec {

using ItemId = int32_t;  // dense item index; 0 is padding
using ItemSeq = std::vector<ItemId>;

struct Interaction {
  std::string user;
  std::string item;
  int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

enum class InputFormat { Tsv, AmazonCsv, YelpJson };

InputFormat parse_input_format(const std::string& name);

std::vector<Interaction> load_interactions(const std::filesystem::path& path,
                                           InputFormat format);

/// Iteratively drops users and items with fewer than k interactions until
/// every remaining user and item has at least k. Input order is preserved.
std::vector<Interaction> k_core_filter(const std::vector<Interaction>& interactions,
                                       int k);

class ItemVocabulary {
 public:
  /// Returns the dense index, assigning the next free one on first sight.
  ItemId add(const std::string& raw);
  ItemId forward(const std::string& raw) const;
  const std::string& backward(ItemId index) const;
  bool contains(const std::string& raw) const { return forward_.count(raw) != 0; }
  /// |V|; indices are 1..size().
  int32_t size() const { return static_cast<int32_t>(backward_.size()); }

 private:
  std::unordered_map<std::string, ItemId> forward_;
  std::vector<std::string> backward_;
};

struct UserSequence {
  int32_t user_index = 0;
  ItemSeq items;
};

/// Leave-one-out view over the full chronological sequences.
struct SplitDataset {
  std::vector<UserSequence> sequences;  // full chronological sequences
  std::vector<std::string> user_names;  // raw id per user_index (may be empty)
  int32_t num_items = 0;
  int max_len = 50;

  size_t num_users() const { return sequences.size(); }

  /// items[0 .. n-3]
  ItemSeq train(size_t u) const;
  /// (items[0 .. n-3], items[n-2])
  std::pair<ItemSeq, ItemId> valid(size_t u) const;
  /// (items[0 .. n-2], items[n-1])
  std::pair<ItemSeq, ItemId> test(size_t u) const;

  std::vector<UserSequence> train_sequences() const;
};

struct BuildReport {
  int excluded_users = 0;  // users with fewer than 3 interactions
};

struct Preprocessed {
  SplitDataset split;
  ItemVocabulary vocab;
  BuildReport report;
};

/// Sorts each user's interactions by timestamp (stable), maps ids to dense
/// indices and keeps users with at least 3 interactions.
Preprocessed build_split(const std::vector<Interaction>& interactions, int max_len);

/// Keeps the last max_len items.
ItemSeq truncate_recent(const ItemSeq& seq, int max_len);

struct DatasetStats {
  int64_t users = 0;
  int64_t items = 0;
  int64_t interactions = 0;
  double average_length = 0.0;
  double sparsity = 0.0;  // 1 - interactions / (users * items)
};

DatasetStats compute_stats(const SplitDataset& split);

// Canonical on-disk layout of a preprocessed dataset directory:
//   split.jsonl  {"user": int, "items": [int, ...]} per line
//   stats.json   DatasetStats plus max_len
//   vocab.tsv    index<TAB>raw item id
//   users.tsv    index<TAB>raw user id
void write_dataset(const std::filesystem::path& dir, const Preprocessed& data);
SplitDataset read_dataset(const std::filesystem::path& dir);
/// Canonical split.jsonl text; dataset hashes are taken over this.
std::string split_jsonl_text(const SplitDataset& split);
void write_split_jsonl(const std::filesystem::path& path, const SplitDataset& split);
SplitDataset read_split_jsonl(const std::filesystem::path& path, int max_len);

/// Content hash of the dataset's split file, git blob style (SHA-1 hex).
std::string dataset_hash(const std::filesystem::path& dir);
std::string git_blob_hash(const std::string& content);

/// Preference-structured synthetic log: items form clusters, each user walks
/// mostly forward through one cluster's item cycle.
std::vector<Interaction> make_synthetic_log(int users, int items, uint64_t seed);

}  // namespace hclrec
