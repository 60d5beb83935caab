#include "hclrec/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "hclrec/error.hpp"

namespace hclrec {

namespace {

// Scores are accumulated in 32.32 fixed point so the result does not depend on
// the order in which users are visited.
constexpr double kFixedScale = 4294967296.0;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated similarity cache");
  return v;
}

}  // namespace

SimilarityWeighting parse_weighting(const std::string& name) {
  if (name == "iuf-log") return SimilarityWeighting::IufLog;
  if (name == "uniform") return SimilarityWeighting::Uniform;
  throw ConfigError("unknown similarity weighting '" + name + "'");
}

std::string to_string(SimilarityWeighting w) {
  return w == SimilarityWeighting::IufLog ? "iuf-log" : "uniform";
}

double user_weight(size_t sequence_length, SimilarityWeighting weighting) {
  if (weighting == SimilarityWeighting::Uniform) return 1.0;
  return 1.0 / std::log(1.0 + static_cast<double>(sequence_length));
}

SimilarityIndex SimilarityIndex::build(std::span<const UserSequence> train_sequences,
                                       int32_t num_items, SimilarityWeighting weighting,
                                       int top_k) {
  if (train_sequences.empty()) throw DataError("similarity index needs a non-empty training split");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");

  std::vector<std::unordered_map<ItemId, int64_t>> fixed(static_cast<size_t>(num_items) + 1);
  for (const auto& seq : train_sequences) {
    if (seq.items.empty()) continue;
    const auto w = static_cast<int64_t>(std::llround(user_weight(seq.items.size(), weighting) * kFixedScale));
    std::vector<ItemId> distinct(seq.items.begin(), seq.items.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (size_t a = 0; a < distinct.size(); ++a) {
      if (distinct[a] < 1 || distinct[a] > num_items) throw DataError("item index out of range in training split");
      for (size_t b = a + 1; b < distinct.size(); ++b) {
        fixed[static_cast<size_t>(distinct[a])][distinct[b]] += w;
        fixed[static_cast<size_t>(distinct[b])][distinct[a]] += w;
      }
    }
  }

  SimilarityIndex index;
  index.num_items_ = num_items;
  index.top_k_ = top_k;
  index.rows_.resize(fixed.size());
  index.top_.resize(fixed.size());
  for (size_t i = 1; i < fixed.size(); ++i) {
    std::vector<std::pair<ItemId, int64_t>> cands(fixed[i].begin(), fixed[i].end());
    for (const auto& [j, s] : cands) index.rows_[i][j] = static_cast<double>(s) / kFixedScale;
    std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    const size_t keep = std::min(cands.size(), static_cast<size_t>(top_k));
    for (size_t r = 0; r < keep; ++r) index.top_[i].push_back(cands[r].first);
  }
  return index;
}

SimilarityIndex SimilarityIndex::from_neighbors(
    int32_t num_items, const std::unordered_map<ItemId, std::vector<ItemId>>& nbrs) {
  SimilarityIndex index;
  index.num_items_ = num_items;
  index.rows_.resize(static_cast<size_t>(num_items) + 1);
  index.top_.resize(static_cast<size_t>(num_items) + 1);
  size_t max_k = 1;
  for (const auto& [i, list] : nbrs) {
    if (i < 1 || i > num_items) throw ConfigError("neighbour list for out-of-range item");
    index.top_[static_cast<size_t>(i)] = list;
    double s = static_cast<double>(list.size());
    for (ItemId j : list) {
      index.rows_[static_cast<size_t>(i)][j] = s;
      index.rows_[static_cast<size_t>(j)].try_emplace(i, s);
      s -= 1.0;
    }
    max_k = std::max(max_k, list.size());
  }
  index.top_k_ = static_cast<int>(max_k);
  return index;
}

double SimilarityIndex::score(ItemId i, ItemId j) const {
  if (i < 1 || i > num_items_ || i == j) return 0.0;
  const auto& row = rows_[static_cast<size_t>(i)];
  auto it = row.find(j);
  return it == row.end() ? 0.0 : it->second;
}

std::span<const ItemId> SimilarityIndex::neighbors(ItemId item) const {
  if (item < 1 || item > num_items_) return {};
  return top_[static_cast<size_t>(item)];
}

ItemId SimilarityIndex::most_similar(ItemId item) const {
  auto n = neighbors(item);
  return n.empty() ? 0 : n.front();
}

void SimilarityIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write("HCLSIM01", 8);
  write_pod(out, num_items_);
  write_pod(out, top_k_);
  for (size_t i = 1; i < rows_.size(); ++i) {
    std::vector<std::pair<ItemId, double>> row(rows_[i].begin(), rows_[i].end());
    std::sort(row.begin(), row.end());
    write_pod(out, static_cast<uint32_t>(row.size()));
    for (const auto& [j, s] : row) {
      write_pod(out, j);
      write_pod(out, s);
    }
    write_pod(out, static_cast<uint32_t>(top_[i].size()));
    for (ItemId j : top_[i]) write_pod(out, j);
  }
}

SimilarityIndex SimilarityIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "HCLSIM01") throw DataError("not a similarity cache: " + path.string());
  SimilarityIndex index;
  index.num_items_ = read_pod<int32_t>(in);
  index.top_k_ = read_pod<int>(in);
  index.rows_.resize(static_cast<size_t>(index.num_items_) + 1);
  index.top_.resize(static_cast<size_t>(index.num_items_) + 1);
  for (size_t i = 1; i < index.rows_.size(); ++i) {
    const auto n = read_pod<uint32_t>(in);
    for (uint32_t r = 0; r < n; ++r) {
      const auto j = read_pod<ItemId>(in);
      index.rows_[i][j] = read_pod<double>(in);
    }
    const auto k = read_pod<uint32_t>(in);
    for (uint32_t r = 0; r < k; ++r) index.top_[i].push_back(read_pod<ItemId>(in));
  }
  return index;
}

SimilarityIndex load_or_build_index(const std::filesystem::path& cache_path, const std::string& key,
                                    std::span<const UserSequence> train_sequences,
                                    int32_t num_items, SimilarityWeighting weighting) {
  const auto key_path = std::filesystem::path(cache_path).concat(".key");
  if (std::filesystem::exists(cache_path) && std::filesystem::exists(key_path)) {
    std::ifstream kin(key_path);
    std::string stored;
    std::getline(kin, stored);
    if (stored == key) return SimilarityIndex::load(cache_path);
  }
  auto index = SimilarityIndex::build(train_sequences, num_items, weighting);
  index.save(cache_path);
  std::ofstream(key_path) << key << '\n';
  return index;
}

}  // namespace hclrec
