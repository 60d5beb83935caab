#include "hclrec/corpus.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "hclrec/error.hpp"
#include "hclrec/rng.hpp"
#include "json.hpp"

namespace hclrec {

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int64_t parse_timestamp(const std::string& field, size_t line_no) {
  const std::string s = trim(field);
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec == std::errc() && ptr == s.data() + s.size()) return value;
  // Some dumps write timestamps as floats ("1.3e9").
  try {
    size_t used = 0;
    const double d = std::stod(s, &used);
    if (used == s.size() && std::isfinite(d)) return static_cast<int64_t>(d);
  } catch (const std::exception&) {
  }
  throw DataError("line " + std::to_string(line_no) + ": bad timestamp '" + s + "'");
}

// Days since 1970-01-01 for a proleptic Gregorian date.
int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

int64_t parse_yelp_date(const std::string& s, size_t line_no) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  const int n = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &sec);
  if (n < 3 || mo < 1 || mo > 12 || d < 1 || d > 31) {
    throw DataError("line " + std::to_string(line_no) + ": bad date '" + s + "'");
  }
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
         h * 3600 + mi * 60 + sec;
}

Interaction make_interaction(std::string user, std::string item, int64_t ts,
                             size_t line_no) {
  user = trim(user);
  item = trim(item);
  if (user.empty() || item.empty()) {
    throw DataError("line " + std::to_string(line_no) + ": empty user or item id");
  }
  return {std::move(user), std::move(item), ts};
}

}  // namespace

InputFormat parse_input_format(const std::string& name) {
  if (name == "tsv") return InputFormat::Tsv;
  if (name == "amazon-csv") return InputFormat::AmazonCsv;
  if (name == "yelp-json") return InputFormat::YelpJson;
  throw ConfigError("unknown input format '" + name + "' (expected tsv, amazon-csv, yelp-json)");
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path,
                                           InputFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::vector<Interaction> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;

    switch (format) {
      case InputFormat::Tsv: {
        auto f = line.find('\t') != std::string::npos ? split_fields(line, '\t')
                                                      : split_whitespace(line);
        if (f.size() < 3) {
          throw DataError("line " + std::to_string(line_no) + ": expected user<TAB>item<TAB>timestamp");
        }
        out.push_back(make_interaction(f[0], f[1], parse_timestamp(f[2], line_no), line_no));
        break;
      }
      case InputFormat::AmazonCsv: {
        auto f = split_fields(line, ',');
        if (f.size() < 4) {
          throw DataError("line " + std::to_string(line_no) + ": expected user,item,rating,timestamp");
        }
        out.push_back(make_interaction(f[0], f[1], parse_timestamp(f[3], line_no), line_no));
        break;
      }
      case InputFormat::YelpJson: {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.contains("user_id") || !j.contains("business_id") ||
            !j["user_id"].is_string() || !j["business_id"].is_string()) {
          throw DataError("line " + std::to_string(line_no) + ": missing user_id/business_id");
        }
        int64_t ts = 0;
        if (j.contains("date") && j["date"].is_string()) {
          ts = parse_yelp_date(j["date"].get<std::string>(), line_no);
        } else if (j.contains("timestamp") && j["timestamp"].is_number()) {
          ts = j["timestamp"].get<int64_t>();
        } else {
          throw DataError("line " + std::to_string(line_no) + ": missing date");
        }
        out.push_back(make_interaction(j["user_id"].get<std::string>(),
                                       j["business_id"].get<std::string>(), ts, line_no));
        break;
      }
    }
  }
  return out;
}

std::vector<Interaction> k_core_filter(const std::vector<Interaction>& interactions, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  std::vector<char> alive(interactions.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, int> user_count, item_count;
    for (size_t i = 0; i < interactions.size(); ++i) {
      if (!alive[i]) continue;
      ++user_count[interactions[i].user];
      ++item_count[interactions[i].item];
    }
    for (size_t i = 0; i < interactions.size(); ++i) {
      if (!alive[i]) continue;
      if (user_count[interactions[i].user] < k || item_count[interactions[i].item] < k) {
        alive[i] = 0;
        changed = true;
      }
    }
  }
  std::vector<Interaction> out;
  for (size_t i = 0; i < interactions.size(); ++i) {
    if (alive[i]) out.push_back(interactions[i]);
  }
  return out;
}

ItemId ItemVocabulary::add(const std::string& raw) {
  auto it = forward_.find(raw);
  if (it != forward_.end()) return it->second;
  backward_.push_back(raw);
  const auto index = static_cast<ItemId>(backward_.size());
  forward_.emplace(raw, index);
  return index;
}

ItemId ItemVocabulary::forward(const std::string& raw) const {
  auto it = forward_.find(raw);
  if (it == forward_.end()) throw DataError("unknown item id '" + raw + "'");
  return it->second;
}

const std::string& ItemVocabulary::backward(ItemId index) const {
  if (index < 1 || index > size()) throw DataError("item index out of range");
  return backward_[static_cast<size_t>(index - 1)];
}

ItemSeq SplitDataset::train(size_t u) const {
  const auto& s = sequences.at(u).items;
  return ItemSeq(s.begin(), s.end() - 2);
}

std::pair<ItemSeq, ItemId> SplitDataset::valid(size_t u) const {
  const auto& s = sequences.at(u).items;
  return {ItemSeq(s.begin(), s.end() - 2), s[s.size() - 2]};
}

std::pair<ItemSeq, ItemId> SplitDataset::test(size_t u) const {
  const auto& s = sequences.at(u).items;
  return {ItemSeq(s.begin(), s.end() - 1), s.back()};
}

std::vector<UserSequence> SplitDataset::train_sequences() const {
  std::vector<UserSequence> out;
  out.reserve(sequences.size());
  for (size_t u = 0; u < sequences.size(); ++u) {
    out.push_back({sequences[u].user_index, train(u)});
  }
  return out;
}

Preprocessed build_split(const std::vector<Interaction>& interactions, int max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<size_t>> by_user;
  for (size_t i = 0; i < interactions.size(); ++i) {
    auto [it, inserted] = by_user.try_emplace(interactions[i].user);
    if (inserted) user_order.push_back(interactions[i].user);
    it->second.push_back(i);
  }

  Preprocessed out;
  out.split.max_len = max_len;
  for (const auto& user : user_order) {
    auto rows = by_user[user];
    if (rows.size() < 3) {
      ++out.report.excluded_users;
      continue;
    }
    std::stable_sort(rows.begin(), rows.end(), [&](size_t a, size_t b) {
      return interactions[a].timestamp < interactions[b].timestamp;
    });
    UserSequence seq;
    seq.user_index = static_cast<int32_t>(out.split.sequences.size());
    for (size_t r : rows) seq.items.push_back(out.vocab.add(interactions[r].item));
    out.split.sequences.push_back(std::move(seq));
    out.split.user_names.push_back(user);
  }
  out.split.num_items = out.vocab.size();
  return out;
}

ItemSeq truncate_recent(const ItemSeq& seq, int max_len) {
  if (static_cast<int>(seq.size()) <= max_len) return seq;
  return ItemSeq(seq.end() - max_len, seq.end());
}

DatasetStats compute_stats(const SplitDataset& split) {
  DatasetStats s;
  s.users = static_cast<int64_t>(split.sequences.size());
  s.items = split.num_items;
  for (const auto& seq : split.sequences) s.interactions += static_cast<int64_t>(seq.items.size());
  if (s.users > 0) s.average_length = static_cast<double>(s.interactions) / static_cast<double>(s.users);
  if (s.users > 0 && s.items > 0) {
    s.sparsity = 1.0 - static_cast<double>(s.interactions) /
                           (static_cast<double>(s.users) * static_cast<double>(s.items));
  }
  return s;
}

std::string split_jsonl_text(const SplitDataset& split) {
  std::ostringstream out;
  for (const auto& seq : split.sequences) {
    out << "{\"user\": " << seq.user_index << ", \"items\": [";
    for (size_t i = 0; i < seq.items.size(); ++i) {
      if (i) out << ", ";
      out << seq.items[i];
    }
    out << "]}\n";
  }
  return out.str();
}

void write_split_jsonl(const std::filesystem::path& path, const SplitDataset& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << split_jsonl_text(split);
}

SplitDataset read_split_jsonl(const std::filesystem::path& path, int max_len) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  SplitDataset split;
  split.max_len = max_len;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      UserSequence seq;
      seq.user_index = j.at("user").get<int32_t>();
      seq.items = j.at("items").get<ItemSeq>();
      if (seq.items.size() < 3) {
        throw DataError("line " + std::to_string(line_no) + ": sequence shorter than 3");
      }
      for (ItemId v : seq.items) {
        if (v < 1) throw DataError("line " + std::to_string(line_no) + ": item index < 1");
        split.num_items = std::max(split.num_items, v);
      }
      if (seq.user_index != static_cast<int32_t>(split.sequences.size())) {
        throw DataError("line " + std::to_string(line_no) + ": user indices must be contiguous");
      }
      split.sequences.push_back(std::move(seq));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return split;
}

void write_dataset(const std::filesystem::path& dir, const Preprocessed& data) {
  std::filesystem::create_directories(dir);
  write_split_jsonl(dir / "split.jsonl", data.split);

  const auto s = compute_stats(data.split);
  nlohmann::json stats = {
      {"users", s.users},
      {"items", s.items},
      {"interactions", s.interactions},
      {"average_length", s.average_length},
      {"sparsity", s.sparsity},
      {"max_len", data.split.max_len},
      {"excluded_users", data.report.excluded_users},
  };
  std::ofstream(dir / "stats.json") << stats.dump(2) << "\n";

  std::ofstream vocab(dir / "vocab.tsv");
  for (ItemId i = 1; i <= data.vocab.size(); ++i) vocab << i << '\t' << data.vocab.backward(i) << '\n';
  std::ofstream users(dir / "users.tsv");
  for (size_t u = 0; u < data.split.user_names.size(); ++u) {
    users << u << '\t' << data.split.user_names[u] << '\n';
  }
}

SplitDataset read_dataset(const std::filesystem::path& dir) {
  int max_len = 50;
  int64_t items = 0;
  if (std::ifstream stats_in(dir / "stats.json"); stats_in) {
    try {
      auto stats = nlohmann::json::parse(stats_in);
      max_len = stats.value("max_len", 50);
      items = stats.value("items", int64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / "stats.json").string() + ": " + e.what());
    }
  }
  auto split = read_split_jsonl(dir / "split.jsonl", max_len);
  // The vocabulary can be larger than the largest index seen in sequences.
  split.num_items = std::max<int32_t>(split.num_items, static_cast<int32_t>(items));
  return split;
}

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string dataset_hash(const std::filesystem::path& dir) {
  std::ifstream in(dir / "split.jsonl", std::ios::binary);
  if (!in) throw DataError("cannot open " + (dir / "split.jsonl").string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return git_blob_hash(buf.str());
}

std::vector<Interaction> make_synthetic_log(int users, int items, uint64_t seed) {
  constexpr int kClusters = 5;
  if (users < 1 || items < kClusters * 2) throw ConfigError("synthetic log too small");
  Rng rng(seed);
  const int cluster_size = items / kClusters;
  std::vector<Interaction> out;
  for (int u = 0; u < users; ++u) {
    const int cluster = static_cast<int>(rng.index(kClusters));
    const int len = 8 + static_cast<int>(rng.index(23));  // 8..30
    int pos = static_cast<int>(rng.index(static_cast<uint64_t>(cluster_size)));
    for (int t = 0; t < len; ++t) {
      int item;
      const double r = rng.uniform();
      if (r < 0.1) {
        item = static_cast<int>(rng.index(static_cast<uint64_t>(items)));  // noise
      } else {
        item = cluster * cluster_size + pos;
      }
      out.push_back({"u" + std::to_string(u), "i" + std::to_string(item), 1000 + t});
      // Mostly step forward along the cluster cycle, sometimes skip one.
      pos = (pos + (rng.uniform() < 0.8 ? 1 : 2)) % cluster_size;
    }
  }
  return out;
}

}  // namespace hclrec
