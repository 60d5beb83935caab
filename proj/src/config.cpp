#include "hclrec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "hclrec/error.hpp"

namespace hclrec {

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(to_double(key, tok));
  }
  return out;
}

std::string join(const std::vector<double>& xs) {
  std::ostringstream out;
  out.precision(17);
  for (size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << xs[i];
  return out.str();
}

std::string join(const std::vector<AugmentationKind>& ks) {
  std::string out;
  for (size_t i = 0; i < ks.size(); ++i) out += (i ? "," : "") + to_string(ks[i]);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"batch_size", [](auto& c, auto& k, auto& v) { c.batch_size = to_int(k, v); }},
      {"epochs", [](auto& c, auto& k, auto& v) { c.epochs = to_int(k, v); }},
      {"warmup_epochs", [](auto& c, auto& k, auto& v) { c.warmup_epochs = to_int(k, v); }},
      {"learning_rate", [](auto& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"adam_beta1", [](auto& c, auto& k, auto& v) { c.adam_beta1 = to_double(k, v); }},
      {"adam_beta2", [](auto& c, auto& k, auto& v) { c.adam_beta2 = to_double(k, v); }},
      {"adam_eps", [](auto& c, auto& k, auto& v) { c.adam_eps = to_double(k, v); }},
      {"dim", [](auto& c, auto& k, auto& v) { c.dim = to_int(k, v); }},
      {"heads", [](auto& c, auto& k, auto& v) { c.heads = to_int(k, v); }},
      {"layers", [](auto& c, auto& k, auto& v) { c.layers = to_int(k, v); }},
      {"max_len", [](auto& c, auto& k, auto& v) { c.max_len = to_int(k, v); }},
      {"levels", [](auto& c, auto& k, auto& v) { c.levels = to_int(k, v); }},
      {"dropout", [](auto& c, auto& k, auto& v) { c.dropout = to_double(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"early_stop_patience", [](auto& c, auto& k, auto& v) { c.early_stop_patience = to_int(k, v); }},
      {"grad_clip", [](auto& c, auto& k, auto& v) { c.grad_clip = to_double(k, v); }},
      {"lambdas", [](auto& c, auto& k, auto& v) { c.lambdas = to_doubles(k, v); }},
      {"temperatures", [](auto& c, auto& k, auto& v) { c.temperatures = to_doubles(k, v); }},
      {"threshold", [](auto& c, auto& k, auto& v) { c.threshold = to_int(k, v); }},
      {"intensity.insert", [](auto& c, auto& k, auto& v) { c.intensities.insert = to_double(k, v); }},
      {"intensity.substitute", [](auto& c, auto& k, auto& v) { c.intensities.substitute = to_double(k, v); }},
      {"intensity.mask", [](auto& c, auto& k, auto& v) { c.intensities.mask = to_double(k, v); }},
      {"intensity.reorder", [](auto& c, auto& k, auto& v) { c.intensities.reorder = to_double(k, v); }},
      {"intensity.crop", [](auto& c, auto& k, auto& v) { c.intensities.crop = to_double(k, v); }},
      {"short_set", [](auto& c, auto&, auto& v) { c.short_set = parse_augmentation_set(v); }},
      {"long_set", [](auto& c, auto&, auto& v) { c.long_set = parse_augmentation_set(v); }},
      {"similarity.weighting", [](auto& c, auto&, auto& v) { c.weighting = parse_weighting(v); }},
      {"pooling", [](auto& c, auto&, auto& v) { c.pooling = parse_pooling(v); }},
      {"cl_similarity", [](auto& c, auto&, auto& v) { c.similarity = parse_similarity(v); }},
      {"contrastive", [](auto& c, auto& k, auto& v) { c.contrastive = to_bool(k, v); }},
      {"use_blocks", [](auto& c, auto& k, auto& v) { c.use_blocks = to_bool(k, v); }},
      {"flat_aug", [](auto& c, auto& k, auto& v) { c.flat_aug = to_bool(k, v); }},
      {"exclude_seen", [](auto& c, auto& k, auto& v) { c.exclude_seen = to_bool(k, v); }},
      {"eval_batch_size", [](auto& c, auto& k, auto& v) { c.eval_batch_size = to_int(k, v); }},
      {"audit_views", [](auto& c, auto& k, auto& v) { c.audit_views = to_bool(k, v); }},
  };
  return table;
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, trim(value));
}

void TrainConfig::validate() const {
  if (batch_size < 1 || epochs < 1 || dim < 1 || heads < 1 || layers < 1 || max_len < 1 || levels < 1) {
    throw ConfigError("batch_size, epochs, dim, heads, layers, max_len and levels must be positive");
  }
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw ConfigError("warmup_epochs must be in [0, epochs)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must be in [0, 1)");
  }
  if (early_stop_patience < 0 || grad_clip < 0.0) throw ConfigError("patience and grad_clip must be >= 0");
  if (levels > static_cast<int>(kAllAugmentations.size())) throw ConfigError("levels cannot exceed 5");
  model_config(1).validate();
  loss_weights().validate(levels);
  policy().validate();
}

LossWeights TrainConfig::loss_weights() const {
  LossWeights w = LossWeights::defaults(levels);
  if (!lambdas.empty()) w.lambdas = lambdas;
  if (!temperatures.empty()) w.temperatures = temperatures;
  return w;
}

AugmentationPolicy TrainConfig::policy() const {
  AugmentationPolicy p;
  p.short_set = short_set;
  p.long_set = long_set;
  p.threshold = threshold;
  p.max_level = levels;
  p.max_len = max_len;
  p.intensities = intensities;
  return p;
}

ModelConfig TrainConfig::model_config(int32_t num_items) const {
  ModelConfig m;
  m.num_items = num_items;
  m.dim = dim;
  m.heads = heads;
  m.layers = layers;
  m.max_len = max_len;
  m.num_blocks = (use_blocks && !flat_aug && contrastive) ? levels - 1 : 0;
  m.dropout = dropout;
  return m;
}

nlohmann::json TrainConfig::to_json() const {
  const auto w = loss_weights();
  return {
      {"batch_size", batch_size},
      {"epochs", epochs},
      {"warmup_epochs", warmup_epochs},
      {"learning_rate", learning_rate},
      {"adam_beta1", adam_beta1},
      {"adam_beta2", adam_beta2},
      {"adam_eps", adam_eps},
      {"dim", dim},
      {"heads", heads},
      {"layers", layers},
      {"max_len", max_len},
      {"levels", levels},
      {"dropout", dropout},
      {"seed", seed},
      {"early_stop_patience", early_stop_patience},
      {"grad_clip", grad_clip},
      {"lambdas", join(w.lambdas)},
      {"temperatures", join(w.temperatures)},
      {"threshold", threshold},
      {"intensity.insert", intensities.insert},
      {"intensity.substitute", intensities.substitute},
      {"intensity.mask", intensities.mask},
      {"intensity.reorder", intensities.reorder},
      {"intensity.crop", intensities.crop},
      {"short_set", join(short_set)},
      {"long_set", join(long_set)},
      {"similarity.weighting", to_string(weighting)},
      {"pooling", to_string(pooling)},
      {"cl_similarity", to_string(similarity)},
      {"contrastive", contrastive},
      {"use_blocks", use_blocks},
      {"flat_aug", flat_aug},
      {"exclude_seen", exclude_seen},
      {"eval_batch_size", eval_batch_size},
      {"audit_views", audit_views},
  };
}

void apply_json(TrainConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (size_t i = 0; i < value.size(); ++i) {
        text += (i ? "," : "") + (value[i].is_string() ? value[i].get<std::string>() : value[i].dump());
      }
    } else {
      text = value.dump();
    }
    cfg.set(key, text);
  }
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string head = trim(text);
  if (!head.empty() && head.front() == '{') {
    try {
      apply_json(base, nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return base;
  }
  std::stringstream lines(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    cfg.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
}

void apply_environment(TrainConfig& cfg) {
  if (const char* s = std::getenv("HCLREC_SEED"); s != nullptr && *s != '\0') {
    cfg.set("seed", s);
  }
}

}  // namespace hclrec
