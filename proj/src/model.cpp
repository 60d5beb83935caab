#include "hclrec/model.hpp"

#include <cstring>
#include <map>
#include <fstream>

#include "hclrec/error.hpp"
#include "json.hpp"

namespace hclrec {

Pooling parse_pooling(const std::string& name) {
  if (name == "last") return Pooling::Last;
  if (name == "mean") return Pooling::Mean;
  if (name == "flatten") return Pooling::Flatten;
  throw ConfigError("unknown pooling '" + name + "'");
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::Last: return "last";
    case Pooling::Mean: return "mean";
    case Pooling::Flatten: return "flatten";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (num_items < 1) throw ConfigError("model needs at least one item");
  if (dim < 1 || heads < 1 || layers < 1 || max_len < 1 || num_blocks < 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (dim % heads != 0) throw ConfigError("dim must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

int64_t expected_parameter_count(const ModelConfig& c) {
  const int64_t d = c.dim;
  const int64_t layer = 12 * d * d + 9 * d;
  const int64_t block = layer + 8 * d * d + 5 * d;
  return (c.num_items + 1) * d + static_cast<int64_t>(c.max_len) * d + c.layers * layer + 2 * d +
         c.num_blocks * block;
}

Model::Model(const ModelConfig& cfg)
    : cfg_(cfg),
      item_embedding_("item_embedding", cfg.num_items + 1, cfg.dim),
      position_embedding_("position_embedding", cfg.max_len, cfg.dim),
      final_ln_("encoder.final_ln", cfg.dim) {
  cfg_.validate();
  for (int l = 0; l < cfg.layers; ++l) {
    layers_.emplace_back("encoder.layers." + std::to_string(l), cfg.dim, cfg.heads);
  }
  for (int b = 0; b < cfg.num_blocks; ++b) {
    blocks_.emplace_back("blocks." + std::to_string(b), cfg.dim, cfg.heads);
  }
  block_calls_.assign(blocks_.size(), 0);
  reset_counters();
}

void Model::initialize(uint64_t seed) {
  Rng rng(seed);
  for (Parameter* p : parameters()) {
    const auto& n = p->name;
    const auto ends_with = [&](const char* suffix) {
      const size_t k = std::strlen(suffix);
      return n.size() >= k && n.compare(n.size() - k, k, suffix) == 0;
    };
    if (ends_with(".gamma")) {
      p->value.setOnes();
    } else if (ends_with(".beta") || ends_with(".b1") || ends_with(".b2")) {
      p->value.setZero();
    } else {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.truncated_normal(0.02);
    }
    p->grad.setZero();
  }
  clear_padding();
}

HiddenStates Model::embed(const IndexBatch& batch) const {
  HiddenStates h;
  h.batch = batch.batch;
  h.length = batch.length;
  h.values = Mat::Zero(static_cast<Eigen::Index>(batch.batch) * batch.length, cfg_.dim);
  h.mask.assign(batch.items.size(), 0);
  if (batch.position_offset + batch.length > cfg_.max_len) throw ConfigError("batch longer than max_len");
  for (int b = 0; b < batch.batch; ++b) {
    for (int t = 0; t < batch.length; ++t) {
      const ItemId item = batch.at(b, t);
      if (item < 0 || item > cfg_.num_items) throw DataError("item index out of range: " + std::to_string(item));
      if (item == 0) continue;
      h.mask[static_cast<size_t>(b) * batch.length + t] = 1;
      h.row(b, t) = item_embedding_.value.row(item) + position_embedding_.value.row(batch.position_offset + t);
    }
  }
  return h;
}

HiddenStates Model::encode(const HiddenStates& h0, Rng* dropout, EncoderTrace* trace) const {
  const double rate = dropout ? cfg_.dropout : 0.0;
  if (trace) trace->layers.assign(layers_.size(), {});
  Packing local;
  Packing& seg = trace ? trace->packing : local;
  seg = Packing::from_mask(h0.batch, h0.length, h0.mask);
  Mat x = seg.pack(h0.values);
  for (size_t l = 0; l < layers_.size(); ++l) {
    x = layers_[l].forward(x, seg, rate, dropout, trace ? &trace->layers[l] : nullptr);
  }
  HiddenStates out;
  out.batch = h0.batch;
  out.length = h0.length;
  out.mask = h0.mask;
  out.values = seg.unpack(final_ln_.forward(x, trace ? &trace->final_ln : nullptr), h0.values.rows());
  return out;
}

HiddenStates Model::forward(const IndexBatch& batch, Rng* dropout, EncoderTrace* trace) const {
  HiddenStates h0 = embed(batch);
  Mat drop = dropout_mask(h0.values.rows(), h0.values.cols(), dropout ? cfg_.dropout : 0.0, dropout);
  if (drop.size() > 0) h0.values.array() *= drop.array();
  if (trace) {
    trace->batch = batch;
    trace->mask = h0.mask;
    trace->embed_drop = std::move(drop);
  }
  return encode(h0, dropout, trace);
}

void Model::backward(const EncoderTrace& trace, const Mat& d_hidden) {
  const int batch = trace.batch.batch;
  const int length = trace.batch.length;
  const Packing& seg = trace.packing;
  Mat dx = final_ln_.backward(trace.final_ln, seg.pack(d_hidden));
  for (size_t l = layers_.size(); l-- > 0;) {
    dx = layers_[l].backward(trace.layers[l], seg, dx);
  }
  dx = seg.unpack(dx, d_hidden.rows());
  if (trace.embed_drop.size() > 0) dx.array() *= trace.embed_drop.array();
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < length; ++t) {
      const ItemId item = trace.batch.at(b, t);
      if (item == 0) continue;
      const auto r = static_cast<Eigen::Index>(b) * length + t;
      item_embedding_.grad.row(item) += dx.row(r);
      position_embedding_.grad.row(trace.batch.position_offset + t) += dx.row(r);
    }
  }
}

HiddenStates Model::block_forward(const HiddenStates& h, size_t block, Rng* dropout,
                                  Block::Cache* cache) const {
  if (block >= blocks_.size()) throw ConfigError("block index out of range");
  ++block_calls_[block];
  HiddenStates out;
  out.batch = h.batch;
  out.length = h.length;
  out.mask = h.mask;
  const Packing seg = Packing::from_mask(h.batch, h.length, h.mask);
  out.values = seg.unpack(
      blocks_[block].forward(seg.pack(h.values), seg, dropout ? cfg_.dropout : 0.0, dropout, cache),
      h.values.rows());
  return out;
}

HiddenStates Model::hierarchical_forward(const HiddenStates& h, int level, Rng* dropout,
                                         HierarchyTrace* trace) const {
  if (level < 1 || level > static_cast<int>(blocks_.size()) + 1) {
    throw ConfigError("view level " + std::to_string(level) + " out of range");
  }
  const auto m = static_cast<size_t>(level - 1);
  if (routing_.calls.size() <= m) {
    routing_.calls.resize(m + 1, 0);
    routing_.blocks_traversed.resize(m + 1, 0);
  }
  ++routing_.calls[m];
  if (m == 0) {
    if (trace) {
      trace->batch = h.batch;
      trace->length = h.length;
      trace->mask = h.mask;
      trace->packing = {};
      trace->blocks.clear();
    }
    return h;
  }
  Packing local;
  Packing& seg = trace ? trace->packing : local;
  seg = Packing::from_mask(h.batch, h.length, h.mask);
  if (trace) {
    trace->batch = h.batch;
    trace->length = h.length;
    trace->mask = h.mask;
    trace->blocks.assign(m, {});
  }
  const double rate = dropout ? cfg_.dropout : 0.0;
  Mat x = seg.pack(h.values);
  for (size_t b = 0; b < m; ++b) {
    ++block_calls_[b];
    x = blocks_[b].forward(x, seg, rate, dropout, trace ? &trace->blocks[b] : nullptr);
    ++routing_.blocks_traversed[m];
  }
  HiddenStates out;
  out.batch = h.batch;
  out.length = h.length;
  out.mask = h.mask;
  out.values = seg.unpack(x, h.values.rows());
  return out;
}

Mat Model::hierarchical_backward(const HierarchyTrace& trace, const Mat& d_out) {
  if (trace.blocks.empty()) return d_out;
  Mat d = trace.packing.pack(d_out);
  for (size_t b = trace.blocks.size(); b-- > 0;) {
    d = blocks_[b].backward(trace.blocks[b], trace.packing, d);
  }
  return trace.packing.unpack(d, d_out.rows());
}

Mat Model::predict_scores(const HiddenStates& h) const {
  const Mat reps = sequence_representation(h, Pooling::Last);
  return reps * item_embedding_.value.bottomRows(cfg_.num_items).transpose();
}

std::vector<Parameter*> Model::encoder_parameters() {
  std::vector<Parameter*> out = {&item_embedding_, &position_embedding_};
  for (auto& l : layers_) {
    for (auto* p : l.parameters()) out.push_back(p);
  }
  for (auto* p : final_ln_.parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> Model::block_parameters() {
  std::vector<Parameter*> out;
  for (auto& b : blocks_) {
    for (auto* p : b.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> Model::parameters() {
  auto out = encoder_parameters();
  for (auto* p : block_parameters()) out.push_back(p);
  return out;
}

int64_t Model::parameter_count() {
  int64_t n = 0;
  for (auto* p : parameters()) n += p->size();
  return n;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void Model::clear_padding() {
  item_embedding_.value.row(0).setZero();
  item_embedding_.grad.row(0).setZero();
}

void Model::remove_blocks() {
  blocks_.clear();
  block_calls_.clear();
  cfg_.num_blocks = 0;
}

void Model::reset_counters() {
  std::fill(block_calls_.begin(), block_calls_.end(), 0);
  routing_.calls.assign(blocks_.size() + 1, 0);
  routing_.blocks_traversed.assign(blocks_.size() + 1, 0);
}

namespace {

std::vector<int> last_real_positions(const HiddenStates& h) {
  std::vector<int> last(static_cast<size_t>(h.batch), -1);
  for (int b = 0; b < h.batch; ++b) {
    for (int t = h.length - 1; t >= 0; --t) {
      if (h.real(b, t)) {
        last[static_cast<size_t>(b)] = t;
        break;
      }
    }
    if (last[static_cast<size_t>(b)] < 0) {
      throw DataError("sequence " + std::to_string(b) + " has no real position");
    }
  }
  return last;
}

}  // namespace

Mat sequence_representation(const HiddenStates& h, Pooling pooling) {
  const auto last = last_real_positions(h);
  const Eigen::Index d = h.values.cols();
  switch (pooling) {
    case Pooling::Last: {
      Mat out(h.batch, d);
      for (int b = 0; b < h.batch; ++b) out.row(b) = h.row(b, last[static_cast<size_t>(b)]);
      return out;
    }
    case Pooling::Mean: {
      Mat out = Mat::Zero(h.batch, d);
      for (int b = 0; b < h.batch; ++b) {
        int n = 0;
        for (int t = 0; t < h.length; ++t) {
          if (!h.real(b, t)) continue;
          out.row(b) += h.row(b, t);
          ++n;
        }
        out.row(b) /= static_cast<double>(n);
      }
      return out;
    }
    case Pooling::Flatten: {
      Mat out(h.batch, h.length * d);
      for (int b = 0; b < h.batch; ++b) {
        for (int t = 0; t < h.length; ++t) out.block(b, t * d, 1, d) = h.row(b, t);
      }
      return out;
    }
  }
  return {};
}

Mat representation_backward(const HiddenStates& h, const Mat& d_reps, Pooling pooling) {
  const auto last = last_real_positions(h);
  const Eigen::Index d = h.values.cols();
  Mat dh = Mat::Zero(h.values.rows(), d);
  for (int b = 0; b < h.batch; ++b) {
    const auto r0 = static_cast<Eigen::Index>(b) * h.length;
    switch (pooling) {
      case Pooling::Last:
        dh.row(r0 + last[static_cast<size_t>(b)]) = d_reps.row(b);
        break;
      case Pooling::Mean: {
        int n = 0;
        for (int t = 0; t < h.length; ++t) n += h.real(b, t) ? 1 : 0;
        for (int t = 0; t < h.length; ++t) {
          if (h.real(b, t)) dh.row(r0 + t) = d_reps.row(b) / static_cast<double>(n);
        }
        break;
      }
      case Pooling::Flatten:
        for (int t = 0; t < h.length; ++t) dh.row(r0 + t) = d_reps.block(b, t * d, 1, d);
        break;
    }
  }
  return dh;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'H', 'C', 'L', 'R', 'E', 'C', 'K', '1'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model, const CheckpointMeta& meta) {
  const auto& c = model.config();
  nlohmann::json header = {
      {"dim", c.dim},           {"heads", c.heads},        {"layers", c.layers},
      {"max_len", c.max_len},   {"num_items", c.num_items}, {"num_blocks", c.num_blocks},
      {"dropout", c.dropout},   {"seed", meta.seed},       {"epoch", meta.epoch},
      {"levels", meta.levels},
  };
  nlohmann::json tensors = nlohmann::json::array();
  for (auto* p : model.parameters()) {
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const uint64_t n = text.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto* p : model.parameters()) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint: " + path.string());
  }
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad checkpoint header: ") + e.what());
  }
  ModelConfig cfg;
  cfg.dim = header.at("dim");
  cfg.heads = header.at("heads");
  cfg.layers = header.at("layers");
  cfg.max_len = header.at("max_len");
  cfg.num_items = header.at("num_items");
  cfg.dropout = header.at("dropout");
  // Count blocks actually stored so stripped archives load as block-free models.
  std::map<std::string, std::pair<int64_t, int64_t>> shapes;
  std::vector<std::string> order;
  for (const auto& t : header.at("tensors")) {
    order.push_back(t.at("name"));
    shapes[order.back()] = {t.at("rows"), t.at("cols")};
  }
  int blocks = 0;
  while (shapes.count("blocks." + std::to_string(blocks) + ".ffn.w1")) ++blocks;
  cfg.num_blocks = blocks;

  Model model(cfg);
  std::map<std::string, Parameter*> by_name;
  for (auto* p : model.parameters()) by_name[p->name] = p;
  for (const auto& name : order) {
    auto it = by_name.find(name);
    const auto [rows, cols] = shapes[name];
    if (it == by_name.end() || it->second->value.rows() != rows || it->second->value.cols() != cols) {
      throw DataError("checkpoint tensor mismatch: " + name);
    }
    in.read(reinterpret_cast<char*>(it->second->value.data()),
            static_cast<std::streamsize>(rows * cols * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint tensor " + name);
    by_name.erase(it);
  }
  if (!by_name.empty()) throw DataError("checkpoint missing tensor " + by_name.begin()->first);
  if (meta) {
    meta->seed = header.value("seed", uint64_t{0});
    meta->epoch = header.value("epoch", 0);
    meta->levels = header.value("levels", 1);
  }
  return model;
}

}  // namespace hclrec
