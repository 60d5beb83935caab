#include "hclrec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "hclrec/error.hpp"
#include "hclrec/objective.hpp"

namespace hclrec {

// --------------------------------------------------------------------- Adam

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const Mat& g = params_[i]->grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    params_[i]->value.array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

// -------------------------------------------------------------------- batch

TrainBatch build_batch(const SplitDataset& data, std::span<const size_t> users, const TrainConfig& cfg,
                       const SimilarityIndex& index, const Rng& epoch_rng, bool with_views,
                       AugmentCounters* counters) {
  TrainBatch batch;
  batch.users.assign(users.begin(), users.end());
  const int T = cfg.max_len;
  const auto V = static_cast<uint64_t>(data.num_items);

  std::vector<ItemSeq> inputs, targets;
  for (size_t u : users) {
    const ItemSeq train = data.train(u);
    ItemSeq in(train.begin(), train.end() - 1);
    ItemSeq tg(train.begin() + 1, train.end());
    inputs.push_back(truncate_recent(in, T));
    targets.push_back(truncate_recent(tg, T));
  }
  batch.inputs = pad_batch(inputs, T, cfg.pooling != Pooling::Flatten);
  const int L = batch.inputs.length;
  batch.targets.assign(batch.inputs.items.size(), 0);
  batch.negatives.assign(batch.inputs.items.size(), 0);

  for (size_t b = 0; b < users.size(); ++b) {
    const ItemSeq train = data.train(users[b]);
    const std::unordered_set<ItemId> seen(train.begin(), train.end());
    Rng rng = epoch_rng.fork({static_cast<uint64_t>(users[b]), 1});
    const auto& tg = targets[b];
    const int pad = L - static_cast<int>(tg.size());
    for (size_t i = 0; i < tg.size(); ++i) {
      const size_t r = b * static_cast<size_t>(L) + static_cast<size_t>(pad) + i;
      batch.targets[r] = tg[i];
      ItemId neg = 0;
      if (seen.size() < V) {
        do {
          neg = static_cast<ItemId>(1 + rng.index(V));
        } while (seen.count(neg));
      } else {
        // Every item has been seen; fall back to anything but the target.
        do {
          neg = static_cast<ItemId>(1 + rng.index(V));
        } while (neg == tg[i] && V > 1);
      }
      batch.negatives[r] = neg;
    }
  }

  if (with_views) {
    const auto policy = cfg.policy();
    for (size_t u : users) {
      const UserSequence seq{data.sequences[u].user_index, truncate_recent(data.train(u), T)};
      const Rng rng = epoch_rng.fork({static_cast<uint64_t>(u), 2});
      batch.views.push_back(cfg.flat_aug ? generate_flat_views(seq, policy, index, rng, counters)
                                         : generate_multilevel_views(seq, policy, index, rng, counters));
    }
  }
  return batch;
}

// ------------------------------------------------------------------ Trainer

Trainer::Trainer(TrainConfig cfg, SplitDataset data, SimilarityIndex index)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      index_(std::move(index)),
      model_((cfg_.validate(), cfg_.model_config(data_.num_items))),
      optimizer_(model_.parameters(), cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      master_(cfg_.seed) {
  if (data_.num_users() == 0) throw DataError("training split is empty");
  model_.initialize(master_.fork({0xC0FFEE}).next());
}

bool Trainer::contrastive_active(int epoch) const {
  return cfg_.contrastive && epoch >= cfg_.warmup_epochs;
}

std::vector<size_t> Trainer::epoch_order(int epoch) const {
  std::vector<size_t> order(data_.num_users());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng = master_.fork({static_cast<uint64_t>(epoch), 0});
  rng.shuffle(std::span<size_t>(order));
  return order;
}

namespace {

std::string describe_batch(const TrainBatch& batch, const StepLosses& l) {
  std::ostringstream out;
  out << "non-finite loss (sr=" << l.sr << ", cl_total=" << l.cl_total << ") in batch of users [";
  for (size_t i = 0; i < batch.users.size(); ++i) out << (i ? "," : "") << batch.users[i];
  out << "]";
  return out.str();
}

}  // namespace

StepLosses joint_loss_and_gradients(Model& model, const TrainBatch& batch, const TrainConfig& cfg,
                                    bool contrastive, const Rng& step_rng) {
  StepLosses out;
  const int levels = cfg.contrastive_levels();
  out.cl.assign(static_cast<size_t>(levels), 0.0);
  model.zero_grad();

  // Next-item objective on the original sequences.
  {
    Rng drop = step_rng.fork({0, 0});
    EncoderTrace trace;
    const HiddenStates h = model.forward(batch.inputs, &drop, &trace);
    Mat dh;
    out.sr = next_item_loss(h, batch.targets, batch.negatives, model.item_embedding().value, &dh,
                            &model.item_embedding().grad);
    model.backward(trace, dh);
  }

  if (contrastive && !batch.views.empty()) {
    const LossWeights w = cfg.loss_weights();
    const bool routed = model.num_blocks() > 0;
    for (int m = 1; m <= levels; ++m) {
      struct Side {
        EncoderTrace trace;
        HierarchyTrace hier;
        HiddenStates out;
        Mat reps;
      };
      std::array<Side, 2> sides;
      for (int s = 0; s < 2; ++s) {
        std::vector<ItemSeq> seqs;
        for (const auto& v : batch.views) {
          const auto& pair = v.pairs[static_cast<size_t>(m - 1)];
          seqs.push_back(s == 0 ? pair.first : pair.second);
        }
        const IndexBatch ib = pad_batch(seqs, cfg.max_len, cfg.pooling != Pooling::Flatten);
        Rng drop = step_rng.fork({static_cast<uint64_t>(m), static_cast<uint64_t>(s + 1)});
        auto& side = sides[static_cast<size_t>(s)];
        const HiddenStates h = model.forward(ib, &drop, &side.trace);
        side.out = routed ? model.hierarchical_forward(h, m, &drop, &side.hier) : h;
        side.reps = sequence_representation(side.out, cfg.pooling);
      }
      Mat da, db;
      const double lambda = w.lambdas[static_cast<size_t>(m - 1)];
      out.cl[static_cast<size_t>(m - 1)] =
          info_nce(sides[0].reps, sides[1].reps, w.temperatures[static_cast<size_t>(m - 1)], cfg.similarity, &da, &db);
      for (int s = 0; s < 2; ++s) {
        auto& side = sides[static_cast<size_t>(s)];
        Mat dh = representation_backward(side.out, lambda * (s == 0 ? da : db), cfg.pooling);
        if (routed) dh = model.hierarchical_backward(side.hier, dh);
        model.backward(side.trace, dh);
      }
    }
    out.cl_total = total_contrastive(out.cl, std::span<const double>(w.lambdas).first(static_cast<size_t>(levels)));
  }
  out.total = final_loss(out.sr, out.cl_total);

  for (auto* p : model.block_parameters()) {
    out.block_grad_max_abs = std::max(out.block_grad_max_abs, p->grad.cwiseAbs().maxCoeff());
  }
  return out;
}

StepLosses Trainer::train_step(const TrainBatch& batch, int epoch, long step) {
  const Rng step_rng = master_.fork({0x5EED, static_cast<uint64_t>(step)});
  StepLosses out = joint_loss_and_gradients(model_, batch, cfg_, contrastive_active(epoch), step_rng);
  if (!std::isfinite(out.total)) throw NumericError(describe_batch(batch, out));

  model_.clear_padding();
  if (cfg_.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto* p : model_.parameters()) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) {
      for (auto* p : model_.parameters()) p->grad *= cfg_.grad_clip / norm;
    }
  }
  optimizer_.step();
  model_.clear_padding();
  return out;
}

EpochMetrics Trainer::train_epoch(int epoch) {
  const auto start = std::chrono::steady_clock::now();
  EpochMetrics m;
  m.epoch = epoch;
  m.contrastive_active = contrastive_active(epoch);
  const int levels = cfg_.contrastive_levels();
  m.cl_losses.assign(static_cast<size_t>(levels), 0.0);
  model_.reset_counters();

  const auto order = epoch_order(epoch);
  const Rng epoch_rng = master_.fork({static_cast<uint64_t>(epoch), 1});
  const size_t bs = static_cast<size_t>(cfg_.batch_size);
  for (size_t first = 0; first < order.size(); first += bs) {
    const size_t last = std::min(order.size(), first + bs);
    const std::span<const size_t> users(order.data() + first, last - first);
    const TrainBatch batch = build_batch(data_, users, cfg_, index_, epoch_rng, m.contrastive_active, &m.augment);
    if (audit_) {
      for (const auto& v : batch.views) *audit_ << audit_record(v) << '\n';
    }
    const StepLosses l = train_step(batch, epoch, global_step_);
    if (observer_) observer_(epoch, global_step_, l);
    ++global_step_;
    ++m.steps;
    m.sr_loss += l.sr;
    m.total_loss += l.total;
    m.cl_total += l.cl_total;
    for (size_t i = 0; i < l.cl.size(); ++i) m.cl_losses[i] += l.cl[i];
    m.block_grad_max_abs = std::max(m.block_grad_max_abs, l.block_grad_max_abs);
  }
  const double n = static_cast<double>(std::max(1, m.steps));
  m.sr_loss /= n;
  m.total_loss /= n;
  m.cl_total /= n;
  for (auto& c : m.cl_losses) c /= n;
  m.routing = model_.routing();
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

void write_metrics_header(std::ostream& out, int levels) {
  out << "epoch,contrastive,sr_loss";
  for (int m = 1; m <= levels; ++m) out << ",cl_loss_" << m;
  out << ",cl_total,total_loss,valid_hit5,valid_ndcg5,valid_hit10,valid_ndcg10\n";
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  out << std::setprecision(17) << m.epoch << ',' << (m.contrastive_active ? 1 : 0) << ',' << m.sr_loss;
  for (double c : m.cl_losses) out << ',' << c;
  out << ',' << m.cl_total << ',' << m.total_loss;
  for (const char* k : {"Hit@5", "NDCG@5", "Hit@10", "NDCG@10"}) {
    out << ',';
    if (m.valid) out << m.valid->metric(k);
  }
  out << '\n';
}

TrainResult Trainer::fit(const std::optional<std::filesystem::path>& out_dir, bool verbose) {
  TrainResult result;
  std::ofstream metrics, steps, timing;
  const int levels = cfg_.contrastive_levels();
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    nlohmann::json run = {
        {"config", cfg_.to_json()},
        {"seed", cfg_.seed},
        {"dataset_hash", git_blob_hash(split_jsonl_text(data_))},
        {"users", data_.num_users()},
        {"items", data_.num_items},
        {"parameters", model_.parameter_count()},
    };
    std::ofstream(*out_dir / "run.json") << run.dump(2) << '\n';
    std::ofstream(*out_dir / "config.json") << cfg_.to_json().dump(2) << '\n';
    metrics.open(*out_dir / "metrics.csv");
    write_metrics_header(metrics, levels);
    steps.open(*out_dir / "steps.csv");
    steps << "step,epoch,sr_loss";
    for (int m = 1; m <= levels; ++m) steps << ",cl_loss_" << m;
    steps << ",cl_total,total_loss\n";
    timing.open(*out_dir / "timing.csv");
    timing << "epoch,seconds\n";
    if (cfg_.audit_views) audit_ = std::make_shared<std::ofstream>(*out_dir / "views_audit.jsonl");
  }
  auto user_observer = observer_;
  if (out_dir) {
    observer_ = [&](int epoch, long step, const StepLosses& l) {
      steps << std::setprecision(17) << step << ',' << epoch << ',' << l.sr;
      for (double c : l.cl) steps << ',' << c;
      steps << ',' << l.cl_total << ',' << l.total << '\n';
      if (user_observer) user_observer(epoch, step, l);
    };
  }

  EvalOptions eval_opt;
  eval_opt.target = EvalTarget::Valid;
  eval_opt.exclude_seen = cfg_.exclude_seen;
  eval_opt.batch_size = cfg_.eval_batch_size;

  std::vector<Mat> best_params;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    EpochMetrics m = train_epoch(epoch);
    m.valid = evaluate(model_, data_, eval_opt);
    const double ndcg = m.valid->metric("NDCG@10");
    if (ndcg > result.best_valid_ndcg10) {
      result.best_valid_ndcg10 = ndcg;
      result.best_epoch = epoch;
      best_params.clear();
      for (auto* p : model_.parameters()) best_params.push_back(p->value);
      if (out_dir) save_checkpoint(*out_dir / "best.ckpt", model_, {cfg_.seed, epoch, levels});
      since_best = 0;
    } else {
      ++since_best;
    }
    if (out_dir) {
      write_metrics_row(metrics, m);
      metrics.flush();
      timing << epoch << ',' << std::setprecision(6) << m.seconds << '\n';
    }
    if (verbose) {
      std::cerr << "epoch " << epoch << (m.contrastive_active ? " [cl]" : " [warm-up]") << " sr=" << m.sr_loss
                << " cl=" << m.cl_total << " total=" << m.total_loss << " valid NDCG@10=" << ndcg << " ("
                << std::setprecision(3) << m.seconds << "s)\n"
                << std::setprecision(6);
      const auto& a = m.augment;
      if (a.random_insertions + a.kept_substitutions + a.skipped_short + a.carried_forward > 0) {
        std::cerr << "  augmentation fallbacks: random_insert=" << a.random_insertions
                  << " kept_substitute=" << a.kept_substitutions << " skipped_short=" << a.skipped_short
                  << " carried_forward=" << a.carried_forward << "\n";
      }
    }
    result.history.push_back(std::move(m));
    if (cfg_.early_stop_patience > 0 && since_best >= cfg_.early_stop_patience) break;
  }
  if (out_dir) {
    save_checkpoint(*out_dir / "last.ckpt", model_, {cfg_.seed, static_cast<int>(result.history.size()) - 1, levels});
  }
  observer_ = user_observer;
  audit_.reset();

  // Leave the model holding the best-on-validation parameters.
  if (!best_params.empty()) {
    auto params = model_.parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  }
  EvalOptions test_opt = eval_opt;
  test_opt.target = EvalTarget::Test;
  result.test = evaluate(model_, data_, test_opt);
  return result;
}

LoadedData load_training_data(const std::filesystem::path& dir, const TrainConfig& cfg) {
  LoadedData d;
  d.split = read_dataset(dir);
  d.split.max_len = cfg.max_len;
  d.hash = dataset_hash(dir);
  const auto train = d.split.train_sequences();
  const std::string key = d.hash + ":" + to_string(cfg.weighting);
  try {
    d.index = load_or_build_index(dir / "similarity.cache", key, train, d.split.num_items, cfg.weighting);
  } catch (const DataError&) {
    // Unwritable or corrupt cache: build in memory.
    d.index = SimilarityIndex::build(train, d.split.num_items, cfg.weighting);
  }
  return d;
}

}  // namespace hclrec
