#include "hclrec/objective.hpp"

#include <cmath>
#include <limits>

#include "hclrec/error.hpp"

namespace hclrec {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

LossWeights LossWeights::defaults(int levels) {
  LossWeights w;
  for (int m = 0; m < levels; ++m) {
    w.lambdas.push_back(std::max(0.0, 0.1 - 0.025 * m));
    w.temperatures.push_back(1.0 + 0.5 * m);
  }
  return w;
}

void LossWeights::validate(int levels) const {
  if (static_cast<int>(lambdas.size()) != levels || static_cast<int>(temperatures.size()) != levels) {
    throw ConfigError("need exactly " + std::to_string(levels) + " lambdas and temperatures");
  }
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw ConfigError("lambdas must be non-negative");
  }
  for (double t : temperatures) {
    if (!(t > 0.0)) throw ConfigError("temperatures must be positive");
  }
}

Similarity parse_similarity(const std::string& name) {
  if (name == "dot") return Similarity::Dot;
  if (name == "cosine") return Similarity::Cosine;
  throw ConfigError("unknown similarity '" + name + "'");
}

std::string to_string(Similarity s) { return s == Similarity::Dot ? "dot" : "cosine"; }

double next_item_loss(const HiddenStates& h, std::span<const ItemId> targets,
                      std::span<const ItemId> negatives, const Mat& embedding, Mat* d_hidden,
                      Mat* d_embedding) {
  const auto rows = h.values.rows();
  if (static_cast<Eigen::Index>(targets.size()) != rows || static_cast<Eigen::Index>(negatives.size()) != rows) {
    throw ConfigError("targets/negatives do not match the hidden-state layout");
  }
  if (d_hidden) *d_hidden = Mat::Zero(rows, h.values.cols());

  long count = 0;
  for (Eigen::Index r = 0; r < rows; ++r) count += targets[static_cast<size_t>(r)] != 0 ? 1 : 0;
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);

  double loss = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const ItemId pos = targets[static_cast<size_t>(r)];
    if (pos == 0) continue;
    const ItemId neg = negatives[static_cast<size_t>(r)];
    if (neg == pos) throw DataError("negative sample equals the positive target");
    const double lp = h.values.row(r).dot(embedding.row(pos));
    const double ln = h.values.row(r).dot(embedding.row(neg));
    // -log σ(lp) - log(1 - σ(ln)) = softplus(-lp) + softplus(ln)
    loss += softplus(-lp) + softplus(ln);
    const double gp = (sigmoid(lp) - 1.0) * inv;
    const double gn = sigmoid(ln) * inv;
    if (d_hidden) d_hidden->row(r) = gp * embedding.row(pos) + gn * embedding.row(neg);
    if (d_embedding) {
      d_embedding->row(pos) += gp * h.values.row(r);
      d_embedding->row(neg) += gn * h.values.row(r);
    }
  }
  return loss * inv;
}

double info_nce(const Mat& reps_a, const Mat& reps_b, double temperature, Similarity sim, Mat* d_a,
                Mat* d_b) {
  if (reps_a.rows() != reps_b.rows() || reps_a.cols() != reps_b.cols() || reps_a.rows() < 1) {
    throw ConfigError("info_nce needs two non-empty B x d matrices of equal shape");
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!reps_a.allFinite() || !reps_b.allFinite()) throw NumericError("non-finite representation in info_nce");

  const Eigen::Index batch = reps_a.rows();
  const Eigen::Index n = 2 * batch;
  Mat z(n, reps_a.cols());
  z.topRows(batch) = reps_a;
  z.bottomRows(batch) = reps_b;

  Eigen::VectorXd norms = Eigen::VectorXd::Ones(n);
  Mat u = z;
  if (sim == Similarity::Cosine) {
    for (Eigen::Index i = 0; i < n; ++i) {
      norms(i) = std::max(z.row(i).norm(), 1e-12);
      u.row(i) /= norms(i);
    }
  }

  const Mat logits = (u * u.transpose()) / temperature;
  Mat dlogits = Mat::Zero(n, n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index p = i < batch ? i + batch : i - batch;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) mx = std::max(mx, logits(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) sum += std::exp(logits(i, j) - mx);
    }
    const double lse = mx + std::log(sum);
    loss += lse - logits(i, p);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      dlogits(i, j) = std::exp(logits(i, j) - lse) / static_cast<double>(n);
    }
    dlogits(i, p) -= 1.0 / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);

  if (d_a || d_b) {
    // logits = u u^T / τ  =>  du = (dL + dL^T) u / τ
    Mat du = (dlogits + dlogits.transpose()) * u / temperature;
    Mat dz = du;
    if (sim == Similarity::Cosine) {
      for (Eigen::Index i = 0; i < n; ++i) {
        dz.row(i) = (du.row(i) - u.row(i) * u.row(i).dot(du.row(i))) / norms(i);
      }
    }
    if (d_a) *d_a = dz.topRows(batch);
    if (d_b) *d_b = dz.bottomRows(batch);
  }
  return loss;
}

double total_contrastive(std::span<const double> per_level, std::span<const double> lambdas) {
  if (per_level.size() != lambdas.size()) throw ConfigError("per-level losses and lambdas differ in length");
  double total = 0.0;
  for (size_t m = 0; m < per_level.size(); ++m) total += lambdas[m] * per_level[m];
  return total;
}

}  // namespace hclrec
