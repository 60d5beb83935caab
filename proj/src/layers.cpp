#include "hclrec/layers.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "hclrec/error.hpp"

namespace hclrec {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  const double keep = 1.0 - rate;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
  }
  return m;
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& prefix, int dim)
    : gamma(prefix + ".gamma", 1, dim), beta(prefix + ".beta", 1, dim) {
  gamma.value.setOnes();
}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  Mat xhat(n, x.cols());
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.row(r).sum() / d;
    const auto centered = (x.row(r).array() - mu).matrix();
    const double var = centered.squaredNorm() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Mat y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const Cache& cache, const Mat& dy) {
  gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  const double d = static_cast<double>(dy.cols());
  Mat dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / d;
    const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

// -------------------------------------------------------------- FeedForward

FeedForward::FeedForward(const std::string& prefix, int dim)
    : w1(prefix + ".w1", dim, 4 * dim),
      b1(prefix + ".b1", 1, 4 * dim),
      w2(prefix + ".w2", 4 * dim, dim),
      b2(prefix + ".b2", 1, dim) {}

Mat FeedForward::forward(const Mat& x, Cache* cache) const {
  Mat pre = (x * w1.value).rowwise() + b1.value.row(0);
  Mat cdf(pre.rows(), pre.cols());
  Mat act(pre.rows(), pre.cols());
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    const double v = pre.data()[i];
    const double c = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
    cdf.data()[i] = c;
    act.data()[i] = v * c;
  }
  Mat y = (act * w2.value).rowwise() + b2.value.row(0);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
    cache->cdf = std::move(cdf);
  }
  return y;
}

Mat FeedForward::backward(const Cache& cache, const Mat& dy) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  w2.grad.noalias() += cache.act.transpose() * dy;
  b2.grad.row(0) += dy.colwise().sum();
  Mat dpre = dy * w2.value.transpose();
  for (Eigen::Index i = 0; i < dpre.size(); ++i) {
    const double v = cache.pre.data()[i];
    dpre.data()[i] *= cache.cdf.data()[i] + v * std::exp(-0.5 * v * v) * inv_sqrt_2pi;
  }
  w1.grad.noalias() += cache.x.transpose() * dpre;
  b1.grad.row(0) += dpre.colwise().sum();
  return dpre * w1.value.transpose();
}

// ------------------------------------------------------- MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(const std::string& prefix, int dim, int heads_)
    : heads(heads_),
      wq(prefix + ".wq", dim, dim),
      wk(prefix + ".wk", dim, dim),
      wv(prefix + ".wv", dim, dim),
      wo(prefix + ".wo", dim, dim) {
  if (heads_ < 1 || dim % heads_ != 0) throw ConfigError("dim must be divisible by heads");
}

Mat MultiHeadAttention::forward(const Mat& x, const Packing& seg, double dropout, Rng* rng,
                                Cache* cache) const {
  const Eigen::Index dim = x.cols();
  const Eigen::Index dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat q = x * wq.value;
  Mat k = x * wk.value;
  Mat v = x * wv.value;
  Mat concat = Mat::Zero(x.rows(), dim);
  if (cache) {
    cache->probs.clear();
    cache->drop_mask.clear();
  }

  for (int b = 0; b < seg.batch(); ++b) {
    const Eigen::Index r0 = seg.begin(b);
    const Eigen::Index n = seg.count(b);
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      Mat probs = Mat::Zero(n, n);
      if (n > 0) {
        probs.noalias() = q.block(r0, c0, n, dh) * k.block(r0, c0, n, dh).transpose();
        for (Eigen::Index t = 0; t < n; ++t) {
          double* row = probs.row(t).data();
          double mx = row[0] * scale;
          for (Eigen::Index s2 = 1; s2 <= t; ++s2) mx = std::max(mx, row[s2] * scale);
          double sum = 0.0;
          for (Eigen::Index s2 = 0; s2 <= t; ++s2) {
            row[s2] = std::exp(row[s2] * scale - mx);
            sum += row[s2];
          }
          const double inv = 1.0 / sum;
          for (Eigen::Index s2 = 0; s2 <= t; ++s2) row[s2] *= inv;
          for (Eigen::Index s2 = t + 1; s2 < n; ++s2) row[s2] = 0.0;
        }
      }
      Mat drop = dropout_mask(n, n, dropout, rng);
      if (drop.size() > 0) {
        concat.block(r0, c0, n, dh).noalias() = probs.cwiseProduct(drop) * v.block(r0, c0, n, dh);
      } else {
        concat.block(r0, c0, n, dh).noalias() = probs * v.block(r0, c0, n, dh);
      }
      if (cache) {
        cache->probs.push_back(std::move(probs));
        cache->drop_mask.push_back(std::move(drop));
      }
    }
  }

  Mat y = concat * wo.value;
  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
  }
  return y;
}

Mat MultiHeadAttention::backward(const Cache& cache, const Packing& seg, const Mat& dy) {
  const Eigen::Index dim = cache.x.cols();
  const Eigen::Index dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  wo.grad.noalias() += cache.concat.transpose() * dy;
  const Mat dconcat = dy * wo.value.transpose();
  Mat dq = Mat::Zero(cache.q.rows(), dim);
  Mat dk = Mat::Zero(cache.k.rows(), dim);
  Mat dv = Mat::Zero(cache.v.rows(), dim);

  size_t idx = 0;
  for (int b = 0; b < seg.batch(); ++b) {
    const Eigen::Index r0 = seg.begin(b);
    const Eigen::Index n = seg.count(b);
    for (int h = 0; h < heads; ++h, ++idx) {
      if (n == 0) continue;
      const Eigen::Index c0 = h * dh;
      const Mat& probs = cache.probs[idx];
      const Mat& drop = cache.drop_mask[idx];
      const auto d_out = dconcat.block(r0, c0, n, dh);
      Mat dweights = d_out * cache.v.block(r0, c0, n, dh).transpose();
      if (drop.size() > 0) {
        dv.block(r0, c0, n, dh).noalias() += probs.cwiseProduct(drop).transpose() * d_out;
        dweights.array() *= drop.array();
      } else {
        dv.block(r0, c0, n, dh).noalias() += probs.transpose() * d_out;
      }
      // softmax backward, row-wise
      const Eigen::VectorXd inner = (dweights.array() * probs.array()).rowwise().sum();
      Mat dscores = probs.array() * (dweights.colwise() - inner).array();
      dscores *= scale;
      dq.block(r0, c0, n, dh).noalias() += dscores * cache.k.block(r0, c0, n, dh);
      dk.block(r0, c0, n, dh).noalias() += dscores.transpose() * cache.q.block(r0, c0, n, dh);
    }
  }

  wq.grad.noalias() += cache.x.transpose() * dq;
  wk.grad.noalias() += cache.x.transpose() * dk;
  wv.grad.noalias() += cache.x.transpose() * dv;
  Mat dx = dq * wq.value.transpose();
  dx.noalias() += dk * wk.value.transpose();
  dx.noalias() += dv * wv.value.transpose();
  return dx;
}

// ------------------------------------------------------------- EncoderLayer

EncoderLayer::EncoderLayer(const std::string& prefix, int dim, int heads)
    : ln1(prefix + ".ln1", dim),
      attn(prefix + ".attn", dim, heads),
      ln2(prefix + ".ln2", dim),
      ffn(prefix + ".ffn", dim) {}

std::vector<Parameter*> EncoderLayer::parameters() {
  std::vector<Parameter*> out;
  for (auto* p : ln1.parameters()) out.push_back(p);
  for (auto* p : attn.parameters()) out.push_back(p);
  for (auto* p : ln2.parameters()) out.push_back(p);
  for (auto* p : ffn.parameters()) out.push_back(p);
  return out;
}

Mat EncoderLayer::forward(const Mat& x, const Packing& seg, double dropout, Rng* rng,
                          Cache* cache) const {
  LayerNorm::Cache* c_ln1 = cache ? &cache->ln1 : nullptr;
  MultiHeadAttention::Cache* c_attn = cache ? &cache->attn : nullptr;
  LayerNorm::Cache* c_ln2 = cache ? &cache->ln2 : nullptr;
  FeedForward::Cache* c_ffn = cache ? &cache->ffn : nullptr;

  Mat a = attn.forward(ln1.forward(x, c_ln1), seg, dropout, rng, c_attn);
  Mat drop_attn = dropout_mask(a.rows(), a.cols(), dropout, rng);
  if (drop_attn.size() > 0) a.array() *= drop_attn.array();
  Mat x1 = x + a;

  Mat f = ffn.forward(ln2.forward(x1, c_ln2), c_ffn);
  Mat drop_ffn = dropout_mask(f.rows(), f.cols(), dropout, rng);
  if (drop_ffn.size() > 0) f.array() *= drop_ffn.array();
  Mat y = x1 + f;

  if (cache) {
    cache->drop_attn = std::move(drop_attn);
    cache->drop_ffn = std::move(drop_ffn);
  }
  return y;
}

Mat EncoderLayer::backward(const Cache& cache, const Packing& seg, const Mat& dy) {
  Mat dx1 = dy;
  Mat df = dx1;
  if (cache.drop_ffn.size() > 0) df.array() *= cache.drop_ffn.array();
  dx1 += ln2.backward(cache.ln2, ffn.backward(cache.ffn, df));

  Mat da = dx1;
  if (cache.drop_attn.size() > 0) da.array() *= cache.drop_attn.array();
  Mat dx = dx1;
  dx += ln1.backward(cache.ln1, attn.backward(cache.attn, seg, da));
  return dx;
}

// -------------------------------------------------------------------- Block

Block::Block(const std::string& prefix, int dim, int heads)
    : layer(prefix + ".layer", dim, heads), ffn(prefix + ".ffn", dim) {}

std::vector<Parameter*> Block::parameters() {
  auto out = layer.parameters();
  for (auto* p : ffn.parameters()) out.push_back(p);
  return out;
}

Mat Block::forward(const Mat& x, const Packing& seg, double dropout, Rng* rng,
                   Cache* cache) const {
  Mat y = layer.forward(x, seg, dropout, rng, cache ? &cache->layer : nullptr);
  Mat f = ffn.forward(y, cache ? &cache->ffn : nullptr);
  Mat drop = dropout_mask(f.rows(), f.cols(), dropout, rng);
  if (drop.size() > 0) f.array() *= drop.array();
  Mat z = y + f;
  if (cache) cache->drop_ffn = std::move(drop);
  return z;
}

Mat Block::backward(const Cache& cache, const Packing& seg, const Mat& dy) {
  const Mat& dz = dy;
  Mat df = dz;
  if (cache.drop_ffn.size() > 0) df.array() *= cache.drop_ffn.array();
  Mat dyy = dz + ffn.backward(cache.ffn, df);
  return layer.backward(cache.layer, seg, dyy);
}

}  // namespace hclrec
