#pragma once

#include <string>
#include <vector>

#include "hclrec/rng.hpp"
#include "hclrec/tensor.hpp"

namespace hclrec {

// Building blocks of the self-attention encoder. Each layer's forward pass
// can record what its backward pass needs into a Cache; backward accumulates
// parameter gradients into Parameter::grad and returns the input gradient.

double gelu(double x);
double gelu_derivative(double x);

/// Inverted dropout mask (entries 0 or 1/(1-p)); empty when inactive.
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng);

class LayerNorm {
 public:
  struct Cache {
    Mat xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& prefix, int dim);

  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dy);

  std::vector<Parameter*> parameters() { return {&gamma, &beta}; }

  Parameter gamma;
  Parameter beta;
  double eps = 1e-8;
};

/// Position-wise FFN: GeLU(x W1 + b1) W2 + b2 with W1: d x 4d.
class FeedForward {
 public:
  struct Cache {
    Mat x;
    Mat pre;
    Mat act;
    Mat cdf;
  };

  FeedForward() = default;
  FeedForward(const std::string& prefix, int dim);

  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Cache& cache, const Mat& dy);

  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }

  Parameter w1, b1, w2, b2;
};

/// Multi-head causal self-attention over packed rows. Head i uses columns
/// [i*d/h, (i+1)*d/h) of wq/wk/wv, which is the concatenation of the per-head
/// d x d/h projections. A query attends to the earlier-or-equal rows of its
/// own sequence only.
class MultiHeadAttention {
 public:
  struct Cache {
    Mat x, q, k, v, concat;
    std::vector<Mat> probs;      // per (b, head): softmax weights, n_b x n_b
    std::vector<Mat> drop_mask;  // per (b, head); empty without dropout
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& prefix, int dim, int heads);

  Mat forward(const Mat& x, const Packing& seg, double dropout, Rng* rng, Cache* cache) const;
  Mat backward(const Cache& cache, const Packing& seg, const Mat& dy);

  std::vector<Parameter*> parameters() { return {&wq, &wk, &wv, &wo}; }

  int heads = 1;
  Parameter wq, wk, wv, wo;
};

/// Pre-norm transformer layer:
///   x1 = x + Dropout(MHA(LN1(x)));  y = x1 + Dropout(FFN(LN2(x1)))
class EncoderLayer {
 public:
  struct Cache {
    LayerNorm::Cache ln1;
    MultiHeadAttention::Cache attn;
    Mat drop_attn;
    LayerNorm::Cache ln2;
    FeedForward::Cache ffn;
    Mat drop_ffn;
  };

  EncoderLayer() = default;
  EncoderLayer(const std::string& prefix, int dim, int heads);

  Mat forward(const Mat& x, const Packing& seg, double dropout, Rng* rng, Cache* cache) const;
  Mat backward(const Cache& cache, const Packing& seg, const Mat& dy);

  std::vector<Parameter*> parameters();

  LayerNorm ln1;
  MultiHeadAttention attn;
  LayerNorm ln2;
  FeedForward ffn;
};

/// Additional block used for high-level views: one encoder layer followed by
/// an extra position-wise FFN with a residual connection (no extra norm).
class Block {
 public:
  struct Cache {
    EncoderLayer::Cache layer;
    FeedForward::Cache ffn;
    Mat drop_ffn;
  };

  Block() = default;
  Block(const std::string& prefix, int dim, int heads);

  Mat forward(const Mat& x, const Packing& seg, double dropout, Rng* rng, Cache* cache) const;
  Mat backward(const Cache& cache, const Packing& seg, const Mat& dy);

  std::vector<Parameter*> parameters();

  EncoderLayer layer;
  FeedForward ffn;
};

}  // namespace hclrec
