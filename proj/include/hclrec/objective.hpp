#pragma once

#include <span>
#include <string>
#include <vector>

#include "hclrec/tensor.hpp"

namespace hclrec {

struct LossWeights {
  std::vector<double> lambdas;       // λ_1..λ_M, non-negative
  std::vector<double> temperatures;  // τ_1..τ_M, positive

  /// λ descends from 0.1 in steps of 0.025, τ ascends from 1.0 in steps of 0.5.
  static LossWeights defaults(int levels);
  void validate(int levels) const;
};

enum class Similarity { Dot, Cosine };

Similarity parse_similarity(const std::string& name);
std::string to_string(Similarity s);

/// Binary cross-entropy next-item loss with one sampled negative per
/// position, averaged over positions whose target is non-zero.
///
/// `targets` and `negatives` are laid out like h.values rows (b * length + t);
/// 0 marks a position without a target. Gradients are written into d_hidden
/// (resized to h.values' shape) and accumulated into d_embedding when given.
double next_item_loss(const HiddenStates& h, std::span<const ItemId> targets,
                      std::span<const ItemId> negatives, const Mat& embedding,
                      Mat* d_hidden = nullptr, Mat* d_embedding = nullptr);

/// InfoNCE over the 2B views {a_1..a_B, b_1..b_B}: each view's positive is
/// its partner, its candidates are all other 2B - 1 views. Mean over the 2B
/// anchors.
double info_nce(const Mat& reps_a, const Mat& reps_b, double temperature,
                Similarity sim = Similarity::Dot, Mat* d_a = nullptr, Mat* d_b = nullptr);

double total_contrastive(std::span<const double> per_level, std::span<const double> lambdas);

inline double total_contrastive(std::span<const double> per_level, const LossWeights& w) {
  return total_contrastive(per_level, w.lambdas);
}

/// L_SR + L_totalCL, with no coefficient on L_SR.
inline double final_loss(double sr_loss, double contrastive_loss) { return sr_loss + contrastive_loss; }

}  // namespace hclrec
