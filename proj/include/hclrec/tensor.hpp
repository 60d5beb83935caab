#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hclrec/corpus.hpp"

namespace hclrec {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

/// Left-padded batch of item indices, row-major [batch][length]. Positions
/// are absolute: column t of the batch sits at position position_offset + t
/// of the full max_len window, so trimming leading all-padding columns does
/// not change which positional embedding a real item receives.
struct IndexBatch {
  int batch = 0;
  int length = 0;
  int position_offset = 0;
  std::vector<ItemId> items;

  ItemId at(int b, int t) const { return items[static_cast<size_t>(b) * length + t]; }
  bool real(int b, int t) const { return at(b, t) != 0; }
};

/// Pads each sequence on the left to `max_len` (keeping the most recent
/// items). With `trim`, leading columns that are padding in every row are
/// dropped.
IndexBatch pad_batch(std::span<const ItemSeq> seqs, int max_len, bool trim = true);

/// Activations of a batch: rows are (b * length + t).
struct HiddenStates {
  Mat values;
  int batch = 0;
  int length = 0;
  std::vector<uint8_t> mask;  // 1 = real item

  auto row(int b, int t) { return values.row(static_cast<Eigen::Index>(b) * length + t); }
  auto row(int b, int t) const { return values.row(static_cast<Eigen::Index>(b) * length + t); }
  bool real(int b, int t) const { return mask[static_cast<size_t>(b) * length + t] != 0; }
};

/// The real rows of a padded (batch x length) layout stored contiguously:
/// sequence b owns packed rows [offsets[b], offsets[b + 1]) in position
/// order. Encoder layers run on packed rows so padding costs nothing.
struct Packing {
  std::vector<Eigen::Index> source;   // padded row index of each packed row
  std::vector<Eigen::Index> offsets;  // batch + 1 entries

  static Packing from_mask(int batch, int length, std::span<const uint8_t> mask);

  int batch() const { return static_cast<int>(offsets.size()) - 1; }
  Eigen::Index rows() const { return static_cast<Eigen::Index>(source.size()); }
  Eigen::Index begin(int b) const { return offsets[static_cast<size_t>(b)]; }
  Eigen::Index count(int b) const { return offsets[static_cast<size_t>(b) + 1] - offsets[static_cast<size_t>(b)]; }

  Mat pack(const Mat& padded) const;
  /// Scatters packed rows back; padded rows are zero.
  Mat unpack(const Mat& packed, Eigen::Index padded_rows) const;
};

}  // namespace hclrec
