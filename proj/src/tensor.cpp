#include "hclrec/tensor.hpp"

#include <algorithm>

#include "hclrec/error.hpp"

namespace hclrec {

IndexBatch pad_batch(std::span<const ItemSeq> seqs, int max_len, bool trim) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  int longest = 0;
  for (const auto& s : seqs) longest = std::max(longest, std::min(static_cast<int>(s.size()), max_len));

  IndexBatch out;
  out.batch = static_cast<int>(seqs.size());
  out.length = trim ? std::max(longest, 1) : max_len;
  out.position_offset = max_len - out.length;
  out.items.assign(static_cast<size_t>(out.batch) * out.length, 0);
  for (int b = 0; b < out.batch; ++b) {
    const auto& s = seqs[static_cast<size_t>(b)];
    const int n = std::min(static_cast<int>(s.size()), max_len);
    const int pad = out.length - n;
    for (int i = 0; i < n; ++i) {
      out.items[static_cast<size_t>(b) * out.length + pad + i] = s[s.size() - n + i];
    }
  }
  return out;
}

Packing Packing::from_mask(int batch, int length, std::span<const uint8_t> mask) {
  Packing p;
  p.offsets.reserve(static_cast<size_t>(batch) + 1);
  p.offsets.push_back(0);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < length; ++t) {
      const auto r = static_cast<Eigen::Index>(b) * length + t;
      if (mask[static_cast<size_t>(r)]) p.source.push_back(r);
    }
    p.offsets.push_back(static_cast<Eigen::Index>(p.source.size()));
  }
  return p;
}

Mat Packing::pack(const Mat& padded) const {
  Mat out(rows(), padded.cols());
  for (Eigen::Index i = 0; i < rows(); ++i) out.row(i) = padded.row(source[static_cast<size_t>(i)]);
  return out;
}

Mat Packing::unpack(const Mat& packed, Eigen::Index padded_rows) const {
  Mat out = Mat::Zero(padded_rows, packed.cols());
  for (Eigen::Index i = 0; i < rows(); ++i) out.row(source[static_cast<size_t>(i)]) = packed.row(i);
  return out;
}

}  // namespace hclrec
