#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "vlmt/params.hpp"
#include "vlmt/tensor.hpp"

namespace vlmt::relgraph {

/// Frame-presence statistics over a fixed class vocabulary: how many frames
/// contained each class, and how many contained each unordered pair. Presence
/// is per frame, not per instance, so pair counts never exceed the smaller
/// single count.
struct OccurrenceCounts {
  size_t n_classes = 0;
  uint64_t frames_seen = 0;
  std::vector<uint64_t> single;        // [n_classes]
  std::vector<uint64_t> pair;          // [n_classes * n_classes], symmetric
  std::vector<std::string> class_names;  // optional, size 0 or n_classes

  explicit OccurrenceCounts(size_t n = 0,
                            std::vector<std::string> names = {});

  uint64_t pair_count(size_t c1, size_t c2) const;
};

/// Records one frame's class-presence set into the counts. Duplicate ids in
/// the input collapse to presence.
void observe_frame(OccurrenceCounts& counts, const std::set<int>& classes);

/// Co-occurrence weight N(c1 ∩ c2) / (N(c1) * N(c2)). Zero when either class
/// was never seen, and zero on the diagonal.
double weight(const OccurrenceCounts& counts, size_t c1, size_t c2);

/// Symmetric matrix of pairwise weights with a zero diagonal.
struct RelationMatrix {
  size_t n = 0;
  std::vector<double> m;  // row-major [n * n]

  double at(size_t i, size_t j) const { return m[i * n + j]; }

  /// Row-major flattening as a constant tensor (includes the zero diagonal).
  template <typename T>
  Tensor<T> flatten() const {
    std::vector<T> v(m.size());
    for (size_t i = 0; i < m.size(); ++i) v[i] = static_cast<T>(m[i]);
    return Tensor<T>(Shape{1, n * n}, std::move(v));
  }
};

RelationMatrix build_matrix(const OccurrenceCounts& counts);

/// Affine projection of the flattened matrix into the relation embedding:
/// r = flatten(m) * w + b with w shaped [n*n, d_r]. Differentiable through
/// the projection parameters. Returns a [1, d_r] row.
template <typename T>
Tensor<T> encode_relations(const RelationMatrix& m, const Tensor<T>& w,
                           const Tensor<T>& b);

// --- snapshot file -----------------------------------------------------------

/// JSON snapshot with keys n_classes, frames_seen, single, pair, class_names.
/// The pair matrix is stored in full and validated symmetric on load.
void save_counts(const std::string& path, const OccurrenceCounts& counts);
OccurrenceCounts load_counts(const std::string& path);

/// Reads a frame-stream JSONL file ({"classes_present": [int...]} per line)
/// into counts. Malformed lines and out-of-range ids report the line number.
OccurrenceCounts counts_from_frames_file(const std::string& path,
                                         size_t n_classes,
                                         std::vector<std::string> names = {});

}  // namespace vlmt::relgraph
