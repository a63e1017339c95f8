#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vlmt/errors.hpp"
#include "vlmt/rng.hpp"

namespace vlmt {

using Shape = std::vector<size_t>;

size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tape;

/// Dense row-major tensor over float or double. Values are immutable once
/// constructed; participation in reverse-mode autodiff is carried by a
/// (tape, node) identity assigned when a tensor is created as a tape leaf or
/// as the output of an op with tape-bound inputs. Plain tensors (no tape)
/// act as constants.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);  // rank-0, one element
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

  bool valid() const { return static_cast<bool>(values_); }
  const Shape& shape() const { return shape_; }
  size_t ndim() const { return shape_.size(); }
  size_t numel() const { return values_ ? values_->size() : 0; }
  size_t rows() const;  // rank-2 only
  size_t cols() const;  // rank-2 only
  const std::vector<T>& values() const;
  T value() const;  // numel()==1 only
  T at(std::initializer_list<size_t> index) const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape<T>;
  std::shared_ptr<const std::vector<T>> values_;
  Shape shape_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

/// Records the primitive ops of one forward pass. Ops are appended in
/// execution order, which is already a topological order of the dataflow
/// graph, and backward() replays them exactly once in reverse. One tape per
/// forward pass; independent tapes never share state, so separate passes may
/// run on separate threads.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New differentiable leaf holding a copy of the given values.
  Tensor<T> leaf(Shape shape, std::vector<T> values);
  /// Leaf sharing the values of an existing (constant) tensor.
  Tensor<T> leaf(const Tensor<T>& source);

  /// Seeds d(loss)/d(loss)=1 and sweeps all recorded ops in reverse order.
  /// loss must be a single-element tensor on this tape. May run only once.
  void backward(const Tensor<T>& loss);
  bool backward_run() const { return backward_run_; }

  /// Gradient buffer of a tensor on this tape (zeros if nothing reached it).
  const std::vector<T>& grad(const Tensor<T>& t);

  size_t num_nodes() const { return nodes_.size(); }
  size_t num_ops() const { return ops_.size(); }

  // --- op implementation interface ---
  Tensor<T> adopt(Shape shape, std::vector<T> values);
  void record(std::function<void()> backward_fn);
  std::vector<T>& grad_buffer(int node);

 private:
  struct Node {
    size_t numel;
    std::vector<T> grad;  // sized lazily on first touch
  };
  std::vector<Node> nodes_;
  std::vector<std::function<void()>> ops_;
  bool backward_run_ = false;
};

// ---------------------------------------------------------------------------
// Primitive ops. Every op validates shapes, checks its output for non-finite
// values (NumericError naming the op), and, when an input is tape-bound,
// records the matching backward step. Broadcasting is restricted to the
// patterns the model needs: same-shape elementwise, and a rank-1 [d] (or
// [1, d]) bias against the trailing axis. Anything else is a DimensionError.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);  // elementwise, same shape

template <typename T>
Tensor<T> neg(const Tensor<T>& a);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);  // [m,k]x[k,n]

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);  // rank-2

template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// Numerically stabilized softmax along `axis` (max subtraction per slice).
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, size_t axis);

/// Row-wise softmax over a rank-2 tensor where mask[r*cols+c]==0 excludes a
/// position. Excluded positions get weight 0; a fully masked row yields an
/// all-zero row rather than NaN.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& a, const std::vector<uint8_t>& mask);

/// Per-slice normalization over the trailing axis: zero mean, unit variance
/// (biased), then y = x_hat * gain + bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps);

/// Mean over rows of -log softmax(logits)[target]. logits is [t, v]; every
/// target id must be < v.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        const std::vector<int32_t>& targets);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);  // rank-0 result

template <typename T>
Tensor<T> mean(const Tensor<T>& a);  // rank-0 result

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);  // rank-2, same cols

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, size_t begin, size_t end);

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);  // rank-2, same rows

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, size_t begin, size_t end);

/// Rows of `table` selected by id; duplicate ids accumulate gradient.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int32_t>& ids);

/// Inverted dropout: elements dropped with probability `rate`, survivors
/// scaled by 1/(1-rate). rate==0 returns the input unchanged.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double rate, Rng& rng);

namespace testhook {
/// When set, matmul's backward skips the dB accumulation. Exists only as the
/// negative control for gradient-check tooling.
extern bool corrupt_matmul_backward;
}  // namespace testhook

}  // namespace vlmt
