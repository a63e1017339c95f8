#include "vlmt/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vlmt {

namespace testhook {
bool corrupt_matmul_backward = false;
}

size_t shape_numel(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename T>
using EMat =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
void check_finite(const char* op, const std::vector<T>& values) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

template <typename T>
void require_valid(const char* op, const Tensor<T>& t) {
  if (!t.valid()) {
    throw ContractError(std::string(op) + ": uninitialized tensor operand");
  }
}

/// Common tape of the inputs, or nullptr when all are constants. Mixing two
/// different tapes in one op is a contract violation.
template <typename T>
Tape<T>* result_tape(const char* op,
                     std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : inputs) {
    if (!t->on_tape()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw ContractError(std::string(op) + ": operands live on different tapes");
    }
  }
  return tape;
}

template <typename T>
Tensor<T> finish(const char* op, Tape<T>* tape, Shape shape,
                 std::vector<T> values) {
  check_finite(op, values);
  if (tape) return tape->adopt(std::move(shape), std::move(values));
  return Tensor<T>(std::move(shape), std::move(values));
}

/// Accumulate `src` into the grad buffer of `t` when it is tape-bound.
template <typename T>
void accumulate(Tape<T>* tape, const Tensor<T>& t, const std::vector<T>& src) {
  if (!t.on_tape()) return;
  std::vector<T>& g = tape->grad_buffer(t.node());
  for (size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : values_(std::make_shared<const std::vector<T>>(std::move(values))),
      shape_(std::move(shape)) {
  if (shape_numel(shape_) != values_->size()) {
    throw DimensionError("tensor: shape " + shape_str(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) +
                         " values, got " + std::to_string(values_->size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::ones(Shape shape) {
  size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(1)));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, Rng& rng, double stddev) {
  size_t n = shape_numel(shape);
  std::vector<T> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = static_cast<T>(stddev * rng.normal());
  return Tensor(std::move(shape), std::move(v));
}

template <typename T>
size_t Tensor<T>::rows() const {
  if (ndim() != 2) throw DimensionError("rows(): tensor is not rank-2");
  return shape_[0];
}

template <typename T>
size_t Tensor<T>::cols() const {
  if (ndim() != 2) throw DimensionError("cols(): tensor is not rank-2");
  return shape_[1];
}

template <typename T>
const std::vector<T>& Tensor<T>::values() const {
  if (!values_) throw ContractError("values(): uninitialized tensor");
  return *values_;
}

template <typename T>
T Tensor<T>::value() const {
  if (numel() != 1) {
    throw ContractError("value(): tensor has " + std::to_string(numel()) +
                        " elements, expected 1");
  }
  return (*values_)[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<size_t> index) const {
  if (index.size() != ndim()) {
    throw IndexError("at(): rank mismatch for shape " + shape_str(shape_));
  }
  size_t flat = 0;
  size_t axis = 0;
  for (size_t i : index) {
    if (i >= shape_[axis]) {
      throw IndexError("at(): index out of range on axis " +
                       std::to_string(axis));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return (*values_)[flat];
}

// --- Tape -------------------------------------------------------------------

template <typename T>
Tensor<T> Tape<T>::adopt(Shape shape, std::vector<T> values) {
  Tensor<T> t(std::move(shape), std::move(values));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.numel(), {}});
  return t;
}

template <typename T>
Tensor<T> Tape<T>::leaf(Shape shape, std::vector<T> values) {
  return adopt(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> Tape<T>::leaf(const Tensor<T>& source) {
  require_valid("leaf", source);
  Tensor<T> t;
  t.values_ = source.values_;
  t.shape_ = source.shape_;
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.numel(), {}});
  return t;
}

template <typename T>
std::vector<T>& Tape<T>::grad_buffer(int node) {
  Node& n = nodes_.at(static_cast<size_t>(node));
  if (n.grad.empty() && n.numel > 0) n.grad.assign(n.numel, T(0));
  return n.grad;
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_fn) {
  ops_.push_back(std::move(backward_fn));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.tape() != this) {
    throw ContractError("backward: loss is not on this tape");
  }
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_str(loss.shape()));
  }
  if (backward_run_) {
    throw ContractError("backward: tape already swept");
  }
  backward_run_ = true;
  grad_buffer(loss.node())[0] = T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

template <typename T>
const std::vector<T>& Tape<T>::grad(const Tensor<T>& t) {
  if (t.tape() != this) {
    throw ContractError("grad: tensor is not on this tape");
  }
  return grad_buffer(t.node());
}

// --- elementwise and broadcast ops -------------------------------------------

namespace {

enum class BiasKind { None, TrailingVector };

/// Classifies b against a: identical shape, or a [d] / [1,d] bias over a's
/// trailing axis.
template <typename T>
BiasKind bias_kind(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return BiasKind::None;
  size_t d = a.shape().empty() ? 1 : a.shape().back();
  bool row_vec = b.ndim() == 1 && b.shape()[0] == d;
  bool row_mat = b.ndim() == 2 && b.shape()[0] == 1 && b.shape()[1] == d;
  if ((row_vec || row_mat) && a.numel() % d == 0 && a.ndim() >= 1) {
    return BiasKind::TrailingVector;
  }
  throw DimensionError(std::string(op) + ": unsupported shapes " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                       " (same-shape or trailing-axis bias only)");
}

template <typename T, typename Fwd>
Tensor<T> binary_pointwise(const char* op, const Tensor<T>& a,
                           const Tensor<T>& b, Fwd fwd, T da_sign, T db_sign) {
  require_valid(op, a);
  require_valid(op, b);
  BiasKind kind = bias_kind(op, a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  if (kind == BiasKind::None) {
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    size_t d = bv.size();
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % d]);
  }
  Tape<T>* tape = result_tape<T>(op, {&a, &b});
  Tensor<T> y = finish(op, tape, a.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, b, kind, da_sign, db_sign]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      if (a.on_tape()) {
        std::vector<T>& ga = tape->grad_buffer(a.node());
        for (size_t i = 0; i < g.size(); ++i) ga[i] += da_sign * g[i];
      }
      if (b.on_tape()) {
        std::vector<T>& gb = tape->grad_buffer(b.node());
        if (kind == BiasKind::None) {
          for (size_t i = 0; i < g.size(); ++i) gb[i] += db_sign * g[i];
        } else {
          size_t d = gb.size();
          for (size_t i = 0; i < g.size(); ++i) gb[i % d] += db_sign * g[i];
        }
      }
    });
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise<T>(
      "add", a, b, [](T x, T y) { return x + y; }, T(1), T(1));
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_pointwise<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, T(1), T(-1));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_valid("mul", a);
  require_valid("mul", b);
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  Tape<T>* tape = result_tape<T>("mul", {&a, &b});
  Tensor<T> y = finish("mul", tape, a.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, b]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      if (a.on_tape()) {
        std::vector<T>& ga = tape->grad_buffer(a.node());
        const auto& bv2 = b.values();
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (b.on_tape()) {
        std::vector<T>& gb = tape->grad_buffer(b.node());
        const auto& av2 = a.values();
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  require_valid("scale", a);
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = s * av[i];
  Tape<T>* tape = result_tape<T>("scale", {&a});
  Tensor<T> y = finish("scale", tape, a.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, s]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      for (size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
  }
  return y;
}

// --- matmul / transpose ------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_valid("matmul", a);
  require_valid("matmul", b);
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(m * n);
  {
    ECMap<T> A(a.values().data(), m, k);
    ECMap<T> B(b.values().data(), k, n);
    EMap<T> C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Tape<T>* tape = result_tape<T>("matmul", {&a, &b});
  Tensor<T> y = finish("matmul", tape, Shape{m, n}, std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, b, m, k, n]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      ECMap<T> G(g.data(), m, n);
      if (a.on_tape()) {
        ECMap<T> B(b.values().data(), k, n);
        EMap<T> GA(tape->grad_buffer(a.node()).data(), m, k);
        GA.noalias() += G * B.transpose();
      }
      if (b.on_tape() && !testhook::corrupt_matmul_backward) {
        ECMap<T> A(a.values().data(), m, k);
        EMap<T> GB(tape->grad_buffer(b.node()).data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_valid("transpose", a);
  if (a.ndim() != 2) {
    throw DimensionError("transpose: expected rank-2, got " +
                         shape_str(a.shape()));
  }
  size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<T> out(m * n);
  const auto& av = a.values();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  Tape<T>* tape = result_tape<T>("transpose", {&a});
  Tensor<T> y = finish("transpose", tape, Shape{n, m}, std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, m, n]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return y;
}

// --- activations -------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  require_valid("relu", a);
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  Tape<T>* tape = result_tape<T>("relu", {&a});
  Tensor<T> y = finish("relu", tape, a.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      const auto& av2 = a.values();
      for (size_t i = 0; i < g.size(); ++i)
        if (av2[i] > T(0)) ga[i] += g[i];
    });
  }
  return y;
}

namespace {

/// Iterates the (outer, inner) decomposition of an axis: for every slice,
/// elements sit at base + j*inner for j in [0, n).
struct AxisSpan {
  size_t outer, n, inner;
};

inline AxisSpan axis_span(const Shape& shape, size_t axis) {
  AxisSpan s{1, shape[axis], 1};
  for (size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, size_t axis) {
  require_valid("softmax", a);
  if (axis >= a.ndim() || a.shape()[axis] == 0) {
    throw DimensionError("softmax: bad axis " + std::to_string(axis) +
                         " for shape " + shape_str(a.shape()));
  }
  AxisSpan s = axis_span(a.shape(), axis);
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (size_t o = 0; o < s.outer; ++o) {
    for (size_t in = 0; in < s.inner; ++in) {
      size_t base = o * s.n * s.inner + in;
      T mx = av[base];
      for (size_t j = 1; j < s.n; ++j)
        mx = std::max(mx, av[base + j * s.inner]);
      T denom = T(0);
      for (size_t j = 0; j < s.n; ++j) {
        T e = std::exp(av[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        denom += e;
      }
      for (size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= denom;
    }
  }
  Tape<T>* tape = result_tape<T>("softmax", {&a});
  Tensor<T> y = finish("softmax", tape, a.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, y, s]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      const auto& yv = y.values();
      for (size_t o = 0; o < s.outer; ++o) {
        for (size_t in = 0; in < s.inner; ++in) {
          size_t base = o * s.n * s.inner + in;
          T dot = T(0);
          for (size_t j = 0; j < s.n; ++j) {
            size_t idx = base + j * s.inner;
            dot += g[idx] * yv[idx];
          }
          for (size_t j = 0; j < s.n; ++j) {
            size_t idx = base + j * s.inner;
            ga[idx] += yv[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& a, const std::vector<uint8_t>& mask) {
  require_valid("masked_softmax", a);
  if (a.ndim() != 2) {
    throw DimensionError("masked_softmax: expected rank-2, got " +
                         shape_str(a.shape()));
  }
  size_t m = a.shape()[0], n = a.shape()[1];
  if (mask.size() != m * n) {
    throw DimensionError("masked_softmax: mask size " +
                         std::to_string(mask.size()) + " != " +
                         std::to_string(m * n));
  }
  const auto& av = a.values();
  std::vector<T> out(m * n, T(0));
  for (size_t r = 0; r < m; ++r) {
    size_t base = r * n;
    T mx = T(0);
    bool any = false;
    for (size_t c = 0; c < n; ++c) {
      if (!mask[base + c]) continue;
      mx = any ? std::max(mx, av[base + c]) : av[base + c];
      any = true;
    }
    if (!any) continue;  // fully masked row stays zero
    T denom = T(0);
    for (size_t c = 0; c < n; ++c) {
      if (!mask[base + c]) continue;
      T e = std::exp(av[base + c] - mx);
      out[base + c] = e;
      denom += e;
    }
    for (size_t c = 0; c < n; ++c)
      if (mask[base + c]) out[base + c] /= denom;
  }
  Tape<T>* tape = result_tape<T>("masked_softmax", {&a});
  Tensor<T> y = finish("masked_softmax", tape, a.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, y, mask, m, n]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      const auto& yv = y.values();
      for (size_t r = 0; r < m; ++r) {
        size_t base = r * n;
        T dot = T(0);
        for (size_t c = 0; c < n; ++c)
          if (mask[base + c]) dot += g[base + c] * yv[base + c];
        for (size_t c = 0; c < n; ++c)
          if (mask[base + c])
            ga[base + c] += yv[base + c] * (g[base + c] - dot);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  require_valid("layer_norm", x);
  require_valid("layer_norm", gain);
  require_valid("layer_norm", bias);
  if (x.ndim() < 1) {
    throw DimensionError("layer_norm: input must have rank >= 1");
  }
  size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias size must match trailing dim " +
                         std::to_string(d));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be > 0");
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  size_t slices = xv.size() / d;
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_sigma(slices);
  for (size_t sidx = 0; sidx < slices; ++sidx) {
    size_t base = sidx * d;
    T mu = T(0);
    for (size_t j = 0; j < d; ++j) mu += xv[base + j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (size_t j = 0; j < d; ++j) {
      T c = xv[base + j] - mu;
      var += c * c;
    }
    var /= static_cast<T>(d);
    T is = T(1) / std::sqrt(var + eps);
    inv_sigma[sidx] = is;
    for (size_t j = 0; j < d; ++j) {
      T xh = (xv[base + j] - mu) * is;
      xhat[base + j] = xh;
      out[base + j] = xh * gv[j] + bv[j];
    }
  }
  Tape<T>* tape = result_tape<T>("layer_norm", {&x, &gain, &bias});
  Tensor<T> y = finish("layer_norm", tape, x.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, x, gain, bias, d, slices,
                  xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      const auto& gv2 = gain.values();
      for (size_t sidx = 0; sidx < slices; ++sidx) {
        size_t base = sidx * d;
        if (gain.on_tape()) {
          std::vector<T>& gg = tape->grad_buffer(gain.node());
          for (size_t j = 0; j < d; ++j)
            gg[j] += g[base + j] * xhat[base + j];
        }
        if (bias.on_tape()) {
          std::vector<T>& gb = tape->grad_buffer(bias.node());
          for (size_t j = 0; j < d; ++j) gb[j] += g[base + j];
        }
        if (x.on_tape()) {
          std::vector<T>& gx = tape->grad_buffer(x.node());
          T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
          for (size_t j = 0; j < d; ++j) {
            T dxh = g[base + j] * gv2[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[base + j];
          }
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          for (size_t j = 0; j < d; ++j) {
            T dxh = g[base + j] * gv2[j];
            gx[base + j] += (dxh - mean_dxhat -
                             xhat[base + j] * mean_dxhat_xhat) *
                            inv_sigma[sidx];
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        const std::vector<int32_t>& targets) {
  require_valid("cross_entropy", logits);
  if (logits.ndim() != 2) {
    throw DimensionError("cross_entropy: logits must be rank-2, got " +
                         shape_str(logits.shape()));
  }
  size_t t = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != t) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(t) + " rows");
  }
  for (int32_t id : targets) {
    if (id < 0 || static_cast<size_t>(id) >= v) {
      throw IndexError("cross_entropy: target id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(v));
    }
  }
  const auto& lv = logits.values();
  std::vector<T> lse(t);
  T total = T(0);
  for (size_t r = 0; r < t; ++r) {
    size_t base = r * v;
    T mx = lv[base];
    for (size_t c = 1; c < v; ++c) mx = std::max(mx, lv[base + c]);
    T acc = T(0);
    for (size_t c = 0; c < v; ++c) acc += std::exp(lv[base + c] - mx);
    lse[r] = mx + std::log(acc);
    total += lse[r] - lv[base + static_cast<size_t>(targets[r])];
  }
  total /= static_cast<T>(t);
  Tape<T>* tape = result_tape<T>("cross_entropy", {&logits});
  Tensor<T> y = finish("cross_entropy", tape, Shape{}, std::vector<T>{total});
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, logits, targets, lse = std::move(lse), t, v]() {
      T g = tape->grad_buffer(ynode)[0];
      std::vector<T>& gl = tape->grad_buffer(logits.node());
      const auto& lv2 = logits.values();
      T w = g / static_cast<T>(t);
      for (size_t r = 0; r < t; ++r) {
        size_t base = r * v;
        for (size_t c = 0; c < v; ++c) {
          T p = std::exp(lv2[base + c] - lse[r]);
          gl[base + c] += w * p;
        }
        gl[base + static_cast<size_t>(targets[r])] -= w;
      }
    });
  }
  return y;
}

// --- reductions and views ----------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  require_valid("sum", a);
  const auto& av = a.values();
  T total = std::accumulate(av.begin(), av.end(), T(0));
  Tape<T>* tape = result_tape<T>("sum", {&a});
  Tensor<T> y = finish("sum", tape, Shape{}, std::vector<T>{total});
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a]() {
      T g = tape->grad_buffer(ynode)[0];
      std::vector<T>& ga = tape->grad_buffer(a.node());
      for (T& x : ga) x += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  require_valid("mean", a);
  if (a.numel() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require_valid("reshape", a);
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(shape));
  }
  Tape<T>* tape = result_tape<T>("reshape", {&a});
  Tensor<T> y = finish("reshape", tape, std::move(shape),
                       std::vector<T>(a.values()));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  size_t cols = parts[0].cols();
  size_t rows = 0;
  for (const auto& p : parts) {
    require_valid("concat_rows", p);
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_str(p.shape()));
    }
    rows += p.rows();
  }
  std::vector<T> out;
  out.reserve(rows * cols);
  for (const auto& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    if (!p.on_tape()) continue;
    if (tape && tape != p.tape())
      throw ContractError("concat_rows: operands live on different tapes");
    tape = p.tape();
  }
  Tensor<T> y = finish("concat_rows", tape, Shape{rows, cols}, std::move(out));
  if (tape) {
    int ynode = y.node();
    std::vector<Tensor<T>> kept = parts;
    tape->record([tape, ynode, kept = std::move(kept)]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      size_t offset = 0;
      for (const auto& p : kept) {
        size_t n = p.numel();
        if (p.on_tape()) {
          std::vector<T>& gp = tape->grad_buffer(p.node());
          for (size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
        }
        offset += n;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, size_t begin, size_t end) {
  require_valid("slice_rows", a);
  size_t m = a.rows(), n = a.cols();
  if (begin > end || end > m) {
    throw IndexError("slice_rows: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") outside " + std::to_string(m) +
                     " rows");
  }
  std::vector<T> out(a.values().begin() + begin * n,
                     a.values().begin() + end * n);
  Tape<T>* tape = result_tape<T>("slice_rows", {&a});
  Tensor<T> y =
      finish("slice_rows", tape, Shape{end - begin, n}, std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, begin, n]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      for (size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  size_t rows = parts[0].rows();
  size_t cols = 0;
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    require_valid("concat_cols", p);
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()));
    }
    cols += p.cols();
    if (p.on_tape()) {
      if (tape && tape != p.tape())
        throw ContractError("concat_cols: operands live on different tapes");
      tape = p.tape();
    }
  }
  std::vector<T> out(rows * cols);
  size_t col_off = 0;
  for (const auto& p : parts) {
    size_t pc = p.cols();
    const auto& pv = p.values();
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < pc; ++c)
        out[r * cols + col_off + c] = pv[r * pc + c];
    col_off += pc;
  }
  Tensor<T> y = finish("concat_cols", tape, Shape{rows, cols}, std::move(out));
  if (tape) {
    int ynode = y.node();
    std::vector<Tensor<T>> kept = parts;
    tape->record([tape, ynode, kept = std::move(kept), rows, cols]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      size_t off = 0;
      for (const auto& p : kept) {
        size_t pc = p.cols();
        if (p.on_tape()) {
          std::vector<T>& gp = tape->grad_buffer(p.node());
          for (size_t r = 0; r < rows; ++r)
            for (size_t c = 0; c < pc; ++c)
              gp[r * pc + c] += g[r * cols + off + c];
        }
        off += pc;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, size_t begin, size_t end) {
  require_valid("slice_cols", a);
  size_t m = a.rows(), n = a.cols();
  if (begin > end || end > n) {
    throw IndexError("slice_cols: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") outside " + std::to_string(n) +
                     " cols");
  }
  size_t w = end - begin;
  std::vector<T> out(m * w);
  const auto& av = a.values();
  for (size_t r = 0; r < m; ++r)
    for (size_t c = 0; c < w; ++c) out[r * w + c] = av[r * n + begin + c];
  Tape<T>* tape = result_tape<T>("slice_cols", {&a});
  Tensor<T> y = finish("slice_cols", tape, Shape{m, w}, std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, begin, m, n, w]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      for (size_t r = 0; r < m; ++r)
        for (size_t c = 0; c < w; ++c) ga[r * n + begin + c] += g[r * w + c];
    });
  }
  return y;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int32_t>& ids) {
  require_valid("gather_rows", table);
  size_t n = table.rows(), d = table.cols();
  for (int32_t id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= n) {
      throw IndexError("gather_rows: id " + std::to_string(id) +
                       " outside table of " + std::to_string(n) + " rows");
    }
  }
  std::vector<T> out(ids.size() * d);
  const auto& tv = table.values();
  for (size_t i = 0; i < ids.size(); ++i) {
    size_t src = static_cast<size_t>(ids[i]) * d;
    std::copy(tv.begin() + src, tv.begin() + src + d, out.begin() + i * d);
  }
  Tape<T>* tape = result_tape<T>("gather_rows", {&table});
  Tensor<T> y =
      finish("gather_rows", tape, Shape{ids.size(), d}, std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, table, ids, d]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& gt = tape->grad_buffer(table.node());
      for (size_t i = 0; i < ids.size(); ++i) {
        size_t dst = static_cast<size_t>(ids[i]) * d;
        for (size_t j = 0; j < d; ++j) gt[dst + j] += g[i * d + j];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double rate, Rng& rng) {
  require_valid("dropout", a);
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must be in [0,1)");
  }
  if (rate == 0.0) return a;
  const auto& av = a.values();
  T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(av.size());
  std::vector<T> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    mask[i] = rng.uniform() < rate ? T(0) : keep_scale;
    out[i] = av[i] * mask[i];
  }
  Tape<T>* tape = result_tape<T>("dropout", {&a});
  Tensor<T> y = finish("dropout", tape, a.shape(), std::move(out));
  if (tape) {
    int ynode = y.node();
    tape->record([tape, ynode, a, mask = std::move(mask)]() {
      const std::vector<T>& g = tape->grad_buffer(ynode);
      std::vector<T>& ga = tape->grad_buffer(a.node());
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
  }
  return y;
}

// --- explicit instantiations --------------------------------------------------

#define VLMT_INSTANTIATE_TENSOR(T)                                            \
  template class Tensor<T>;                                                   \
  template class Tape<T>;                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> neg(const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> transpose(const Tensor<T>&);                             \
  template Tensor<T> relu(const Tensor<T>&);                                  \
  template Tensor<T> softmax(const Tensor<T>&, size_t);                       \
  template Tensor<T> masked_softmax(const Tensor<T>&,                         \
                                    const std::vector<uint8_t>&);             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&,           \
                                const Tensor<T>&, T);                         \
  template Tensor<T> cross_entropy(const Tensor<T>&,                          \
                                   const std::vector<int32_t>&);              \
  template Tensor<T> sum(const Tensor<T>&);                                   \
  template Tensor<T> mean(const Tensor<T>&);                                  \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                        \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);              \
  template Tensor<T> slice_rows(const Tensor<T>&, size_t, size_t);            \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);              \
  template Tensor<T> slice_cols(const Tensor<T>&, size_t, size_t);            \
  template Tensor<T> gather_rows(const Tensor<T>&,                            \
                                 const std::vector<int32_t>&);                \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&);

VLMT_INSTANTIATE_TENSOR(float)
VLMT_INSTANTIATE_TENSOR(double)

}  // namespace vlmt
