#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mrdn {

using Rng = std::mt19937_64;

// Extents of a rank-4 NCHW tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t item() const { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

inline constexpr Shape kScalarShape{1, 1, 1, 1};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is first accumulated
  bool requires_grad = false;
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

}  // namespace detail

/// Rank-4 array in row-major NCHW order.
///
/// A Tensor is a handle: copies share storage and gradient, which is what lets
/// one parameter appear at several positions of a recorded graph. Use clone()
/// for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor ones(Shape shape) { return Tensor(shape, T{1}); }
  static Tensor scalar(T value) { return Tensor(kScalarShape, value); }
  static Tensor uniform(Shape shape, T lo, T hi, Rng& rng);

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->shape.numel(); }

  std::span<const T> data() const { return node_->data; }
  // Direct write access. Meant for parameter updates and test perturbations,
  // never for tensors that are inputs of a live tape entry.
  std::span<T> mutable_data() { return node_->data; }

  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  // Gradient buffer, zero-allocated on first use. Only backward rules and the
  // optimizer call this.
  std::span<T> grad_accumulator() const;
  void zero_grad();
  void clear_grad();

  Tensor clone() const;
  // Same values, no tape participation.
  Tensor detach() const { return clone(); }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  const detail::NodePtr<T>& node() const { return node_; }

 private:
  detail::NodePtr<T> node_;
};

/// Ordered record of differentiable operations for the current thread.
///
/// Entries are appended as operations execute, so inputs always precede the
/// operations that consume them. backward() walks the entries once in reverse
/// and then clears the tape.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out)>;

  struct Entry {
    std::vector<detail::NodePtr<T>> inputs;
    detail::NodePtr<T> output;
    BackwardFn backward;
  };

  static Tape& active();

  void record(std::vector<detail::NodePtr<T>> inputs, detail::NodePtr<T> output,
              BackwardFn backward);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Attaches `backward` to `out` when grad mode is on and any input requires a
/// gradient. Returns whether the op was recorded.
template <typename T>
bool record_op(Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs,
               typename Tape<T>::BackwardFn backward);
template <typename T>
bool record_op_n(Tensor<T>& out, std::span<const Tensor<T>> inputs,
                 typename Tape<T>::BackwardFn backward);

/// Back-propagates from a scalar loss through the active tape, accumulating
/// (+=) into every reachable tensor that requires a gradient, then clears the
/// tape. Throws ShapeError for a non-scalar loss and Error for an empty tape.
template <typename T>
void backward(const Tensor<T>& loss);

// Element-wise and reduction primitives. All are recorded on the tape.

// b may have batch extent 1 and is then broadcast over a's batch.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat_channels<T>(std::span<const Tensor<T>>(v));
}
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> square(const Tensor<T>& x);
// log(1 + exp(x)), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x);
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
// Mean over all elements; an empty tensor has mean 0.
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
// Mean over H and W, giving shape (N, C, 1, 1).
template <typename T>
Tensor<T> mean_spatial(const Tensor<T>& x);

// Converts element type; the result does not participate in the tape.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
  std::vector<To> v(x.data().begin(), x.data().end());
  return Tensor<To>(x.shape(), std::move(v));
}

}  // namespace mrdn
