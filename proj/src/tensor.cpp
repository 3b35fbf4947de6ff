#include "mrdn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mrdn/error.hpp"

namespace mrdn {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor() : node_(std::make_shared<detail::Node<T>>()) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<detail::Node<T>>()) {
  node_->shape = shape;
  node_->data.assign(shape.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<detail::Node<T>>()) {
  if (values.size() != shape.numel()) {
    throw ShapeError("Tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape.str());
  }
  node_->shape = shape;
  node_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape shape, T lo, T hi, Rng& rng) {
  std::uniform_real_distribution<T> dist(lo, hi);
  Tensor t(shape);
  for (auto& v : t.node_->data) v = dist(rng);
  return t;
}

template <typename T>
T Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const Shape& s = node_->shape;
  return node_->data[((n * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape().str() + " is not a scalar");
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad_accumulator() const {
  if (node_->grad.empty()) node_->grad.assign(numel(), T{0});
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
void Tensor<T>::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->data);
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Tape<T>& Tape<T>::active() {
  static thread_local Tape tape;
  return tape;
}

template <typename T>
void Tape<T>::record(std::vector<detail::NodePtr<T>> inputs, detail::NodePtr<T> output,
                     BackwardFn backward) {
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
bool record_op_n(Tensor<T>& out, std::span<const Tensor<T>> inputs,
                 typename Tape<T>::BackwardFn backward) {
  if (!g_grad_enabled) return false;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return false;
  std::vector<detail::NodePtr<T>> nodes;
  nodes.reserve(inputs.size());
  for (const auto& t : inputs) nodes.push_back(t.node());
  out.set_requires_grad(true);
  Tape<T>::active().record(std::move(nodes), out.node(), std::move(backward));
  return true;
}

template <typename T>
bool record_op(Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs,
               typename Tape<T>::BackwardFn backward) {
  std::vector<Tensor<T>> v;
  v.reserve(inputs.size());
  for (const auto* p : inputs) v.push_back(*p);
  return record_op_n<T>(out, std::span<const Tensor<T>>(v), std::move(backward));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.shape() != kScalarShape) {
    throw ShapeError("backward: loss must have shape (1,1,1,1), got " + loss.shape().str());
  }
  auto& tape = Tape<T>::active();
  if (tape.empty() || !loss.requires_grad()) {
    tape.clear();
    throw Error("backward: loss was not produced by any recorded operation");
  }
  struct ClearOnExit {
    Tape<T>& tape;
    ~ClearOnExit() { tape.clear(); }
  } guard{tape};

  Tensor<T> seed = loss;
  seed.grad_accumulator()[0] += T{1};
  const auto& entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(it->output->grad);
  }
}

// ---------------------------------------------------------------------------
// Primitives

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool broadcast = sb.n == 1 && sa.n != 1 && sa.c == sb.c && sa.h == sb.h && sa.w == sb.w;
  if (sa != sb && !broadcast) shape_mismatch("add", sa, sb);

  Tensor<T> out(sa);
  auto o = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  const std::size_t item = sa.item();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] + db[broadcast ? i % item : i];

  record_op<T>(out, {&a, &b}, [a, b, broadcast, item](std::span<const T> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) gb[broadcast ? i % item : i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("sub", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] - db[i];

  record_op<T>(out, {&a, &b}, [a, b](std::span<const T> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = da[i] * db[i];

  record_op<T>(out, {&a, &b}, [a, b](std::span<const T> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.grad_accumulator();
      auto db = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * db[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_accumulator();
      auto da = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * da[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = dx[i] * factor;
  record_op<T>(out, {&x}, [x, factor](std::span<const T> g) mutable {
    auto gx = x.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape& first = parts[0].shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      shape_mismatch("concat_channels", first, s);
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::size_t plane = os.plane();
  Tensor<T> out(os);
  auto o = out.mutable_data();
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.shape().c * plane;
    auto src = p.data();
    for (std::size_t n = 0; n < os.n; ++n) {
      std::copy_n(src.begin() + n * block, block, o.begin() + (n * channels + c0) * plane);
    }
    c0 += p.shape().c;
  }

  std::vector<Tensor<T>> kept(parts.begin(), parts.end());
  record_op_n<T>(out, parts, [kept, channels, plane, os](std::span<const T> g) mutable {
    std::size_t c0 = 0;
    for (auto& p : kept) {
      const std::size_t block = p.shape().c * plane;
      if (p.requires_grad()) {
        auto gp = p.grad_accumulator();
        for (std::size_t n = 0; n < os.n; ++n) {
          const T* src = g.data() + (n * channels + c0) * plane;
          T* dst = gp.data() + n * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      c0 += p.shape().c;
    }
  });
  return out;
}

namespace {

// Shared shape for ops of the form out[i] = f(x[i]), grad_in[i] = g[i] * df(x[i], out[i]).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(dx[i]);
  record_op<T>(out, {&x}, [x, df](std::span<const T> g) mutable {
    auto gx = x.grad_accumulator();
    auto dx = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(dx[i]);
  });
  return out;
}

}  // namespace

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary<T>(
      x, [slope](T v) { return v > T{0} ? v : v * slope; },
      [slope](T v) { return v > T{0} ? T{1} : slope; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary<T>(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v) { return (v > lo && v < hi) ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return std::abs(v); },
      [](T v) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary<T>(x, [](T v) { return v * v; }, [](T v) { return T{2} * v; });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return std::max(v, T{0}) + std::log1p(std::exp(-std::abs(v))); },
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  record_op<T>(out, {&x}, [x](std::span<const T> g) mutable {
    auto gx = x.grad_accumulator();
    for (auto& v : gx) v += g[0];
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const std::size_t count = x.numel();
  T acc{0};
  for (T v : x.data()) acc += v;
  const T inv = count == 0 ? T{0} : T{1} / static_cast<T>(count);
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  record_op<T>(out, {&x}, [x, inv](std::span<const T> g) mutable {
    auto gx = x.grad_accumulator();
    for (auto& v : gx) v += g[0] * inv;
  });
  return out;
}

template <typename T>
Tensor<T> mean_spatial(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const std::size_t plane = s.plane();
  const T inv = plane == 0 ? T{0} : T{1} / static_cast<T>(plane);
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  auto o = out.mutable_data();
  auto dx = x.data();
  for (std::size_t k = 0; k < s.n * s.c; ++k) {
    T acc{0};
    for (std::size_t i = 0; i < plane; ++i) acc += dx[k * plane + i];
    o[k] = acc * inv;
  }
  record_op<T>(out, {&x}, [x, plane, inv](std::span<const T> g) mutable {
    auto gx = x.grad_accumulator();
    for (std::size_t k = 0; k < g.size(); ++k) {
      for (std::size_t i = 0; i < plane; ++i) gx[k * plane + i] += g[k] * inv;
    }
  });
  return out;
}

#define MRDN_INSTANTIATE(T)                                                                   \
  template class Tensor<T>;                                                                   \
  template class Tape<T>;                                                                     \
  template bool record_op_n<T>(Tensor<T>&, std::span<const Tensor<T>>,                        \
                               typename Tape<T>::BackwardFn);                                 \
  template bool record_op<T>(Tensor<T>&, std::initializer_list<const Tensor<T>*>,            \
                             typename Tape<T>::BackwardFn);                                   \
  template void backward<T>(const Tensor<T>&);                                                \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                           \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                          \
  template Tensor<T> relu<T>(const Tensor<T>&);                                               \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                      \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                                        \
  template Tensor<T> abs<T>(const Tensor<T>&);                                                \
  template Tensor<T> square<T>(const Tensor<T>&);                                             \
  template Tensor<T> softplus<T>(const Tensor<T>&);                                           \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                \
  template Tensor<T> mean<T>(const Tensor<T>&);                                               \
  template Tensor<T> mean_spatial<T>(const Tensor<T>&);

MRDN_INSTANTIATE(float)
MRDN_INSTANTIATE(double)

#undef MRDN_INSTANTIATE

}  // namespace mrdn
