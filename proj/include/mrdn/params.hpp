#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mrdn/nn.hpp"
#include "mrdn/tensor.hpp"

namespace mrdn {

// A trainable tensor under its checkpoint name. `dims` is the logical shape
// written to checkpoints: (C_out, C_in, k, k) for weights, (C_out) for biases.
template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  std::vector<std::size_t> dims;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
void append_conv(ParamList<T>& out, const std::string& prefix, const ConvParams<T>& p) {
  const Shape& ws = p.weight.shape();
  out.push_back({prefix + ".weight", p.weight, {ws.n, ws.c, ws.h, ws.w}});
  out.push_back({prefix + ".bias", p.bias, {ws.n}});
}

template <typename T>
std::size_t count_params(const ParamList<T>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor.numel();
  return total;
}

template <typename T>
void set_requires_grad(const ParamList<T>& params, bool on) {
  for (auto p : params) p.tensor.set_requires_grad(on);
}

}  // namespace mrdn
