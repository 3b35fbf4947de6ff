#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mrdn/nn.hpp"
#include "mrdn/params.hpp"
#include "mrdn/tensor.hpp"

namespace mrdn {

enum class BlockKind { kRdb, kMrdb };

std::string to_string(BlockKind kind);
BlockKind parse_block_kind(const std::string& text);

struct BlockConfig {
  std::size_t g0 = 64;      // block input/output width
  std::size_t growth = 32;  // channels added per dense layer
  std::size_t layers = 6;   // dense layers per block
  BlockKind kind = BlockKind::kMrdb;

  // Throws UsageError unless g0, growth and layers are all >= 1.
  void validate() const;
  // Width of the concatenated stream after dense layer i (i = 0 is the input).
  std::size_t stream_width(std::size_t i) const { return g0 + i * growth; }
};

template <typename T>
struct DenseLayer {
  ConvParams<T> conv3;                // stream_width(i-1) -> growth, 3x3
  std::optional<ConvParams<T>> mr1;   // g0 -> stream_width(i), 1x1 (MRDB only)
};

/// Residual dense block, optionally with multi-residual 1x1 branches.
///
/// Layer i (1-based) reads the running stream s_{i-1} (s_0 = x) and emits
/// f_i = relu(conv3_i(s_{i-1})). The stream grows as s_i = concat(s_{i-1}, f_i);
/// an MRDB then adds mr1_i(x) onto s_i. Local feature fusion maps s_C back to
/// g0 channels and the block input is added to the result.
template <typename T>
class DenseBlock {
 public:
  DenseBlock(const BlockConfig& cfg, Rng& rng);
  static DenseBlock zeros(const BlockConfig& cfg);

  Tensor<T> forward(const Tensor<T>& x) const;

  const BlockConfig& config() const { return cfg_; }
  std::vector<DenseLayer<T>>& layers() { return layers_; }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }
  ConvParams<T>& lff() { return lff_; }
  const ConvParams<T>& lff() const { return lff_; }

  // An RDB sharing this block's conv3 and LFF tensors (storage is shared).
  DenseBlock as_rdb() const;

  // Appends `prefix`.layer{i}.conv3/mr1 and `prefix`.lff entries in order.
  void append_params(const std::string& prefix, ParamList<T>& out) const;

 private:
  explicit DenseBlock(const BlockConfig& cfg) : cfg_(cfg) {}

  BlockConfig cfg_;
  std::vector<DenseLayer<T>> layers_;
  ConvParams<T> lff_;
};

template <typename T>
Tensor<T> rdb_forward(const Tensor<T>& x, const DenseBlock<T>& block);
template <typename T>
Tensor<T> mrdb_forward(const Tensor<T>& x, const DenseBlock<T>& block);

// Closed-form trainable scalar count of one block.
std::size_t block_param_count(const BlockConfig& cfg);

}  // namespace mrdn
