#include "mrdn/blocks.hpp"

#include "mrdn/error.hpp"

namespace mrdn {

std::string to_string(BlockKind kind) { return kind == BlockKind::kRdb ? "rdb" : "mrdb"; }

BlockKind parse_block_kind(const std::string& text) {
  if (text == "rdb" || text == "RDB") return BlockKind::kRdb;
  if (text == "mrdb" || text == "MRDB") return BlockKind::kMrdb;
  throw UsageError("unknown block kind '" + text + "', expected rdb or mrdb");
}

void BlockConfig::validate() const {
  if (g0 < 1 || growth < 1 || layers < 1) {
    throw UsageError("block config needs G0, G, C >= 1 (got G0=" + std::to_string(g0) +
                     ", G=" + std::to_string(growth) + ", C=" + std::to_string(layers) + ")");
  }
}

std::size_t block_param_count(const BlockConfig& cfg) {
  cfg.validate();
  std::size_t total = 0;
  for (std::size_t i = 1; i <= cfg.layers; ++i) {
    total += cfg.stream_width(i - 1) * cfg.growth * 9 + cfg.growth;
    if (cfg.kind == BlockKind::kMrdb) total += cfg.g0 * cfg.stream_width(i) + cfg.stream_width(i);
  }
  total += cfg.stream_width(cfg.layers) * cfg.g0 + cfg.g0;
  return total;
}

template <typename T>
DenseBlock<T>::DenseBlock(const BlockConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t i = 1; i <= cfg_.layers; ++i) {
    DenseLayer<T> layer;
    layer.conv3 = ConvParams<T>::init(cfg_.stream_width(i - 1), cfg_.growth, 3, rng);
    if (cfg_.kind == BlockKind::kMrdb) {
      layer.mr1 = ConvParams<T>::init(cfg_.g0, cfg_.stream_width(i), 1, rng);
    }
    layers_.push_back(std::move(layer));
  }
  lff_ = ConvParams<T>::init(cfg_.stream_width(cfg_.layers), cfg_.g0, 1, rng);
}

template <typename T>
DenseBlock<T> DenseBlock<T>::zeros(const BlockConfig& cfg) {
  cfg.validate();
  DenseBlock block(cfg);
  for (std::size_t i = 1; i <= cfg.layers; ++i) {
    DenseLayer<T> layer;
    layer.conv3 = ConvParams<T>::zeros(cfg.stream_width(i - 1), cfg.growth, 3);
    if (cfg.kind == BlockKind::kMrdb) {
      layer.mr1 = ConvParams<T>::zeros(cfg.g0, cfg.stream_width(i), 1);
    }
    block.layers_.push_back(std::move(layer));
  }
  block.lff_ = ConvParams<T>::zeros(cfg.stream_width(cfg.layers), cfg.g0, 1);
  return block;
}

template <typename T>
DenseBlock<T> DenseBlock<T>::as_rdb() const {
  BlockConfig cfg = cfg_;
  cfg.kind = BlockKind::kRdb;
  DenseBlock rdb(cfg);
  for (const auto& layer : layers_) rdb.layers_.push_back(DenseLayer<T>{layer.conv3, std::nullopt});
  rdb.lff_ = lff_;
  return rdb;
}

template <typename T>
void DenseBlock<T>::append_params(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string layer = prefix + ".layer" + std::to_string(i + 1);
    append_conv(out, layer + ".conv3", layers_[i].conv3);
    if (layers_[i].mr1) append_conv(out, layer + ".mr1", *layers_[i].mr1);
  }
  append_conv(out, prefix + ".lff", lff_);
}

namespace {

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseBlock<T>& block, bool multi_residual) {
  const BlockConfig& cfg = block.config();
  if (x.shape().c != cfg.g0) {
    throw ShapeError("dense block: input has " + std::to_string(x.shape().c) +
                     " channels, block expects G0 = " + std::to_string(cfg.g0));
  }
  Tensor<T> stream = x;
  for (const auto& layer : block.layers()) {
    Tensor<T> f = relu(conv(stream, layer.conv3));
    stream = concat_channels<T>({stream, f});
    if (multi_residual) stream = add(stream, conv(x, *layer.mr1));
  }
  return add(conv(stream, block.lff()), x);
}

}  // namespace

template <typename T>
Tensor<T> rdb_forward(const Tensor<T>& x, const DenseBlock<T>& block) {
  if (block.config().kind != BlockKind::kRdb) throw UsageError("rdb_forward: block is an MRDB");
  return dense_forward(x, block, false);
}

template <typename T>
Tensor<T> mrdb_forward(const Tensor<T>& x, const DenseBlock<T>& block) {
  if (block.config().kind != BlockKind::kMrdb) throw UsageError("mrdb_forward: block is an RDB");
  return dense_forward(x, block, true);
}

template <typename T>
Tensor<T> DenseBlock<T>::forward(const Tensor<T>& x) const {
  return cfg_.kind == BlockKind::kRdb ? rdb_forward(x, *this) : mrdb_forward(x, *this);
}

template class DenseBlock<float>;
template class DenseBlock<double>;
template Tensor<float> rdb_forward(const Tensor<float>&, const DenseBlock<float>&);
template Tensor<double> rdb_forward(const Tensor<double>&, const DenseBlock<double>&);
template Tensor<float> mrdb_forward(const Tensor<float>&, const DenseBlock<float>&);
template Tensor<double> mrdb_forward(const Tensor<double>&, const DenseBlock<double>&);

}  // namespace mrdn
