#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mrdn/checkpoint.hpp"
#include "mrdn/data.hpp"
#include "mrdn/model.hpp"
#include "mrdn/params.hpp"
#include "mrdn/tensor.hpp"

namespace mrdn {

struct LossWeights {
  double l1 = 1.0;
  double feat = 0.05;
  double adv = 0.0;

  static LossWeights content() { return {1.0, 0.05, 0.0}; }
  static LossWeights adversarial() { return {0.0, 1.0, 5e-3}; }
  // Throws UsageError for negative or non-finite weights, or all zero.
  void validate() const;
};

// Mean absolute difference.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

// Mean squared difference of extractor features; the target branch is not
// recorded, so gradients reach pred only.
template <typename T>
Tensor<T> feature_loss(const Tensor<T>& pred, const Tensor<T>& target, const FeatureExtractor<T>& fx);

template <typename T>
struct GanLosses {
  Tensor<T> d_loss;  // BCE(real, 1) + BCE(fake, 0)
  Tensor<T> g_loss;  // BCE(fake, 1)
};

// Logits of shape (N, 1, 1, 1); both losses average over the batch.
template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& d_real_logit, const Tensor<T>& d_fake_logit);

template <typename T>
struct LossTerms {
  Tensor<T> total;
  double l1 = 0.0;
  double feat = 0.0;
  double adv = 0.0;
};

// Components needed by the weighted terms; unused ones may be null.
template <typename T>
struct LossModels {
  const FeatureExtractor<T>* features = nullptr;
  const Discriminator<T>* discriminator = nullptr;
};

/// w.l1 * l1 + w.feat * feature + w.adv * g_loss. Terms whose weight is zero
/// are neither evaluated nor recorded. lr_img is the discriminator condition.
template <typename T>
LossTerms<T> combined_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& lr_img,
                           const LossWeights& w, const LossModels<T>& models);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter list. Moments are kept in
/// the parameters' precision.
template <typename T>
class Adam {
 public:
  explicit Adam(ParamList<T> params, AdamConfig cfg = {});

  // Throws UsageError if any parameter has no gradient. Gradients are zeroed
  // after the update.
  void step(double lr);
  std::uint64_t steps() const { return t_; }
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t t_ = 0;
};

// base_lr * 0.5^floor(iter / period).
double lr_at(std::uint64_t iter, double base_lr, std::uint64_t period);

enum class Phase { kPretrain2x, kFinetuneRecurrent, kGanFinetune };

std::string to_string(Phase phase);
Phase parse_phase(const std::string& text);

struct TrainPlan {
  Phase phase = Phase::kPretrain2x;
  std::size_t iterations = 1000;
  std::uint64_t lr_period = 200000;
  double base_lr = 1e-4;
  std::size_t batch = 16;
  std::size_t patch = 32;
  int scale = 4;  // target scale of the recurrent phases; pretraining is always 2x

  int effective_scale() const { return phase == Phase::kPretrain2x ? 2 : scale; }
  void validate() const;
};

struct TraceRow {
  std::size_t iter = 0;
  double lr = 0.0;
  double total = 0.0;
  double l1 = 0.0;
  double feat = 0.0;
  double adv = 0.0;
  double d_loss = 0.0;  // gan phase only
};

// `iter<TAB>lr<TAB>total<TAB>l1<TAB>feat<TAB>adv` per row.
std::string format_trace(const std::vector<TraceRow>& trace);

struct TrainSetup {
  Generator<float>* generator = nullptr;
  const FeatureExtractor<float>* features = nullptr;  // required when weights.feat > 0
  Discriminator<float>* discriminator = nullptr;      // required by the gan phase
  // Starting point. Required by the fine-tune phases; generator entries are
  // loaded, and `disc.` entries too when a discriminator is present.
  const Checkpoint* initial = nullptr;
  // Called after every iteration; used for progress output.
  std::function<void(const TraceRow&)> on_iteration;
};

struct TrainResult {
  Checkpoint checkpoint;  // generator, plus `disc.` entries in the gan phase
  std::vector<TraceRow> trace;
};

/// Runs plan.iterations steps of: sample batch, forward at the phase's scale,
/// weighted loss, backward, Adam update at lr_at(iter). The gan phase runs one
/// discriminator step and then one generator step per iteration, each on its
/// own tape.
TrainResult train_phase(const TrainSetup& setup, const PairedDataset& data, const TrainPlan& plan,
                        const LossWeights& weights, std::uint64_t seed);

}  // namespace mrdn
