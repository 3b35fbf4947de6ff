#include "mrdn/train.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "mrdn/error.hpp"

namespace mrdn {

void LossWeights::validate() const {
  for (double w : {l1, feat, adv}) {
    if (!std::isfinite(w) || w < 0.0) throw UsageError("loss weights must be finite and non-negative");
  }
  if (l1 == 0.0 && feat == 0.0 && adv == 0.0) throw UsageError("at least one loss weight must be positive");
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: " + pred.shape().str() + " vs " + target.shape().str());
  }
  return mean(abs(sub(pred, target)));
}

template <typename T>
Tensor<T> feature_loss(const Tensor<T>& pred, const Tensor<T>& target, const FeatureExtractor<T>& fx) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("feature_loss: " + pred.shape().str() + " vs " + target.shape().str());
  }
  Tensor<T> target_features;
  {
    NoGradGuard guard;
    target_features = fx.extract(target);
  }
  return mean(square(sub(fx.extract(pred), target_features)));
}

template <typename T>
GanLosses<T> gan_losses(const Tensor<T>& d_real_logit, const Tensor<T>& d_fake_logit) {
  // BCE(x, 1) = softplus(-x), BCE(x, 0) = softplus(x).
  GanLosses<T> out;
  out.d_loss = add(mean(softplus(scale(d_real_logit, T{-1}))), mean(softplus(d_fake_logit)));
  out.g_loss = mean(softplus(scale(d_fake_logit, T{-1})));
  return out;
}

template <typename T>
LossTerms<T> combined_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& lr_img,
                           const LossWeights& w, const LossModels<T>& models) {
  w.validate();
  LossTerms<T> terms;
  auto accumulate = [&terms](const Tensor<T>& term, double weight) {
    const Tensor<T> weighted = scale(term, static_cast<T>(weight));
    terms.total = terms.total.numel() == 0 ? weighted : add(terms.total, weighted);
  };
  if (w.l1 > 0.0) {
    const Tensor<T> l = l1_loss(pred, target);
    terms.l1 = static_cast<double>(l.item());
    accumulate(l, w.l1);
  }
  if (w.feat > 0.0) {
    if (models.features == nullptr) throw UsageError("feature loss weight set without a feature extractor");
    const Tensor<T> l = feature_loss(pred, target, *models.features);
    terms.feat = static_cast<double>(l.item());
    accumulate(l, w.feat);
  }
  if (w.adv > 0.0) {
    if (models.discriminator == nullptr) throw UsageError("adversarial weight set without a discriminator");
    const Tensor<T> logits = models.discriminator->forward(pred, lr_img);
    const Tensor<T> l = mean(softplus(scale(logits, T{-1})));
    terms.adv = static_cast<double>(l.item());
    accumulate(l, w.adv);
  }
  return terms;
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), T{0});
    v_.emplace_back(p.tensor.numel(), T{0});
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw UsageError("adam: parameter '" + p.name + "' has no gradient");
  }
  ++t_;
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const T eps = static_cast<T>(cfg_.eps);
  const T rate = static_cast<T>(lr);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T> param = params_[k].tensor;
    auto values = param.mutable_data();
    auto grad = param.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      const T m_hat = m[i] / c1;
      const T v_hat = v[i] / c2;
      values[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
    param.clear_grad();
  }
}

double lr_at(std::uint64_t iter, double base_lr, std::uint64_t period) {
  if (period == 0) throw UsageError("learning-rate period must be positive");
  return base_lr * std::pow(0.5, static_cast<double>(iter / period));
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kPretrain2x: return "pretrain-2x";
    case Phase::kFinetuneRecurrent: return "finetune-recurrent";
    case Phase::kGanFinetune: return "gan-finetune";
  }
  return "?";
}

Phase parse_phase(const std::string& text) {
  if (text == "pretrain-2x") return Phase::kPretrain2x;
  if (text == "finetune-recurrent") return Phase::kFinetuneRecurrent;
  if (text == "gan-finetune") return Phase::kGanFinetune;
  throw UsageError("unknown phase '" + text + "' (pretrain-2x, finetune-recurrent, gan-finetune)");
}

void TrainPlan::validate() const {
  if (batch == 0 || patch == 0) throw UsageError("batch and patch sizes must be positive");
  if (lr_period == 0) throw UsageError("learning-rate period must be positive");
  recurrence_depth(scale);
  if (!std::isfinite(base_lr) || base_lr < 0.0) throw UsageError("learning rate must be non-negative");
  recurrence_depth(effective_scale());
}

std::string format_trace(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (const auto& r : trace) {
    os << r.iter << '\t' << r.lr << '\t' << r.total << '\t' << r.l1 << '\t' << r.feat << '\t' << r.adv
       << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

const std::string kDiscPrefix = "disc.";

}  // namespace

TrainResult train_phase(const TrainSetup& setup, const PairedDataset& data, const TrainPlan& plan,
                        const LossWeights& weights, std::uint64_t seed) {
  plan.validate();
  weights.validate();
  if (setup.generator == nullptr) throw UsageError("train_phase: no generator");
  if (data.empty()) throw DataError("training dataset is empty");
  const int scale = plan.effective_scale();
  if (static_cast<int>(data.scale()) != scale) {
    throw UsageError("dataset was prepared for scale " + std::to_string(data.scale()) + " but phase " +
                     to_string(plan.phase) + " trains at scale " + std::to_string(scale));
  }
  const bool gan = plan.phase == Phase::kGanFinetune;
  if (plan.phase != Phase::kPretrain2x && setup.initial == nullptr) {
    throw UsageError("phase " + to_string(plan.phase) +
                     " fine-tunes a trained 2x network and needs an initial checkpoint (--resume)");
  }
  if (gan && setup.discriminator == nullptr) throw UsageError("gan-finetune needs a discriminator");
  if (!gan && weights.adv > 0.0) throw UsageError("adversarial loss weight is only valid in gan-finetune");
  if (weights.feat > 0.0 && setup.features == nullptr) {
    throw UsageError("feature loss weight set without a feature extractor");
  }

  Generator<float>& gen = *setup.generator;
  const ParamList<float> g_params = gen.params();
  ParamList<float> d_params;
  if (gan) d_params = setup.discriminator->params();

  if (setup.initial != nullptr) {
    const std::vector<std::string> ignore{kDiscPrefix};
    load_params(g_params, *setup.initial, ignore);
    if (gan) {
      bool has_disc = false;
      for (const auto& e : setup.initial->entries()) has_disc = has_disc || e.name.rfind(kDiscPrefix, 0) == 0;
      if (has_disc) {
        Checkpoint disc_only;
        for (const auto& e : setup.initial->entries()) {
          if (e.name.rfind(kDiscPrefix, 0) == 0) disc_only.add(e.name, e.dims, e.values);
        }
        load_params(d_params, disc_only);
      }
    }
  }

  set_requires_grad(g_params, true);
  set_requires_grad(d_params, true);
  Adam<float> g_opt(g_params);
  Adam<float> d_opt(d_params);
  LossModels<float> models{setup.features, gan ? setup.discriminator : nullptr};

  Rng rng(seed);
  TrainResult result;
  result.trace.reserve(plan.iterations);
  for (std::size_t it = 0; it < plan.iterations; ++it) {
    const double lr = lr_at(it, plan.base_lr, plan.lr_period);
    const PatchBatch<float> batch = sample_batch<float>(data, plan.patch, plan.batch, rng);
    TraceRow row;
    row.iter = it;
    row.lr = lr;

    if (gan) {
      // Discriminator step on its own tape; the generator output is a constant.
      Tensor<float> fake;
      {
        NoGradGuard guard;
        fake = gen.forward_recurrent(batch.lr, scale);
      }
      const Tensor<float> lr_up = upsample_condition(batch.lr, batch.hr.shape());
      const Tensor<float> real_logit = setup.discriminator->forward_conditioned(batch.hr, lr_up);
      const Tensor<float> fake_logit = setup.discriminator->forward_conditioned(fake, lr_up);
      const Tensor<float> d_loss = gan_losses(real_logit, fake_logit).d_loss;
      row.d_loss = d_loss.item();
      backward(d_loss);
      d_opt.step(lr);

      // Generator step with the discriminator frozen.
      set_requires_grad(d_params, false);
      try {
        const Tensor<float> pred = gen.forward_recurrent(batch.lr, scale);
        const LossTerms<float> terms = combined_loss(pred, batch.hr, batch.lr, weights, models);
        row.total = terms.total.item();
        row.l1 = terms.l1;
        row.feat = terms.feat;
        row.adv = terms.adv;
        backward(terms.total);
      } catch (...) {
        set_requires_grad(d_params, true);
        throw;
      }
      set_requires_grad(d_params, true);
      g_opt.step(lr);
    } else {
      const Tensor<float> pred = gen.forward_recurrent(batch.lr, scale);
      const LossTerms<float> terms = combined_loss(pred, batch.hr, batch.lr, weights, models);
      row.total = terms.total.item();
      row.l1 = terms.l1;
      row.feat = terms.feat;
      row.adv = terms.adv;
      backward(terms.total);
      g_opt.step(lr);
    }
    result.trace.push_back(row);
    if (setup.on_iteration) setup.on_iteration(row);
  }

  result.checkpoint = to_checkpoint(g_params);
  if (gan) append_to_checkpoint(result.checkpoint, d_params);
  return result;
}

#define MRDN_INSTANTIATE(T)                                                                        \
  template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> feature_loss<T>(const Tensor<T>&, const Tensor<T>&, const FeatureExtractor<T>&); \
  template GanLosses<T> gan_losses<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template LossTerms<T> combined_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                         const LossWeights&, const LossModels<T>&);               \
  template class Adam<T>;

MRDN_INSTANTIATE(float)
MRDN_INSTANTIATE(double)

#undef MRDN_INSTANTIATE

}  // namespace mrdn
