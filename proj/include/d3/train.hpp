#pragma once

// Mini-batch SGD for the D3 and D-Base networks.

#include <d3/error.hpp>
#include <d3/network.hpp>
#include <d3/patches.hpp>
#include <d3/random.hpp>
#include <d3/sparse_coding.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace d3::net {

/// Training pairs laid out as network-unit matrices (one column per pair).
struct TrainingTensors {
  Matrix input;
  Matrix target;
  IntervalBatch intervals;

  Eigen::Index size() const { return input.cols(); }

  TrainingTensors gather(std::span<const std::size_t> idx) const {
    TrainingTensors out;
    const auto n = static_cast<Eigen::Index>(idx.size());
    out.input.resize(kBlockSize, n);
    out.target.resize(kBlockSize, n);
    out.intervals.lower.resize(kBlockSize, n);
    out.intervals.upper.resize(kBlockSize, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto src = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]);
      out.input.col(j) = input.col(src);
      out.target.col(j) = target.col(src);
      out.intervals.lower.col(j) = intervals.lower.col(src);
      out.intervals.upper.col(j) = intervals.upper.col(src);
    }
    return out;
  }
};

inline TrainingTensors to_tensors(std::span<const TrainingPair> pairs) {
  TrainingTensors t;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  t.input.resize(kBlockSize, n);
  t.target.resize(kBlockSize, n);
  t.intervals.lower.resize(kBlockSize, n);
  t.intervals.upper.resize(kBlockSize, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = pairs[static_cast<std::size_t>(j)];
    t.input.col(j) = kSampleScale * p.degraded.pixels;
    t.target.col(j) = kSampleScale * p.clean;
    t.intervals.lower.col(j) = kSampleScale * p.degraded.intervals.lower;
    t.intervals.upper.col(j) = kSampleScale * p.degraded.intervals.upper;
  }
  return t;
}

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  double momentum = 0.0;
  int epochs = 20;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  double theta_floor = 1e-6;
  double validation_fraction = 0.1;
  int patience = 10;
  // Called after every epoch; useful for progress output.
  std::function<void(const EpochRecord&)> on_epoch;
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
    throw ValidationError("learning rate must be finite and non-negative");
  if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ValidationError("momentum must be in [0, 1)");
  if (cfg.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0)
    throw ValidationError("validation fraction must be in [0, 1)");
  if (!(cfg.theta_floor > 0.0)) throw ValidationError("theta floor must be positive");
}

/// PSNR in dB of network-unit reconstructions (peak 255 after rescaling).
inline double patch_psnr(const Matrix& out, const Matrix& target) {
  const double mse = (out - target).squaredNorm() / static_cast<double>(out.size()) / (kSampleScale * kSampleScale);
  return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(255.0 * 255.0 / mse);
}

// Per-architecture hooks used by the shared SGD loop.

struct BatchStep {
  LossBreakdown loss;
};

inline Matrix predict(const D3Model& m, const Matrix& x) { return forward(x, m).out; }
inline Matrix predict(const DBaseModel& m, const Matrix& x) { return dbase_forward(x, m).out; }

namespace detail {

inline void sgd_update(Matrix& param, Matrix& velocity, const Matrix& grad, double lr, double momentum) {
  if (momentum == 0.0) {
    param -= lr * grad;
    return;
  }
  if (velocity.size() == 0) velocity = Matrix::Zero(grad.rows(), grad.cols());
  velocity = momentum * velocity - lr * grad;
  param += velocity;
}

inline void sgd_update(Vector& param, Vector& velocity, const Vector& grad, double lr, double momentum) {
  if (momentum == 0.0) {
    param -= lr * grad;
    return;
  }
  if (velocity.size() == 0) velocity = Vector::Zero(grad.size());
  velocity = momentum * velocity - lr * grad;
  param += velocity;
}

struct D3Trainer {
  D3Model model;
  Gradients velocity;

  BatchStep step(const TrainingTensors& batch, const TrainConfig& cfg, Rng&) {
    const ForwardTrace tr = forward(batch.input, model);
    BatchStep s{evaluate_loss(tr, batch.target, batch.intervals)};
    if (!std::isfinite(s.loss.total(cfg.loss_weights))) return s;
    const Gradients g = backward(tr, batch.target, batch.intervals, model, cfg.loss_weights);
    auto apply = [&](SparseStage& st, StageGradients& v, const StageGradients& gs) {
      sgd_update(st.analysis, v.analysis, gs.analysis, cfg.learning_rate, cfg.momentum);
      sgd_update(st.synthesis, v.synthesis, gs.synthesis, cfg.learning_rate, cfg.momentum);
      sgd_update(st.theta, v.theta, gs.theta, cfg.learning_rate, cfg.momentum);
      st.theta = st.theta.cwiseMax(cfg.theta_floor);
    };
    apply(model.stage1, velocity.stage1, g.stage1);
    apply(model.stage2, velocity.stage2, g.stage2);
    return s;
  }
};

struct DBaseTrainer {
  DBaseModel model;
  DBaseGradients velocity;

  BatchStep step(const TrainingTensors& batch, const TrainConfig& cfg, Rng& rng) {
    const DBaseTrace tr = dbase_forward(batch.input, model, true, rng);
    BatchStep s;
    s.loss.l2 = (tr.out - batch.target).squaredNorm() / static_cast<double>(batch.size());
    if (!std::isfinite(s.loss.total(cfg.loss_weights))) return s;
    const DBaseGradients g = dbase_backward(tr, batch.target, model, cfg.loss_weights.l2);
    sgd_update(model.w1, velocity.w1, g.w1, cfg.learning_rate, cfg.momentum);
    sgd_update(model.w2, velocity.w2, g.w2, cfg.learning_rate, cfg.momentum);
    sgd_update(model.w3, velocity.w3, g.w3, cfg.learning_rate, cfg.momentum);
    sgd_update(model.w4, velocity.w4, g.w4, cfg.learning_rate, cfg.momentum);
    return s;
  }
};

inline std::string format_loss(double v) {
  return std::isnan(v) ? "nan" : (std::isinf(v) ? (v > 0 ? "inf" : "-inf") : std::to_string(v));
}

template <class Trainer>
auto run_sgd(Trainer trainer, const TrainingTensors& data, const TrainConfig& cfg) {
  validate(cfg);
  if (data.size() == 0) throw ValidationError("training data is empty");
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(order), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(order.size())));
  const std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  if (train_idx.empty()) throw ValidationError("no training pairs left after the validation split");
  const TrainingTensors val = data.gather(val_idx);

  auto model_of = [&]() -> auto& { return trainer.model; };
  std::vector<EpochRecord> history;
  double best_psnr = -std::numeric_limits<double>::infinity();
  auto best_model = model_of();
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(train_idx), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double sum_l2 = 0.0, sum_box = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t len = std::min(cfg.batch_size, train_idx.size() - start);
      const TrainingTensors batch = data.gather(std::span<const std::size_t>(train_idx).subspan(start, len));
      const BatchStep s = trainer.step(batch, cfg, rng);
      const double total = s.loss.total(cfg.loss_weights);
      if (!std::isfinite(total))
        throw DivergenceError(static_cast<std::size_t>(epoch), batch_no,
                              "training diverged: loss " + format_loss(total) + " at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_no));
      sum_l2 += s.loss.l2 * static_cast<double>(len);
      sum_box += s.loss.box * static_cast<double>(len);
    }
    const double n_train = static_cast<double>(train_idx.size());
    rec.l2_loss = sum_l2 / n_train;
    rec.box_loss = sum_box / n_train;
    rec.train_loss = cfg.loss_weights.l2 * rec.l2_loss + cfg.loss_weights.box * rec.box_loss;
    rec.val_psnr = val.size() > 0 ? patch_psnr(predict(model_of(), val.input), val.target)
                                  : std::numeric_limits<double>::quiet_NaN();
    history.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);

    if (val.size() == 0) {
      best_model = model_of();
      continue;
    }
    if (rec.val_psnr > best_psnr) {
      best_psnr = rec.val_psnr;
      best_model = model_of();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  if (cfg.epochs == 0) best_model = model_of();
  best_model.meta.history = std::move(history);
  best_model.meta.seed = cfg.seed;
  return best_model;
}

}  // namespace detail

/// Trains from `initial`; returns the parameters with the best validation PSNR
/// (or the last epoch when there is no validation split). History is in meta.
inline D3Model train(const TrainingTensors& data, const TrainConfig& cfg, D3Model initial) {
  validate(initial);
  return detail::run_sgd(detail::D3Trainer{std::move(initial), {}}, data, cfg);
}

inline DBaseModel train(const TrainingTensors& data, const TrainConfig& cfg, DBaseModel initial) {
  return detail::run_sgd(detail::DBaseTrainer{std::move(initial), {}}, data, cfg);
}

/// Sparse-coding dictionaries in network units.
struct DictionaryPair {
  sparse::Dictionary phi;  // DCT domain, from degraded coefficient blocks
  sparse::Dictionary psi;  // pixel domain, from clean blocks
  int quality = 0;
  std::uint64_t seed = 0;
};

struct DictionaryTrainingOptions {
  Eigen::Index p_phi = 128;
  Eigen::Index p_psi = 128;
  double sparsity = 0.02;
  int rounds = 10;
  std::size_t max_patches = 20000;  // subsample for speed
  std::uint64_t seed = 0;
};

/// Learns Phi on DCT coefficients of degraded inputs and Psi on clean pixels.
inline DictionaryPair learn_dictionaries(const TrainingTensors& data, const DictionaryTrainingOptions& opt,
                                         bool* degenerate = nullptr) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(data.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(opt.seed);
  shuffle(std::span<std::size_t>(idx), rng);
  if (idx.size() > opt.max_patches) idx.resize(opt.max_patches);
  const TrainingTensors sub = data.gather(idx);

  sparse::DictionaryLearningOptions lo;
  lo.sparsity_weight = opt.sparsity;
  lo.rounds = opt.rounds;
  lo.seed = opt.seed;
  lo.atoms = opt.p_phi;
  const auto fit_phi = sparse::learn_dictionary(jpeg::transform().forward * sub.input, lo);
  lo.atoms = opt.p_psi;
  lo.seed = opt.seed + 1;
  const auto fit_psi = sparse::learn_dictionary(sub.target, lo);
  if (degenerate) *degenerate = fit_phi.degenerate || fit_psi.degenerate;
  return {fit_phi.dictionary, fit_psi.dictionary, 0, opt.seed};
}

}  // namespace d3::net
