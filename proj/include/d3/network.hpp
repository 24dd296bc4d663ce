#pragma once

// Deep dual-domain network: constant DCT layer, DCT-domain one-step sparse
// inference stage, constant IDCT layer, pixel-domain sparse stage. Forward and
// backward passes are batched; every matrix column is one sample.

#include <d3/error.hpp>
#include <d3/jpeg_model.hpp>
#include <d3/random.hpp>
#include <d3/sparse_coding.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace d3::net {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Network inputs, targets and intervals are mean-shifted pixels times this.
inline constexpr double kSampleScale = 1.0 / 255.0;

/// One sparse analysis/synthesis stage: D_A (p x m), D_S (m x p) and the
/// threshold vector theta. The pre-scale diagonal is always 1 / theta.
struct SparseStage {
  Matrix analysis;
  Matrix synthesis;
  Vector theta;

  Eigen::Index atoms() const { return analysis.rows(); }
  Vector pre_scale() const { return theta.cwiseInverse(); }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double box_loss = 0.0;
  double l2_loss = 0.0;
  double val_psnr = 0.0;
};

struct ModelMeta {
  int quality = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
};

struct D3Model {
  SparseStage stage1;  // DCT domain
  SparseStage stage2;  // pixel domain
  ModelMeta meta;

  Eigen::Index p_phi() const { return stage1.atoms(); }
  Eigen::Index p_psi() const { return stage2.atoms(); }
  static constexpr int m = kBlockSize;
};

inline void validate(const D3Model& model) {
  auto check = [](const SparseStage& s, const char* name) {
    const auto p = s.analysis.rows();
    if (p < 1 || s.analysis.cols() != kBlockSize || s.synthesis.rows() != kBlockSize || s.synthesis.cols() != p ||
        s.theta.size() != p)
      throw ValidationError(std::string("inconsistent layer dimensions in ") + name);
    if ((s.theta.array() <= 0.0).any()) throw ValidationError(std::string("non-positive threshold in ") + name);
  };
  check(model.stage1, "stage 1");
  check(model.stage2, "stage 2");
}

/// Per-sample intermediates of the forward pass (one column per sample).
struct ForwardTrace {
  Matrix x;      // input pixels
  Matrix y;      // DCT coefficients
  Matrix u1;     // stage-1 pre-activation D_A y
  Matrix alpha;  // stage-1 code
  Matrix z;      // DCT-domain reconstruction D_S alpha
  Matrix mid;    // IDCT of z
  Matrix u2;
  Matrix beta;
  Matrix out;    // pixel-domain reconstruction
};

/// Analysis module: u = D_A y, code = theta * s1(u / theta).
struct AnalysisResult {
  Matrix code;
  Matrix pre_activation;
};

inline Matrix unit_threshold_scaled(const Matrix& u, const Vector& theta) {
  const Vector inv = theta.cwiseInverse();
  Matrix code(u.rows(), u.cols());
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    for (Eigen::Index i = 0; i < u.rows(); ++i) code(i, j) = theta[i] * sparse::unit_shrink(u(i, j) * inv[i]);
  return code;
}

inline AnalysisResult sc_analysis(const Matrix& y, const Matrix& analysis, const Vector& theta) {
  AnalysisResult r;
  r.pre_activation = analysis * y;
  r.code = unit_threshold_scaled(r.pre_activation, theta);
  return r;
}

inline Matrix sc_synthesis(const Matrix& code, const Matrix& synthesis) { return synthesis * code; }

/// Element-wise clamp bounds for the stage-1 output (lower, upper per column).
struct IntervalBatch {
  Matrix lower;
  Matrix upper;
};

/// Runs the full pipeline; with `clamp` set, z is projected into its intervals before the IDCT.
inline ForwardTrace forward(const Matrix& x, const D3Model& model, const IntervalBatch* clamp = nullptr) {
  if (x.rows() != kBlockSize) throw ValidationError("forward: input rows must be 64");
  const auto& t = jpeg::transform();
  ForwardTrace tr;
  tr.x = x;
  tr.y = t.forward * x;
  auto a1 = sc_analysis(tr.y, model.stage1.analysis, model.stage1.theta);
  tr.u1 = std::move(a1.pre_activation);
  tr.alpha = std::move(a1.code);
  tr.z = sc_synthesis(tr.alpha, model.stage1.synthesis);
  if (clamp) tr.z = tr.z.cwiseMax(clamp->lower).cwiseMin(clamp->upper);
  tr.mid = t.inverse * tr.z;
  auto a2 = sc_analysis(tr.mid, model.stage2.analysis, model.stage2.theta);
  tr.u2 = std::move(a2.pre_activation);
  tr.beta = std::move(a2.code);
  tr.out = sc_synthesis(tr.beta, model.stage2.synthesis);
  return tr;
}

inline ForwardTrace forward(const Block& x, const D3Model& model) { return forward(Matrix(x), model); }

/// ||[z - upper]_+||^2 + ||[lower - z]_+||^2
inline double box_loss(const Block& z, const jpeg::IntervalPair& iv) { return sparse::box_violation(z, iv); }
inline Block box_loss_gradient(const Block& z, const jpeg::IntervalPair& iv) {
  return sparse::box_violation_gradient(z, iv);
}

inline double l2_loss(const Block& out, const Block& target) { return (out - target).squaredNorm(); }
inline Block l2_loss_gradient(const Block& out, const Block& target) { return 2.0 * (out - target); }

struct LossWeights {
  double l2 = 1.0;
  double box = 1.0;
};

struct LossBreakdown {
  double l2 = 0.0;   // mean over samples
  double box = 0.0;  // mean over samples
  double total(const LossWeights& w) const { return w.l2 * l2 + w.box * box; }
};

inline LossBreakdown evaluate_loss(const ForwardTrace& tr, const Matrix& target, const IntervalBatch& iv) {
  const double n = static_cast<double>(tr.out.cols());
  LossBreakdown l;
  l.l2 = (tr.out - target).squaredNorm() / n;
  l.box = ((tr.z - iv.upper).cwiseMax(0.0).squaredNorm() + (iv.lower - tr.z).cwiseMax(0.0).squaredNorm()) / n;
  return l;
}

struct StageGradients {
  Matrix analysis;
  Matrix synthesis;
  Vector theta;
};

struct Gradients {
  StageGradients stage1;
  StageGradients stage2;
};

namespace detail {

/// Backpropagates through code = theta * s1(u / theta); s1' is 1 where |u/theta| > 1, else 0.
inline void threshold_backward(const Matrix& u, const Vector& theta, const Matrix& g_code, Matrix& g_u,
                               Vector& g_theta) {
  const Vector inv = theta.cwiseInverse();
  g_u.resize(u.rows(), u.cols());
  g_theta = Vector::Zero(theta.size());
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double t = u(i, j) * inv[i];
      const double active = std::abs(t) > 1.0 ? 1.0 : 0.0;
      g_u(i, j) = g_code(i, j) * active;
      // post-scale path s1(t) plus pre-scale path theta * s1'(t) * (-u / theta^2)
      g_theta[i] += g_code(i, j) * (sparse::unit_shrink(t) - active * t);
    }
  }
}

}  // namespace detail

/// Gradients of the batch-mean loss  w.l2 * ||out - target||^2 + w.box * L_B(z).
inline Gradients backward(const ForwardTrace& tr, const Matrix& target, const IntervalBatch& iv, const D3Model& model,
                          const LossWeights& w = {}) {
  const Eigen::Index n = tr.out.cols();
  if (tr.alpha.rows() != model.p_phi() || tr.beta.rows() != model.p_psi() || target.rows() != kBlockSize ||
      target.cols() != n || iv.lower.cols() != n || iv.upper.cols() != n)
    throw ValidationError("backward: trace, target and model dimensions do not match");
  const auto& t = jpeg::transform();
  const double scale = 1.0 / static_cast<double>(n);
  Gradients g;

  const Matrix g_out = (2.0 * w.l2 * scale) * (tr.out - target);
  g.stage2.synthesis = g_out * tr.beta.transpose();
  const Matrix g_beta = model.stage2.synthesis.transpose() * g_out;
  Matrix g_u2;
  detail::threshold_backward(tr.u2, model.stage2.theta, g_beta, g_u2, g.stage2.theta);
  g.stage2.analysis = g_u2 * tr.mid.transpose();
  const Matrix g_mid = model.stage2.analysis.transpose() * g_u2;

  Matrix g_z = t.forward * g_mid;  // (T^-1)^T = T
  if (w.box != 0.0)
    g_z += (2.0 * w.box * scale) * ((tr.z - iv.upper).cwiseMax(0.0) - (iv.lower - tr.z).cwiseMax(0.0));
  g.stage1.synthesis = g_z * tr.alpha.transpose();
  const Matrix g_alpha = model.stage1.synthesis.transpose() * g_z;
  Matrix g_u1;
  detail::threshold_backward(tr.u1, model.stage1.theta, g_alpha, g_u1, g.stage1.theta);
  g.stage1.analysis = g_u1 * tr.y.transpose();
  return g;
}

/// How the ISTA step size enters a sparse-initialised stage.
enum class InitScaling {
  unit_step,  // D_A = Phi^T, theta = lambda, D_S = Phi: one step of the unit-step iteration from zero
  // D_A = Phi^T / sqrt(L), theta = lambda / sqrt(L), D_S = Phi / sqrt(L). The stage output equals
  // Phi times one step of ista() (step 1/L) from zero; the 1/L is split evenly between the two
  // weight matrices so their gradients have comparable scale.
  lipschitz,
};

inline SparseStage stage_from_dictionary(const sparse::Dictionary& d, InitScaling scaling) {
  if (d.dim() != kBlockSize) throw ValidationError("dictionary must have 64 rows");
  if (d.size() < 1) throw ValidationError("dictionary must have at least one atom");
  if (!(d.sparsity_weight > 0.0)) throw ValidationError("dictionary sparsity weight must be positive");
  const double gain = scaling == InitScaling::lipschitz ? 1.0 / std::sqrt(sparse::lipschitz_constant(d.atoms)) : 1.0;
  if (!std::isfinite(gain)) throw ValidationError("dictionary has no energy");
  SparseStage s;
  s.analysis = gain * d.atoms.transpose();
  s.synthesis = gain * d.atoms;
  s.theta = Vector::Constant(d.size(), gain * d.sparsity_weight);
  return s;
}

inline D3Model init_from_sparse(const sparse::Dictionary& phi, const sparse::Dictionary& psi,
                                InitScaling scaling = InitScaling::unit_step) {
  D3Model model;
  model.stage1 = stage_from_dictionary(phi, scaling);
  model.stage2 = stage_from_dictionary(psi, scaling);
  return model;
}

/// Zero-mean uniform weights with half-width 1/sqrt(fan-in).
inline Matrix uniform_weights(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix w(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = uniform(rng, -r, r);
  return w;
}

inline D3Model init_random(Eigen::Index p_phi, Eigen::Index p_psi, std::uint64_t seed, double theta = 0.1) {
  if (p_phi < 1 || p_psi < 1) throw ValidationError("dictionary sizes must be positive");
  Rng rng(seed);
  D3Model model;
  model.stage1.analysis = uniform_weights(p_phi, kBlockSize, rng);
  model.stage1.synthesis = uniform_weights(kBlockSize, p_phi, rng);
  model.stage1.theta = Vector::Constant(p_phi, theta);
  model.stage2.analysis = uniform_weights(p_psi, kBlockSize, rng);
  model.stage2.synthesis = uniform_weights(kBlockSize, p_psi, rng);
  model.stage2.theta = Vector::Constant(p_psi, theta);
  model.meta.seed = seed;
  return model;
}

// ---------------------------------------------------------------------------
// Fully connected pixel-domain baseline with the same four weight shapes.

struct DBaseModel {
  Matrix w1;  // p_phi x 64
  Matrix w2;  // 64 x p_phi
  Matrix w3;  // p_psi x 64
  Matrix w4;  // 64 x p_psi
  double dropout_rate = 0.5;
  ModelMeta meta;

  Eigen::Index p_phi() const { return w1.rows(); }
  Eigen::Index p_psi() const { return w3.rows(); }
};

inline DBaseModel init_dbase(Eigen::Index p_phi, Eigen::Index p_psi, std::uint64_t seed, double dropout = 0.5) {
  if (p_phi < 1 || p_psi < 1) throw ValidationError("layer widths must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout rate must be in [0, 1)");
  Rng rng(seed);
  DBaseModel m;
  m.w1 = uniform_weights(p_phi, kBlockSize, rng);
  m.w2 = uniform_weights(kBlockSize, p_phi, rng);
  m.w3 = uniform_weights(p_psi, kBlockSize, rng);
  m.w4 = uniform_weights(kBlockSize, p_psi, rng);
  m.dropout_rate = dropout;
  m.meta.seed = seed;
  return m;
}

struct DBaseTrace {
  Matrix x;
  Matrix h1, a1;  // pre-activation, post rectifier and dropout
  Matrix h2, a2;
  Matrix h3, a3;
  Matrix out;
  // Inverted-dropout masks (0 or 1/(1-rate)); empty at inference.
  Matrix mask1, mask2, mask3;
};

inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  const double keep = 1.0 / (1.0 - rate);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform01(rng) < rate ? 0.0 : keep;
  return m;
}

/// Masks for a training pass, drawn in a fixed order.
struct DropoutMasks {
  Matrix m1, m2, m3;
};

inline DropoutMasks draw_masks(const DBaseModel& model, Eigen::Index batch, Rng& rng) {
  return {dropout_mask(model.w1.rows(), batch, model.dropout_rate, rng),
          dropout_mask(model.w2.rows(), batch, model.dropout_rate, rng),
          dropout_mask(model.w3.rows(), batch, model.dropout_rate, rng)};
}

/// W4 r(W3 r(W2 r(W1 x))) with r = max(., 0); masks applied after each rectifier when given.
inline DBaseTrace dbase_forward(const Matrix& x, const DBaseModel& model, const DropoutMasks* masks = nullptr) {
  if (x.rows() != kBlockSize) throw ValidationError("dbase_forward: input rows must be 64");
  DBaseTrace tr;
  tr.x = x;
  auto layer = [&](const Matrix& w, const Matrix& in, Matrix& h, Matrix& a, const Matrix* mask, Matrix& kept) {
    h = w * in;
    a = h.cwiseMax(0.0);
    if (mask) {
      a = a.cwiseProduct(*mask);
      kept = *mask;
    }
  };
  layer(model.w1, tr.x, tr.h1, tr.a1, masks ? &masks->m1 : nullptr, tr.mask1);
  layer(model.w2, tr.a1, tr.h2, tr.a2, masks ? &masks->m2 : nullptr, tr.mask2);
  layer(model.w3, tr.a2, tr.h3, tr.a3, masks ? &masks->m3 : nullptr, tr.mask3);
  tr.out = model.w4 * tr.a3;
  return tr;
}

/// Training-mode pass with freshly drawn masks, or inference when training is false.
inline DBaseTrace dbase_forward(const Matrix& x, const DBaseModel& model, bool training, Rng& rng) {
  if (!training || model.dropout_rate == 0.0) return dbase_forward(x, model);
  const DropoutMasks masks = draw_masks(model, x.cols(), rng);
  return dbase_forward(x, model, &masks);
}

struct DBaseGradients {
  Matrix w1, w2, w3, w4;
};

/// Gradients of the batch-mean L2 loss.
inline DBaseGradients dbase_backward(const DBaseTrace& tr, const Matrix& target, const DBaseModel& model,
                                     double l2_weight = 1.0) {
  const Eigen::Index n = tr.out.cols();
  if (target.rows() != kBlockSize || target.cols() != n || tr.a3.rows() != model.w4.cols())
    throw ValidationError("dbase_backward: trace, target and model dimensions do not match");
  DBaseGradients g;
  const Matrix g_out = (2.0 * l2_weight / static_cast<double>(n)) * (tr.out - target);
  g.w4 = g_out * tr.a3.transpose();
  auto back = [](const Matrix& g_a, const Matrix& h, const Matrix& mask) {
    Matrix g_h = g_a.cwiseProduct((h.array() > 0.0).cast<double>().matrix());
    if (mask.size() != 0) g_h = g_h.cwiseProduct(mask);
    return g_h;
  };
  const Matrix g_h3 = back(model.w4.transpose() * g_out, tr.h3, tr.mask3);
  g.w3 = g_h3 * tr.a2.transpose();
  const Matrix g_h2 = back(model.w3.transpose() * g_h3, tr.h2, tr.mask2);
  g.w2 = g_h2 * tr.a1.transpose();
  const Matrix g_h1 = back(model.w2.transpose() * g_h2, tr.h1, tr.mask1);
  g.w1 = g_h1 * tr.x.transpose();
  return g;
}

}  // namespace d3::net
