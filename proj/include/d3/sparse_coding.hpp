#pragma once

// l1 sparse coding: soft shrinkage, ISTA, method-of-optimal-directions
// dictionary learning and the iterative dual-domain restorer used as the
// slow baseline.

#include <d3/error.hpp>
#include <d3/jpeg_model.hpp>
#include <d3/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace d3::sparse {

/// m x p matrix of unit-norm atoms plus the l1 weight it was learned with.
struct Dictionary {
  Eigen::MatrixXd atoms;
  double sparsity_weight = 0.1;

  Eigen::Index dim() const { return atoms.rows(); }
  Eigen::Index size() const { return atoms.cols(); }
};

/// Element-wise soft threshold sign(u) * max(|u| - t, 0).
template <class U, class T>
auto shrink(const Eigen::ArrayBase<U>& u, const Eigen::ArrayBase<T>& thresholds) {
  return u.sign() * (u.abs() - thresholds).max(0.0);
}

inline Eigen::VectorXd shrink(const Eigen::VectorXd& u, const Eigen::VectorXd& thresholds) {
  return shrink(u.array(), thresholds.array()).matrix();
}

inline Eigen::VectorXd shrink(const Eigen::VectorXd& u, double threshold) {
  return shrink(u.array(), Eigen::ArrayXd::Constant(u.size(), threshold)).matrix();
}

/// Unit-threshold neuron s1(t) = sign(t) * max(|t| - 1, 0).
inline double unit_shrink(double t) { return t > 1.0 ? t - 1.0 : (t < -1.0 ? t + 1.0 : 0.0); }

/// Largest eigenvalue of A^T A, from the smaller of the two Gram matrices.
/// Gram matrices up to 512 wide are solved exactly; larger ones fall back to
/// power iteration with the estimate inflated by 0.1%.
inline double lipschitz_constant(const Eigen::MatrixXd& a, int max_steps = 50, double rel_tol = 1e-6) {
  const Eigen::MatrixXd gram = a.rows() <= a.cols() ? Eigen::MatrixXd(a * a.transpose())
                                                    : Eigen::MatrixXd(a.transpose() * a);
  if (gram.size() == 0) return 0.0;
  if (gram.rows() <= 512)
    return std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .maxCoeff());
  Rng rng(0x5eed);
  Eigen::VectorXd v(gram.rows());
  for (auto& x : v) x = uniform(rng, 0.5, 1.5);
  v.normalize();
  double estimate = 0.0;
  for (int step = 0; step < max_steps; ++step) {
    Eigen::VectorXd w = gram * v;
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const bool done = std::abs(next - estimate) <= rel_tol * std::abs(next);
    estimate = next;
    if (done) break;
  }
  return estimate * 1.001;
}

/// 0.5 ||y - D a||^2 + lambda ||a||_1
inline double lasso_objective(const Eigen::VectorXd& y, const Dictionary& d, const Eigen::VectorXd& code) {
  return 0.5 * (y - d.atoms * code).squaredNorm() + d.sparsity_weight * code.lpNorm<1>();
}

struct IstaResult {
  Eigen::VectorXd code;
  int iterations = 0;
  std::vector<double> objective_trace;  // objective before the first step, then after each step
};

struct IstaOptions {
  int max_iters = 100;
  double tol = 1e-8;       // stop once max |a_{k+1} - a_k| <= tol
  bool trace = false;
  double lipschitz = 0.0;  // precomputed L, or 0 to estimate
};

/// ISTA with step 1/L starting from `warm_start` (or zero).
inline IstaResult ista(const Eigen::VectorXd& y, const Dictionary& d, const IstaOptions& opt,
                       const Eigen::VectorXd* warm_start = nullptr) {
  if (opt.max_iters < 1) throw ValidationError("ista needs at least one iteration");
  if (y.size() != d.dim()) throw ValidationError("ista: signal and dictionary dimensions differ");
  const double lip = opt.lipschitz > 0.0 ? opt.lipschitz : lipschitz_constant(d.atoms);
  IstaResult res;
  res.code = warm_start ? *warm_start : Eigen::VectorXd::Zero(d.size());
  if (lip == 0.0) {
    res.code.setZero();
    return res;
  }
  const Eigen::VectorXd dty = d.atoms.transpose() * y;
  const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
  const double threshold = d.sparsity_weight / lip;
  if (opt.trace) res.objective_trace.push_back(lasso_objective(y, d, res.code));
  for (res.iterations = 1; res.iterations <= opt.max_iters; ++res.iterations) {
    Eigen::VectorXd next = shrink(res.code + (dty - gram * res.code) / lip, threshold);
    const double change = (next - res.code).lpNorm<Eigen::Infinity>();
    res.code = std::move(next);
    if (opt.trace) res.objective_trace.push_back(lasso_objective(y, d, res.code));
    if (change <= opt.tol) break;
  }
  res.iterations = std::min(res.iterations, opt.max_iters);
  return res;
}

inline IstaResult ista(const Eigen::VectorXd& y, const Dictionary& d, int iters, double tol) {
  IstaOptions opt;
  opt.max_iters = iters;
  opt.tol = tol;
  return ista(y, d, opt);
}

inline void normalize_columns(Eigen::MatrixXd& atoms) {
  for (Eigen::Index j = 0; j < atoms.cols(); ++j) atoms.col(j).normalize();
}

inline Eigen::MatrixXd random_unit_atoms(Eigen::Index m, Eigen::Index p, Rng& rng) {
  Eigen::MatrixXd atoms(m, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    do {
      for (Eigen::Index i = 0; i < m; ++i) atoms(i, j) = uniform(rng, -1.0, 1.0);
    } while (atoms.col(j).norm() < 1e-3);
  }
  normalize_columns(atoms);
  return atoms;
}

struct DictionaryLearningOptions {
  Eigen::Index atoms = 128;
  double sparsity_weight = 0.02;
  int rounds = 10;
  int coding_iters = 30;  // warm-started ISTA steps per round
  std::uint64_t seed = 0;
};

struct DictionaryFit {
  Dictionary dictionary;
  std::vector<double> objective_trace;  // mean per-patch lasso objective after each round
  bool degenerate = false;              // all-zero input: random dictionary returned
};

namespace detail {

inline double batch_objective(const Eigen::MatrixXd& y, const Eigen::MatrixXd& d, const Eigen::MatrixXd& a,
                              double lambda) {
  return (0.5 * (y - d * a).squaredNorm() + lambda * a.cwiseAbs().sum()) / static_cast<double>(y.cols());
}

/// Columns normalised to unit norm, code rows scaled inversely; dead columns keep `fallback`.
inline void renormalize(Eigen::MatrixXd& d, Eigen::MatrixXd& a, const Eigen::MatrixXd& fallback) {
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const double n = d.col(j).norm();
    if (n < 1e-12) {
      d.col(j) = fallback.col(j);
      a.row(j).setZero();
    } else {
      d.col(j) /= n;
      a.row(j) *= n;
    }
  }
}

}  // namespace detail

/// Alternating minimisation: warm-started ISTA codes, then a least-squares
/// (MOD) update of the atoms in use, renormalised, with backtracking so the
/// objective never increases.
inline DictionaryFit learn_dictionary(const Eigen::MatrixXd& patches, const DictionaryLearningOptions& opt) {
  const Eigen::Index m = patches.rows();
  const Eigen::Index n = patches.cols();
  const Eigen::Index p = opt.atoms;
  if (p < 1) throw ValidationError("dictionary needs at least one atom");
  if (opt.rounds < 1) throw ValidationError("dictionary learning needs at least one round");
  if (!(opt.sparsity_weight > 0.0)) throw ValidationError("sparsity weight must be positive");
  if (n < p) throw ValidationError("dictionary learning needs at least as many patches as atoms");

  Rng rng(opt.seed);
  DictionaryFit fit;
  fit.dictionary.sparsity_weight = opt.sparsity_weight;
  if (patches.cwiseAbs().maxCoeff() == 0.0) {
    fit.dictionary.atoms = random_unit_atoms(m, p, rng);
    fit.degenerate = true;
    return fit;
  }

  // Seed atoms with distinct random patches; zero patches fall back to random directions.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  shuffle(std::span<Eigen::Index>(order), rng);
  const Eigen::MatrixXd fallback = random_unit_atoms(m, p, rng);
  Eigen::MatrixXd d(m, p);
  for (Eigen::Index j = 0; j < p; ++j) d.col(j) = patches.col(order[static_cast<std::size_t>(j)]);
  {
    Eigen::MatrixXd dummy = Eigen::MatrixXd::Zero(p, 0);
    detail::renormalize(d, dummy, fallback);
  }

  const double lambda = opt.sparsity_weight;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, n);
  for (int round = 0; round < opt.rounds; ++round) {
    const double lip = lipschitz_constant(d);
    const Eigen::MatrixXd dty = d.transpose() * patches;
    const Eigen::MatrixXd gram = d.transpose() * d;
    for (int it = 0; it < opt.coding_iters; ++it)
      a = shrink((a + (dty - gram * a) / lip).array(), Eigen::ArrayXXd::Constant(p, n, lambda / lip)).matrix();

    const double before = detail::batch_objective(patches, d, a, lambda);
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j)
      if (a.row(j).cwiseAbs().maxCoeff() > 0.0) active.push_back(j);
    if (!active.empty()) {
      Eigen::MatrixXd a_act(static_cast<Eigen::Index>(active.size()), n);
      for (std::size_t k = 0; k < active.size(); ++k) a_act.row(static_cast<Eigen::Index>(k)) = a.row(active[k]);
      const Eigen::MatrixXd lhs = a_act * a_act.transpose();
      const Eigen::MatrixXd rhs = a_act * patches.transpose();
      const Eigen::MatrixXd solved = lhs.completeOrthogonalDecomposition().solve(rhs).transpose();
      Eigen::MatrixXd target = d;
      for (std::size_t k = 0; k < active.size(); ++k) target.col(active[k]) = solved.col(static_cast<Eigen::Index>(k));

      for (double step = 1.0; step >= 1.0 / 1024.0; step *= 0.5) {
        Eigen::MatrixXd cand_d = d + step * (target - d);
        Eigen::MatrixXd cand_a = a;
        detail::renormalize(cand_d, cand_a, d);
        if (detail::batch_objective(patches, cand_d, cand_a, lambda) <= before) {
          d = std::move(cand_d);
          a = std::move(cand_a);
          break;
        }
      }
    }
    fit.objective_trace.push_back(detail::batch_objective(patches, d, a, lambda));
  }
  fit.dictionary.atoms = std::move(d);
  return fit;
}

/// Weights of the joint DCT/pixel-domain objective.
struct DualDomainConfig {
  double lambda1 = 0.02;
  double lambda2 = 0.02;
  double lambda3 = 0.02;
  double box_penalty = 1e6;
  int max_iters = 100;
  double tol = 0.0;  // stop once the joint objective decreases by less than this
};

/// sum([z - upper]_+^2) + sum([lower - z]_+^2)
inline double box_violation(const Block& z, const jpeg::IntervalPair& iv) {
  return (z - iv.upper).cwiseMax(0.0).squaredNorm() + (iv.lower - z).cwiseMax(0.0).squaredNorm();
}

inline Block box_violation_gradient(const Block& z, const jpeg::IntervalPair& iv) {
  return 2.0 * (z - iv.upper).cwiseMax(0.0) - 2.0 * (iv.lower - z).cwiseMax(0.0);
}

/// ||y - Phi a||^2 + l1 |a| + l2 ||T^-1 Phi a - Psi b||^2 + l3 |b| + rho * box(Phi a)
inline double dual_domain_objective(const Block& y, const jpeg::IntervalPair& iv, const Dictionary& phi,
                                    const Dictionary& psi, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                    const DualDomainConfig& cfg) {
  const Block z = phi.atoms * alpha;
  const Block residual = jpeg::transform().inverse * z - psi.atoms * beta;
  return (y - z).squaredNorm() + cfg.lambda1 * alpha.lpNorm<1>() + cfg.lambda2 * residual.squaredNorm() +
         cfg.lambda3 * beta.lpNorm<1>() + cfg.box_penalty * box_violation(z, iv);
}

struct DualDomainResult {
  Block restored = Block::Zero();  // Psi * beta, mean-shifted pixels
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  int iterations = 0;
  std::vector<double> objective_trace;
};

/// Lipschitz constants of both dictionaries, reusable across blocks.
struct DualDomainSolver {
  DualDomainSolver(Dictionary phi, Dictionary psi, DualDomainConfig cfg)
      : phi_(std::move(phi)), psi_(std::move(psi)), cfg_(cfg) {
    if (phi_.dim() != kBlockSize || psi_.dim() != kBlockSize)
      throw ValidationError("dual-domain dictionaries must have 64 rows");
    if (!(cfg_.lambda1 > 0 && cfg_.lambda2 > 0 && cfg_.lambda3 > 0 && cfg_.box_penalty > 0))
      throw ValidationError("dual-domain weights must be positive");
    if (cfg_.max_iters < 1) throw ValidationError("dual-domain solver needs max_iters >= 1");
    lip_phi_ = lipschitz_constant(phi_.atoms);
    lip_psi_ = lipschitz_constant(psi_.atoms);
  }

  /// Alternating proximal-gradient (one ISTA step per block per outer iteration).
  /// The alpha step backtracks from the penalty-free step size down to the
  /// worst-case one, so the stiff box penalty only shrinks steps where it is active.
  DualDomainResult solve(const jpeg::DegradedPatch& block, bool trace = false) const {
    const auto& t = jpeg::transform();
    const Block y = t.forward * block.pixels;
    const auto& iv = block.intervals;
    const double step_a_max = 1.0 / (lip_phi_ * 2.0 * (1.0 + cfg_.lambda2));
    const double step_a_min = 1.0 / (lip_phi_ * 2.0 * (1.0 + cfg_.lambda2 + cfg_.box_penalty));
    const double step_b = 1.0 / (lip_psi_ * 2.0 * cfg_.lambda2);
    DualDomainResult res;
    res.alpha = Eigen::VectorXd::Zero(phi_.size());
    res.beta = Eigen::VectorXd::Zero(psi_.size());
    double objective = dual_domain_objective(y, iv, phi_, psi_, res.alpha, res.beta, cfg_);
    if (trace) res.objective_trace.push_back(objective);
    for (res.iterations = 1; res.iterations <= cfg_.max_iters; ++res.iterations) {
      const Block target = t.forward * (psi_.atoms * res.beta);
      // Smooth part of the objective as a function of z = Phi alpha.
      auto smooth = [&](const Block& z) {
        return (y - z).squaredNorm() + cfg_.lambda2 * (z - target).squaredNorm() +
               cfg_.box_penalty * box_violation(z, iv);
      };
      const Block z = phi_.atoms * res.alpha;
      const double f0 = smooth(z);
      const Block grad_z =
          2.0 * (z - y) + 2.0 * cfg_.lambda2 * (z - target) + cfg_.box_penalty * box_violation_gradient(z, iv);
      const Eigen::VectorXd grad_a = phi_.atoms.transpose() * grad_z;
      for (double step = step_a_max;; step *= 0.5) {
        if (step <= step_a_min) step = step_a_min;
        Eigen::VectorXd next = shrink(res.alpha - step * grad_a, step * cfg_.lambda1);
        const Eigen::VectorXd delta = next - res.alpha;
        const double model = f0 + grad_a.dot(delta) + delta.squaredNorm() / (2.0 * step);
        if (step == step_a_min || smooth(phi_.atoms * next) <= model) {
          res.alpha = std::move(next);
          break;
        }
      }

      const Block w = t.inverse * (phi_.atoms * res.alpha);
      const Eigen::VectorXd grad_b = 2.0 * cfg_.lambda2 * (psi_.atoms.transpose() * (psi_.atoms * res.beta - w));
      res.beta = shrink(res.beta - step_b * grad_b, step_b * cfg_.lambda3);

      const double next = dual_domain_objective(y, iv, phi_, psi_, res.alpha, res.beta, cfg_);
      if (trace) res.objective_trace.push_back(next);
      const double decrease = objective - next;
      objective = next;
      if (decrease < cfg_.tol) break;
    }
    res.iterations = std::min(res.iterations, cfg_.max_iters);
    res.restored = psi_.atoms * res.beta;
    return res;
  }

  const Dictionary& phi() const { return phi_; }
  const Dictionary& psi() const { return psi_; }
  const DualDomainConfig& config() const { return cfg_; }

 private:
  Dictionary phi_;
  Dictionary psi_;
  DualDomainConfig cfg_;
  double lip_phi_ = 0.0;
  double lip_psi_ = 0.0;
};

inline DualDomainResult dual_domain_restore(const jpeg::DegradedPatch& block, const Dictionary& phi,
                                            const Dictionary& psi, const DualDomainConfig& cfg) {
  return DualDomainSolver(phi, psi, cfg).solve(block);
}

}  // namespace d3::sparse
