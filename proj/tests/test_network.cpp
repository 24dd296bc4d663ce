#include "gradcheck.hpp"

#include <d3/network.hpp>
#include <d3/sparse_coding.hpp>

#include <gtest/gtest.h>

using namespace d3;
using namespace d3::net;
using d3::testing::random_matrix;

namespace {

sparse::Dictionary random_dictionary(Eigen::Index p, double lambda, std::uint64_t seed) {
  Rng rng(seed);
  return {sparse::random_unit_atoms(kBlockSize, p, rng), lambda};
}

}  // namespace

TEST(ScAnalysis, IdentityExample) {
  Vector y = Vector::Zero(64);
  y[0] = 2.0;
  y[1] = 0.5;
  const auto r = sc_analysis(y, Matrix::Identity(64, 64), Vector::Ones(64));
  Vector expected = Vector::Zero(64);
  expected[0] = 1.0;
  EXPECT_EQ(Vector(r.code.col(0)), expected);
}

TEST(ScAnalysis, EqualsShrinkOfPreActivation) {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const Matrix a = random_matrix(16, 64, rng, -1, 1);
    const Vector theta = random_matrix(16, 1, rng, 0.01, 2.0);
    const Vector y = random_matrix(64, 1, rng, -3, 3);
    const auto r = sc_analysis(y, a, theta);
    EXPECT_LT((Vector(r.code.col(0)) - sparse::shrink(Vector(a * y), theta)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ScAnalysis, JointScalingHomogeneity) {
  Rng rng(2);
  const Matrix a = random_matrix(16, 64, rng, -1, 1);
  const Vector theta = random_matrix(16, 1, rng, 0.1, 1.0);
  const Vector y = random_matrix(64, 1, rng, -3, 3);
  for (double c : {0.5, 2.0, 7.0}) {
    const Matrix lhs = sc_analysis(c * y, a, c * theta).code;
    const Matrix rhs = c * sc_analysis(y, a, theta).code;
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ScSynthesis, ZeroOneHotLinear) {
  Rng rng(3);
  const Matrix d = random_matrix(64, 10, rng, -1, 1);
  EXPECT_EQ(sc_synthesis(Matrix::Zero(10, 1), d), Matrix::Zero(64, 1));
  Matrix onehot = Matrix::Zero(10, 1);
  onehot(4, 0) = 1.0;
  EXPECT_EQ(sc_synthesis(onehot, d), d.col(4));
  const Matrix c1 = random_matrix(10, 1, rng, -1, 1), c2 = random_matrix(10, 1, rng, -1, 1);
  EXPECT_LT((sc_synthesis(2.0 * c1 - 3.0 * c2, d) - (2.0 * sc_synthesis(c1, d) - 3.0 * sc_synthesis(c2, d)))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(SparseInit, OneStepOfUnitStepIteration) {
  const auto phi = random_dictionary(128, 0.3, 4);
  const auto psi = random_dictionary(96, 0.2, 5);
  const D3Model m = init_from_sparse(phi, psi, InitScaling::unit_step);
  EXPECT_EQ(m.stage1.analysis, phi.atoms.transpose());
  EXPECT_EQ(m.stage1.synthesis, phi.atoms);
  EXPECT_TRUE((m.stage1.theta.array() == 0.3).all());
  EXPECT_TRUE((m.stage2.theta.array() == 0.2).all());
  Rng rng(6);
  sparse::IstaOptions one;
  one.max_iters = 1;
  one.lipschitz = 1.0;
  for (int k = 0; k < 100; ++k) {
    const Vector y = random_matrix(64, 1, rng, -2, 2);
    const Matrix code = sc_analysis(y, m.stage1.analysis, m.stage1.theta).code;
    EXPECT_LT((Vector(code.col(0)) - sparse::ista(y, phi, one).code).cwiseAbs().maxCoeff(), 1e-12);
    const Vector recon = phi.atoms * sparse::shrink(Vector(phi.atoms.transpose() * y), 0.3);
    EXPECT_LT((sc_synthesis(code, m.stage1.synthesis).col(0) - recon).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SparseInit, LipschitzScalingIsOneIstaStep) {
  const auto phi = random_dictionary(128, 0.05, 7);
  const D3Model m = init_from_sparse(phi, random_dictionary(64, 0.05, 8), InitScaling::lipschitz);
  const double root_l = std::sqrt(sparse::lipschitz_constant(phi.atoms));
  EXPECT_NEAR(m.stage1.analysis.norm(), m.stage1.synthesis.norm(), 1e-9);
  Rng rng(9);
  sparse::IstaOptions one;
  one.max_iters = 1;
  for (int k = 0; k < 100; ++k) {
    const Vector y = random_matrix(64, 1, rng, -2, 2);
    const Vector step = sparse::ista(y, phi, one).code;
    const Matrix code = sc_analysis(y, m.stage1.analysis, m.stage1.theta).code;
    EXPECT_LT((Vector(code.col(0)) - root_l * step).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((sc_synthesis(code, m.stage1.synthesis).col(0) - phi.atoms * step).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SparseInit, RejectsWrongDimensions) {
  const sparse::Dictionary bad{Matrix::Identity(32, 32), 0.1};
  EXPECT_THROW(init_from_sparse(bad, random_dictionary(8, 0.1, 1)), ValidationError);
}

TEST(Forward, ZeroWeightsGiveZero) {
  D3Model m = init_random(8, 8, 1);
  m.stage1.analysis.setZero();
  m.stage2.synthesis.setZero();
  Rng rng(2);
  EXPECT_EQ(forward(random_matrix(64, 3, rng, -1, 1), m).out, Matrix::Zero(64, 3));
}

TEST(Forward, TinyThresholdsMatchComposedLinearMap) {
  D3Model m;
  auto stage = [](Eigen::Index p) {
    SparseStage s;
    s.analysis = Matrix::Identity(p, 64);
    s.synthesis = Matrix::Identity(64, p);
    s.theta = Vector::Constant(p, 1e-9);
    return s;
  };
  m.stage1 = stage(64);
  m.stage2 = stage(64);
  Rng rng(3);
  const Matrix x = random_matrix(64, 5, rng, -1, 1);
  const auto& t = jpeg::transform();
  const Matrix linear = m.stage2.synthesis * m.stage2.analysis * t.inverse * m.stage1.synthesis *
                        m.stage1.analysis * t.forward * x;
  EXPECT_LT((forward(x, m).out - linear).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Forward, BatchColumnsAreIndependent) {
  Rng rng(4);
  const D3Model m = init_random(16, 12, 5);
  const Matrix x = random_matrix(64, 2, rng, -0.5, 0.5);
  const ForwardTrace both = forward(x, m);
  for (int j = 0; j < 2; ++j) {
    const ForwardTrace one = forward(Matrix(x.col(j)), m);
    EXPECT_EQ(both.out.col(j), one.out.col(0));
    EXPECT_EQ(both.z.col(j), one.z.col(0));
    EXPECT_EQ(both.alpha.col(j), one.alpha.col(0));
    EXPECT_EQ(both.beta.col(j), one.beta.col(0));
  }
}

TEST(Forward, ClampProjectsZ) {
  Rng rng(5);
  const D3Model m = init_random(16, 16, 6);
  const Matrix x = random_matrix(64, 4, rng, -0.5, 0.5);
  const IntervalBatch iv{Matrix::Constant(64, 4, -0.01), Matrix::Constant(64, 4, 0.01)};
  const ForwardTrace tr = forward(x, m, &iv);
  EXPECT_TRUE((tr.z.array() >= -0.01).all() && (tr.z.array() <= 0.01).all());
}

TEST(Losses, BoxExamples) {
  const jpeg::IntervalPair iv{Block::Constant(-1.0), Block::Constant(1.0)};
  EXPECT_EQ(box_loss(Block::Zero(), iv), 0.0);
  EXPECT_EQ(box_loss_gradient(Block::Zero(), iv), Block::Zero());
  Block z = Block::Zero();
  z[3] = 3.0;
  EXPECT_EQ(box_loss(z, iv), 4.0);
  EXPECT_EQ(box_loss_gradient(z, iv)[3], 4.0);
  z[3] = 0.0;
  z[5] = -4.0;
  EXPECT_EQ(box_loss(z, iv), 9.0);
  EXPECT_EQ(box_loss_gradient(z, iv)[5], -6.0);
}

TEST(Losses, L2Examples) {
  Block a = Block::Zero(), b = Block::Zero();
  EXPECT_EQ(l2_loss(a, a), 0.0);
  b[0] = 5.0;
  EXPECT_EQ(l2_loss(a, b), 25.0);
  EXPECT_EQ(l2_loss(b, a), l2_loss(a, b));
  EXPECT_EQ(l2_loss_gradient(b, a)[0], 10.0);
}

TEST(Backward, ZeroLossGivesZeroGradients) {
  Rng rng(6);
  const D3Model m = init_random(8, 8, 7);
  const Matrix x = random_matrix(64, 3, rng, -0.5, 0.5);
  const ForwardTrace tr = forward(x, m);
  const IntervalBatch iv{tr.z.array() - 1.0, tr.z.array() + 1.0};
  const Gradients g = backward(tr, tr.out, iv, m);
  EXPECT_EQ(g.stage1.analysis.norm() + g.stage1.synthesis.norm() + g.stage1.theta.norm() +
                g.stage2.analysis.norm() + g.stage2.synthesis.norm() + g.stage2.theta.norm(),
            0.0);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(7);
  for (int k = 0; k < 20; ++k) {
    const auto r = d3::testing::check_d3_gradients(d3::testing::random_d3_problem(8, 4, rng), {});
    EXPECT_LT(r.max_rel_error, 1e-5) << "model " << k << " worst " << r.worst;
  }
}

TEST(Backward, BoxTermOnlyReachesStageOne) {
  Rng rng(8);
  const auto pr = d3::testing::random_d3_problem(8, 4, rng);
  const ForwardTrace tr = forward(pr.x, pr.model);
  const Gradients both = backward(tr, pr.target, pr.intervals, pr.model, {1.0, 1.0});
  const Gradients l2_only = backward(tr, pr.target, pr.intervals, pr.model, {1.0, 0.0});
  ASSERT_GT(evaluate_loss(tr, pr.target, pr.intervals).box, 0.0);
  EXPECT_EQ(both.stage2.theta, l2_only.stage2.theta);
  EXPECT_EQ(both.stage2.analysis, l2_only.stage2.analysis);
  EXPECT_NE(both.stage1.theta, l2_only.stage1.theta);
  // The L2-only configuration is the gradient of the L2 term alone.
  const auto r = d3::testing::check_d3_gradients(pr, {1.0, 0.0});
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(Backward, RejectsMismatch) {
  Rng rng(9);
  const D3Model m = init_random(8, 8, 1);
  const ForwardTrace tr = forward(random_matrix(64, 2, rng, -1, 1), m);
  const IntervalBatch iv{Matrix::Zero(64, 2), Matrix::Zero(64, 2)};
  EXPECT_THROW(backward(tr, Matrix::Zero(64, 3), iv, m), ValidationError);
  EXPECT_THROW(backward(tr, Matrix::Zero(64, 2), iv, init_random(9, 8, 1)), ValidationError);
}

TEST(ParameterCount, MatchesClosedForm) {
  for (Eigen::Index p : {8, 128, 256}) {
    const D3Model m = init_random(p, p, 1);
    const auto weights = m.stage1.analysis.size() + m.stage1.synthesis.size() + m.stage2.analysis.size() +
                         m.stage2.synthesis.size();
    // Both diagonal scaling layers per stage count as parameters.
    const auto diagonals = 2 * (m.stage1.theta.size() + m.stage2.theta.size());
    EXPECT_EQ(weights + diagonals, 2 * (p + p) * (64 + 1));
    const DBaseModel b = init_dbase(p, p, 1);
    EXPECT_EQ(b.w1.size() + b.w2.size() + b.w3.size() + b.w4.size(), weights);
  }
}

TEST(DBase, NonNegativeChainIsLinear) {
  Rng rng(10);
  DBaseModel m = init_dbase(8, 8, 2);
  m.w1 = random_matrix(8, 64, rng, 0, 1);
  m.w2 = random_matrix(64, 8, rng, 0, 1);
  m.w3 = random_matrix(8, 64, rng, 0, 1);
  m.w4 = random_matrix(64, 8, rng, 0, 1);
  const Matrix x = random_matrix(64, 3, rng, 0, 1);
  EXPECT_LT((dbase_forward(x, m).out - m.w4 * m.w3 * m.w2 * m.w1 * x).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(DBase, InferenceIsDeterministicAndTrainingDropsUnits) {
  Rng rng(11);
  const DBaseModel m = init_dbase(32, 32, 3);
  const Matrix x = random_matrix(64, 5, rng, -0.5, 0.5);
  EXPECT_EQ(dbase_forward(x, m, false, rng).out, dbase_forward(x, m, false, rng).out);
  const DBaseTrace tr = dbase_forward(x, m, true, rng);
  const double zeros = static_cast<double>((tr.mask1.array() == 0.0).count()) / static_cast<double>(tr.mask1.size());
  EXPECT_GT(zeros, 0.3);
  EXPECT_LT(zeros, 0.7);
  EXPECT_TRUE(((tr.mask1.array() == 0.0) || (tr.mask1.array() == 2.0)).all());
}

TEST(DBase, MatchesFiniteDifferences) {
  Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    const auto r = d3::testing::check_dbase_gradients(8, 4, rng);
    EXPECT_LT(r.max_rel_error, 1e-5) << "model " << k << " worst " << r.worst;
  }
}

TEST(InitRandom, ShapesAndBounds) {
  const D3Model m = init_random(16, 24, 3);
  EXPECT_EQ(m.p_phi(), 16);
  EXPECT_EQ(m.p_psi(), 24);
  EXPECT_LE(m.stage1.analysis.cwiseAbs().maxCoeff(), 1.0 / 8.0);
  EXPECT_LE(m.stage1.synthesis.cwiseAbs().maxCoeff(), 1.0 / 4.0);
  EXPECT_TRUE((m.stage2.theta.array() == 0.1).all());
  EXPECT_NO_THROW(validate(m));
  EXPECT_THROW(init_random(0, 8, 1), ValidationError);
}
