#pragma once

// Inference cost and parameter counts for the D3 network and for plain
// convolutional networks, plus an instrumented single-patch inference that
// counts the multiplications it actually performs.

#include <d3/error.hpp>
#include <d3/jpeg_model.hpp>
#include <d3/network.hpp>
#include <d3/sparse_coding.hpp>

#include <bit>
#include <cstdint>
#include <vector>

namespace d3::complexity {

struct Cost {
  std::uint64_t multiplies = 0;
  std::uint64_t params = 0;
  friend bool operator==(const Cost&, const Cost&) = default;
};

/// m log2 m, for m a power of two (the cost of one fast 2-D DCT plus one IDCT).
inline std::uint64_t fast_transform_pair_cost(std::uint64_t m) {
  if (!std::has_single_bit(m)) throw ValidationError("m must be a power of two");
  return m * static_cast<std::uint64_t>(std::countr_zero(m));
}

/// multiplies = 2 (p_phi + p_psi)(m + 1) + m log2 m;  params = 2 (p_phi + p_psi)(m + 1).
inline Cost d3_complexity(std::uint64_t p_phi, std::uint64_t p_psi, std::uint64_t m) {
  if (p_phi == 0 || p_psi == 0 || m == 0) throw ValidationError("d3 dimensions must be positive");
  const std::uint64_t layers = 2 * (p_phi + p_psi) * (m + 1);
  return {layers + fast_transform_pair_cost(m), layers};
}

/// Depth-d fully convolutional network; filters[0] is the input channel count.
struct ConvArchSpec {
  std::vector<std::uint64_t> filters;      // n_0 .. n_d
  std::vector<std::uint64_t> kernel;       // s_1 .. s_d
  std::vector<std::uint64_t> output_size;  // m_1 .. m_d

  std::size_t depth() const { return kernel.size(); }
};

inline void validate(const ConvArchSpec& s) {
  if (s.kernel.empty()) throw ValidationError("conv spec needs at least one layer");
  if (s.filters.size() != s.kernel.size() + 1 || s.output_size.size() != s.kernel.size())
    throw ValidationError("conv spec: need d+1 filter counts, d kernel sizes and d output sizes");
  for (const auto* v : {&s.filters, &s.kernel, &s.output_size})
    for (auto x : *v)
      if (x == 0) throw ValidationError("conv spec entries must be positive");
}

/// multiplies = sum n_{l-1} s_l^2 n_l m_l^2;  params = sum n_{l-1} n_l s_l^2.
inline Cost conv_complexity(const ConvArchSpec& s) {
  validate(s);
  Cost c;
  for (std::size_t l = 0; l < s.depth(); ++l) {
    const std::uint64_t weights = s.filters[l] * s.filters[l + 1] * s.kernel[l] * s.kernel[l];
    c.params += weights;
    c.multiplies += weights * s.output_size[l] * s.output_size[l];
  }
  return c;
}

/// Four-layer artifact-reduction CNN (9-7-1-5 kernels, 64-32-16-1 filters).
inline ConvArchSpec arcnn_spec(std::uint64_t output_size = 1) {
  return {{1, 64, 32, 16, 1}, {9, 7, 1, 5}, {output_size, output_size, output_size, output_size}};
}

struct MultiplyCount {
  std::uint64_t layers = 0;           // learnable and diagonal layers
  std::uint64_t dense_transforms = 0;  // DCT and IDCT as 64x64 matrix products
  std::uint64_t fast_transforms = 0;   // theoretical fast-transform figure m log2 m

  std::uint64_t actual() const { return layers + dense_transforms; }
  std::uint64_t theoretical() const { return layers + fast_transforms; }
};

/// Scalar single-patch inference that tallies each multiplication executed.
inline Block counted_forward(const Block& x, const net::D3Model& model, MultiplyCount& count) {
  const auto& t = jpeg::transform();
  auto matvec = [&](const Eigen::MatrixXd& a, const Eigen::VectorXd& v, std::uint64_t& tally) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        out[i] += a(i, j) * v[j];
        ++tally;
      }
    return out;
  };
  auto stage = [&](const net::SparseStage& s, const Eigen::VectorXd& in) {
    const Eigen::VectorXd u = matvec(s.analysis, in, count.layers);
    const Eigen::VectorXd inv = s.pre_scale();
    Eigen::VectorXd code(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double scaled = u[i] * inv[i];                    // diag(1/theta)
      code[i] = s.theta[i] * sparse::unit_shrink(scaled);     // diag(theta)
      count.layers += 2;
    }
    return matvec(s.synthesis, code, count.layers);
  };
  const Eigen::VectorXd y = matvec(t.forward, x, count.dense_transforms);
  const Eigen::VectorXd z = stage(model.stage1, y);
  const Eigen::VectorXd mid = matvec(t.inverse, z, count.dense_transforms);
  const Eigen::VectorXd out = stage(model.stage2, mid);
  count.fast_transforms += fast_transform_pair_cost(kBlockSize);
  return out;
}

inline MultiplyCount count_multiplies(const net::D3Model& model) {
  net::validate(model);
  MultiplyCount c;
  counted_forward(Block::Zero(), model, c);
  return c;
}

}  // namespace d3::complexity
