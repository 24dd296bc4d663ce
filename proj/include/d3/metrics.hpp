#pragma once

// Full-reference image quality: PSNR, SSIM and blocking-aware PSNR-B.

#include <d3/error.hpp>
#include <d3/image.hpp>

#include <cmath>
#include <limits>
#include <vector>

namespace d3::metrics {

inline constexpr double kPeak = 255.0;

inline void require_same_size(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw ValidationError("image dimensions differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                          " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
}

inline double mse(const GrayImage& ref, const GrayImage& test) {
  require_same_size(ref, test);
  double s = 0.0;
  for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
    const double d = ref.pixels[i] - test.pixels[i];
    s += d * d;
  }
  return s / static_cast<double>(ref.pixels.size());
}

inline double psnr_from_mse(double e) {
  return e == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(kPeak * kPeak / e);
}

/// 10 log10(255^2 / MSE); +inf for identical images.
inline double psnr(const GrayImage& ref, const GrayImage& test) { return psnr_from_mse(mse(ref, test)); }

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Mean SSIM over all fully contained windows (Gaussian weighting).
inline double ssim(const GrayImage& ref, const GrayImage& test, const SsimOptions& opt = {}) {
  require_same_size(ref, test);
  const int w = opt.window;
  if (ref.width < w || ref.height < w)
    throw ValidationError("SSIM needs images of at least " + std::to_string(w) + "x" + std::to_string(w));
  const auto kernel = gaussian_kernel(w, opt.sigma);
  const int out_w = ref.width - w + 1;
  const int out_h = ref.height - w + 1;

  // Separable valid-region filter of f(a, b) evaluated per pixel.
  auto filter = [&](auto&& f) {
    std::vector<double> rows(static_cast<std::size_t>(ref.height) * out_w);
    for (int r = 0; r < ref.height; ++r)
      for (int c = 0; c < out_w; ++c) {
        double s = 0.0;
        for (int k = 0; k < w; ++k) s += kernel[static_cast<std::size_t>(k)] * f(ref.at(r, c + k), test.at(r, c + k));
        rows[static_cast<std::size_t>(r) * out_w + c] = s;
      }
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
    for (int r = 0; r < out_h; ++r)
      for (int c = 0; c < out_w; ++c) {
        double s = 0.0;
        for (int k = 0; k < w; ++k) s += kernel[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>(r + k) * out_w + c];
        out[static_cast<std::size_t>(r) * out_w + c] = s;
      }
    return out;
  };
  const auto mu_x = filter([](double a, double) { return a; });
  const auto mu_y = filter([](double, double b) { return b; });
  const auto xx = filter([](double a, double) { return a * a; });
  const auto yy = filter([](double, double b) { return b * b; });
  const auto xy = filter([](double a, double b) { return a * b; });

  const double c1 = (opt.k1 * kPeak) * (opt.k1 * kPeak);
  const double c2 = (opt.k2 * kPeak) * (opt.k2 * kPeak);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i], my = mu_y[i];
    const double vx = xx[i] - mx * mx, vy = yy[i] - my * my, cxy = xy[i] - mx * my;
    total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mu_x.size());
}

/// Blocking-effect factor terms of one image.
struct BlockingEffect {
  double boundary_mean_sq = 0.0;      // D_B
  double non_boundary_mean_sq = 0.0;  // D_BC
  double eta = 0.0;
  double bef = 0.0;
};

/// Squared neighbour differences across vs. inside the 8x8 grid, horizontally and vertically.
inline BlockingEffect blocking_effect(const GrayImage& img, int block = 8) {
  const int h = img.height, w = img.width;
  double sum_b = 0.0, sum_bc = 0.0;
  long n_b = 0, n_bc = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c + 1 < w; ++c) {
      const double d = img.at(r, c) - img.at(r, c + 1);
      if ((c + 1) % block == 0) {
        sum_b += d * d;
        ++n_b;
      } else {
        sum_bc += d * d;
        ++n_bc;
      }
    }
  for (int r = 0; r + 1 < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double d = img.at(r, c) - img.at(r + 1, c);
      if ((r + 1) % block == 0) {
        sum_b += d * d;
        ++n_b;
      } else {
        sum_bc += d * d;
        ++n_bc;
      }
    }
  BlockingEffect e;
  e.boundary_mean_sq = n_b > 0 ? sum_b / static_cast<double>(n_b) : 0.0;
  e.non_boundary_mean_sq = n_bc > 0 ? sum_bc / static_cast<double>(n_bc) : 0.0;
  if (e.boundary_mean_sq > e.non_boundary_mean_sq)
    e.eta = std::log2(static_cast<double>(block)) / std::log2(static_cast<double>(std::min(h, w)));
  e.bef = e.eta * (e.boundary_mean_sq - e.non_boundary_mean_sq);
  return e;
}

/// Crops to the largest multiple-of-8 top-left region.
inline GrayImage crop_to_blocks(const GrayImage& img, int block = 8) {
  const int w = img.width / block * block, h = img.height / block * block;
  if (w == img.width && h == img.height) return img;
  if (w == 0 || h == 0) throw ValidationError("PSNR-B needs images of at least 8x8");
  GrayImage out(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = img.at(r, c);
  return out;
}

/// 10 log10(255^2 / (MSE + BEF(test))).
inline double psnr_b(const GrayImage& ref, const GrayImage& test) {
  require_same_size(ref, test);
  const GrayImage r = crop_to_blocks(ref), t = crop_to_blocks(test);
  return psnr_from_mse(mse(r, t) + blocking_effect(t).bef);
}

}  // namespace d3::metrics
