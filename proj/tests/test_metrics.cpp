#include <d3/metrics.hpp>
#include <d3/random.hpp>
#include <d3/report.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace d3;
using namespace d3::metrics;

namespace {

GrayImage noise_image(int w, int h, Rng& rng, double lo = 0.0, double hi = 255.0) {
  GrayImage img(w, h);
  for (auto& v : img.pixels) v = uniform(rng, lo, hi);
  return img;
}

// Direct 2-D windowed SSIM: for every valid window position compute weighted
// means, variances and covariance with the full 11x11 Gaussian weight grid.
double ssim_oracle(const GrayImage& a, const GrayImage& b) {
  const int w = 11;
  double g[11], gsum = 0.0;
  for (int i = 0; i < w; ++i) gsum += g[i] = std::exp(-((i - 5.0) * (i - 5.0)) / (2.0 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * 255.0, 2), c2 = std::pow(0.03 * 255.0, 2);
  double total = 0.0;
  int n = 0;
  for (int r0 = 0; r0 + w <= a.height; ++r0)
    for (int c0 = 0; c0 + w <= a.width; ++c0) {
      double mx = 0, my = 0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double wt = g[i] * g[j] / (gsum * gsum);
          mx += wt * a.at(r0 + i, c0 + j);
          my += wt * b.at(r0 + i, c0 + j);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double wt = g[i] * g[j] / (gsum * gsum);
          const double dx = a.at(r0 + i, c0 + j) - mx, dy = b.at(r0 + i, c0 + j) - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cxy += wt * dx * dy;
        }
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  return total / n;
}

// 16x16 image of four constant 8x8 tiles in a checkerboard of 0 and 16.
GrayImage checker_tiles() {
  GrayImage img(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) img.at(r, c) = ((r / 8) + (c / 8)) % 2 == 0 ? 0.0 : 16.0;
  return img;
}

}  // namespace

TEST(Psnr, Examples) {
  const GrayImage a(16, 16, 100.0);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  GrayImage b = a;
  for (auto& v : b.pixels) v += 1.0;
  EXPECT_NEAR(psnr(a, b), 48.1308036, 1e-6);
  EXPECT_NEAR(psnr(GrayImage(8, 8, 0.0), GrayImage(8, 8, 255.0)), 0.0, 1e-12);
  EXPECT_THROW(psnr(a, GrayImage(8, 16)), ValidationError);
}

TEST(Ssim, IdentityAndSymmetry) {
  Rng rng(1);
  for (int k = 0; k < 5; ++k) {
    const GrayImage a = noise_image(24, 20, rng), b = noise_image(24, 20, rng);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_LE(ssim(a, b), 1.0);
    EXPECT_GE(ssim(a, b), -1.0);
  }
  EXPECT_THROW(ssim(GrayImage(10, 10), GrayImage(10, 10)), ValidationError);
}

TEST(Ssim, ConstantImagesClosedForm) {
  // Zero variance leaves only the luminance term.
  const double c1 = std::pow(0.01 * 255.0, 2);
  const double expected = (2 * 100.0 * 120.0 + c1) / (100.0 * 100.0 + 120.0 * 120.0 + c1);
  EXPECT_NEAR(ssim(GrayImage(16, 16, 100.0), GrayImage(16, 16, 120.0)), expected, 1e-9);
}

TEST(Ssim, MatchesDirectWindowedOracle) {
  Rng rng(2);
  for (int k = 0; k < 4; ++k) {
    const GrayImage a = noise_image(20, 17, rng);
    GrayImage b = a;
    for (auto& v : b.pixels) v += uniform(rng, -30.0, 30.0);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-6);
  }
}

TEST(Bef, HandComputedCheckerTiles) {
  // Horizontal pairs: 16 rows x 15 pairs; the pair across column 7|8 is the
  // only boundary in each row, with difference 16.  Vertical likewise.
  // D_B = 256 over 32 pairs, D_BC = 0 over 448 pairs, eta = 3 / 4.
  const BlockingEffect e = blocking_effect(checker_tiles());
  EXPECT_NEAR(e.boundary_mean_sq, 256.0, 1e-9);
  EXPECT_NEAR(e.non_boundary_mean_sq, 0.0, 1e-9);
  EXPECT_NEAR(e.eta, 0.75, 1e-9);
  EXPECT_NEAR(e.bef, 192.0, 1e-9);
  const GrayImage ref(16, 16, 0.0);
  // MSE against flat zero: half the pixels are 16.
  EXPECT_NEAR(psnr_b(ref, checker_tiles()), 10.0 * std::log10(255.0 * 255.0 / (128.0 + 192.0)), 1e-9);
}

TEST(Bef, SmoothRampHasNoBlocking) {
  GrayImage img(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) img.at(r, c) = 3.0 * c + 2.0 * r;
  const BlockingEffect e = blocking_effect(img);
  EXPECT_EQ(e.eta, 0.0);
  EXPECT_EQ(e.bef, 0.0);
}

TEST(PsnrB, NeverExceedsPsnrAndEqualsItWithoutBlocking) {
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const GrayImage a = noise_image(24, 24, rng), b = noise_image(24, 24, rng);
    EXPECT_LE(psnr_b(a, b), psnr(a, b));
    if (blocking_effect(b).eta == 0.0) {
      EXPECT_EQ(psnr_b(a, b), psnr(a, b));
    }
  }
  const GrayImage flat(16, 16, 50.0);
  EXPECT_TRUE(std::isinf(psnr_b(flat, flat)));
}

TEST(PsnrB, CropsToBlockMultiple) {
  Rng rng(4);
  const GrayImage a = noise_image(20, 19, rng), b = noise_image(20, 19, rng);
  EXPECT_EQ(psnr_b(a, b), psnr_b(crop_to_blocks(a), crop_to_blocks(b)));
  EXPECT_EQ(crop_to_blocks(a).width, 16);
  EXPECT_EQ(crop_to_blocks(a).height, 16);
}

TEST(Report, CsvAndMarkdown) {
  EvalReport r{parse_metrics("psnr,psnrb"), {}};
  const GrayImage a(16, 16, 10.0);
  GrayImage b = a;
  for (auto& v : b.pixels) v += 1.0;
  r.add("one.pgm", a, b);
  r.add("two.pgm", a, a);
  EXPECT_EQ(to_csv(r), "image,psnr,psnrb\none.pgm,48.130804,48.130804\ntwo.pgm,inf,inf\n");
  const std::string md = to_markdown(r);
  EXPECT_NE(md.find("| metric | one.pgm | two.pgm | average |"), std::string::npos);
  EXPECT_NE(md.find("| psnr | 48.130804 | inf | inf |"), std::string::npos);
  EXPECT_THROW(parse_metrics("psnr,mse"), ValidationError);
}

TEST(Report, CostColumns) {
  EvalReport r{parse_metrics("psnr"), {}};
  const GrayImage a(8, 8, 10.0);
  r.add("a.pgm", a, a);
  r.add("b.pgm", a, a);
  CostTable costs;
  costs["a.pgm"] = {12.5, 1000};
  costs["z.pgm"] = {1.0, {}};
  const CostTable back = parse_costs(encode_costs(costs));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.at("a.pgm").multiplies, std::optional<std::uint64_t>(1000));
  EXPECT_FALSE(back.at("z.pgm").multiplies.has_value());
  r.attach(back);
  EXPECT_EQ(to_csv(r), "image,psnr,restore_ms,multiplies\na.pgm,inf,12.500000,1000\nb.pgm,inf,,\n");
  EXPECT_NE(to_markdown(r).find("| multiplies | 1000 | - | - |"), std::string::npos);
  EXPECT_THROW(parse_costs("name,ms\n"), ParseError);
  EXPECT_THROW(parse_costs("image,restore_ms,multiplies\nx,abc,1\n"), ParseError);
}
