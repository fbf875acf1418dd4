#include <cmath>

#include "doctest.h"
#include "orgseg/error.hpp"
#include "orgseg/losses.hpp"
#include "support.hpp"

using namespace orgseg;
using testsupport::random_image;
using testsupport::random_mask;

namespace {

// Direct mean SSIM: every window's moments computed from scratch.
double ssim_oracle(const Image2D& x, const Image2D& y, double c1, double c2, int n) {
  const int nx = x.width() - n + 1, ny = x.height() - n + 1;
  double total = 0;
  for (int wy = 0; wy < ny; ++wy)
    for (int wx = 0; wx < nx; ++wx) {
      double mx = 0, my = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) mx += x.at(wx + i, wy + j), my += y.at(wx + i, wy + j);
      mx /= n * n;
      my /= n * n;
      double vx = 0, vy = 0, cxy = 0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const double a = x.at(wx + i, wy + j) - mx, b = y.at(wx + i, wy + j) - my;
          vx += a * a, vy += b * b, cxy += a * b;
        }
      vx /= n * n, vy /= n * n, cxy /= n * n;
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / (nx * ny);
}

std::vector<double> doubles(const Image2D& img) { return {img.pixels().begin(), img.pixels().end()}; }

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("identities") {
  for (int t = 0; t < 5; ++t) {
    const auto x = random_image(40, 33, 100 + t);
    CHECK(std::abs(loss_ssim(x, x)) < 1e-6);
    CHECK(std::abs(loss_ssim_l1(x, x)) < 1e-6);
    CHECK(loss_mae(x, x) == 0.0);
    const auto m = random_mask(40, 33, 200 + t);
    const auto mi = mask_to_image(m);
    CHECK(loss_dice(m, mi) <= 2e-4);
    CHECK(loss_iou(m, mi) <= 2e-4);
    CHECK(loss_dice(m, mi) >= 0.0);
  }
}

TEST_CASE("hand values") {
  Mask2D y(2, 1);
  y.at(0, 0) = 1;
  CHECK(loss_bce(y, Image2D(2, 1, 0.5f)) == doctest::Approx(0.693147).epsilon(1e-5));
  CHECK(loss_dice(Mask2D(2, 2, 1), Image2D(2, 2, 1.0f)) == doctest::Approx(1.25e-5).epsilon(1e-3));
  Mask2D a(4, 1);
  a.at(0, 0) = a.at(1, 0) = 1;
  Image2D b(4, 1);
  b.at(0, 0) = b.at(2, 0) = 1.0f;
  CHECK(loss_iou(a, b) == doctest::Approx(1.0 - 1.0 / 3.0001).epsilon(1e-9));
  CHECK(loss_ssim(Image2D(4, 4, 0.0f), Image2D(4, 4, 1.0f)) == doctest::Approx(1.0 - 0.01 / 1.01).epsilon(1e-9));
  // Clamp keeps BCE finite at saturated predictions.
  CHECK(std::isfinite(loss_bce(y, Image2D(2, 1, 1.0f))));
  CHECK(loss_bce(y, Image2D(2, 1, 1.0f)) == doctest::Approx(-std::log(1e-7) / 2).epsilon(1e-6));
}

TEST_CASE("ssim matches a direct window loop") {
  const auto x = random_image(17, 13, 1);
  const auto y = random_image(17, 13, 2);
  CHECK(ssim(x, y) == doctest::Approx(ssim_oracle(x, y, 0.01, 0.03, 11)).epsilon(1e-9));
  SsimConfig small;
  small.window_size = 4;
  CHECK(ssim(x, y, small) == doctest::Approx(ssim_oracle(x, y, 0.01, 0.03, 4)).epsilon(1e-9));
  // Window clamps to the smaller side.
  const auto p = random_image(8, 6, 3), q = random_image(8, 6, 4);
  CHECK(effective_window(SsimConfig{}, 8, 6) == 6);
  CHECK(ssim(p, q) == doctest::Approx(ssim_oracle(p, q, 0.01, 0.03, 6)).epsilon(1e-9));
}

TEST_CASE("mae and combined loss") {
  const auto x = random_image(9, 9, 5), y = random_image(9, 9, 6);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(double(x.storage()[i]) - y.storage()[i]);
  CHECK(loss_mae(x, y) == doctest::Approx(s / 81).epsilon(1e-12));
  CHECK(loss_ssim_l1(x, y) == doctest::Approx(0.5 * s / 81 + 0.5 * loss_ssim(x, y)).epsilon(1e-12));
}

TEST_CASE("bce, dice and iou match direct formulas on soft predictions") {
  const auto m = random_mask(7, 5, 8);
  const auto p = random_image(7, 5, 9);
  double b = 0, inter = 0, sy = 0, sp = 0, sp2 = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double t = m.storage()[i], q = p.storage()[i];
    b -= t * std::log(q) + (1 - t) * std::log(1 - q);
    inter += t * q, sy += t, sp += q, sp2 += q * q;
  }
  CHECK(loss_bce(m, p) == doctest::Approx(b / 35).epsilon(1e-9));
  CHECK(loss_dice(m, p) == doctest::Approx(1 - 2 * inter / (sy + sp2 + 1e-4)).epsilon(1e-9));
  CHECK(loss_iou(m, p) == doctest::Approx(1 - inter / (sy + sp - inter + 1e-4)).epsilon(1e-9));
}

TEST_CASE("gradients match central differences") {
  for (auto kind : {LossKind::ssim, LossKind::ssim_l1, LossKind::bce, LossKind::dice, LossKind::iou}) {
    CAPTURE(to_string(kind));
    for (int t = 0; t < 5; ++t) {
      std::vector<double> target, pred;
      if (is_pretext_loss(kind)) {
        target = doubles(random_image(8, 8, 300 + t));
      } else {
        const auto m = random_mask(8, 8, 300 + t);
        target.assign(m.pixels().begin(), m.pixels().end());
      }
      for (double v : doubles(random_image(8, 8, 400 + t))) pred.push_back(0.05 + 0.9 * v);
      CHECK(testsupport::loss_grad_rel_error(kind, target, pred, 8, 8) < 1e-3);
      LossParams windowed;
      windowed.ssim.window_size = 3;
      CHECK(testsupport::loss_grad_rel_error(kind, target, pred, 8, 8, 1e-4, windowed) < 1e-3);
    }
  }
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(loss_mae(Image2D(3, 3), Image2D(3, 4)), Error);
  try {
    loss_dice(Mask2D(2, 2), Image2D(3, 2));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
  CHECK(parse_loss("ssim-l1") == LossKind::ssim_l1);
  CHECK(to_string(parse_loss("dice")) == "dice");
  CHECK_THROWS(parse_loss("mse"));
  SsimConfig bad;
  bad.window_size = 0;
  CHECK_THROWS(bad.validate());
}

}  // TEST_SUITE
