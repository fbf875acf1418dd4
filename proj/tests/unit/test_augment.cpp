#include <cmath>

#include "doctest.h"
#include "orgseg/augment.hpp"
#include "orgseg/error.hpp"
#include "orgseg/imaging.hpp"
#include "support.hpp"

using namespace orgseg;

TEST_SUITE("augment") {

TEST_CASE("spec text round trip") {
  CHECK(AugmentationSpec::parse("blur").kind == AugmentationKind::gaussian_blur);
  CHECK(AugmentationSpec::parse("sobel").kind == AugmentationKind::sobel);
  const auto pd = AugmentationSpec::parse("pixel-drop:0.5");
  CHECK(pd.kind == AugmentationKind::pixel_drop);
  CHECK(pd.drop_fraction == 0.5);
  CHECK(AugmentationSpec::parse(pd.to_string()) == pd);
  CHECK(AugmentationSpec::parse("pixel-drop:0.25").to_string() == "pixel-drop:0.25");
  CHECK_THROWS(AugmentationSpec::parse("rotate"));
  try {
    AugmentationSpec::parse("pixel-drop:1.5");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FractionOutOfRange);
  }
}

TEST_CASE("pixel drop zeroes an exact, seeded pixel count") {
  Image2D img(20, 15, 0.75f);
  for (double f : {0.25, 0.5, 0.01, 0.999}) {
    const auto out = pixel_drop(img, f, 7);
    std::size_t zeros = 0;
    for (float v : out.pixels()) {
      if (v == 0.0f) ++zeros;
      else CHECK(v == 0.75f);
    }
    CHECK(zeros == static_cast<std::size_t>(std::llround(f * 300)));
    CHECK(pixel_drop(img, f, 7) == out);
  }
  CHECK(!(pixel_drop(img, 0.5, 1) == pixel_drop(img, 0.5, 2)));
  for (double f : {0.0, 1.0, -0.1}) {
    try {
      pixel_drop(img, f, 1);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::FractionOutOfRange);
    }
  }
}

TEST_CASE("pixel drop is roughly uniform over positions") {
  Image2D img(10, 10, 1.0f);
  std::vector<int> hits(100, 0);
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    const auto out = pixel_drop(img, 0.25, 1000 + t);
    for (std::size_t i = 0; i < 100; ++i) hits[i] += out.pixels()[i] == 0.0f;
  }
  for (int h : hits) CHECK(std::abs(h - trials / 4) < 120);  // ~6 sigma
}

TEST_CASE("blur matches a separable Gaussian plus half-resolution round trip") {
  const Image2D img = testsupport::random_image(16, 12, 3);
  double k[5], s = 0;
  for (int i = 0; i < 5; ++i) s += k[i] = std::exp(-0.5 * (i - 2) * (i - 2));
  for (double& v : k) v /= s;
  Image2D smooth(16, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      double acc = 0;
      for (int j = -2; j <= 2; ++j)
        for (int i = -2; i <= 2; ++i)
          acc += k[i + 2] * k[j + 2] * img.at(reflect_index(x + i, 16), reflect_index(y + j, 12));
      smooth.at(x, y) = static_cast<float>(acc);
    }
  const Image2D expect = resize_bilinear(resize_bilinear(smooth, 8, 6), 16, 12);
  const Image2D got = gaussian_blur_halfres(img);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.storage()[i] == doctest::Approx(expect.storage()[i]).epsilon(1e-5));

  const Image2D flat(8, 8, 0.3f);
  const Image2D blurred = gaussian_blur_halfres(flat);
  for (float v : blurred.pixels()) CHECK(v == doctest::Approx(0.3f).epsilon(1e-6));
  try {
    gaussian_blur_halfres(Image2D(7, 8));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OddDimensions);
  }
}

TEST_CASE("sobel magnitude") {
  const Image2D img = testsupport::random_image(9, 7, 4);
  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const Image2D got = sobel_filter(img);
  for (int y = 1; y < 6; ++y)
    for (int x = 1; x < 8; ++x) {
      double gx = 0, gy = 0;
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i) {
          gx += kx[j + 1][i + 1] * img.at(x + i, y + j);
          gy += kx[i + 1][j + 1] * img.at(x + i, y + j);
        }
      CHECK(got.at(x, y) == doctest::Approx(std::hypot(gx, gy) / (4 * std::sqrt(2.0))).epsilon(1e-5));
    }

  Image2D step(6, 6, 0.0f);
  for (int y = 0; y < 6; ++y)
    for (int x = 3; x < 6; ++x) step.at(x, y) = 1.0f;
  const Image2D s = sobel_filter(step);
  CHECK(s.at(2, 3) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(s.at(0, 3) == 0.0f);
  const Image2D flat_edges = sobel_filter(Image2D(5, 5, 0.8f));
  for (float v : flat_edges.pixels()) CHECK(v == 0.0f);
  try {
    sobel_filter(Image2D(2, 5));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ImageTooSmall);
  }
}

TEST_CASE("reflect index") {
  CHECK(reflect_index(-1, 5) == 1);
  CHECK(reflect_index(-2, 5) == 2);
  CHECK(reflect_index(5, 5) == 3);
  CHECK(reflect_index(6, 5) == 2);
  CHECK(reflect_index(3, 1) == 0);
  CHECK(reflect_index(-7, 3) == 1);
}

}  // TEST_SUITE
