#include <cmath>
#include <functional>
#include <set>

#include "doctest.h"
#include "orgseg/error.hpp"
#include "orgseg/layers.hpp"
#include "orgseg/optim.hpp"
#include "orgseg/rng.hpp"
#include "orgseg/tensor.hpp"
#include "orgseg/unet.hpp"

using namespace orgseg;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, double scale = 1.0) {
  Tensor t(n, c, h, w);
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(scale * rng.uniform(-1, 1));
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += double(y.data()[i]) * r.data()[i];
  return s;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb + 1e-300);
}

// Central differences of f with respect to the first `limit` entries of v.
std::vector<double> numeric_grad(std::vector<float>& v, const std::function<double()>& f, double h,
                                 std::size_t limit = SIZE_MAX) {
  std::vector<double> g;
  for (std::size_t i = 0; i < std::min(limit, v.size()); ++i) {
    const float keep = v[i];
    v[i] = keep + static_cast<float>(h);
    const double up = f();
    v[i] = keep - static_cast<float>(h);
    const double down = f();
    v[i] = keep;
    g.push_back((up - down) / (2 * h));
  }
  return g;
}

std::vector<float> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_SUITE("model") {

TEST_CASE("tensor helpers") {
  const Tensor a = random_tensor(2, 3, 4, 4, 1), b = random_tensor(2, 2, 4, 4, 2);
  const Tensor cat = concat_channels(a, b);
  CHECK(cat.c() == 5);
  CHECK(cat.channel(1, 3)[5] == b.channel(1, 0)[5]);
  Tensor f, s;
  split_channels(cat, 3, f, s);
  CHECK(f == a);
  CHECK(s == b);
  const Tensor up = upsample2x_nearest(a);
  CHECK(up.h() == 8);
  CHECK(up.channel(1, 2)[3 * 8 + 5] == a.channel(1, 2)[1 * 4 + 2]);
  // Adjoint: <up(x), y> == <x, up^T(y)>
  const Tensor y = random_tensor(2, 3, 8, 8, 3);
  CHECK(weighted_sum(up, y) == doctest::Approx(weighted_sum(a, upsample2x_backward(y))).epsilon(1e-6));
  const Tensor sum = add(a, a);
  CHECK(sum.data()[7] == 2 * a.data()[7]);
}

TEST_CASE("conv2d matches direct convolution") {
  for (int stride : {1, 2}) {
    for (int kernel : {1, 3}) {
      ParameterStore store;
      Conv2d conv(store, "c", 3, 4, kernel, stride);
      Rng rng(5);
      for (auto& v : conv.weight().value) v = static_cast<float>(rng.uniform(-1, 1));
      for (auto& v : conv.bias().value) v = static_cast<float>(rng.uniform(-1, 1));
      const Tensor x = random_tensor(2, 3, 7, 6, 6);
      const Tensor y = conv.forward(x, false);
      const int pad = kernel / 2;
      const int oh = (7 + 2 * pad - kernel) / stride + 1, ow = (6 + 2 * pad - kernel) / stride + 1;
      REQUIRE(y.h() == oh);
      REQUIRE(y.w() == ow);
      for (int n = 0; n < 2; ++n)
        for (int co = 0; co < 4; ++co)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double s = conv.bias().value[co];
              for (int ci = 0; ci < 3; ++ci)
                for (int ky = 0; ky < kernel; ++ky)
                  for (int kx = 0; kx < kernel; ++kx) {
                    const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                    if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                    s += double(conv.weight().value[((co * 3 + ci) * kernel + ky) * kernel + kx]) * x.channel(n, ci)[iy * 6 + ix];
                  }
              CHECK(y.channel(n, co)[oy * ow + ox] == doctest::Approx(s).epsilon(1e-5));
            }
    }
  }
}

TEST_CASE("layer gradients match central differences") {
  SUBCASE("conv2d") {
    ParameterStore store;
    Conv2d conv(store, "c", 2, 3, 3, 2);
    init_he_normal(conv.weight(), 18, 1);
    Tensor x = random_tensor(2, 2, 6, 6, 2);
    const Tensor r = random_tensor(2, 3, 3, 3, 3);
    conv.forward(x, true);
    store.zero_grad();
    const Tensor dx = conv.backward(r, true);
    auto xv = as_vector(x);
    const auto f = [&] {
      Tensor t(2, 2, 6, 6);
      std::copy(xv.begin(), xv.end(), t.data());
      return weighted_sum(conv.forward(t, false), r);
    };
    const auto num = numeric_grad(xv, f, 1e-2);
    for (std::size_t i = 0; i < num.size(); ++i) CHECK(dx.data()[i] == doctest::Approx(num[i]).epsilon(1e-3).scale(1));
    const auto wnum = numeric_grad(conv.weight().value, [&] { return weighted_sum(conv.forward(x, false), r); }, 1e-2);
    for (std::size_t i = 0; i < wnum.size(); ++i) CHECK(conv.weight().grad[i] == doctest::Approx(wnum[i]).epsilon(1e-3).scale(1));
  }
  SUBCASE("batchnorm, training statistics") {
    ParameterStore store;
    BatchNorm2d bn(store, "bn", 3);
    Tensor x = random_tensor(3, 3, 4, 4, 4);
    const Tensor r = random_tensor(3, 3, 4, 4, 5);
    bn.forward(x, true, true);
    const Tensor dx = bn.backward(r);
    auto xv = as_vector(x);
    const auto f = [&] {
      Tensor t(3, 3, 4, 4);
      std::copy(xv.begin(), xv.end(), t.data());
      return weighted_sum(bn.forward(t, true, false), r);
    };
    const auto num = numeric_grad(xv, f, 1e-3);
    std::vector<double> ana(dx.values().begin(), dx.values().end());
    CHECK(cosine(ana, num) > 0.9999);
    for (std::size_t i = 0; i < num.size(); ++i) CHECK(std::abs(ana[i] - num[i]) < 5e-3);
  }
  SUBCASE("maxpool and relu") {
    MaxPool2 pool;
    Relu relu;
    Tensor x = random_tensor(1, 2, 6, 6, 6);
    const Tensor r = random_tensor(1, 2, 3, 3, 7);
    pool.forward(relu.forward(x, true), true);
    const Tensor dx = relu.backward(pool.backward(r));
    auto xv = as_vector(x);
    const auto f = [&] {
      Tensor t(1, 2, 6, 6);
      std::copy(xv.begin(), xv.end(), t.data());
      MaxPool2 p;
      Relu q;
      return weighted_sum(p.forward(q.forward(t, false), false), r);
    };
    const auto num = numeric_grad(xv, f, 1e-3);
    for (std::size_t i = 0; i < num.size(); ++i) CHECK(dx.data()[i] == doctest::Approx(num[i]).epsilon(1e-3).scale(1));
  }
  SUBCASE("pre-activation block with projection") {
    ParameterStore store;
    PreActBlock block(store, "b", 2, 4, 2);
    std::uint64_t seed = 1;
    for (Parameter* p : store.all())
      if (p->name.ends_with("weight") && p->shape.size() == 4) init_he_normal(*p, p->shape[1] * p->shape[2] * p->shape[3], seed++);
    Tensor x = random_tensor(2, 2, 6, 6, 8);
    const Tensor r = random_tensor(2, 4, 3, 3, 9);
    block.forward(x, true, true);
    store.zero_grad();
    const Tensor dx = block.backward(r, true);
    auto xv = as_vector(x);
    const auto f = [&] {
      Tensor t(2, 2, 6, 6);
      std::copy(xv.begin(), xv.end(), t.data());
      return weighted_sum(block.forward(t, true, false), r);
    };
    const auto num = numeric_grad(xv, f, 1e-3);
    CHECK(cosine({dx.values().begin(), dx.values().end()}, num) > 0.999);
  }
}

TEST_CASE("unet shapes, determinism and parameter groups") {
  ArchitectureSpec spec;
  spec.input_size = 32;
  spec.base_channels = 4;
  UNet a(spec, 7), b(spec, 7), c(spec, 8);
  const Tensor x = random_tensor(2, 1, 32, 32, 1, 0.5);
  const Tensor ya = a.forward(x, false);
  CHECK(ya.n() == 2);
  CHECK(ya.c() == 1);
  CHECK(ya.h() == 32);
  CHECK(ya == b.forward(x, false));
  CHECK(!(ya == c.forward(x, false)));
  for (float v : ya.values()) CHECK((v > 0.0f && v < 1.0f));
  CHECK(a.encoder_feature_sizes() == std::vector<int>{32, 16, 8, 4});

  std::size_t enc = a.parameter_count("encoder."), dec = a.parameter_count("decoder."), head = a.parameter_count("head.");
  CHECK(enc > 0);
  CHECK(dec > 0);
  CHECK(head == 4 + 1);
  CHECK(enc + dec + head == a.parameter_count());
  for (const Parameter* p : a.parameters().all())
    CHECK((UNet::is_encoder_tensor(p->name) || UNet::is_decoder_tensor(p->name) || UNet::is_head_tensor(p->name)));

  ArchitectureSpec cnn = spec;
  cnn.encoder = EncoderKind::simple_cnn;
  UNet plain(cnn, 7);
  CHECK(plain.forward(x, false).h() == 32);
  CHECK(plain.parameter_count("encoder.") != enc);

  CHECK_THROWS_AS(a.forward(random_tensor(1, 1, 16, 16, 2), false), Error);
  ArchitectureSpec bad = spec;
  bad.input_size = 36;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.decoder_blocks = 3;
  CHECK_THROWS(bad.validate());
  CHECK(parse_encoder("cnn") == EncoderKind::simple_cnn);
  CHECK(parse_encoder("resnet50") == EncoderKind::resnet50);
}

TEST_CASE("unet parameter gradients") {
  for (auto enc : {EncoderKind::resnet50, EncoderKind::simple_cnn}) {
    ArchitectureSpec spec;
    spec.encoder = enc;
    spec.input_size = 8;
    spec.encoder_blocks = spec.decoder_blocks = 2;
    spec.base_channels = 2;
    UNet net(spec, 3);
    const Tensor x = random_tensor(2, 1, 8, 8, 4, 0.5);
    const Tensor r = random_tensor(2, 1, 8, 8, 5);
    net.parameters().zero_grad();
    net.forward(x, true);
    net.backward(r);
    std::vector<double> ana, num;
    for (Parameter* p : net.parameters().all()) {
      if (!p->trainable()) continue;
      const auto g = numeric_grad(p->value, [&] { return weighted_sum(net.forward(x, true), r); }, 1e-3, 3);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ana.push_back(p->grad[i]);
        num.push_back(g[i]);
      }
    }
    CAPTURE(to_string(enc));
    CHECK(cosine(ana, num) > 0.99);
  }
}

TEST_CASE("frozen encoder stays fixed under Adam") {
  ArchitectureSpec spec;
  spec.input_size = 16;
  spec.encoder_blocks = spec.decoder_blocks = 2;
  spec.base_channels = 2;
  UNet net(spec, 1);
  const auto names = net.freeze_encoder();
  CHECK(net.encoder_frozen());
  CHECK(names == net.frozen_names());
  std::set<std::string> frozen(names.begin(), names.end());
  std::map<std::string, std::vector<float>> before;
  for (const Parameter* p : net.parameters().all()) {
    before[p->name] = p->value;
    CHECK(frozen.count(p->name) == (UNet::is_encoder_tensor(p->name) ? 1u : 0u));
  }
  Adam adam;
  for (int step = 0; step < 3; ++step) {
    net.parameters().zero_grad();
    net.forward(random_tensor(2, 1, 16, 16, 10 + step, 0.5), true);
    net.backward(random_tensor(2, 1, 16, 16, 20 + step));
    adam.step(net.parameters());
  }
  bool decoder_moved = false;
  for (const Parameter* p : net.parameters().all()) {
    if (UNet::is_encoder_tensor(p->name)) CHECK(p->value == before[p->name]);
    else if (p->value != before[p->name]) decoder_moved = true;
  }
  CHECK(decoder_moved);

  std::vector<float> head_before = net.parameters().find("head.conv.weight")->value;
  net.reinit_head(99);
  CHECK(net.parameters().find("head.conv.weight")->value != head_before);
}

}  // TEST_SUITE
