#include "orgseg/tensor.hpp"

#include <algorithm>

#include "orgseg/error.hpp"
#include "orgseg/kernels.hpp"

namespace orgseg {

std::string Tensor::shape_string() const {
  return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
         std::to_string(w_) + ")";
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, a.shape_string() + " + " + b.shape_string());
  Tensor out = a;
  kernels::active().axpy(1.0f, b.data(), out.data(), out.numel());
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw Error(ErrorKind::ShapeMismatch, "concat " + a.shape_string() + " with " + b.shape_string());
  }
  Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t sa = static_cast<std::size_t>(a.c()) * a.plane();
  const std::size_t sb = static_cast<std::size_t>(b.c()) * b.plane();
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.sample(n), sa, out.sample(n));
    std::copy_n(b.sample(n), sb, out.sample(n) + sa);
  }
  return out;
}

void split_channels(const Tensor& g, int c_first, Tensor& first, Tensor& second) {
  first = Tensor(g.n(), c_first, g.h(), g.w());
  second = Tensor(g.n(), g.c() - c_first, g.h(), g.w());
  const std::size_t sa = static_cast<std::size_t>(first.c()) * g.plane();
  const std::size_t sb = static_cast<std::size_t>(second.c()) * g.plane();
  for (int n = 0; n < g.n(); ++n) {
    std::copy_n(g.sample(n), sa, first.sample(n));
    std::copy_n(g.sample(n) + sa, sb, second.sample(n));
  }
}

Tensor upsample2x_nearest(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h() * 2, x.w() * 2);
  const int w = x.w();
  const int ow = out.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.channel(n, c);
      float* dst = out.channel(n, c);
      for (int y = 0; y < x.h(); ++y) {
        float* r0 = dst + static_cast<std::size_t>(2 * y) * ow;
        const float* s = src + static_cast<std::size_t>(y) * w;
        for (int xx = 0; xx < w; ++xx) r0[2 * xx] = r0[2 * xx + 1] = s[xx];
        std::copy_n(r0, ow, r0 + ow);
      }
    }
  }
  return out;
}

Tensor upsample2x_backward(const Tensor& dy) {
  Tensor out(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  const int ow = out.w();
  const int w = dy.w();
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const float* src = dy.channel(n, c);
      float* dst = out.channel(n, c);
      for (int y = 0; y < out.h(); ++y) {
        const float* r0 = src + static_cast<std::size_t>(2 * y) * w;
        const float* r1 = r0 + w;
        float* d = dst + static_cast<std::size_t>(y) * ow;
        for (int xx = 0; xx < ow; ++xx) d[xx] = r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
      }
    }
  }
  return out;
}

}  // namespace orgseg
