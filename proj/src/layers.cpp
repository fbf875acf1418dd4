#include "orgseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "orgseg/error.hpp"
#include "orgseg/kernels.hpp"
#include "orgseg/rng.hpp"

namespace orgseg {

Parameter& ParameterStore::create(std::string name, std::vector<int> shape, float fill, bool buffer) {
  if (find(name)) throw Error(ErrorKind::InvalidSpec, "duplicate tensor name " + name);
  auto p = std::make_unique<Parameter>();
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  p->name = std::move(name);
  p->shape = std::move(shape);
  p->value.assign(n, fill);
  p->grad.assign(buffer ? 0 : n, 0.0f);
  p->buffer = buffer;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) noexcept {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const noexcept {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

void init_he_normal(Parameter& p, int fan_in, std::uint64_t seed) {
  Rng rng(derive_seed(seed, p.name));
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : p.value) v = static_cast<float>(rng.normal() * std_dev);
}

// ---------------------------------------------------------------------------
// Conv2d

namespace {

constexpr int kTileColumns = 1024;

/// Column tile for output rows [oy0, oy1): row r = (ci, ky, kx), column = pixel.
void im2col_rows(const float* x, int cin, int h, int w, int kernel, int stride, int pad, int oy0,
                 int oy1, int ow, float* col) {
  const int t = (oy1 - oy0) * ow;
  for (int ci = 0; ci < cin; ++ci) {
    const float* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        float* dst = col + (static_cast<std::size_t>(ci) * kernel * kernel + ky * kernel + kx) * t;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride + ky - pad;
          float* d = dst + static_cast<std::size_t>(oy - oy0) * ow;
          if (iy < 0 || iy >= h) {
            std::fill_n(d, ow, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int shift = kx - pad;
            const int lo = std::max(0, -shift);
            const int hi = std::min(ow, w - shift);
            std::fill_n(d, lo, 0.0f);
            if (hi > lo) std::copy(src + lo + shift, src + hi + shift, d + lo);
            std::fill(d + std::max(hi, lo), d + ow, 0.0f);
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              d[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_rows(const float* col, int cin, int h, int w, int kernel, int stride, int pad, int oy0,
                 int oy1, int ow, float* dx) {
  const int t = (oy1 - oy0) * ow;
  for (int ci = 0; ci < cin; ++ci) {
    float* plane = dx + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const float* src = col + (static_cast<std::size_t>(ci) * kernel * kernel + ky * kernel + kx) * t;
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const float* s = src + static_cast<std::size_t>(oy - oy0) * ow;
          float* d = plane + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int shift = kx - pad;
            const int lo = std::max(0, -shift);
            const int hi = std::min(ow, w - shift);
            float* dd = d + shift;
            for (int ox = lo; ox < hi; ++ox) dd[ox] += s[ox];
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) d[ix] += s[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, int stride)
    : weight_(&store.create(name + ".weight", {out_channels, in_channels, kernel, kernel})),
      bias_(&store.create(name + ".bias", {out_channels})),
      cin_(in_channels), cout_(out_channels), kernel_(kernel), stride_(stride), pad_(kernel / 2) {}

Tensor Conv2d::forward(const Tensor& x, bool cache) {
  if (x.c() != cin_) {
    throw Error(ErrorKind::ShapeMismatch, weight_->name + " expects " + std::to_string(cin_) +
                                              " channels, got " + x.shape_string());
  }
  const int oh = out_size(x.h());
  const int ow = out_size(x.w());
  Tensor y(x.n(), cout_, oh, ow);
  const auto& k = kernels::active();
  const int kdim = cin_ * kernel_ * kernel_;
  const int rows_per_tile = std::max(1, kTileColumns / ow);
  const bool direct = kernel_ == 1 && stride_ == 1;
  std::vector<float> col(direct ? 0 : static_cast<std::size_t>(kdim) * rows_per_tile * ow);
  const int ldy = oh * ow;
  for (int n = 0; n < x.n(); ++n) {
    const float* xs = x.sample(n);
    float* ys = y.sample(n);
    for (int oy0 = 0; oy0 < oh; oy0 += rows_per_tile) {
      const int oy1 = std::min(oh, oy0 + rows_per_tile);
      const int t = (oy1 - oy0) * ow;
      float* yt = ys + static_cast<std::size_t>(oy0) * ow;
      if (direct) {
        k.gemm_nn(cout_, t, kdim, weight_->value.data(), kdim, xs + static_cast<std::size_t>(oy0) * ow,
                  x.h() * x.w(), yt, ldy, false);
      } else {
        im2col_rows(xs, cin_, x.h(), x.w(), kernel_, stride_, pad_, oy0, oy1, ow, col.data());
        k.gemm_nn(cout_, t, kdim, weight_->value.data(), kdim, col.data(), t, yt, ldy, false);
      }
    }
    for (int co = 0; co < cout_; ++co) {
      const float b = bias_->value[co];
      if (b != 0.0f) {
        float* p = y.channel(n, co);
        for (int i = 0; i < ldy; ++i) p[i] += b;
      }
    }
  }
  if (cache) input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, bool need_dx) {
  const Tensor& x = input_;
  if (x.empty()) throw Error(ErrorKind::InvalidSpec, weight_->name + ": backward without cached forward");
  const int oh = dy.h();
  const int ow = dy.w();
  const auto& k = kernels::active();
  const int kdim = cin_ * kernel_ * kernel_;
  const int rows_per_tile = std::max(1, kTileColumns / ow);
  const bool direct = kernel_ == 1 && stride_ == 1;
  std::vector<float> col(static_cast<std::size_t>(kdim) * rows_per_tile * ow);
  std::vector<float> dcol(need_dx ? col.size() : 0);
  std::vector<float> wt;
  if (need_dx) {
    wt.resize(static_cast<std::size_t>(kdim) * cout_);
    for (int co = 0; co < cout_; ++co)
      for (int kk = 0; kk < kdim; ++kk)
        wt[static_cast<std::size_t>(kk) * cout_ + co] = weight_->value[static_cast<std::size_t>(co) * kdim + kk];
  }
  Tensor dx = need_dx ? Tensor(x.n(), x.c(), x.h(), x.w()) : Tensor();
  const int ldy = oh * ow;
  for (int n = 0; n < x.n(); ++n) {
    const float* xs = x.sample(n);
    const float* dys = dy.sample(n);
    for (int co = 0; co < cout_; ++co) {
      const float* p = dy.channel(n, co);
      double s = 0.0;
      for (int i = 0; i < ldy; ++i) s += p[i];
      bias_->grad[co] += static_cast<float>(s);
    }
    for (int oy0 = 0; oy0 < oh; oy0 += rows_per_tile) {
      const int oy1 = std::min(oh, oy0 + rows_per_tile);
      const int t = (oy1 - oy0) * ow;
      const float* dyt = dys + static_cast<std::size_t>(oy0) * ow;
      const float* colp;
      int ldcol;
      if (direct) {
        colp = xs + static_cast<std::size_t>(oy0) * ow;
        ldcol = x.h() * x.w();
      } else {
        im2col_rows(xs, cin_, x.h(), x.w(), kernel_, stride_, pad_, oy0, oy1, ow, col.data());
        colp = col.data();
        ldcol = t;
      }
      k.gemm_nt(cout_, kdim, t, dyt, ldy, colp, ldcol, weight_->grad.data(), kdim, true);
      if (need_dx) {
        float* dxs = dx.sample(n);
        if (direct) {
          k.gemm_nn(kdim, t, cout_, wt.data(), cout_, dyt, ldy, dxs + static_cast<std::size_t>(oy0) * ow,
                    x.h() * x.w(), true);
        } else {
          k.gemm_nn(kdim, t, cout_, wt.data(), cout_, dyt, ldy, dcol.data(), t, false);
          col2im_rows(dcol.data(), cin_, x.h(), x.w(), kernel_, stride_, pad_, oy0, oy1, ow, dxs);
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(ParameterStore& store, const std::string& name, int channels)
    : gamma_(&store.create(name + ".gamma", {channels}, 1.0f)),
      beta_(&store.create(name + ".beta", {channels}, 0.0f)),
      running_mean_(&store.create(name + ".running_mean", {channels}, 0.0f, true)),
      running_var_(&store.create(name + ".running_var", {channels}, 1.0f, true)),
      channels_(channels) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training, bool cache) {
  if (x.c() != channels_) throw Error(ErrorKind::ShapeMismatch, gamma_->name + " channel count");
  const auto& k = kernels::active();
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(plane) * x.n();
  Tensor y(x.n(), x.c(), x.h(), x.w());
  if (cache) {
    x_hat_ = Tensor(x.n(), x.c(), x.h(), x.w());
    inv_std_.assign(channels_, 0.0f);
  }
  used_batch_stats_ = training;
  for (int c = 0; c < channels_; ++c) {
    float mean, var;
    if (training) {
      double s = 0.0, q = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        double ps, pq;
        k.sum_sumsq(x.channel(n, c), plane, &ps, &pq);
        s += ps;
        q += pq;
      }
      const double m = s / count;
      const double v = std::max(0.0, q / count - m * m);
      mean = static_cast<float>(m);
      var = static_cast<float>(v);
      const double unbiased = count > 1 ? v * count / (count - 1) : v;
      running_mean_->value[c] = (1 - kMomentum) * running_mean_->value[c] + kMomentum * mean;
      running_var_->value[c] =
          (1 - kMomentum) * running_var_->value[c] + kMomentum * static_cast<float>(unbiased);
    } else {
      mean = running_mean_->value[c];
      var = running_var_->value[c];
    }
    const float inv_std = 1.0f / std::sqrt(var + kEpsilon);
    const float a = gamma_->value[c] * inv_std;
    const float b = beta_->value[c] - a * mean;
    for (int n = 0; n < x.n(); ++n) {
      k.scale_shift(x.channel(n, c), y.channel(n, c), plane, a, b);
      if (cache) k.scale_shift(x.channel(n, c), x_hat_.channel(n, c), plane, inv_std, -mean * inv_std);
    }
    if (cache) inv_std_[c] = inv_std;
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  if (x_hat_.empty()) throw Error(ErrorKind::InvalidSpec, gamma_->name + ": backward without cached forward");
  const auto& k = kernels::active();
  const std::size_t plane = dy.plane();
  const double count = static_cast<double>(plane) * dy.n();
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      double s, q;
      k.sum_sumsq(dy.channel(n, c), plane, &s, &q);
      sum_dy += s;
      sum_dy_xhat += k.dot(dy.channel(n, c), x_hat_.channel(n, c), plane);
    }
    gamma_->grad[c] += static_cast<float>(sum_dy_xhat);
    beta_->grad[c] += static_cast<float>(sum_dy);
    const float g = gamma_->value[c] * inv_std_[c];
    if (used_batch_stats_) {
      // dx = g * (dy - mean(dy) - x_hat * mean(dy * x_hat))
      const float m_dy = static_cast<float>(sum_dy / count);
      const float m_dyx = static_cast<float>(sum_dy_xhat / count);
      for (int n = 0; n < dy.n(); ++n) {
        float* d = dx.channel(n, c);
        k.scale_shift(x_hat_.channel(n, c), d, plane, -g * m_dyx, -g * m_dy);
        k.axpy(g, dy.channel(n, c), d, plane);
      }
    } else {
      for (int n = 0; n < dy.n(); ++n) k.scale_shift(dy.channel(n, c), dx.channel(n, c), plane, g, 0.0f);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

Tensor Relu::forward(const Tensor& x, bool cache) {
  Tensor y(x.n(), x.c(), x.h(), x.w());
  kernels::active().relu_forward(x.data(), y.data(), x.numel());
  if (cache) output_ = y;
  return y;
}

Tensor Relu::backward(const Tensor& dy) const {
  Tensor dx(dy.n(), dy.c(), dy.h(), dy.w());
  kernels::active().relu_backward(output_.data(), dy.data(), dx.data(), dy.numel());
  return dx;
}

Tensor MaxPool2::forward(const Tensor& x, bool cache) {
  const int oh = x.h() / 2;
  const int ow = x.w() / 2;
  Tensor y(x.n(), x.c(), oh, ow);
  if (cache) {
    in_h_ = x.h();
    in_w_ = x.w();
    argmax_.assign(y.numel(), 0);
  }
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* src = x.channel(n, c);
      float* dst = y.channel(n, c);
      for (int yy = 0; yy < oh; ++yy) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          std::uint32_t best = static_cast<std::uint32_t>(2 * yy * x.w() + 2 * xx);
          for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(x.w()),
                                     best + static_cast<std::uint32_t>(x.w()) + 1}) {
            if (src[cand] > src[best]) best = cand;
          }
          dst[yy * ow + xx] = src[best];
          if (cache) argmax_[o] = best;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& dy) const {
  Tensor dx(dy.n(), dy.c(), in_h_, in_w_);
  std::size_t o = 0;
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const float* src = dy.channel(n, c);
      float* dst = dx.channel(n, c);
      for (std::size_t i = 0; i < dy.plane(); ++i, ++o) dst[argmax_[o]] += src[i];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

PreActBlock::PreActBlock(ParameterStore& store, const std::string& name, int in_channels,
                         int out_channels, int stride)
    : bn1_(store, name + ".bn1", in_channels),
      bn2_(store, name + ".bn2", out_channels),
      conv1_(store, name + ".conv1", in_channels, out_channels, 3, stride),
      conv2_(store, name + ".conv2", out_channels, out_channels, 3, 1) {
  if (in_channels != out_channels || stride != 1) {
    projection_.emplace(store, name + ".shortcut", in_channels, out_channels, 1, stride);
  }
}

Tensor PreActBlock::forward(const Tensor& x, bool training, bool cache) {
  Tensor h = bn1_.forward(x, training, cache);
  h = relu1_.forward(h, cache);
  h = conv1_.forward(h, cache);
  h = bn2_.forward(h, training, cache);
  h = relu2_.forward(h, cache);
  h = conv2_.forward(h, cache);
  if (projection_) return add(h, projection_->forward(x, cache));
  return add(h, x);
}

Tensor PreActBlock::backward(const Tensor& dy, bool need_dx) {
  Tensor g = conv2_.backward(dy, true);
  g = relu2_.backward(g);
  g = bn2_.backward(g);
  g = conv1_.backward(g, true);
  g = relu1_.backward(g);
  g = bn1_.backward(g);
  if (!need_dx) {
    if (projection_) projection_->backward(dy, false);
    return {};
  }
  if (projection_) return add(g, projection_->backward(dy, true));
  return add(g, dy);
}

PlainBlock::PlainBlock(ParameterStore& store, const std::string& name, int in_channels, int out_channels)
    : conv_(store, name + ".conv", in_channels, out_channels, 3, 1), bn_(store, name + ".bn", out_channels) {}

Tensor PlainBlock::forward(const Tensor& x, bool training, bool cache) {
  Tensor h = conv_.forward(x, cache);
  h = bn_.forward(h, training, cache);
  return relu_.forward(h, cache);
}

Tensor PlainBlock::backward(const Tensor& dy, bool need_dx) {
  Tensor g = relu_.backward(dy);
  g = bn_.backward(g);
  return conv_.backward(g, need_dx);
}

}  // namespace orgseg
