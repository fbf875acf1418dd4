#include "orgseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "orgseg/error.hpp"

namespace orgseg {

void SsimConfig::validate() const {
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw Error(ErrorKind::InvalidSpec, "SSIM constants must be positive");
  if (window_size < 3 || window_size % 2 == 0) {
    throw Error(ErrorKind::InvalidSpec, "SSIM window must be odd and >= 3");
  }
  if (window_stride < 1) throw Error(ErrorKind::InvalidSpec, "SSIM window stride must be >= 1");
}

std::vector<double> to_doubles(const Image2D& img) {
  return {img.pixels().begin(), img.pixels().end()};
}

std::vector<double> to_doubles(const Mask2D& mask) {
  std::vector<double> out(mask.size());
  auto px = mask.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] ? 1.0 : 0.0;
  return out;
}

namespace {

void require_same(PlaneView a, PlaneView b) {
  if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size() ||
      a.values.size() != static_cast<std::size_t>(a.width) * a.height) {
    throw Error(ErrorKind::DimensionMismatch, std::to_string(a.width) + "x" + std::to_string(a.height) +
                                                  " vs " + std::to_string(b.width) + "x" +
                                                  std::to_string(b.height));
  }
}

PlaneView view(const std::vector<double>& v, int w, int h) { return {v, w, h}; }

/// Summed-area tables of x, y, x^2, y^2, xy.
struct Moments {
  int stride = 0;
  std::vector<double> sx, sy, sxx, syy, sxy;

  Moments(PlaneView x, PlaneView y) : stride(x.width + 1) {
    const std::size_t n = static_cast<std::size_t>(x.width + 1) * (x.height + 1);
    sx.assign(n, 0.0);
    sy.assign(n, 0.0);
    sxx.assign(n, 0.0);
    syy.assign(n, 0.0);
    sxy.assign(n, 0.0);
    for (int r = 0; r < x.height; ++r) {
      double rx = 0, ry = 0, rxx = 0, ryy = 0, rxy = 0;
      for (int c = 0; c < x.width; ++c) {
        const double a = x.values[static_cast<std::size_t>(r) * x.width + c];
        const double b = y.values[static_cast<std::size_t>(r) * x.width + c];
        rx += a;
        ry += b;
        rxx += a * a;
        ryy += b * b;
        rxy += a * b;
        const std::size_t i = static_cast<std::size_t>(r + 1) * stride + c + 1;
        const std::size_t up = static_cast<std::size_t>(r) * stride + c + 1;
        sx[i] = sx[up] + rx;
        sy[i] = sy[up] + ry;
        sxx[i] = sxx[up] + rxx;
        syy[i] = syy[up] + ryy;
        sxy[i] = sxy[up] + rxy;
      }
    }
  }

  double box(const std::vector<double>& s, int x0, int y0, int n) const {
    const std::size_t a = static_cast<std::size_t>(y0) * stride + x0;
    const std::size_t b = static_cast<std::size_t>(y0) * stride + x0 + n;
    const std::size_t c = static_cast<std::size_t>(y0 + n) * stride + x0;
    const std::size_t d = static_cast<std::size_t>(y0 + n) * stride + x0 + n;
    return s[d] - s[b] - s[c] + s[a];
  }

  WindowStats stats(int x0, int y0, int n) const {
    const double inv = 1.0 / (static_cast<double>(n) * n);
    WindowStats w;
    w.mu_x = box(sx, x0, y0, n) * inv;
    w.mu_y = box(sy, x0, y0, n) * inv;
    w.var_x = box(sxx, x0, y0, n) * inv - w.mu_x * w.mu_x;
    w.var_y = box(syy, x0, y0, n) * inv - w.mu_y * w.mu_y;
    w.cov_xy = box(sxy, x0, y0, n) * inv - w.mu_x * w.mu_y;
    return w;
  }
};

int window_count(int extent, int n, int stride) { return (extent - n) / stride + 1; }

/// Mean SSIM; when `grad` is non-null it receives d(mean SSIM)/d(y).
double mean_ssim(PlaneView x, PlaneView y, const SsimConfig& cfg, std::vector<double>* grad) {
  require_same(x, y);
  const int n = effective_window(cfg, x.width, x.height);
  const int stride = std::max(1, cfg.window_stride);
  const int nx = window_count(x.width, n, stride);
  const int ny = window_count(x.height, n, stride);
  const Moments m(x, y);
  const double count = static_cast<double>(nx) * ny;
  const double inv_n = 1.0 / (static_cast<double>(n) * n);

  // Difference arrays for scattering per-window coefficients onto pixels.
  const int dw = x.width + 1;
  std::vector<double> da, db, dc;
  if (grad) {
    const std::size_t sz = static_cast<std::size_t>(dw) * (x.height + 1);
    da.assign(sz, 0.0);
    db.assign(sz, 0.0);
    dc.assign(sz, 0.0);
  }
  auto scatter = [&](std::vector<double>& d, int x0, int y0, double v) {
    d[static_cast<std::size_t>(y0) * dw + x0] += v;
    d[static_cast<std::size_t>(y0) * dw + x0 + n] -= v;
    d[static_cast<std::size_t>(y0 + n) * dw + x0] -= v;
    d[static_cast<std::size_t>(y0 + n) * dw + x0 + n] += v;
  };

  double total = 0.0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int x0 = i * stride;
      const int y0 = j * stride;
      const WindowStats s = m.stats(x0, y0, n);
      const double a1 = 2.0 * s.mu_x * s.mu_y + cfg.c1;
      const double a2 = 2.0 * s.cov_xy + cfg.c2;
      const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1;
      const double b2 = s.var_x + s.var_y + cfg.c2;
      const double den = b1 * b2;
      const double val = a1 * a2 / den;
      total += val;
      if (grad) {
        const double d_mu = 2.0 * s.mu_x * a2 / den - val * 2.0 * s.mu_y / b1;
        const double d_var = -val / b2;
        const double d_cov = 2.0 * a1 / den;
        scatter(da, x0, y0, (d_mu - 2.0 * d_var * s.mu_y - d_cov * s.mu_x) * inv_n);
        scatter(db, x0, y0, 2.0 * d_var * inv_n);
        scatter(dc, x0, y0, d_cov * inv_n);
      }
    }
  }
  if (grad) {
    grad->assign(y.values.size(), 0.0);
    std::vector<double> ra(dw, 0.0), rb(dw, 0.0), rc(dw, 0.0);  // running column sums
    for (int r = 0; r < x.height; ++r) {
      double ca = 0, cb = 0, cc = 0;
      for (int c = 0; c < x.width; ++c) {
        const std::size_t di = static_cast<std::size_t>(r) * dw + c;
        ra[c] += da[di];
        rb[c] += db[di];
        rc[c] += dc[di];
        ca += ra[c];
        cb += rb[c];
        cc += rc[c];
        const std::size_t pi = static_cast<std::size_t>(r) * x.width + c;
        (*grad)[pi] = (ca + cb * y.values[pi] + cc * x.values[pi]) / count;
      }
    }
  }
  return total / count;
}

double mae(PlaneView y, PlaneView y_hat, std::vector<double>* grad) {
  require_same(y, y_hat);
  const double inv = 1.0 / static_cast<double>(y.values.size());
  double sum = 0.0;
  if (grad) grad->assign(y.values.size(), 0.0);
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    const double d = y_hat.values[i] - y.values[i];
    sum += std::abs(d);
    if (grad) (*grad)[i] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
  }
  return sum * inv;
}

double bce(PlaneView y, PlaneView p, std::vector<double>* grad) {
  require_same(y, p);
  const double inv = 1.0 / static_cast<double>(y.values.size());
  double sum = 0.0;
  if (grad) grad->assign(y.values.size(), 0.0);
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    const double raw = p.values[i];
    const double q = std::clamp(raw, kBceClamp, 1.0 - kBceClamp);
    const double t = y.values[i];
    sum += t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    if (grad && raw > kBceClamp && raw < 1.0 - kBceClamp) {
      (*grad)[i] = -(t / q - (1.0 - t) / (1.0 - q)) * inv;
    }
  }
  return -sum * inv;
}

double dice(PlaneView y, PlaneView p, double eps, std::vector<double>* grad) {
  require_same(y, p);
  double inter = 0, sy2 = 0, sp2 = 0;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    inter += y.values[i] * p.values[i];
    sy2 += y.values[i] * y.values[i];
    sp2 += p.values[i] * p.values[i];
  }
  const double den = sy2 + sp2 + eps;
  if (grad) {
    grad->resize(y.values.size());
    const double den2 = den * den;
    for (std::size_t i = 0; i < y.values.size(); ++i) {
      (*grad)[i] = -(2.0 * y.values[i] * den - 2.0 * inter * 2.0 * p.values[i]) / den2;
    }
  }
  return 1.0 - 2.0 * inter / den;
}

double iou(PlaneView y, PlaneView p, double eps, std::vector<double>* grad) {
  require_same(y, p);
  double inter = 0, total = 0;
  for (std::size_t i = 0; i < y.values.size(); ++i) {
    inter += y.values[i] * p.values[i];
    total += y.values[i] + p.values[i];
  }
  const double den = total - inter + eps;
  if (grad) {
    grad->resize(y.values.size());
    const double den2 = den * den;
    for (std::size_t i = 0; i < y.values.size(); ++i) {
      (*grad)[i] = -(y.values[i] * den - inter * (1.0 - y.values[i])) / den2;
    }
  }
  return 1.0 - inter / den;
}

double evaluate(LossKind kind, PlaneView target, PlaneView pred, const LossParams& params,
                std::vector<double>* grad) {
  switch (kind) {
    case LossKind::ssim: {
      const double v = 1.0 - mean_ssim(target, pred, params.ssim, grad);
      if (grad) for (auto& g : *grad) g = -g;
      return v;
    }
    case LossKind::ssim_l1: {
      std::vector<double> g_ssim;
      const double s = 1.0 - mean_ssim(target, pred, params.ssim, grad ? &g_ssim : nullptr);
      const double l1 = mae(target, pred, grad);
      if (grad) {
        for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] = 0.5 * (*grad)[i] - 0.5 * g_ssim[i];
      }
      return 0.5 * l1 + 0.5 * s;
    }
    case LossKind::bce: return bce(target, pred, grad);
    case LossKind::dice: return dice(target, pred, params.smoothing.epsilon, grad);
    case LossKind::iou: return iou(target, pred, params.smoothing.epsilon, grad);
  }
  return 0.0;
}

}  // namespace

WindowStats window_stats(PlaneView x, PlaneView y, int x0, int y0, int n) {
  require_same(x, y);
  const double inv = 1.0 / (static_cast<double>(n) * n);
  WindowStats s;
  for (int r = y0; r < y0 + n; ++r) {
    for (int c = x0; c < x0 + n; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * x.width + c;
      s.mu_x += x.values[i];
      s.mu_y += y.values[i];
    }
  }
  s.mu_x *= inv;
  s.mu_y *= inv;
  for (int r = y0; r < y0 + n; ++r) {
    for (int c = x0; c < x0 + n; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * x.width + c;
      const double dx = x.values[i] - s.mu_x;
      const double dy = y.values[i] - s.mu_y;
      s.var_x += dx * dx;
      s.var_y += dy * dy;
      s.cov_xy += dx * dy;
    }
  }
  s.var_x *= inv;
  s.var_y *= inv;
  s.cov_xy *= inv;
  return s;
}

double ssim_from_stats(const WindowStats& s, const SsimConfig& cfg) noexcept {
  return (2.0 * s.mu_x * s.mu_y + cfg.c1) * (2.0 * s.cov_xy + cfg.c2) /
         ((s.mu_x * s.mu_x + s.mu_y * s.mu_y + cfg.c1) * (s.var_x + s.var_y + cfg.c2));
}

int effective_window(const SsimConfig& cfg, int width, int height) noexcept {
  return std::max(1, std::min({cfg.window_size, width, height}));
}

double ssim(const Image2D& x, const Image2D& y, const SsimConfig& cfg) {
  if (!x.same_shape(y)) throw Error(ErrorKind::DimensionMismatch, "ssim inputs differ in size");
  const auto a = to_doubles(x);
  const auto b = to_doubles(y);
  return mean_ssim(view(a, x.width(), x.height()), view(b, y.width(), y.height()), cfg, nullptr);
}

double loss_ssim(const Image2D& x, const Image2D& y, const SsimConfig& cfg) { return 1.0 - ssim(x, y, cfg); }

double loss_mae(const Image2D& y, const Image2D& y_hat) {
  if (!y.same_shape(y_hat)) throw Error(ErrorKind::DimensionMismatch, "mae inputs differ in size");
  const auto a = to_doubles(y);
  const auto b = to_doubles(y_hat);
  return mae(view(a, y.width(), y.height()), view(b, y.width(), y.height()), nullptr);
}

double loss_ssim_l1(const Image2D& x, const Image2D& y, const SsimConfig& cfg) {
  return 0.5 * loss_mae(x, y) + 0.5 * loss_ssim(x, y, cfg);
}

namespace {
double mask_loss(LossKind kind, const Mask2D& y, const Image2D& y_hat, const SmoothingConfig& cfg) {
  if (!y.same_shape(y_hat)) throw Error(ErrorKind::DimensionMismatch, "mask and prediction differ in size");
  const auto a = to_doubles(y);
  const auto b = to_doubles(y_hat);
  LossParams params;
  params.smoothing = cfg;
  return evaluate(kind, view(a, y.width(), y.height()), view(b, y.width(), y.height()), params, nullptr);
}
}  // namespace

double loss_bce(const Mask2D& y, const Image2D& y_hat) { return mask_loss(LossKind::bce, y, y_hat, {}); }
double loss_dice(const Mask2D& y, const Image2D& y_hat, const SmoothingConfig& cfg) {
  return mask_loss(LossKind::dice, y, y_hat, cfg);
}
double loss_iou(const Mask2D& y, const Image2D& y_hat, const SmoothingConfig& cfg) {
  return mask_loss(LossKind::iou, y, y_hat, cfg);
}

LossKind parse_loss(std::string_view text) {
  if (text == "ssim") return LossKind::ssim;
  if (text == "ssim-l1") return LossKind::ssim_l1;
  if (text == "bce") return LossKind::bce;
  if (text == "dice") return LossKind::dice;
  if (text == "iou") return LossKind::iou;
  throw Error(ErrorKind::ConfigValidationError, "unknown loss: " + std::string(text));
}

std::string_view to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::ssim: return "ssim";
    case LossKind::ssim_l1: return "ssim-l1";
    case LossKind::bce: return "bce";
    case LossKind::dice: return "dice";
    case LossKind::iou: return "iou";
  }
  return "?";
}

LossGrad loss_with_grad(LossKind kind, PlaneView target, PlaneView pred, const LossParams& params) {
  LossGrad out;
  out.value = evaluate(kind, target, pred, params, &out.grad);
  return out;
}

double loss_value(LossKind kind, PlaneView target, PlaneView pred, const LossParams& params) {
  return evaluate(kind, target, pred, params, nullptr);
}

}  // namespace orgseg
