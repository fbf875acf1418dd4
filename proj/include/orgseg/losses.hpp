#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "orgseg/image.hpp"

namespace orgseg {

struct SsimConfig {
  double c1 = 0.01;
  double c2 = 0.03;
  int window_size = 11;
  int window_stride = 1;

  void validate() const;
};

struct SmoothingConfig {
  double epsilon = 1e-4;
};

struct WindowStats {
  double mu_x = 0, mu_y = 0;
  double var_x = 0, var_y = 0;
  double cov_xy = 0;
};

/// Read-only view of a row-major plane of doubles.
struct PlaneView {
  std::span<const double> values;
  int width = 0;
  int height = 0;
};

std::vector<double> to_doubles(const Image2D& img);
std::vector<double> to_doubles(const Mask2D& mask);

/// Population statistics of the n x n window with top-left (x0, y0).
WindowStats window_stats(PlaneView x, PlaneView y, int x0, int y0, int n);

/// SSIM of one window from its statistics.
double ssim_from_stats(const WindowStats& s, const SsimConfig& cfg) noexcept;

/// Window side actually used: window_size clamped to the image's smaller side.
int effective_window(const SsimConfig& cfg, int width, int height) noexcept;

/// Mean SSIM over all window positions.
double ssim(const Image2D& x, const Image2D& y, const SsimConfig& cfg = {});
double loss_ssim(const Image2D& x, const Image2D& y, const SsimConfig& cfg = {});
double loss_mae(const Image2D& y, const Image2D& y_hat);
double loss_ssim_l1(const Image2D& x, const Image2D& y, const SsimConfig& cfg = {});

inline constexpr double kBceClamp = 1e-7;

double loss_bce(const Mask2D& y, const Image2D& y_hat);
double loss_dice(const Mask2D& y, const Image2D& y_hat, const SmoothingConfig& cfg = {});
double loss_iou(const Mask2D& y, const Image2D& y_hat, const SmoothingConfig& cfg = {});

enum class LossKind { ssim, ssim_l1, bce, dice, iou };

LossKind parse_loss(std::string_view text);
std::string_view to_string(LossKind kind) noexcept;
constexpr bool is_pretext_loss(LossKind k) noexcept { return k == LossKind::ssim || k == LossKind::ssim_l1; }

struct LossParams {
  SsimConfig ssim;
  SmoothingConfig smoothing;
};

/// Loss value and its gradient with respect to the prediction.
struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Single-image loss on double planes. `target` is the reference (clean
/// image or binary mask); the gradient is taken with respect to `pred`.
LossGrad loss_with_grad(LossKind kind, PlaneView target, PlaneView pred, const LossParams& params = {});

/// Value only; same definitions as loss_with_grad.
double loss_value(LossKind kind, PlaneView target, PlaneView pred, const LossParams& params = {});

}  // namespace orgseg
