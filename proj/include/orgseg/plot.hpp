#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace orgseg::plot {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGrey{200, 200, 200};
inline constexpr Rgb kBlue{31, 90, 200};

/// Distinct line colours, cycled.
Rgb palette(std::size_t i) noexcept;

/// 8-bit RGB raster with a few drawing primitives.
class Canvas {
 public:
  Canvas(int width, int height, Rgb background = kWhite);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  void set(int x, int y, Rgb c) noexcept;
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) noexcept;
  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) noexcept;
  /// Dash pattern: `on` pixels drawn, `off` skipped.
  void dotted_line(int x0, int y0, int x1, int y1, Rgb c, int on = 3, int off = 3, int thickness = 2) noexcept;
  /// 5x7 bitmap text; lower case is drawn as upper case, unknown glyphs as blanks.
  void text(int x, int y, std::string_view s, Rgb c, int scale = 1) noexcept;
  static int text_width(std::string_view s, int scale = 1) noexcept { return static_cast<int>(s.size()) * 6 * scale; }

  void write_png(const std::filesystem::path& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> rgb_;
};

}  // namespace orgseg::plot
