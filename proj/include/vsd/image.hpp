#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/types.hpp"

namespace vsd {

/// Integer pixel rectangle, x to the right, y down.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const Rect&) const = default;
};

/// Decoded 8-bit image as it comes off disk, interleaved RGB.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // height*width*3, row-major, RGB
};

template <class S>
Image<S> to_image(const ImageU8& u8) {
  Image<S> img(u8.height, u8.width);
  const S inv = S(1) / S(255);
  for (int y = 0; y < u8.height; ++y)
    for (int x = 0; x < u8.width; ++x) {
      const std::size_t base = 3 * (static_cast<std::size_t>(y) * u8.width + x);
      img.ch[0](y, x) = S(u8.rgb[base + 0]) * inv;
      img.ch[1](y, x) = S(u8.rgb[base + 1]) * inv;
      img.ch[2](y, x) = S(u8.rgb[base + 2]) * inv;
    }
  return img;
}

template <class S>
ImageU8 to_u8(const Image<S>& img) {
  ImageU8 u8;
  u8.width = img.width();
  u8.height = img.height();
  u8.rgb.resize(static_cast<std::size_t>(u8.width) * u8.height * 3);
  for (int y = 0; y < u8.height; ++y)
    for (int x = 0; x < u8.width; ++x) {
      const std::size_t base = 3 * (static_cast<std::size_t>(y) * u8.width + x);
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(img.ch[c](y, x)), 0.0, 1.0);
        u8.rgb[base + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  return u8;
}

template <class S>
Image<S> crop(const Image<S>& img, const Rect& r) {
  if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.x + r.w > img.width() ||
      r.y + r.h > img.height())
    throw GeometryMismatch("crop rect (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                           std::to_string(r.w) + "," + std::to_string(r.h) + ") outside " +
                           std::to_string(img.width()) + "x" + std::to_string(img.height()));
  Image<S> out(r.h, r.w);
  for (int c = 0; c < 3; ++c) out.ch[c] = img.ch[c].block(r.y, r.x, r.h, r.w);
  return out;
}

template <class S>
Image<S> hflip(const Image<S>& img) {
  Image<S> out(img.height(), img.width());
  for (int c = 0; c < 3; ++c) out.ch[c] = img.ch[c].rowwise().reverse();
  return out;
}

/// Bilinear resample of one plane with half-pixel centers (the
/// corner-aligned-false convention): src_x = (dst_x + 0.5) * sx - 0.5.
template <class S>
MatX<S> resize_plane_bilinear(const MatX<S>& src, int out_h, int out_w) {
  const int in_h = static_cast<int>(src.rows());
  const int in_w = static_cast<int>(src.cols());
  if (out_h == in_h && out_w == in_w) return src;
  MatX<S> dst(out_h, out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    const int ya = std::clamp(y0, 0, in_h - 1);
    const int yb = std::clamp(y0 + 1, 0, in_h - 1);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int xa = std::clamp(x0, 0, in_w - 1);
      const int xb = std::clamp(x0 + 1, 0, in_w - 1);
      const double v = (1 - wy) * ((1 - wx) * src(ya, xa) + wx * src(ya, xb)) +
                       wy * ((1 - wx) * src(yb, xa) + wx * src(yb, xb));
      dst(y, x) = static_cast<S>(v);
    }
  }
  return dst;
}

template <class S>
Image<S> resize_bilinear(const Image<S>& img, int out_h, int out_w) {
  Image<S> out;
  for (int c = 0; c < 3; ++c) out.ch[c] = resize_plane_bilinear(img.ch[c], out_h, out_w);
  return out;
}

/// Nearest-neighbour resample for integer label maps.
inline MatXi resize_labels_nearest(const MatXi& src, int out_h, int out_w) {
  const int in_h = static_cast<int>(src.rows());
  const int in_w = static_cast<int>(src.cols());
  MatXi dst(out_h, out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const int yy = std::clamp(static_cast<int>((y + 0.5) * sy), 0, in_h - 1);
    for (int x = 0; x < out_w; ++x) {
      const int xx = std::clamp(static_cast<int>((x + 0.5) * sx), 0, in_w - 1);
      dst(y, x) = src(yy, xx);
    }
  }
  return dst;
}

template <class S>
void clamp01(Image<S>& img) {
  for (int c = 0; c < 3; ++c)
    img.ch[c] = img.ch[c].cwiseMax(S(0)).cwiseMin(S(1));
}

template <class S>
bool images_equal(const Image<S>& a, const Image<S>& b) {
  if (!a.same_size(b)) return false;
  for (int c = 0; c < 3; ++c)
    if (a.ch[c] != b.ch[c]) return false;
  return true;
}

}  // namespace vsd
