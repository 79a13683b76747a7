#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/image.hpp"
#include "vsd/rng.hpp"
#include "vsd/types.hpp"

namespace vsd {

/// Clip-shared crop geometry: one pre-crop window, one global window inside
/// it, one flip flag. Applying the same instance to every frame of a clip is
/// what keeps patch grids aligned across time.
struct CropGeom {
  Rect precrop;      // in source pixels
  Rect global_rect;  // in pre-crop pixels
  bool hflip = false;

  bool operator==(const CropGeom&) const = default;
};

struct ColorAugment {
  double jitter_prob = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.2;
  double hue = 0.1;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double solarize_prob = 0.0;
};

struct AugmentConfig {
  int global_size = 64;
  int local_size = 32;
  int local_views = 5;  // L per future frame

  double precrop_area_min = 0.05;
  double precrop_area_max = 0.20;
  double global_area_min = 0.4;
  double global_area_max = 1.0;
  double local_area_min = 0.05;
  double local_area_max = 0.4;
  double aspect_min = 0.75;
  double aspect_max = 4.0 / 3.0;
  double hflip_prob = 0.5;

  ColorAugment color;                  // globals except the second
  double global2_blur_prob = 0.1;      // the second global blurs rarely...
  double global2_solarize_prob = 0.2;  // ...and may solarize instead
  double local_blur_prob = 0.5;
  bool color_enabled = true;
};

template <class S>
struct ViewSet {
  std::vector<Image<S>> globals;              // one per frame, K total
  std::vector<std::vector<Image<S>>> locals;  // entry i-1: L views of frame i
  CropGeom geom;
  std::vector<std::uint64_t> color_seeds;  // per view, globals first
};

/// Random rectangle with area fraction in [area_min, area_max] of the frame
/// and aspect in [aspect_min, aspect_max]. Ten rejection tries, then a
/// centred fallback at max area with the frame's aspect clamped into range.
inline Rect draw_crop_rect(Rng& rng, int frame_w, int frame_h, double area_min, double area_max,
                           double aspect_min, double aspect_max, int min_side) {
  const double max_area = area_max * frame_w * frame_h;
  if (frame_w < min_side || frame_h < min_side ||
      max_area < static_cast<double>(min_side) * min_side)
    throw FrameTooSmall(std::to_string(frame_w) + "x" + std::to_string(frame_h) +
                        " cannot hold a crop of side >= " + std::to_string(min_side) +
                        " within area fraction " + std::to_string(area_max));

  int w = 0, h = 0;
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double area = rng.uniform(area_min, area_max) * frame_w * frame_h;
    const double aspect = rng.uniform(aspect_min, aspect_max);
    w = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    h = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    found = w >= min_side && w <= frame_w && h >= min_side && h <= frame_h;
  }
  if (found) {
    const int x = static_cast<int>(rng.uniform_int(0, frame_w - w));
    const int y = static_cast<int>(rng.uniform_int(0, frame_h - h));
    return Rect{x, y, w, h};
  }
  const double aspect =
      std::clamp(static_cast<double>(frame_w) / frame_h, aspect_min, aspect_max);
  w = std::min(frame_w, static_cast<int>(std::floor(std::sqrt(max_area * aspect))));
  h = std::min(frame_h, static_cast<int>(std::floor(std::sqrt(max_area / aspect))));
  return Rect{(frame_w - w) / 2, (frame_h - h) / 2, w, h};
}

/// Shared geometry for one clip. Draw order: pre-crop, global crop, flip.
inline CropGeom draw_crop_geometry(Rng& rng, int frame_w, int frame_h,
                                   const AugmentConfig& cfg) {
  CropGeom geom;
  geom.precrop = draw_crop_rect(rng, frame_w, frame_h, cfg.precrop_area_min,
                                cfg.precrop_area_max, cfg.aspect_min, cfg.aspect_max, 8);
  geom.global_rect = draw_crop_rect(rng, geom.precrop.w, geom.precrop.h, cfg.global_area_min,
                                    cfg.global_area_max, cfg.aspect_min, cfg.aspect_max, 4);
  geom.hflip = rng.bernoulli(cfg.hflip_prob);
  return geom;
}

/// Crop every frame with the identical geometry and resize to global_size.
template <class S>
std::vector<Image<S>> apply_shared_views(const std::vector<Image<S>>& frames,
                                         const CropGeom& geom, int global_size) {
  std::vector<Image<S>> views;
  views.reserve(frames.size());
  for (const auto& frame : frames) {
    Image<S> view = crop(crop(frame, geom.precrop), geom.global_rect);
    if (geom.hflip) view = hflip(view);
    views.push_back(resize_bilinear(view, global_size, global_size));
  }
  return views;
}

/// L small crops of one frame, flipped independently. Draw order per view:
/// rectangle, flip.
template <class S>
std::vector<Image<S>> draw_local_views(Rng& rng, const Image<S>& frame, int count,
                                       int local_size, const AugmentConfig& cfg) {
  std::vector<Image<S>> views;
  views.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const Rect r = draw_crop_rect(rng, frame.width(), frame.height(), cfg.local_area_min,
                                  cfg.local_area_max, cfg.aspect_min, cfg.aspect_max, 2);
    Image<S> view = crop(frame, r);
    if (rng.bernoulli(cfg.hflip_prob)) view = hflip(view);
    views.push_back(resize_bilinear(view, local_size, local_size));
  }
  return views;
}

template <class S>
MatX<S> luma_plane(const Image<S>& img) {
  return S(0.299) * img.ch[0] + S(0.587) * img.ch[1] + S(0.114) * img.ch[2];
}

template <class S>
Image<S> adjust_brightness(const Image<S>& img, double factor) {
  Image<S> out = img;
  for (auto& c : out.ch) c *= S(factor);
  clamp01(out);
  return out;
}

template <class S>
Image<S> adjust_contrast(const Image<S>& img, double factor) {
  const S mean = luma_plane(img).mean();
  Image<S> out = img;
  for (auto& c : out.ch) c = ((c.array() - mean) * S(factor) + mean).matrix();
  clamp01(out);
  return out;
}

template <class S>
Image<S> adjust_saturation(const Image<S>& img, double factor) {
  const MatX<S> gray = luma_plane(img);
  Image<S> out = img;
  for (auto& c : out.ch) c = gray + S(factor) * (c - gray);
  clamp01(out);
  return out;
}

/// Rotate hue by delta_turns of the full circle (0.5 inverts hue).
template <class S>
Image<S> adjust_hue(const Image<S>& img, double delta_turns) {
  Image<S> out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double r = img.ch[0](y, x), g = img.ch[1](y, x), b = img.ch[2](y, x);
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double delta = mx - mn;
      double hue = 0.0;
      if (delta > 0.0) {
        if (mx == r)
          hue = std::fmod((g - b) / delta, 6.0);
        else if (mx == g)
          hue = (b - r) / delta + 2.0;
        else
          hue = (r - g) / delta + 4.0;
      }
      hue = std::fmod(hue / 6.0 + delta_turns + 2.0, 1.0) * 6.0;
      const double sat = mx > 0.0 ? delta / mx : 0.0;
      const double chroma = mx * sat;
      const double second = chroma * (1.0 - std::abs(std::fmod(hue, 2.0) - 1.0));
      const double base = mx - chroma;
      double rr = 0, gg = 0, bb = 0;
      switch (static_cast<int>(hue)) {
        case 0: rr = chroma; gg = second; break;
        case 1: rr = second; gg = chroma; break;
        case 2: gg = chroma; bb = second; break;
        case 3: gg = second; bb = chroma; break;
        case 4: rr = second; bb = chroma; break;
        default: rr = chroma; bb = second; break;
      }
      out.ch[0](y, x) = S(rr + base);
      out.ch[1](y, x) = S(gg + base);
      out.ch[2](y, x) = S(bb + base);
    }
  return out;
}

template <class S>
Image<S> to_grayscale(const Image<S>& img) {
  Image<S> out;
  const MatX<S> gray = luma_plane(img);
  for (auto& c : out.ch) c = gray;
  return out;
}

template <class S>
Image<S> solarize(const Image<S>& img, double threshold = 0.5) {
  Image<S> out = img;
  for (auto& c : out.ch)
    c = (c.array() >= S(threshold)).select(S(1) - c.array(), c.array()).matrix();
  return out;
}

/// Separable Gaussian with replicated borders; kernel radius 3 sigma.
template <class S>
Image<S> gaussian_blur(const Image<S>& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= sum;

  const int h = img.height(), w = img.width();
  Image<S> out(h, w);
  for (int c = 0; c < 3; ++c) {
    MatX<S> tmp(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 img.ch[c](y, std::clamp(x + i, 0, w - 1));
        tmp(y, x) = static_cast<S>(acc);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[static_cast<std::size_t>(i + radius)] *
                 tmp(std::clamp(y + i, 0, h - 1), x);
        out.ch[c](y, x) = static_cast<S>(acc);
      }
  }
  return out;
}

/// Photometric augmentation; geometry untouched. Draw order: jitter gate
/// (then brightness, contrast, saturation, hue factors), grayscale gate,
/// blur gate (then sigma), solarize gate.
template <class S>
Image<S> color_augment(const Image<S>& view, Rng& rng, const ColorAugment& cfg) {
  Image<S> out = view;
  if (rng.bernoulli(cfg.jitter_prob)) {
    out = adjust_brightness(out, rng.uniform(std::max(0.0, 1.0 - cfg.brightness),
                                             1.0 + cfg.brightness));
    out = adjust_contrast(out, rng.uniform(std::max(0.0, 1.0 - cfg.contrast),
                                           1.0 + cfg.contrast));
    out = adjust_saturation(out, rng.uniform(std::max(0.0, 1.0 - cfg.saturation),
                                             1.0 + cfg.saturation));
    out = adjust_hue(out, rng.uniform(-cfg.hue, cfg.hue));
  }
  if (rng.bernoulli(cfg.grayscale_prob)) out = to_grayscale(out);
  if (rng.bernoulli(cfg.blur_prob))
    out = gaussian_blur(out, rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max));
  if (rng.bernoulli(cfg.solarize_prob)) out = solarize(out);
  clamp01(out);
  return out;
}

/// Color recipe for the j-th of K global views; the second view blurs
/// rarely and may solarize, every other view uses the base recipe.
inline ColorAugment global_color_recipe(const AugmentConfig& cfg, int view_index) {
  ColorAugment c = cfg.color;
  if (view_index == 1) {
    c.blur_prob = cfg.global2_blur_prob;
    c.solarize_prob = cfg.global2_solarize_prob;
  }
  return c;
}

inline ColorAugment local_color_recipe(const AugmentConfig& cfg) {
  ColorAugment c = cfg.color;
  c.blur_prob = cfg.local_blur_prob;
  c.solarize_prob = 0.0;
  return c;
}

/// Full view pipeline for one clip: shared-geometry globals for every frame
/// plus independently flipped locals for each frame after the first, all
/// color-augmented on per-view RNG streams forked from clip_rng.
template <class S>
ViewSet<S> make_viewset(const std::vector<Image<S>>& frames, const Rng& clip_rng,
                        const AugmentConfig& cfg) {
  if (frames.empty()) throw NoFrames("viewset needs at least one frame");

  ViewSet<S> set;
  Rng geom_rng = clip_rng.fork(0x67656fULL);
  set.geom = draw_crop_geometry(geom_rng, frames[0].width(), frames[0].height(), cfg);
  set.globals = apply_shared_views(frames, set.geom, cfg.global_size);

  std::vector<Image<S>> precropped;
  precropped.reserve(frames.size());
  for (const auto& frame : frames) precropped.push_back(crop(frame, set.geom.precrop));

  for (std::size_t i = 1; i < frames.size(); ++i)
    set.locals.push_back(
        draw_local_views(geom_rng, precropped[i], cfg.local_views, cfg.local_size, cfg));

  std::uint64_t view_index = 0;
  auto colorize = [&](Image<S>& view, const ColorAugment& recipe) {
    Rng view_rng = clip_rng.fork(0x636f6cULL, view_index);
    set.color_seeds.push_back(view_rng.seed());
    ++view_index;
    if (cfg.color_enabled) view = color_augment(view, view_rng, recipe);
  };
  for (std::size_t j = 0; j < set.globals.size(); ++j)
    colorize(set.globals[j], global_color_recipe(cfg, static_cast<int>(j)));
  for (auto& frame_locals : set.locals)
    for (auto& view : frame_locals) colorize(view, local_color_recipe(cfg));
  return set;
}

}  // namespace vsd
