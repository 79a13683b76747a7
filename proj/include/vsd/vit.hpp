#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/nn.hpp"
#include "vsd/types.hpp"

namespace vsd {

struct EncoderConfig {
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 4.0;

  int grid() const { return image_size / patch_size; }
  int patch_count() const { return grid() * grid(); }

  void validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
      throw ShapeError("image size " + std::to_string(image_size) +
                       " not divisible by patch size " + std::to_string(patch_size));
    if (embed_dim % heads != 0)
      throw ShapeError("embed dim " + std::to_string(embed_dim) +
                       " not divisible by " + std::to_string(heads) + " heads");
  }
};

/// Rows are patches in row-major grid order; each row is a channel-major
/// flattening of the p x p crop: index = c*p*p + dy*p + dx.
template <class S>
MatX<S> extract_patches(const Image<S>& img, int patch) {
  const int gh = img.height() / patch, gw = img.width() / patch;
  MatX<S> out(gh * gw, 3 * patch * patch);
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      const int row = py * gw + px;
      for (int c = 0; c < 3; ++c)
        for (int dy = 0; dy < patch; ++dy)
          for (int dx = 0; dx < patch; ++dx)
            out(row, c * patch * patch + dy * patch + dx) =
                img.ch[c](py * patch + dy, px * patch + dx);
    }
  return out;
}

template <class S>
struct PatchEmbed {
  int patch;
  Dense<S> proj;

  PatchEmbed(const std::string& name, int patch_size, int dim)
      : patch(patch_size), proj(name + ".proj", 3 * patch_size * patch_size, dim) {}

  void init(Rng& rng) { proj.init(rng); }

  struct Cache {
    typename Dense<S>::Cache c;
  };

  MatX<S> forward(const Image<S>& img, Cache& c) const {
    if (img.height() % patch != 0 || img.width() % patch != 0)
      throw ShapeError("image " + std::to_string(img.height()) + "x" +
                       std::to_string(img.width()) + " not divisible by patch " +
                       std::to_string(patch));
    return proj.forward(extract_patches(img, patch), c.c);
  }

  // Input images are leaves, so only parameter grads are produced.
  void backward(const Cache& c, const MatX<S>& dy) { proj.backward(c.c, dy); }

  template <class F>
  void visit(F&& f) {
    proj.visit(f);
  }
};

namespace detail {

// Keys' cubic convolution kernel with a = -0.75 (the classic bicubic).
inline double cubic_weight(double t) {
  constexpr double a = -0.75;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace detail

/// Dense matrix M mapping a row-major src_h*src_w scalar field to dst_h*dst_w
/// via bicubic interpolation with half-pixel-centered sampling and clamped
/// border taps. Apply as M * vec(field); the adjoint M^T backpropagates.
template <class S>
MatX<S> bicubic_resample_matrix(int src_h, int src_w, int dst_h, int dst_w) {
  MatX<S> m = MatX<S>::Zero(dst_h * dst_w, src_h * src_w);
  const double sy = double(src_h) / dst_h, sx = double(src_w) / dst_w;
  for (int oy = 0; oy < dst_h; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    const int by = static_cast<int>(std::floor(fy));
    for (int ox = 0; ox < dst_w; ++ox) {
      const double fx = (ox + 0.5) * sx - 0.5;
      const int bx = static_cast<int>(std::floor(fx));
      for (int ty = -1; ty <= 2; ++ty) {
        const double wy = detail::cubic_weight(fy - (by + ty));
        const int iy = std::clamp(by + ty, 0, src_h - 1);
        for (int tx = -1; tx <= 2; ++tx) {
          const double wx = detail::cubic_weight(fx - (bx + tx));
          const int ix = std::clamp(bx + tx, 0, src_w - 1);
          m(oy * dst_w + ox, iy * src_w + ix) += static_cast<S>(wy * wx);
        }
      }
    }
  }
  return m;
}

/// ViT encoder: patch embed, [CLS] + position embeddings, pre-norm blocks,
/// final layer norm. Any image whose sides divide by the patch size is
/// accepted; off-native grids get bicubically resampled position embeddings.
template <class S>
struct Vit {
  EncoderConfig cfg;
  PatchEmbed<S> embed;
  Param<S> cls;  // 1 x d
  Param<S> pos;  // (P0+1) x d, row 0 for [CLS]
  std::vector<Block<S>> blocks;
  LayerNorm<S> norm;

  explicit Vit(const EncoderConfig& config, const std::string& name = "backbone")
      : cfg(config),
        embed(name + ".embed", config.patch_size, config.embed_dim),
        cls(name + ".cls", 1, config.embed_dim, false),
        pos(name + ".pos", config.patch_count() + 1, config.embed_dim, false),
        norm(name + ".norm", config.embed_dim) {
    cfg.validate();
    blocks.reserve(static_cast<std::size_t>(config.depth));
    for (int i = 0; i < config.depth; ++i)
      blocks.emplace_back(name + ".block" + std::to_string(i), config.embed_dim,
                          config.heads, config.mlp_ratio);
  }

  void init(Rng& rng) {
    embed.init(rng);
    cls.fill_trunc_normal(rng, 0.02);
    pos.fill_trunc_normal(rng, 0.02);
    for (auto& b : blocks) b.init(rng);
    norm.init();
  }

  struct Cache {
    typename PatchEmbed<S>::Cache embed_c;
    std::vector<typename Block<S>::Cache> block_c;
    typename LayerNorm<S>::Cache norm_c;
    MatX<S> pos_map;  // resample matrix when off the native grid, else empty
    int grid_h = 0, grid_w = 0;
  };

  TokenGrid<S> forward(const Image<S>& img, Cache& c) const {
    const MatX<S> patch_tokens = embed.forward(img, c.embed_c);
    c.grid_h = img.height() / cfg.patch_size;
    c.grid_w = img.width() / cfg.patch_size;
    const Eigen::Index n = patch_tokens.rows() + 1;

    MatX<S> x(n, cfg.embed_dim);
    x.row(0) = cls.value.row(0) + pos.value.row(0);
    const int g0 = cfg.grid();
    if (c.grid_h == g0 && c.grid_w == g0) {
      c.pos_map.resize(0, 0);
      x.bottomRows(n - 1) = patch_tokens + pos.value.bottomRows(n - 1);
    } else {
      c.pos_map = bicubic_resample_matrix<S>(g0, g0, c.grid_h, c.grid_w);
      x.bottomRows(n - 1) =
          patch_tokens + c.pos_map * pos.value.bottomRows(g0 * g0);
    }

    c.block_c.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
      x = blocks[i].forward(x, c.block_c[i]);

    TokenGrid<S> out;
    out.tokens = norm.forward(x, c.norm_c);
    out.grid_h = c.grid_h;
    out.grid_w = c.grid_w;
    return out;
  }

  void backward(const Cache& c, const MatX<S>& dtokens) {
    MatX<S> dx = norm.backward(c.norm_c, dtokens);
    for (std::size_t i = blocks.size(); i-- > 0;)
      dx = blocks[i].backward(c.block_c[i], dx);

    cls.grad.row(0) += dx.row(0);
    pos.grad.row(0) += dx.row(0);
    const Eigen::Index n = dx.rows();
    if (c.pos_map.size() == 0) {
      pos.grad.bottomRows(n - 1) += dx.bottomRows(n - 1);
    } else {
      pos.grad.bottomRows(cfg.patch_count()).noalias() +=
          c.pos_map.transpose() * dx.bottomRows(n - 1);
    }
    embed.backward(c.embed_c, dx.bottomRows(n - 1));
  }

  template <class F>
  void visit(F&& f) {
    embed.visit(f);
    f(cls);
    f(pos);
    for (auto& b : blocks) b.visit(f);
    norm.visit(f);
  }
};

}  // namespace vsd
