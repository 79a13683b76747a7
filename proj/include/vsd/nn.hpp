#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/rng.hpp"
#include "vsd/types.hpp"

namespace vsd {

/// One named tensor with its gradient buffer. `decay` marks whether weight
/// decay applies (biases, norm parameters, and embeddings opt out).
template <class S>
struct Param {
  std::string name;
  MatX<S> value;
  MatX<S> grad;
  bool decay = true;

  Param() = default;
  Param(std::string n, int rows, int cols, bool decay_flag = true)
      : name(std::move(n)),
        value(MatX<S>::Zero(rows, cols)),
        grad(MatX<S>::Zero(rows, cols)),
        decay(decay_flag) {}

  void fill_trunc_normal(Rng& rng, double sigma) {
    for (Eigen::Index r = 0; r < value.rows(); ++r)
      for (Eigen::Index c = 0; c < value.cols(); ++c)
        value(r, c) = static_cast<S>(rng.trunc_normal(sigma));
  }
};

template <class S, class M>
std::vector<Param<S>*> collect_params(M& model) {
  std::vector<Param<S>*> params;
  model.visit([&](Param<S>& p) { params.push_back(&p); });
  return params;
}

template <class S, class M>
void zero_grads(M& model) {
  model.visit([](Param<S>& p) { p.grad.setZero(); });
}

template <class S>
MatX<S> gelu(const MatX<S>& x) {
  return x.unaryExpr([](S v) {
    return static_cast<S>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
  });
}

/// d gelu(x) = Phi(x) + x phi(x), with Phi the standard normal CDF.
template <class S>
MatX<S> gelu_backward(const MatX<S>& x, const MatX<S>& dy) {
  static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return dy.cwiseProduct(x.unaryExpr([](S v) {
    const double phi = std::exp(-0.5 * double(v) * double(v)) * inv_sqrt2pi;
    return static_cast<S>(0.5 * (1.0 + std::erf(v / std::sqrt(2.0))) + v * phi);
  }));
}

/// Affine map on token rows: y = x W + b. Caches are external so one layer
/// can serve many forward passes per step; backward accumulates into grads.
template <class S>
struct Dense {
  Param<S> weight;  // in x out
  Param<S> bias;    // 1 x out
  bool has_bias = true;

  Dense(const std::string& name, int in, int out, bool with_bias = true)
      : weight(name + ".weight", in, out),
        bias(name + ".bias", 1, out, false),
        has_bias(with_bias) {}

  void init(Rng& rng, double sigma = 0.02) {
    weight.fill_trunc_normal(rng, sigma);
    bias.value.setZero();
  }

  struct Cache {
    MatX<S> x;
  };

  MatX<S> forward(const MatX<S>& x, Cache& c) const {
    if (x.cols() != weight.value.rows())
      throw ShapeError(weight.name + ": input has " + std::to_string(x.cols()) +
                       " features, expected " + std::to_string(weight.value.rows()));
    c.x = x;
    MatX<S> y = x * weight.value;
    if (has_bias) y.rowwise() += bias.value.row(0);
    return y;
  }

  MatX<S> backward(const Cache& c, const MatX<S>& dy) {
    weight.grad.noalias() += c.x.transpose() * dy;
    if (has_bias) bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value.transpose();
  }

  template <class F>
  void visit(F&& f) {
    f(weight);
    if (has_bias) f(bias);
  }
};

/// Per-token normalization over the feature dimension.
template <class S>
struct LayerNorm {
  Param<S> gain;  // 1 x d
  Param<S> bias;  // 1 x d
  S eps = S(1e-6);

  LayerNorm(const std::string& name, int dim)
      : gain(name + ".gain", 1, dim, false), bias(name + ".bias", 1, dim, false) {
    gain.value.setOnes();
  }

  void init() {
    gain.value.setOnes();
    bias.value.setZero();
  }

  struct Cache {
    MatX<S> xhat;
    VecX<S> inv_std;
  };

  MatX<S> forward(const MatX<S>& x, Cache& c) const {
    const VecX<S> mu = x.rowwise().mean();
    const MatX<S> centered = x.colwise() - mu;
    const VecX<S> var = centered.array().square().rowwise().mean();
    c.inv_std = (var.array() + eps).rsqrt();
    c.xhat = c.inv_std.asDiagonal() * centered;
    MatX<S> y = c.xhat * gain.value.row(0).asDiagonal();
    y.rowwise() += bias.value.row(0);
    return y;
  }

  MatX<S> backward(const Cache& c, const MatX<S>& dy) {
    gain.grad.row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
    bias.grad.row(0) += dy.colwise().sum();
    const MatX<S> dxhat = dy * gain.value.row(0).asDiagonal();
    const VecX<S> m1 = dxhat.rowwise().mean();
    const VecX<S> m2 = dxhat.cwiseProduct(c.xhat).rowwise().mean();
    return c.inv_std.asDiagonal() *
           ((dxhat.colwise() - m1) - VecX<S>(m2).asDiagonal() * c.xhat);
  }

  template <class F>
  void visit(F&& f) {
    f(gain);
    f(bias);
  }
};

/// Multi-head self-attention with a fused QKV projection.
template <class S>
struct Attention {
  int heads;
  int head_dim;
  Dense<S> qkv;
  Dense<S> proj;

  Attention(const std::string& name, int dim, int num_heads)
      : heads(num_heads),
        head_dim(dim / num_heads),
        qkv(name + ".qkv", dim, 3 * dim),
        proj(name + ".proj", dim, dim) {
    if (dim % num_heads != 0)
      throw ShapeError(name + ": dim " + std::to_string(dim) + " not divisible by " +
                       std::to_string(num_heads) + " heads");
  }

  void init(Rng& rng) {
    qkv.init(rng);
    proj.init(rng);
  }

  struct Cache {
    typename Dense<S>::Cache qkv_c, proj_c;
    MatX<S> q, k, v;            // N x d, heads side by side
    std::vector<MatX<S>> attn;  // per head, N x N rows softmaxed
  };

  MatX<S> forward(const MatX<S>& x, Cache& c) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    const MatX<S> fused = qkv.forward(x, c.qkv_c);
    c.q = fused.leftCols(d);
    c.k = fused.middleCols(d, d);
    c.v = fused.rightCols(d);
    const S scale = S(1) / std::sqrt(S(head_dim));

    MatX<S> concat(n, d);
    c.attn.assign(static_cast<std::size_t>(heads), MatX<S>());
    for (int h = 0; h < heads; ++h) {
      const auto qh = c.q.middleCols(h * head_dim, head_dim);
      const auto kh = c.k.middleCols(h * head_dim, head_dim);
      const auto vh = c.v.middleCols(h * head_dim, head_dim);
      MatX<S> scores = scale * (qh * kh.transpose());
      const VecX<S> row_max = scores.rowwise().maxCoeff();
      scores = ((scores.colwise() - row_max).array().exp()).matrix();
      const VecX<S> row_sum = scores.rowwise().sum();
      MatX<S>& attn = c.attn[static_cast<std::size_t>(h)];
      attn = row_sum.cwiseInverse().asDiagonal() * scores;
      concat.middleCols(h * head_dim, head_dim).noalias() = attn * vh;
    }
    return proj.forward(concat, c.proj_c);
  }

  MatX<S> backward(const Cache& c, const MatX<S>& dy) {
    const Eigen::Index n = dy.rows();
    const Eigen::Index d = static_cast<Eigen::Index>(heads) * head_dim;
    const S scale = S(1) / std::sqrt(S(head_dim));
    const MatX<S> dconcat = proj.backward(c.proj_c, dy);

    MatX<S> dfused(n, 3 * d);
    for (int h = 0; h < heads; ++h) {
      const auto qh = c.q.middleCols(h * head_dim, head_dim);
      const auto kh = c.k.middleCols(h * head_dim, head_dim);
      const auto vh = c.v.middleCols(h * head_dim, head_dim);
      const MatX<S>& attn = c.attn[static_cast<std::size_t>(h)];
      const auto dout = dconcat.middleCols(h * head_dim, head_dim);

      const MatX<S> dattn = dout * vh.transpose();
      const VecX<S> dot = dattn.cwiseProduct(attn).rowwise().sum();
      const MatX<S> dscores = attn.cwiseProduct(dattn.colwise() - dot);
      dfused.middleCols(h * head_dim, head_dim).noalias() = scale * (dscores * kh);
      dfused.middleCols(d + h * head_dim, head_dim).noalias() =
          scale * (dscores.transpose() * qh);
      dfused.middleCols(2 * d + h * head_dim, head_dim).noalias() =
          attn.transpose() * dout;
    }
    return qkv.backward(c.qkv_c, dfused);
  }

  template <class F>
  void visit(F&& f) {
    qkv.visit(f);
    proj.visit(f);
  }
};

/// Token-wise two-layer MLP with an exact-GELU nonlinearity.
template <class S>
struct Mlp {
  Dense<S> fc1, fc2;

  Mlp(const std::string& name, int dim, int hidden)
      : fc1(name + ".fc1", dim, hidden), fc2(name + ".fc2", hidden, dim) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  struct Cache {
    typename Dense<S>::Cache c1, c2;
    MatX<S> pre;  // fc1 output before GELU
  };

  MatX<S> forward(const MatX<S>& x, Cache& c) const {
    c.pre = fc1.forward(x, c.c1);
    return fc2.forward(gelu(c.pre), c.c2);
  }

  MatX<S> backward(const Cache& c, const MatX<S>& dy) {
    const MatX<S> dhidden = fc2.backward(c.c2, dy);
    return fc1.backward(c.c1, gelu_backward(c.pre, dhidden));
  }

  template <class F>
  void visit(F&& f) {
    fc1.visit(f);
    fc2.visit(f);
  }
};

/// Pre-norm transformer block: x + attn(ln1(x)), then + mlp(ln2(.)).
template <class S>
struct Block {
  LayerNorm<S> ln1, ln2;
  Attention<S> attn;
  Mlp<S> mlp;

  Block(const std::string& name, int dim, int num_heads, double mlp_ratio)
      : ln1(name + ".ln1", dim),
        ln2(name + ".ln2", dim),
        attn(name + ".attn", dim, num_heads),
        mlp(name + ".mlp", dim, static_cast<int>(dim * mlp_ratio)) {}

  void init(Rng& rng) {
    ln1.init();
    ln2.init();
    attn.init(rng);
    mlp.init(rng);
  }

  struct Cache {
    typename LayerNorm<S>::Cache ln1_c, ln2_c;
    typename Attention<S>::Cache attn_c;
    typename Mlp<S>::Cache mlp_c;
  };

  MatX<S> forward(const MatX<S>& x, Cache& c) const {
    const MatX<S> h = x + attn.forward(ln1.forward(x, c.ln1_c), c.attn_c);
    return h + mlp.forward(ln2.forward(h, c.ln2_c), c.mlp_c);
  }

  MatX<S> backward(const Cache& c, const MatX<S>& dy) {
    const MatX<S> dh = dy + ln2.backward(c.ln2_c, mlp.backward(c.mlp_c, dy));
    return dh + ln1.backward(c.ln1_c, attn.backward(c.attn_c, dh));
  }

  template <class F>
  void visit(F&& f) {
    ln1.visit(f);
    ln2.visit(f);
    attn.visit(f);
    mlp.visit(f);
  }
};

}  // namespace vsd
