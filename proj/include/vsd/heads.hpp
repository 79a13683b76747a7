#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vsd/nn.hpp"
#include "vsd/types.hpp"

namespace vsd {

/// Maps tokens to prototype scores: 3-layer MLP down to a bottleneck, L2
/// normalization per token, then a bias-free weight-normalized linear layer
/// (per-prototype direction v_c / ||v_c|| scaled by a gain, init 1). Scaling
/// a token's bottleneck vector by any positive factor leaves its scores
/// unchanged.
template <class S>
struct ProjectionHead {
  Dense<S> fc1, fc2, fc3;
  Param<S> prototypes;  // C x bottleneck, direction vectors
  Param<S> proto_gain;  // 1 x C

  ProjectionHead(const std::string& name, int dim, int hidden, int bottleneck,
                 int num_prototypes)
      : fc1(name + ".fc1", dim, hidden),
        fc2(name + ".fc2", hidden, hidden),
        fc3(name + ".fc3", hidden, bottleneck),
        prototypes(name + ".prototypes", num_prototypes, bottleneck),
        proto_gain(name + ".proto_gain", 1, num_prototypes, false) {
    proto_gain.value.setOnes();
  }

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
    fc3.init(rng);
    prototypes.fill_trunc_normal(rng, 0.02);
    proto_gain.value.setOnes();
  }

  struct Cache {
    typename Dense<S>::Cache c1, c2, c3;
    MatX<S> pre1, pre2;   // GELU inputs
    MatX<S> zhat;         // normalized bottleneck tokens
    VecX<S> z_inv_norm;   // per-token 1 / max(||z||, eps)
    MatX<S> vhat;         // row-normalized prototypes
    VecX<S> v_inv_norm;   // per-prototype 1 / max(||v||, eps)
    MatX<S> cos;          // zhat * vhat^T, logits before the gain
  };

  MatX<S> bottleneck(const MatX<S>& x, Cache& c) const {
    c.pre1 = fc1.forward(x, c.c1);
    c.pre2 = fc2.forward(gelu(c.pre1), c.c2);
    return fc3.forward(gelu(c.pre2), c.c3);
  }

  MatX<S> prototype_logits(const MatX<S>& z, Cache& c) const {
    constexpr S eps = S(1e-12);
    c.z_inv_norm = z.rowwise().norm().cwiseMax(eps).cwiseInverse();
    c.zhat = c.z_inv_norm.asDiagonal() * z;
    c.v_inv_norm = prototypes.value.rowwise().norm().cwiseMax(eps).cwiseInverse();
    c.vhat = c.v_inv_norm.asDiagonal() * prototypes.value;
    c.cos = c.zhat * c.vhat.transpose();
    return c.cos * proto_gain.value.row(0).asDiagonal();
  }

  MatX<S> forward(const MatX<S>& x, Cache& c) const {
    return prototype_logits(bottleneck(x, c), c);
  }

  MatX<S> backward(const Cache& c, const MatX<S>& dlogits) {
    proto_gain.grad.row(0) += c.cos.cwiseProduct(dlogits).colwise().sum();
    const MatX<S> dcos = dlogits * proto_gain.value.row(0).asDiagonal();

    MatX<S> dvhat = dcos.transpose() * c.zhat;  // C x b
    const VecX<S> vdot = dvhat.cwiseProduct(c.vhat).rowwise().sum();
    prototypes.grad +=
        c.v_inv_norm.asDiagonal() * (dvhat - VecX<S>(vdot).asDiagonal() * c.vhat);

    MatX<S> dzhat = dcos * c.vhat;  // N x b
    const VecX<S> zdot = dzhat.cwiseProduct(c.zhat).rowwise().sum();
    const MatX<S> dz =
        c.z_inv_norm.asDiagonal() * (dzhat - VecX<S>(zdot).asDiagonal() * c.zhat);

    const MatX<S> dh2 = fc3.backward(c.c3, dz);
    const MatX<S> dh1 = fc2.backward(c.c2, gelu_backward(c.pre2, dh2));
    return fc1.backward(c.c1, gelu_backward(c.pre1, dh1));
  }

  template <class F>
  void visit(F&& f) {
    fc1.visit(f);
    fc2.visit(f);
    fc3.visit(f);
    f(prototypes);
    f(proto_gain);
  }

  /// The weight-normalized output layer only (kept frozen for a warmup epoch).
  template <class F>
  void visit_output_layer(F&& f) {
    f(prototypes);
    f(proto_gain);
  }
};

/// Predicts next-frame tokens from current-frame tokens: a token-wise
/// two-layer MLP followed by pre-norm self-attention blocks over the full
/// token sequence. Student-side only; never part of the teacher.
template <class S>
struct PredictorHead {
  Dense<S> fc1, fc2;
  std::vector<Block<S>> blocks;

  PredictorHead(const std::string& name, int dim, int hidden, int num_blocks,
                int num_heads, double mlp_ratio = 4.0)
      : fc1(name + ".fc1", dim, hidden), fc2(name + ".fc2", hidden, dim) {
    blocks.reserve(static_cast<std::size_t>(num_blocks));
    for (int i = 0; i < num_blocks; ++i)
      blocks.emplace_back(name + ".block" + std::to_string(i), dim, num_heads,
                          mlp_ratio);
  }

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
    for (auto& b : blocks) b.init(rng);
  }

  struct Cache {
    typename Dense<S>::Cache c1, c2;
    MatX<S> pre;  // fc1 output before GELU
    std::vector<typename Block<S>::Cache> block_c;
  };

  MatX<S> forward(const MatX<S>& x, Cache& c) const {
    c.pre = fc1.forward(x, c.c1);
    MatX<S> h = fc2.forward(gelu(c.pre), c.c2);
    c.block_c.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
      h = blocks[i].forward(h, c.block_c[i]);
    return h;
  }

  MatX<S> backward(const Cache& c, const MatX<S>& dy) {
    MatX<S> dh = dy;
    for (std::size_t i = blocks.size(); i-- > 0;)
      dh = blocks[i].backward(c.block_c[i], dh);
    const MatX<S> dhidden = fc2.backward(c.c2, dh);
    return fc1.backward(c.c1, gelu_backward(c.pre, dhidden));
  }

  template <class F>
  void visit(F&& f) {
    fc1.visit(f);
    fc2.visit(f);
    for (auto& b : blocks) b.visit(f);
  }
};

}  // namespace vsd
