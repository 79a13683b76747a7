#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "vsd/heads.hpp"
#include "vsd/model.hpp"
#include "vsd/nn.hpp"
#include "vsd/vit.hpp"

#include "support/fd.hpp"

using namespace vsd;
using vsd::testing::check_gradients;
using vsd::testing::FdReport;

namespace {

MatX<double> random_mat(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  MatX<double> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

template <class S>
Image<S> random_image(Rng& rng, int side) {
  Image<S> img(side, side);
  for (auto& plane : img.ch)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) plane(y, x) = static_cast<S>(rng.uniform01());
  return img;
}

/// L = sum(output .* weights), so dL/doutput = weights.
double weighted_sum(const MatX<double>& out, const MatX<double>& w) {
  return out.cwiseProduct(w).sum();
}

}  // namespace

TEST_CASE("dense layer matches a hand-computed affine map") {
  Dense<double> layer("d", 3, 2);
  layer.weight.value << 1, 2, 0, -1, 3, 0.5;
  layer.bias.value << 10, 20;

  MatX<double> x(2, 3);
  x << 1, 2, 3, 0, -1, 1;
  typename Dense<double>::Cache cache;
  const MatX<double> y = layer.forward(x, cache);

  // Row 0: (1*1 + 2*0 + 3*3, 1*2 + 2*(-1) + 3*0.5) + (10, 20) = (20, 21.5).
  // Row 1: (0 - 0 + 3, 0 + 1 + 0.5) + (10, 20) = (13, 21.5).
  CHECK(y(0, 0) == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(y(0, 1) == doctest::Approx(21.5).epsilon(1e-14));
  CHECK(y(1, 0) == doctest::Approx(13.0).epsilon(1e-14));
  CHECK(y(1, 1) == doctest::Approx(21.5).epsilon(1e-14));

  MatX<double> dy(2, 2);
  dy << 1, 0, 0, 2;
  const MatX<double> dx = layer.backward(cache, dy);

  // dW = x^T dy, db = column sums of dy, dx = dy W^T; spelled out by hand.
  CHECK(layer.weight.grad(0, 0) == doctest::Approx(1.0));   // x(0,0)*1 + x(1,0)*0
  CHECK(layer.weight.grad(0, 1) == doctest::Approx(0.0));   // x(0,0)*0 + x(1,0)*2
  CHECK(layer.weight.grad(1, 1) == doctest::Approx(-2.0));  // 2*0 + (-1)*2
  CHECK(layer.weight.grad(2, 0) == doctest::Approx(3.0));
  CHECK(layer.bias.grad(0, 0) == doctest::Approx(1.0));
  CHECK(layer.bias.grad(0, 1) == doctest::Approx(2.0));
  CHECK(dx(0, 0) == doctest::Approx(1.0));  // dy(0,:) . W(0,:) = 1*1 + 0*2
  CHECK(dx(1, 2) == doctest::Approx(1.0));  // dy(1,:) . W(2,:) = 0*3 + 2*0.5
}

TEST_CASE("dense backward accumulates across calls") {
  Dense<double> layer("d", 2, 2);
  layer.weight.value.setIdentity();
  MatX<double> x = MatX<double>::Ones(1, 2);
  MatX<double> dy = MatX<double>::Ones(1, 2);
  typename Dense<double>::Cache c1, c2;
  layer.forward(x, c1);
  layer.forward(2.0 * x, c2);
  layer.backward(c1, dy);
  layer.backward(c2, dy);
  CHECK(layer.weight.grad(0, 0) == doctest::Approx(3.0));  // 1 + 2
  CHECK(layer.bias.grad(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("layer norm normalizes rows and applies gain and bias") {
  LayerNorm<double> ln("ln", 3);
  MatX<double> x(1, 3);
  x << 1, 2, 3;
  typename LayerNorm<double>::Cache cache;
  MatX<double> y = ln.forward(x, cache);

  const double scale = 1.0 / std::sqrt(2.0 / 3.0 + 1e-6);
  CHECK(y(0, 0) == doctest::Approx(-scale).epsilon(1e-12));
  CHECK(y(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y(0, 2) == doctest::Approx(scale).epsilon(1e-12));

  ln.gain.value << 2, 3, 4;
  ln.bias.value << 0.5, 0.5, 0.5;
  y = ln.forward(x, cache);
  CHECK(y(0, 0) == doctest::Approx(-2.0 * scale + 0.5).epsilon(1e-12));
  CHECK(y(0, 2) == doctest::Approx(4.0 * scale + 0.5).epsilon(1e-12));
}

TEST_CASE("layer norm is invariant to per-row shifts") {
  Rng rng(11);
  LayerNorm<double> ln("ln", 8);
  ln.gain.value = random_mat(rng, 1, 8, 0.5, 2.0);
  ln.bias.value = random_mat(rng, 1, 8);
  const MatX<double> x = random_mat(rng, 4, 8);
  MatX<double> shifted = x;
  for (int r = 0; r < 4; ++r) shifted.row(r).array() += 10.0 * (r + 1);

  typename LayerNorm<double>::Cache c1, c2;
  const MatX<double> y1 = ln.forward(x, c1);
  const MatX<double> y2 = ln.forward(shifted, c2);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("layer norm gradients match finite differences") {
  Rng rng(12);
  LayerNorm<double> ln("ln", 6);
  ln.gain.value = random_mat(rng, 1, 6, 0.5, 1.5);
  ln.bias.value = random_mat(rng, 1, 6);
  const MatX<double> w = random_mat(rng, 3, 6);

  // Input is held in a parameter so its gradient is finite-difference checked too.
  Param<double> input("input", 3, 6);
  input.value = random_mat(rng, 3, 6);

  typename LayerNorm<double>::Cache cache;
  auto loss_only = [&] { return weighted_sum(ln.forward(input.value, cache), w); };
  auto loss_and_grad = [&] {
    ln.gain.grad.setZero();
    ln.bias.grad.setZero();
    input.grad.setZero();
    const double loss = loss_only();
    input.grad = ln.backward(cache, w);
    return loss;
  };

  Rng pick(13);
  const FdReport report = check_gradients<double>({&ln.gain, &ln.bias, &input},
                                                  loss_and_grad, loss_only, pick, 8);
  CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("gelu matches normal-CDF values and saturates exactly") {
  MatX<double> x(1, 5);
  x << 0.0, 1.0, -1.0, 20.0, -20.0;
  const MatX<double> y = gelu(x);
  CHECK(y(0, 0) == 0.0);
  // x * Phi(x) at +-1; Phi(1) = 0.8413447460685429.
  CHECK(y(0, 1) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(y(0, 2) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  CHECK(y(0, 3) == 20.0);  // erf saturates, so large inputs pass through exactly
  CHECK(y(0, 4) == 0.0);

  // Central finite differences on scalar inputs.
  for (double v : {-2.0, -0.5, 0.3, 1.7}) {
    MatX<double> in(1, 1), dy(1, 1);
    in(0, 0) = v;
    dy(0, 0) = 1.0;
    const double analytic = gelu_backward(in, dy)(0, 0);
    const double h = 1e-6;
    MatX<double> up(1, 1), down(1, 1);
    up(0, 0) = v + h;
    down(0, 0) = v - h;
    const double fd = (gelu(up)(0, 0) - gelu(down)(0, 0)) / (2 * h);
    CHECK(analytic == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("attention is equivariant to token permutation") {
  Rng rng(21);
  Attention<double> attn("a", 8, 2);
  attn.init(rng);
  const MatX<double> x = random_mat(rng, 6, 8);

  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  MatX<double> permuted(6, 8);
  for (int r = 0; r < 6; ++r) permuted.row(r) = x.row(perm[r]);

  typename Attention<double>::Cache c1, c2;
  const MatX<double> y = attn.forward(x, c1);
  const MatX<double> yp = attn.forward(permuted, c2);
  for (int r = 0; r < 6; ++r)
    CHECK((yp.row(r) - y.row(perm[r])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(22);
  Attention<double> attn("a", 8, 2);
  attn.init(rng);
  Param<double> input("input", 4, 8);
  input.value = random_mat(rng, 4, 8);
  const MatX<double> w = random_mat(rng, 4, 8);

  typename Attention<double>::Cache cache;
  auto loss_only = [&] { return weighted_sum(attn.forward(input.value, cache), w); };
  auto loss_and_grad = [&] {
    zero_grads<double>(attn);
    input.grad.setZero();
    const double loss = loss_only();
    input.grad = attn.backward(cache, w);
    return loss;
  };

  auto params = collect_params<double>(attn);
  params.push_back(&input);
  Rng pick(23);
  const FdReport report = check_gradients<double>(params, loss_and_grad, loss_only, pick, 6);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("block reduces to identity when residual branches output zero") {
  Rng rng(31);
  Block<double> block("b", 8, 2, 4.0);
  block.init(rng);
  block.attn.proj.weight.value.setZero();
  block.attn.proj.bias.value.setZero();
  block.mlp.fc2.weight.value.setZero();
  block.mlp.fc2.bias.value.setZero();

  const MatX<double> x = random_mat(rng, 5, 8);
  typename Block<double>::Cache cache;
  const MatX<double> y = block.forward(x, cache);
  CHECK(y.cwiseEqual(x).all());  // bitwise: both branches add exact zeros
}

TEST_CASE("block gradients match finite differences") {
  Rng rng(32);
  Block<double> block("b", 8, 2, 2.0);
  block.init(rng);
  Param<double> input("input", 4, 8);
  input.value = random_mat(rng, 4, 8);
  const MatX<double> w = random_mat(rng, 4, 8);

  typename Block<double>::Cache cache;
  auto loss_only = [&] { return weighted_sum(block.forward(input.value, cache), w); };
  auto loss_and_grad = [&] {
    zero_grads<double>(block);
    input.grad.setZero();
    const double loss = loss_only();
    input.grad = block.backward(cache, w);
    return loss;
  };

  auto params = collect_params<double>(block);
  params.push_back(&input);
  Rng pick(33);
  const FdReport report = check_gradients<double>(params, loss_and_grad, loss_only, pick, 5);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("patch extraction flattens channel-major in row-major grid order") {
  Image<double> img(4, 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) img.ch[c](y, x) = 100 * c + 10 * y + x;

  const MatX<double> patches = extract_patches(img, 2);
  REQUIRE(patches.rows() == 4);
  REQUIRE(patches.cols() == 12);

  // Row r is patch (py=r/2, px=r%2); column c*4 + dy*2 + dx.
  CHECK(patches(0, 2) == 10.0);   // patch (0,0), c=0, dy=1, dx=0 -> pixel (0,1,0)
  CHECK(patches(1, 11) == 213.0); // patch (0,1), c=2, dy=1, dx=1 -> pixel (2,1,3)
  CHECK(patches(2, 0) == 20.0);   // patch (1,0), c=0, dy=0, dx=0 -> pixel (0,2,0)
  CHECK(patches(3, 5) == 123.0);  // patch (1,1), c=1, dy=0, dx=1 -> pixel (1,2,3)
}

TEST_CASE("bicubic resample matrix is exact identity on the native grid") {
  const MatX<double> m = bicubic_resample_matrix<double>(3, 3, 3, 3);
  CHECK(m.cwiseEqual(MatX<double>::Identity(9, 9)).all());
}

TEST_CASE("bicubic resample rows sum to one") {
  for (auto [sh, sw, dh, dw] : {std::tuple{8, 8, 4, 4}, {4, 4, 8, 8}, {8, 8, 7, 7}}) {
    const MatX<double> m = bicubic_resample_matrix<double>(sh, sw, dh, dw);
    const VecX<double> sums = m.rowwise().sum();
    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bicubic resampling reproduces linear ramps away from borders") {
  // 6x6 -> 3x3: output (1,1) samples source coordinate (2.5, 2.5) with no
  // clamped taps, and the cubic kernel is exact on linear functions.
  MatX<double> field(6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) field(y, x) = 3.0 * y + x;
  VecX<double> flat(36);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) flat(y * 6 + x) = field(y, x);

  const MatX<double> m = bicubic_resample_matrix<double>(6, 6, 3, 3);
  const VecX<double> out = m * flat;
  CHECK(out(4) == doctest::Approx(3.0 * 2.5 + 2.5).epsilon(1e-12));
}

TEST_CASE("vit produces cls plus patch tokens and accepts off-native sizes") {
  EncoderConfig cfg;  // 64x64 image, patch 8, dim 64
  Vit<double> vit(cfg);
  Rng rng(41);
  vit.init(rng);

  Rng img_rng(42);
  const auto img64 = random_image<double>(img_rng, 64);
  typename Vit<double>::Cache c1;
  const TokenGrid<double> t64 = vit.forward(img64, c1);
  CHECK(t64.tokens.rows() == 65);
  CHECK(t64.tokens.cols() == 64);
  CHECK(t64.grid_h == 8);
  CHECK(t64.grid_w == 8);

  const auto img32 = random_image<double>(img_rng, 32);
  typename Vit<double>::Cache c2;
  const TokenGrid<double> t32 = vit.forward(img32, c2);
  CHECK(t32.tokens.rows() == 17);
  CHECK(t32.grid_h == 4);

  // Same input twice is bitwise identical.
  typename Vit<double>::Cache c3;
  CHECK(vit.forward(img64, c3).tokens.cwiseEqual(t64.tokens).all());
}

TEST_CASE("vit rejects images not divisible by the patch size") {
  EncoderConfig cfg;
  Vit<double> vit(cfg);
  Rng rng(43);
  vit.init(rng);
  Image<double> img(30, 30);
  typename Vit<double>::Cache c;
  CHECK_THROWS_AS(vit.forward(img, c), ShapeError);
}

TEST_CASE("vit config validation rejects bad geometry") {
  EncoderConfig bad;
  bad.image_size = 60;  // not divisible by patch 8
  CHECK_THROWS_AS(Vit<double>{bad}, ShapeError);
  EncoderConfig odd;
  odd.embed_dim = 62;  // not divisible by 4 heads
  CHECK_THROWS_AS(Vit<double>{odd}, ShapeError);
}

namespace {

FdReport vit_fd_report(int image_side, unsigned seed, double h) {
  EncoderConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  Vit<double> vit(cfg);
  Rng rng(seed);
  vit.init(rng);

  Rng img_rng(seed + 1);
  const auto img = random_image<double>(img_rng, image_side);
  const int tokens = (image_side / cfg.patch_size) * (image_side / cfg.patch_size) + 1;
  const MatX<double> w = random_mat(img_rng, tokens, cfg.embed_dim);

  typename Vit<double>::Cache cache;
  auto loss_only = [&] { return weighted_sum(vit.forward(img, cache).tokens, w); };
  auto loss_and_grad = [&] {
    zero_grads<double>(vit);
    const double loss = loss_only();
    vit.backward(cache, w);
    return loss;
  };

  Rng pick(seed + 2);
  return check_gradients<double>(collect_params<double>(vit), loss_and_grad,
                                 loss_only, pick, 4, h);
}

}  // namespace

TEST_CASE("vit gradients match finite differences on the native grid") {
  CHECK(vit_fd_report(8, 51, 1e-4).max_rel_err < 1e-5);
}

TEST_CASE("vit gradients match finite differences with resampled positions") {
  // 12x12 input on an 8x8-native model exercises the interpolation adjoint.
  CHECK(vit_fd_report(12, 52, 1e-4).max_rel_err < 1e-5);
}

TEST_CASE("projection head scores are invariant to bottleneck scaling") {
  Rng rng(61);
  ProjectionHead<double> head("proj", 8, 16, 6, 10);
  head.init(rng);
  head.proto_gain.value = random_mat(rng, 1, 10, 0.5, 2.0);

  const MatX<double> z = random_mat(rng, 5, 6);
  typename ProjectionHead<double>::Cache c1, c2;
  const MatX<double> a = head.prototype_logits(z, c1);
  const MatX<double> b = head.prototype_logits(MatX<double>(3.7 * z), c2);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projection head gain scales scores linearly") {
  Rng rng(62);
  ProjectionHead<double> head("proj", 8, 16, 6, 10);
  head.init(rng);
  const MatX<double> x = random_mat(rng, 4, 8);

  typename ProjectionHead<double>::Cache c1, c2;
  const MatX<double> base = head.forward(x, c1);
  head.proto_gain.value.array() *= 2.0;
  const MatX<double> doubled = head.forward(x, c2);
  CHECK(doubled.cwiseEqual(2.0 * base).all());  // exact: scores scale by the gain
}

TEST_CASE("projection head scores are cosine-bounded by the gain") {
  Rng rng(63);
  ProjectionHead<double> head("proj", 8, 16, 6, 10);
  head.init(rng);
  const MatX<double> x = random_mat(rng, 4, 8);
  typename ProjectionHead<double>::Cache c;
  const MatX<double> logits = head.forward(x, c);
  CHECK(logits.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);  // unit vectors, gain 1
}

TEST_CASE("projection head gradients match finite differences") {
  Rng rng(64);
  ProjectionHead<double> head("proj", 8, 16, 6, 10);
  head.init(rng);
  // Training-scale init leaves the bottleneck norm near 1e-4, where the
  // normalization's curvature swamps central differences. The derivative
  // check runs at an O(1)-activation point instead.
  for (Dense<double>* fc : {&head.fc1, &head.fc2, &head.fc3}) {
    fc->weight.value = random_mat(rng, int(fc->weight.value.rows()),
                                  int(fc->weight.value.cols()), -0.5, 0.5);
    fc->bias.value = random_mat(rng, 1, int(fc->bias.value.cols()), -0.2, 0.2);
  }
  head.prototypes.value = random_mat(rng, 10, 6);
  Param<double> input("input", 4, 8);
  input.value = random_mat(rng, 4, 8);
  const MatX<double> w = random_mat(rng, 4, 10);

  typename ProjectionHead<double>::Cache cache;
  auto loss_only = [&] { return weighted_sum(head.forward(input.value, cache), w); };
  auto loss_and_grad = [&] {
    zero_grads<double>(head);
    input.grad.setZero();
    const double loss = loss_only();
    input.grad = head.backward(cache, w);
    return loss;
  };

  auto params = collect_params<double>(head);
  params.push_back(&input);
  Rng pick(65);
  const FdReport report = check_gradients<double>(params, loss_and_grad, loss_only, pick, 6);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("predictor passes tokens through untouched in the identity configuration") {
  Rng rng(71);
  PredictorHead<double> pred("pred", 8, 8, 2, 2);
  pred.init(rng);
  pred.fc1.weight.value.setIdentity();
  pred.fc1.bias.value.setZero();
  pred.fc2.weight.value.setIdentity();
  pred.fc2.bias.value.setZero();
  for (auto& b : pred.blocks) {
    b.attn.proj.weight.value.setZero();
    b.attn.proj.bias.value.setZero();
    b.mlp.fc2.weight.value.setZero();
    b.mlp.fc2.bias.value.setZero();
  }

  // GELU is exactly the identity for inputs this large, so the whole head is.
  const MatX<double> tokens = random_mat(rng, 4, 8, 20.0, 30.0);
  typename PredictorHead<double>::Cache cache;
  CHECK(pred.forward(tokens, cache).cwiseEqual(tokens).all());
}

TEST_CASE("predictor keeps the token count and width") {
  Rng rng(72);
  PredictorHead<double> pred("pred", 8, 16, 2, 2);
  pred.init(rng);
  const MatX<double> tokens = random_mat(rng, 9, 8);
  typename PredictorHead<double>::Cache cache;
  const MatX<double> out = pred.forward(tokens, cache);
  CHECK(out.rows() == 9);
  CHECK(out.cols() == 8);
}

TEST_CASE("predictor gradients match finite differences") {
  Rng rng(73);
  PredictorHead<double> pred("pred", 8, 16, 2, 2);
  pred.init(rng);
  // Keep the MLP output at O(1) so the first block's layer norm is
  // well-conditioned for finite differences (see the projection head test).
  pred.fc1.weight.value = random_mat(rng, 8, 16, -0.5, 0.5);
  pred.fc2.weight.value = random_mat(rng, 16, 8, -0.5, 0.5);
  Param<double> input("input", 4, 8);
  input.value = random_mat(rng, 4, 8);
  const MatX<double> w = random_mat(rng, 4, 8);

  typename PredictorHead<double>::Cache cache;
  auto loss_only = [&] { return weighted_sum(pred.forward(input.value, cache), w); };
  auto loss_and_grad = [&] {
    zero_grads<double>(pred);
    input.grad.setZero();
    const double loss = loss_only();
    input.grad = pred.backward(cache, w);
    return loss;
  };

  auto params = collect_params<double>(pred);
  params.push_back(&input);
  Rng pick(74);
  const FdReport report = check_gradients<double>(params, loss_and_grad, loss_only, pick, 5);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("student parameters have unique names and sensible decay flags") {
  ModelConfig cfg;
  cfg.encoder = {8, 4, 8, 2, 2, 4.0};
  cfg.num_prototypes = 10;
  cfg.proj_hidden = 16;
  cfg.proj_bottleneck = 6;
  cfg.predictor_hidden = 16;
  StudentModel<double> student(cfg);

  auto params = collect_params<double>(student);
  std::set<std::string> names;
  bool saw_predictor = false;
  for (auto* p : params) {
    CHECK(names.insert(p->name).second);
    if (p->name.find(".bias") != std::string::npos) CHECK_FALSE(p->decay);
    if (p->name.find(".gain") != std::string::npos) CHECK_FALSE(p->decay);
    if (p->name.find(".weight") != std::string::npos) CHECK(p->decay);
    if (p->name.rfind("predictor.", 0) == 0) saw_predictor = true;
  }
  CHECK(saw_predictor);

  // Embedding-style tensors are exempt from weight decay.
  for (auto* p : params)
    if (p->name == "backbone.cls" || p->name == "backbone.pos" ||
        p->name == "projection.proto_gain")
      CHECK_FALSE(p->decay);
}

TEST_CASE("teacher mirrors exactly the student's shared subset") {
  ModelConfig cfg;
  cfg.encoder = {8, 4, 8, 2, 2, 4.0};
  cfg.num_prototypes = 10;
  cfg.proj_hidden = 16;
  cfg.proj_bottleneck = 6;
  cfg.predictor_hidden = 16;
  StudentModel<double> student(cfg);
  TeacherModel<double> teacher(cfg);
  Rng rng(81);
  student.init(rng);

  copy_shared_to_teacher(student, teacher);
  std::vector<Param<double>*> shared;
  student.visit_shared([&](Param<double>& p) { shared.push_back(&p); });
  const auto teacher_params = collect_params<double>(teacher);
  REQUIRE(shared.size() == teacher_params.size());
  for (std::size_t i = 0; i < shared.size(); ++i) {
    CHECK(shared[i]->name == teacher_params[i]->name);
    CHECK(shared[i]->value.cwiseEqual(teacher_params[i]->value).all());
    CHECK(shared[i]->name.rfind("predictor.", 0) != 0);
  }

  ModelConfig deeper = cfg;
  deeper.encoder.depth = 3;
  TeacherModel<double> mismatched(deeper);
  CHECK_THROWS_AS(copy_shared_to_teacher(student, mismatched), ParamTreeMismatch);
}

TEST_CASE("single-precision gradients track the difference-verified double ones") {
  // Direct finite differences in float drown in rounding noise, so the
  // float backward is checked against the double backward on identical
  // parameters; the double gradients are finite-difference verified above.
  EncoderConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.depth = 2;
  cfg.heads = 2;
  Vit<double> vit_d(cfg);
  Vit<float> vit_f(cfg);
  Rng rng(91);
  vit_d.init(rng);
  {
    auto src = collect_params<double>(vit_d);
    auto dst = collect_params<float>(vit_f);
    REQUIRE(src.size() == dst.size());
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i]->value = src[i]->value.cast<float>();
  }

  Rng img_rng(92);
  const auto img_d = random_image<double>(img_rng, 8);
  Image<float> img_f(8, 8);
  for (int c = 0; c < 3; ++c) img_f.ch[c] = img_d.ch[c].cast<float>();
  const MatX<double> w = random_mat(img_rng, 5, 8);

  typename Vit<double>::Cache cache_d;
  typename Vit<float>::Cache cache_f;
  zero_grads<double>(vit_d);
  zero_grads<float>(vit_f);
  const auto tok_d = vit_d.forward(img_d, cache_d);
  const auto tok_f = vit_f.forward(img_f, cache_f);
  CHECK((tok_f.tokens.cast<double>() - tok_d.tokens).cwiseAbs().maxCoeff() < 1e-4);

  vit_d.backward(cache_d, w);
  vit_f.backward(cache_f, MatX<float>(w.cast<float>()));

  auto pd = collect_params<double>(vit_d);
  auto pf = collect_params<float>(vit_f);
  double worst = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const MatX<double> gd = pd[i]->grad;
    const MatX<double> gf = pf[i]->grad.cast<double>();
    for (long k = 0; k < gd.size(); ++k) {
      const double rel = std::abs(gf.data()[k] - gd.data()[k]) /
                         std::max(std::abs(gd.data()[k]), 1e-4);
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-3);
}
