#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/optimizer.hpp"
#include "vsd/rng.hpp"

using namespace vsd;

namespace {

Param<double> make_param(const std::string& name, std::vector<double> vals,
                         bool decay = true) {
  Param<double> p(name, 1, static_cast<int>(vals.size()), decay);
  for (std::size_t i = 0; i < vals.size(); ++i) p.value(0, static_cast<int>(i)) = vals[i];
  return p;
}

void set_grad(Param<double>& p, std::vector<double> vals) {
  for (std::size_t i = 0; i < vals.size(); ++i) p.grad(0, static_cast<int>(i)) = vals[i];
}

}  // namespace

TEST_CASE("gradient clip rescales to the target norm and reports the old one") {
  MatX<double> g(2, 1);
  g << 3.0, 4.0;
  const double pre = clip_grad_norm(g, 3.0);
  CHECK(pre == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(g(0, 0) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(g(1, 0) == doctest::Approx(2.4).epsilon(1e-15));

  MatX<double> small(1, 2);
  small << 1.0, 1.0;
  const MatX<double> before = small;
  clip_grad_norm(small, 3.0);
  CHECK(small.cwiseEqual(before).all());  // norm sqrt(2) < 3: untouched

  MatX<double> any(1, 2);
  any << 100.0, -100.0;
  const MatX<double> before2 = any;
  clip_grad_norm(any, 0.0);  // 0 disables clipping
  CHECK(any.cwiseEqual(before2).all());
}

TEST_CASE("first update moves by lr * g / (|g| + eps)") {
  auto p = make_param("w", {1.0, -2.0, 0.5});
  AdamWConfig cfg;
  AdamW<double> opt({&p});
  set_grad(p, {0.3, -0.7, 1.9});
  opt.step(0.01, 0.0);
  // t=1: m_hat = g, v_hat = g^2, so the step is lr*g/(|g|+eps).
  CHECK(p.value(0, 0) ==
        doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + cfg.eps)).epsilon(1e-12));
  CHECK(p.value(0, 1) ==
        doctest::Approx(-2.0 + 0.01 * 0.7 / (0.7 + cfg.eps)).epsilon(1e-12));
  CHECK(p.value(0, 2) ==
        doctest::Approx(0.5 - 0.01 * 1.9 / (1.9 + cfg.eps)).epsilon(1e-12));
}

TEST_CASE("three-step trajectory matches the reference implementation") {
  // lr 0.1, betas 0.9/0.999, eps 1e-8, weight decay 0.04, start [1, -2],
  // grads per step below. Expected values computed with an independent
  // decay-first Adam reference (cross-checked against a widely used
  // implementation to all printed digits).
  auto p = make_param("w", {1.0, -2.0});
  AdamW<double> opt({&p});
  const std::vector<std::vector<double>> grads = {
      {0.5, -1.0}, {0.25, 0.75}, {-2.0, 0.125}};
  const std::vector<std::vector<double>> expected = {
      {0.89600000199999996, -1.892000001},
      {0.79919804046946241, -1.8754995003565356},
      {0.83814745331896523, -1.8674885745354983}};
  for (std::size_t s = 0; s < grads.size(); ++s) {
    set_grad(p, grads[s]);
    opt.step(0.1, 0.04);
    CHECK(p.value(0, 0) == doctest::Approx(expected[s][0]).epsilon(1e-14));
    CHECK(p.value(0, 1) == doctest::Approx(expected[s][1]).epsilon(1e-14));
  }
}

TEST_CASE("zero gradient leaves only the decay factor") {
  auto decayed = make_param("w", {2.0, -3.0}, true);
  auto exempt = make_param("b", {2.0, -3.0}, false);
  AdamW<double> opt({&decayed, &exempt});
  const MatX<double> w0 = decayed.value;
  const MatX<double> b0 = exempt.value;
  opt.step(0.1, 0.5);
  CHECK(decayed.value.cwiseEqual(w0 * (1.0 - 0.1 * 0.5)).all());
  CHECK(exempt.value.cwiseEqual(b0).all());
}

TEST_CASE("clipping is equivalent to pre-scaled gradients") {
  auto a = make_param("w", {1.0, 1.0});
  auto b = make_param("w", {1.0, 1.0});
  AdamWConfig clipless;
  clipless.clip_norm = 0.0;
  AdamW<double> opt_a({&a});            // default clip at 3
  AdamW<double> opt_b({&b}, clipless);  // no clip, fed pre-scaled grads
  set_grad(a, {6.0, 8.0});              // norm 10 -> scaled by 0.3
  set_grad(b, {1.8, 2.4});
  opt_a.step(0.05, 0.1);
  opt_b.step(0.05, 0.1);
  CHECK(a.value.cwiseEqual(b.value).all());
  CHECK(a.grad(0, 0) == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(a.grad(0, 1) == doctest::Approx(2.4).epsilon(1e-15));
}

TEST_CASE("20 random steps match a scalar loop oracle") {
  Rng rng(42);
  auto w = make_param("w", {0.4, -1.2, 3.0}, true);
  auto b = make_param("b", {0.1, 0.2}, false);
  AdamWConfig cfg;
  cfg.clip_norm = 0.0;
  AdamW<double> opt({&w, &b}, cfg);

  // Oracle state, updated coefficient by coefficient.
  std::vector<double> wv = {0.4, -1.2, 3.0}, wm(3, 0.0), wvv(3, 0.0);
  std::vector<double> bv = {0.1, 0.2}, bm(2, 0.0), bvv(2, 0.0);

  for (int t = 1; t <= 20; ++t) {
    std::vector<double> gw(3), gb(2);
    for (auto& g : gw) g = rng.uniform(-2.0, 2.0);
    for (auto& g : gb) g = rng.uniform(-2.0, 2.0);
    const double lr = rng.uniform(1e-4, 1e-1);
    const double wd = rng.uniform(0.0, 0.5);

    set_grad(w, gw);
    set_grad(b, gb);
    opt.step(lr, wd);

    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (int i = 0; i < 3; ++i) {
      wv[static_cast<std::size_t>(i)] *= 1.0 - lr * wd;  // decay=true
      auto& m = wm[static_cast<std::size_t>(i)];
      auto& v = wvv[static_cast<std::size_t>(i)];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gw[static_cast<std::size_t>(i)];
      v = cfg.beta2 * v +
          (1.0 - cfg.beta2) * gw[static_cast<std::size_t>(i)] * gw[static_cast<std::size_t>(i)];
      wv[static_cast<std::size_t>(i)] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      CHECK(w.value(0, i) == doctest::Approx(wv[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
    for (int i = 0; i < 2; ++i) {
      auto& m = bm[static_cast<std::size_t>(i)];
      auto& v = bvv[static_cast<std::size_t>(i)];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gb[static_cast<std::size_t>(i)];
      v = cfg.beta2 * v +
          (1.0 - cfg.beta2) * gb[static_cast<std::size_t>(i)] * gb[static_cast<std::size_t>(i)];
      bv[static_cast<std::size_t>(i)] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
      CHECK(b.value(0, i) == doctest::Approx(bv[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("skipped tensors are fully frozen and warm up on release") {
  auto frozen = make_param("proto", {1.0, -1.0});
  auto active = make_param("w", {0.5, 0.5});
  AdamW<double> opt({&frozen, &active});
  const MatX<double> frozen0 = frozen.value;

  for (int s = 0; s < 3; ++s) {
    set_grad(frozen, {9.9, -9.9});  // must be ignored
    set_grad(active, {0.1, 0.2});
    opt.step(0.01, 0.1, [](const Param<double>& p) { return p.name == "proto"; });
  }
  CHECK(frozen.value.cwiseEqual(frozen0).all());
  CHECK(opt.state().at("proto.t")(0, 0) == 0.0);
  CHECK(opt.state().at("w.t")(0, 0) == 3.0);
  CHECK(opt.state().at("proto.m").cwiseEqual(MatX<double>::Zero(1, 2)).all());

  // Released tensor behaves like a fresh t=1 update.
  auto fresh = make_param("proto", {1.0, -1.0});
  AdamW<double> ref({&fresh});
  set_grad(fresh, {0.3, -0.4});
  ref.step(0.01, 0.1);
  set_grad(frozen, {0.3, -0.4});
  set_grad(active, {0.0, 0.0});
  opt.step(0.01, 0.1);
  CHECK(frozen.value.cwiseEqual(fresh.value).all());
}

TEST_CASE("state round-trips and resumes bitwise") {
  auto w = make_param("w", {0.4, -1.2});
  auto b = make_param("b", {0.1}, false);
  AdamW<double> opt({&w, &b});
  Rng draws(100);
  auto one_step = [&](AdamW<double>& o, Param<double>& pw, Param<double>& pb, Rng& r) {
    set_grad(pw, {r.uniform(-1, 1), r.uniform(-1, 1)});
    set_grad(pb, {r.uniform(-1, 1)});
    o.step(0.02, 0.3);
  };
  for (int s = 0; s < 3; ++s) one_step(opt, w, b, draws);

  // Snapshot values + optimizer state; continue the original 2 more steps.
  auto w2 = w;
  auto b2 = b;
  const auto saved = opt.state();
  Rng draws_copy = draws;
  for (int s = 0; s < 2; ++s) one_step(opt, w, b, draws);

  // Fresh optimizer over the snapshot, restored, fed identical grads.
  AdamW<double> opt2({&w2, &b2});
  opt2.load_state(saved);
  for (int s = 0; s < 2; ++s) one_step(opt2, w2, b2, draws_copy);

  CHECK(w.value.cwiseEqual(w2.value).all());
  CHECK(b.value.cwiseEqual(b2.value).all());
}

TEST_CASE("state keys cover exactly the bound tensors") {
  auto w = make_param("backbone.w", {1.0});
  auto p = make_param("predictor.w", {1.0});
  AdamW<double> opt({&w, &p});
  const auto st = opt.state();
  std::set<std::string> keys;
  for (const auto& [k, v] : st) keys.insert(k);
  CHECK(keys == std::set<std::string>{"backbone.w.m", "backbone.w.v", "backbone.w.t",
                                      "predictor.w.m", "predictor.w.v", "predictor.w.t"});
}

TEST_CASE("load_state rejects missing, extra, and misshapen entries") {
  auto w = make_param("w", {1.0, 2.0});
  AdamW<double> opt({&w});
  auto good = opt.state();

  auto missing = good;
  missing.erase("w.m");
  CHECK_THROWS_AS(opt.load_state(missing), CheckpointError);

  auto extra = good;
  extra["stray.m"] = MatX<double>::Zero(1, 2);
  CHECK_THROWS_AS(opt.load_state(extra), CheckpointError);

  auto misshapen = good;
  misshapen["w.v"] = MatX<double>::Zero(2, 2);
  CHECK_THROWS_AS(opt.load_state(misshapen), CheckpointError);

  CHECK_NOTHROW(opt.load_state(good));
}
