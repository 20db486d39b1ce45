#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "urecon/graph.hpp"

using namespace urecon;
using ad::Graph;
using ad::NodeId;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                     double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv2d 1x1 identity kernel passes input through") {
  Tensor x = random_tensor({1, 3, 3}, 1);
  Tensor k({1, 1, 1, 1});
  k[0] = 1.0;
  Graph g;
  auto out = g.conv2d(g.constant(x), g.constant(k));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(g.val(out)[i] == Catch::Approx(x[i]).margin(1e-15));
}

TEST_CASE("conv2d center-only kernel scales the input") {
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor k({1, 1, 3, 3});
  k[4] = 2.0;  // center tap
  Graph g;
  auto out = g.conv2d(g.constant(x), g.constant(k));
  const std::vector<double> want{2, 4, 6, 8};
  for (std::size_t i = 0; i < 4; ++i) CHECK(g.val(out)[i] == want[i]);
}

TEST_CASE("conv2d rejects channel mismatch") {
  Graph g;
  auto x = g.constant(Tensor({3, 4, 4}));
  auto k = g.constant(Tensor({2, 2, 3, 3}));
  CHECK_THROWS_AS(g.conv2d(x, k), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
  const Tensor x0 = random_tensor({2, 4, 4}, 11);
  const Tensor k0 = random_tensor({3, 2, 3, 3}, 12, -0.5, 0.5);
  const Tensor b0 = random_tensor({3}, 13, -0.1, 0.1);

  auto run = [&](const Tensor& x, const Tensor& k, const Tensor& b) {
    Graph g;
    auto out = g.conv2d(g.constant(x), g.constant(k), g.constant(b));
    return g.val(g.sum_all(out))[0];
  };

  Graph g;
  Tensor xg = x0, kg = k0, bg = b0;
  xg.requires_grad = kg.requires_grad = bg.requires_grad = true;
  auto xi = g.leaf(xg), ki = g.leaf(kg), bi = g.leaf(bg);
  auto loss = g.sum_all(g.conv2d(xi, ki, bi));
  auto grads = g.backward(loss);

  CHECK(ad::finite_diff_check(
            [&](const Tensor& p) { return run(p, k0, b0); }, x0, grads[xi],
            1e-6) < 1e-5);
  CHECK(ad::finite_diff_check(
            [&](const Tensor& p) { return run(x0, p, b0); }, k0, grads[ki],
            1e-6) < 1e-5);
  CHECK(ad::finite_diff_check(
            [&](const Tensor& p) { return run(x0, k0, p); }, b0, grads[bi],
            1e-6) < 1e-5);
}

TEST_CASE("conv2d is linear in its input") {
  const Tensor x = random_tensor({2, 8, 8}, 21);
  const Tensor y = random_tensor({2, 8, 8}, 22);
  const Tensor k = random_tensor({2, 2, 3, 3}, 23);
  const double a = 1.7, b = -0.4;
  Graph g;
  auto ki = g.constant(k);
  Tensor mix(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
  auto lhs = g.conv2d(g.constant(mix), ki);
  auto cx = g.conv2d(g.constant(x), ki);
  auto cy = g.conv2d(g.constant(y), ki);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(g.val(lhs)[i] ==
          Catch::Approx(a * g.val(cx)[i] + b * g.val(cy)[i]).margin(1e-12));
}

TEST_CASE("relu definition and gradients") {
  Graph g;
  Tensor x({3}, {-1.0, 0.0, 2.0});
  auto out = g.relu(g.constant(x));
  CHECK(g.val(out).data == std::vector<double>{0.0, 0.0, 2.0});

  // all-negative input: output and gradient are zero
  Tensor neg({4}, {-1.0, -2.0, -0.5, -3.0});
  neg.requires_grad = true;
  Graph g2;
  auto ni = g2.leaf(neg);
  auto loss = g2.sum_all(g2.relu(ni));
  auto grads = g2.backward(loss);
  for (double v : grads[ni].data) CHECK(v == 0.0);

  // away from the kink the gradient matches finite differences
  Tensor r = random_tensor({32}, 31);
  for (double& v : r.data)
    if (std::fabs(v) < 1e-3) v = 0.5;
  Tensor rg = r;
  rg.requires_grad = true;
  Graph g3;
  auto ri = g3.leaf(rg);
  auto grads3 = g3.backward(g3.sum_all(g3.relu(ri)));
  auto f = [](const Tensor& p) {
    Graph gg;
    return gg.val(gg.sum_all(gg.relu(gg.constant(p))))[0];
  };
  CHECK(ad::finite_diff_check(f, r, grads3[ri], 1e-6) < 1e-6);
}

TEST_CASE("concat stacks channels and splits gradients") {
  const Tensor a = random_tensor({2, 3, 3}, 41);
  const Tensor b = random_tensor({2, 3, 3}, 42);
  Graph g;
  Tensor ag = a, bg = b;
  ag.requires_grad = bg.requires_grad = true;
  auto ai = g.leaf(ag), bi = g.leaf(bg);

  auto single = g.concat({ai});
  CHECK(g.val(single).data == a.data);

  auto both = g.concat({ai, bi});
  CHECK(g.val(both).shape == std::vector<std::size_t>{4, 3, 3});
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(g.val(both)[i] == a[i]);
    CHECK(g.val(both)[a.size() + i] == b[i]);
  }

  auto grads = g.backward(g.sum_all(both));
  for (double v : grads[ai].data) CHECK(v == 1.0);
  for (double v : grads[bi].data) CHECK(v == 1.0);

  auto c = g.constant(Tensor({2, 4, 4}));
  CHECK_THROWS_AS(g.concat({ai, c}), ShapeError);
}

TEST_CASE("backward basics") {
  // loss = sum(x) -> all-ones gradient
  Graph g;
  Tensor x = random_tensor({5}, 51);
  x.requires_grad = true;
  auto xi = g.leaf(x);
  auto grads = g.backward(g.sum_all(xi));
  for (double v : grads[xi].data) CHECK(v == 1.0);

  // loss = sum(x*x) at [1,2] -> [2,4]
  Graph g2;
  Tensor p({2}, {1.0, 2.0});
  p.requires_grad = true;
  auto pi = g2.leaf(p);
  auto grads2 = g2.backward(g2.sum_all(g2.mul(pi, pi)));
  CHECK(grads2[pi].data == std::vector<double>{2.0, 4.0});

  // non-scalar loss rejected
  Graph g3;
  auto t = g3.leaf(random_tensor({3}, 52));
  CHECK_THROWS_AS(g3.backward(t), ContractError);

  // unused parameter gets an explicit zero gradient
  Graph g4;
  Tensor used = random_tensor({2}, 53), unused = random_tensor({4}, 54);
  used.requires_grad = unused.requires_grad = true;
  auto ui = g4.leaf(used);
  auto vi = g4.leaf(unused);
  auto grads4 = g4.backward(g4.sum_all(ui));
  CHECK(grads4[vi].shape == unused.shape);
  for (double v : grads4[vi].data) CHECK(v == 0.0);
}

TEST_CASE("composite conv-relu-sum gradient matches finite differences") {
  const Tensor x0 = random_tensor({2, 5, 5}, 61);
  const Tensor k0 = random_tensor({2, 2, 3, 3}, 62, -0.5, 0.5);
  auto f = [&](const Tensor& kk) {
    Graph g;
    auto out = g.relu(g.conv2d(g.constant(x0), g.constant(kk)));
    return g.val(g.sum_all(out))[0];
  };
  Graph g;
  Tensor kg = k0;
  kg.requires_grad = true;
  auto ki = g.leaf(kg);
  auto grads = g.backward(g.sum_all(g.relu(g.conv2d(g.constant(x0), ki))));
  CHECK(ad::finite_diff_check(f, k0, grads[ki], 1e-6) < 1e-5);
}

TEST_CASE("finite_diff_check reference cases") {
  // linear functional: exact for any sensible h (coefficients kept away
  // from zero so rounding noise in f does not dominate the relative error)
  Tensor c = random_tensor({6}, 71, 0.5, 1.0);
  c[1] = -c[1];
  c[4] = -c[4];
  const Tensor p = random_tensor({6}, 72, -0.1, 0.1);
  auto f = [&](const Tensor& q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) acc += c[i] * q[i];
    return acc;
  };
  for (double h : {1e-7, 1e-5, 1e-4})
    CHECK(ad::finite_diff_check(f, p, c, h) < 1e-9);

  // quadratic: gradient 2p
  auto q = [](const Tensor& v) {
    double acc = 0.0;
    for (double x : v.data) acc += x * x;
    return acc;
  };
  Tensor twop(p.shape);
  for (std::size_t i = 0; i < p.size(); ++i) twop[i] = 2.0 * p[i];
  CHECK(ad::finite_diff_check(q, p, twop, 1e-6) < 1e-8);
}

TEST_CASE("scalar and complex ops differentiate correctly") {
  // mixed graph: softplus, smul, cmul, dot, sqrt, div, abs
  const Tensor x0 = random_tensor({2, 4, 4}, 81, 0.2, 1.0);
  const Tensor m0 = random_tensor({2, 4, 4}, 82);
  const Tensor s0({1}, {0.37});
  auto build = [&](Graph& g, NodeId xi, NodeId si) {
    auto prod = g.cmul(xi, g.constant(m0));
    auto scaled = g.smul(g.softplus(si), prod);
    auto l2 = g.sqrt_(g.dot(scaled, scaled));
    auto l1 = g.sum_all(g.abs_(scaled));
    auto denom = g.add(g.dot(xi, xi), g.constant(Tensor({1}, {1.0})));
    return g.add(g.div(l2, denom), l1);
  };
  Graph g;
  Tensor xg = x0, sg = s0;
  xg.requires_grad = sg.requires_grad = true;
  auto xi = g.leaf(xg);
  auto si = g.leaf(sg);
  auto grads = g.backward(build(g, xi, si));

  auto fx = [&](const Tensor& p) {
    Graph gg;
    auto pi = gg.constant(p);
    auto ss = gg.constant(s0);
    return gg.val(build(gg, pi, ss))[0];
  };
  auto fs = [&](const Tensor& p) {
    Graph gg;
    auto pi = gg.constant(x0);
    auto ss = gg.constant(p);
    return gg.val(build(gg, pi, ss))[0];
  };
  CHECK(ad::finite_diff_check(fx, x0, grads[xi], 1e-6) < 1e-4);
  CHECK(ad::finite_diff_check(fs, s0, grads[si], 1e-6) < 1e-6);
}

TEST_CASE("pooling ops differentiate correctly") {
  const Tensor x0 = random_tensor({3, 4, 4}, 91);
  auto f = [](const Tensor& p) {
    Graph g;
    auto down = g.avgpool2(g.constant(p));
    auto up = g.upsample2(down);
    return g.val(g.dot(up, up))[0];
  };
  Graph g;
  Tensor xg = x0;
  xg.requires_grad = true;
  auto xi = g.leaf(xg);
  auto up = g.upsample2(g.avgpool2(xi));
  auto grads = g.backward(g.dot(up, up));
  CHECK(ad::finite_diff_check(f, x0, grads[xi], 1e-6) < 1e-6);
}

TEST_CASE("graph evaluation is deterministic") {
  const Tensor x = random_tensor({2, 8, 8}, 101);
  const Tensor k = random_tensor({4, 2, 3, 3}, 102);
  auto run = [&]() {
    Graph g;
    auto out = g.relu(g.conv2d(g.constant(x), g.constant(k)));
    return g.val(g.sum_all(out))[0];
  };
  const double a = run();
  const double b = run();
  CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

TEST_CASE("non-finite results are rejected") {
  Graph g;
  auto one = g.constant(Tensor({1}, {1.0}));
  auto zero = g.constant(Tensor({1}, {0.0}));
  CHECK_THROWS_AS(g.div(one, zero), NumericError);
  // safe division only forgives the exact 0/0 case
  CHECK(g.val(g.div(zero, zero, /*safe=*/true))[0] == 0.0);
  CHECK_THROWS_AS(g.div(one, zero, /*safe=*/true), NumericError);
}
