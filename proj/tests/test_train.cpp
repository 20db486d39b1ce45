#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "urecon/train.hpp"

using namespace urecon;
using ad::Graph;

TEST_CASE("normalized l1-l2 loss values") {
  // identical images give zero
  ComplexImage u(4, 4);
  u.set(0, 0, {3.0, 0.0});
  u.set(0, 1, {4.0, 0.0});
  CHECK(normalized_l1l2_loss(u, u) == 0.0);

  // zero output gives exactly 2 (each normalized term is 1)
  CHECK(normalized_l1l2_loss(u, ComplexImage(4, 4)) == 2.0);

  // hand-computed example: ref [3,4], out [3,0]
  ComplexImage ref(4, 4), out(4, 4);
  ref.data[0] = 3.0;
  ref.data[1] = 4.0;
  out.data[0] = 3.0;
  CHECK(normalized_l1l2_loss(ref, out) ==
        Catch::Approx(4.0 / 5.0 + 4.0 / 7.0).margin(1e-12));

  // all-zero reference rejected
  CHECK_THROWS_AS(normalized_l1l2_loss(ComplexImage(4, 4), u), ContractError);
}

TEST_CASE("loss gradient matches finite differences away from kinks") {
  Rng rng(3);
  ComplexImage ref(8, 8), out(8, 8);
  for (double& v : ref.data) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    double d;
    do {
      d = rng.uniform(-1.0, 1.0);
    } while (std::fabs(d) < 2e-3);  // stay away from |.|_1 kinks
    out.data[i] = ref.data[i] + d;
  }
  Graph g;
  Tensor ot = out.to_tensor(true);
  auto oi = g.leaf(ot);
  auto loss = normalized_l1l2_loss(g, g.constant(ref.to_tensor()), oi);
  auto grads = g.backward(loss);
  auto f = [&](const Tensor& p) {
    Graph gg;
    return gg.val(normalized_l1l2_loss(gg, gg.constant(ref.to_tensor()),
                                       gg.constant(p)))[0];
  };
  CHECK(ad::finite_diff_check(f, out.to_tensor(), grads[oi], 1e-6) < 1e-5);
}

TEST_CASE("adam update behavior") {
  UnrollConfig cfg;
  cfg.algorithm = Algorithm::PGD;
  cfg.unrolls = 2;
  cfg.prox.kind = ProxKind::Identity;
  ParamSet ps = init_params(cfg, 5);
  AdamState st;
  st.init(ps, AdamConfig{});
  const ParamSet before = ps;

  // zero gradient: parameters unchanged, counter advances
  std::vector<Tensor> zero;
  for (const auto& [n, t] : ps.items) zero.emplace_back(t.shape);
  adam_step(ps, zero, st);
  CHECK(st.t == 1);
  for (std::size_t i = 0; i < ps.items.size(); ++i)
    CHECK(ps.items[i].second.data == before.items[i].second.data);

  // first step with gradient g moves by about lr per component
  ParamSet ps2 = init_params(cfg, 5);
  AdamState st2;
  st2.init(ps2, AdamConfig{});
  std::vector<Tensor> grads;
  for (const auto& [n, t] : ps2.items) {
    Tensor g(t.shape);
    for (double& v : g.data) v = 0.7;
    grads.push_back(std::move(g));
  }
  adam_step(ps2, grads, st2);
  for (std::size_t i = 0; i < ps2.items.size(); ++i)
    for (std::size_t j = 0; j < ps2.items[i].second.size(); ++j) {
      const double moved =
          before.items[i].second[j] - ps2.items[i].second[j];
      CHECK(moved == Catch::Approx(1e-3).epsilon(1e-6));
    }
}

TEST_CASE("dataset generation is seeded, split-disjoint and self-consistent") {
  const MaskSpec mask{false, 4, 8};
  const Dataset a = make_dataset(4, 3, 32, 32, 2, mask, 0.01, 9);
  const Dataset b = make_dataset(4, 3, 32, 32, 2, mask, 0.01, 9);
  REQUIRE(a.train_items.size() == 4);
  REQUIRE(a.test_items.size() == 3);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(a.train_items[i].x_ref.data == b.train_items[i].x_ref.data);

  // no phantom appears in both splits
  for (const auto& tr : a.train_items)
    for (const auto& te : a.test_items)
      CHECK(tr.x_ref.data != te.x_ref.data);

  // every item passes the adjoint identity on its own encoder
  Rng rng(31);
  for (const auto& item : a.train_items) {
    ComplexImage x(32, 32);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    KspaceData yk(2, 32, 32);
    for (auto& coil : yk.coils)
      for (double& v : coil.data) v = rng.uniform(-1.0, 1.0);
    const KspaceData ax = apply_forward(item.encoder, x);
    std::complex<double> lhs = 0.0;
    double axn = 0.0, yn = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
      lhs += cdot(ax.coils[c], yk.coils[c]);
      axn += norm2(ax.coils[c]) * norm2(ax.coils[c]);
      yn += norm2(yk.coils[c]) * norm2(yk.coils[c]);
    }
    const auto rhs = cdot(x, apply_adjoint(item.encoder, yk));
    CHECK(std::abs(lhs - rhs) / (std::sqrt(axn) * std::sqrt(yn)) < 1e-10);
  }
}

TEST_CASE("dataset round-trips through the tensor container") {
  const Dataset ds = make_dataset(2, 2, 16, 16, 2, MaskSpec{true, 4, 4}, 0.01, 7);
  TensorFile f;
  f.config_text = "kind=dataset\nn_train=2\nn_test=2\n";
  dataset_to_file(ds, f);
  const Dataset back = dataset_from_file(f, 2, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.train_items[i].x_ref.data == ds.train_items[i].x_ref.data);
    CHECK(back.train_items[i].encoder.mask.sampled ==
          ds.train_items[i].encoder.mask.sampled);
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(back.train_items[i].y.coils[c].data ==
            ds.train_items[i].y.coils[c].data);
  }
}

TEST_CASE("training reduces the loss on a tiny problem") {
  const Dataset ds = make_dataset(8, 1, 32, 32, 2, MaskSpec{false, 4, 8}, 0.01, 21);
  UnrollConfig cfg;
  cfg.algorithm = Algorithm::PGD;
  cfg.unrolls = 3;
  cfg.prox.resnet = {1, 8, 0.1};
  TrainConfig tc;
  tc.epochs = 30;
  tc.seed = 2;
  const TrainResult res = train(ds, cfg, tc);
  REQUIRE(res.loss_history.size() == 30);
  CHECK(res.loss_history.back() < res.loss_history.front());
}

TEST_CASE("zero-epoch training returns the initialization") {
  const Dataset ds = make_dataset(2, 1, 16, 16, 2, MaskSpec{false, 2, 4}, 0.0, 23);
  UnrollConfig cfg;
  cfg.algorithm = Algorithm::PGD;
  cfg.unrolls = 2;
  cfg.prox.resnet = {1, 4, 0.1};
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 4;
  const TrainResult res = train(ds, cfg, tc);
  const ParamSet fresh = init_params(cfg, Rng(tc.seed).child(0xA11).next_u64());
  REQUIRE(res.params.items.size() == fresh.items.size());
  for (std::size_t i = 0; i < fresh.items.size(); ++i)
    CHECK(res.params.items[i].second.data == fresh.items[i].second.data);
  CHECK(res.loss_history.empty());
}

TEST_CASE("training is bit-reproducible") {
  const Dataset ds = make_dataset(3, 1, 16, 16, 2, MaskSpec{false, 2, 4}, 0.01, 25);
  UnrollConfig cfg;
  cfg.algorithm = Algorithm::HC_PGD;
  cfg.unrolls = 2;
  cfg.prox.resnet = {1, 4, 0.1};
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 6;
  const TrainResult a = train(ds, cfg, tc);
  const TrainResult b = train(ds, cfg, tc);
  CHECK(a.loss_history == b.loss_history);
  for (std::size_t i = 0; i < a.params.items.size(); ++i)
    CHECK(a.params.items[i].second.data == b.params.items[i].second.data);
}

TEST_CASE("HC-PGD starts at the PGD loss under one-hot initialization") {
  const Dataset ds = make_dataset(2, 1, 16, 16, 2, MaskSpec{false, 2, 4}, 0.01, 27);
  UnrollConfig pgd;
  pgd.algorithm = Algorithm::PGD;
  pgd.unrolls = 2;
  pgd.prox.resnet = {1, 4, 0.1};
  UnrollConfig hc = pgd;
  hc.algorithm = Algorithm::HC_PGD;

  const std::uint64_t seed = Rng(8).child(0xA11).next_u64();
  const ParamSet ps_pgd = init_params(pgd, seed);
  const ParamSet ps_hc = init_params(hc, seed);
  const auto& item = ds.train_items[0];
  const double la = normalized_l1l2_loss(
      item.x_ref, reconstruct(item.encoder, item.y, pgd, ps_pgd));
  const double lb = normalized_l1l2_loss(
      item.x_ref, reconstruct(item.encoder, item.y, hc, ps_hc));
  CHECK(la == Catch::Approx(lb).margin(1e-12));
}

TEST_CASE("training a lone step size decreases the loss monotonically") {
  // consistent noiseless single image, identity prox, T = 1: only mu_raw.1
  const Dataset ds = make_dataset(1, 1, 16, 16, 2, MaskSpec{false, 2, 4}, 0.0, 29);
  UnrollConfig cfg;
  cfg.algorithm = Algorithm::PGD;
  cfg.unrolls = 1;
  cfg.prox.kind = ProxKind::Identity;
  ParamSet ps = init_params(cfg, 31);
  AdamState st;
  AdamConfig ac;
  ac.lr = 1e-2;
  st.init(ps, ac);
  std::vector<Tensor> grads;
  double prev = 1e300;
  for (int step = 0; step < 10; ++step) {
    const double loss = example_gradient(ds.train_items[0], cfg, ps, grads);
    CHECK(loss < prev);
    prev = loss;
    adam_step(ps, grads, st);
  }
}
