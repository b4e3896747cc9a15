#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bsde/checkpoint.hpp"
#include "bsde/nets.hpp"
#include "helpers.hpp"

using namespace bsde;

namespace {

Tensor forward_const(const MLPConfig& cfg, const ParameterSet& ps, const Tensor& x) {
  BoundParams bp = constant_params(ps);
  return mlp_forward(cfg, bp, x);
}

}  // namespace

TEST_CASE("init is deterministic in (config, seed, dist)") {
  MLPConfig cfg{3, 2, 2, 5, Activation::Tanh, false};
  ParameterSet a = init_params(cfg, 77, InitDist::Uniform);
  ParameterSet b = init_params(cfg, 77, InitDist::Uniform);
  REQUIRE(a.theta.size() == b.theta.size());
  for (std::size_t i = 0; i < a.theta.size(); ++i) CHECK(a.theta[i] == b.theta[i]);
  ParameterSet c = init_params(cfg, 78, InitDist::Uniform);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.theta.size(); ++i) any_diff = any_diff || a.theta[i] != c.theta[i];
  CHECK(any_diff);
}

TEST_CASE("layout covers the parameter vector") {
  MLPConfig cfg{2, 1, 4, 12, Activation::Tanh, false};
  ParameterSet ps = init_params(cfg, 5, InitDist::Normal);
  CHECK(ps.theta.size() == layout_size(ps.layout));
  // segments are contiguous and disjoint
  std::size_t expect = 0;
  for (const Segment& s : ps.layout) {
    CHECK(s.offset == expect);
    expect += s.size();
  }
  CHECK(expect == ps.theta.size());
}

TEST_CASE("uniform init sample mean sits within three standard errors") {
  // one big weight segment: fan_in 250, fan_out 400 -> 100000 draws
  Segment seg{"W1", 0, {250, 400}, SegmentKind::Weight};
  ParameterSet ps = init_params({seg}, 123, InitDist::Uniform);
  const double a = std::sqrt(6.0 / (250.0 + 400.0));
  double mean = 0.0;
  for (double w : ps.theta) mean += w;
  mean /= static_cast<double>(ps.theta.size());
  const double se = (a / std::sqrt(3.0)) / std::sqrt(static_cast<double>(ps.theta.size()));
  CHECK(std::fabs(mean) < 3.0 * se);
  // and the range is respected
  for (double w : ps.theta) CHECK(std::fabs(w) <= a);
}

TEST_CASE("biases start at zero, normalization scale at one") {
  MLPConfig cfg{2, 2, 1, 3, Activation::Relu, true};
  ParameterSet ps = init_params(cfg, 9, InitDist::Normal);
  for (const Segment& s : ps.layout) {
    if (s.kind == SegmentKind::BnScale)
      for (double v : ps.view(s)) CHECK(v == 1.0);
    if (s.kind == SegmentKind::BnShift || s.kind == SegmentKind::Bias)
      for (double v : ps.view(s)) CHECK(v == 0.0);
  }
}

TEST_CASE("all-zero parameters map everything to zero") {
  MLPConfig cfg{4, 2, 3, 6, Activation::Tanh, false};
  ParameterSet ps = init_params(cfg, 1, InitDist::Uniform);
  for (double& v : ps.theta) v = 0.0;
  CounterStream rng(3);
  Tensor x({5, 4}, testutil::random_vector(rng, 20));
  Tensor y = forward_const(cfg, ps, x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.at(i) == 0.0);
}

TEST_CASE("two-neuron tanh net matches the hand computation") {
  MLPConfig cfg{1, 1, 1, 2, Activation::Tanh, false};
  ParameterSet ps = init_params(cfg, 1, InitDist::Uniform);
  // W1 (1x2), b1 (1x2), W2 (2x1), b2 (1x1)
  ps.theta = {0.3, -0.5, 0.1, 0.2, 0.7, -0.4, 0.05};
  const double x = 0.9;
  const double expected =
      0.7 * std::tanh(0.3 * x + 0.1) - 0.4 * std::tanh(-0.5 * x + 0.2) + 0.05;
  Tensor y = forward_const(cfg, ps, Tensor({1, 1}, {x}));
  CHECK(std::fabs(y.value() - expected) < 1e-15);
}

TEST_CASE("batched forward equals stacked single-sample passes") {
  MLPConfig cfg{3, 2, 2, 7, Activation::Sin, false};
  ParameterSet ps = init_params(cfg, 21, InitDist::Uniform);
  CounterStream rng(4);
  const std::size_t M = 6;
  auto vals = testutil::random_vector(rng, M * 3);
  Tensor batch({M, 3}, vals);
  Tensor out = forward_const(cfg, ps, batch);
  for (std::size_t m = 0; m < M; ++m) {
    Tensor single({1, 3}, {vals[m * 3], vals[m * 3 + 1], vals[m * 3 + 2]});
    Tensor y = forward_const(cfg, ps, single);
    for (std::size_t j = 0; j < 2; ++j) CHECK(out.at(m * 2 + j) == y.at(j));
  }
}

TEST_CASE("forward is equivariant under batch-row permutation") {
  MLPConfig cfg{2, 1, 2, 5, Activation::Tanh, false};
  ParameterSet ps = init_params(cfg, 33, InitDist::Normal);
  CounterStream rng(5);
  auto vals = testutil::random_vector(rng, 8);
  Tensor batch({4, 2}, vals);
  std::vector<double> rev(8);
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t j = 0; j < 2; ++j) rev[m * 2 + j] = vals[(3 - m) * 2 + j];
  Tensor out = forward_const(cfg, ps, batch);
  Tensor out_rev = forward_const(cfg, ps, Tensor({4, 2}, rev));
  for (std::size_t m = 0; m < 4; ++m) CHECK(out.at(m) == out_rev.at(3 - m));
}

TEST_CASE("mlp rejects width mismatch") {
  MLPConfig cfg{3, 1, 1, 4, Activation::Tanh, false};
  ParameterSet ps = init_params(cfg, 2, InitDist::Uniform);
  BoundParams bp = constant_params(ps);
  CHECK_THROWS_AS(mlp_forward(cfg, bp, Tensor({2, 2})), std::invalid_argument);
}

TEST_CASE("rnn with zero recurrence reduces to a per-step one-hidden-layer net") {
  RNNConfig rcfg{2, 1, 4, Activation::Tanh};
  ParameterSet rp = init_params(rcfg, 11, InitDist::Uniform);
  for (Segment& s : rp.layout)
    if (s.name == "Wh")
      for (double& v : rp.view(s)) v = 0.0;

  MLPConfig mcfg{2, 1, 1, 4, Activation::Tanh, false};
  ParameterSet mp = init_params(mcfg, 11, InitDist::Uniform);
  auto find = [](ParameterSet& ps, const std::string& n) -> Segment& {
    for (Segment& s : ps.layout)
      if (s.name == n) return s;
    throw std::runtime_error("missing " + n);
  };
  auto copy_seg = [&](const std::string& from, const std::string& to) {
    auto src = rp.view(find(rp, from));
    auto dst = mp.view(find(mp, to));
    REQUIRE(src.size() == dst.size());
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  };
  copy_seg("Wx", "W1");
  copy_seg("bh", "b1");
  copy_seg("Wy", "W2");
  copy_seg("by", "b2");

  CounterStream rng(6);
  std::vector<Tensor> xs;
  for (int i = 0; i < 3; ++i)
    xs.emplace_back(std::vector<std::size_t>{2, 2}, testutil::random_vector(rng, 4));
  BoundParams rb = constant_params(rp);
  auto ys = rnn_forward(rcfg, rb, xs);
  REQUIRE(ys.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor want = forward_const(mcfg, mp, xs[i]);
    for (std::size_t j = 0; j < want.size(); ++j)
      CHECK(ys[i].at(j) == doctest::Approx(want.at(j)).epsilon(1e-15));
  }
}

TEST_CASE("single-step rnn equals the equivalent mlp") {
  RNNConfig rcfg{3, 2, 5, Activation::Sin};
  ParameterSet rp = init_params(rcfg, 17, InitDist::Normal);
  CounterStream rng(8);
  Tensor x({2, 3}, testutil::random_vector(rng, 6));
  BoundParams rb = constant_params(rp);
  auto ys = rnn_forward(rcfg, rb, std::vector<Tensor>{x});

  MLPConfig mcfg{3, 2, 1, 5, Activation::Sin, false};
  ParameterSet mp = init_params(mcfg, 17, InitDist::Normal);
  std::size_t idx = 0;
  for (const Segment& s : rp.layout) {
    if (s.name == "Wh") continue;  // h0 = 0 makes the recurrence vanish
    auto src = rp.view(s);
    auto dst = mp.view(mp.layout[idx++]);
    REQUIRE(src.size() == dst.size());
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  }
  Tensor want = forward_const(mcfg, mp, x);
  for (std::size_t j = 0; j < want.size(); ++j)
    CHECK(ys[0].at(j) == doctest::Approx(want.at(j)).epsilon(1e-15));
}

TEST_CASE("three-step scalar rnn matches the hand recursion") {
  RNNConfig cfg{1, 1, 1, Activation::Tanh};
  ParameterSet ps = init_params(cfg, 1, InitDist::Uniform);
  // Wx, Wh, bh, Wy, by
  ps.theta = {0.8, -0.6, 0.1, 1.3, -0.2};
  const double xs[3] = {0.5, -1.0, 0.25};
  double h = 0.0;
  BoundParams bp = constant_params(ps);
  std::vector<Tensor> inputs;
  for (double x : xs)
    inputs.emplace_back(std::vector<std::size_t>{1, 1}, std::vector<double>{x});
  auto ys = rnn_forward(cfg, bp, inputs);
  for (int i = 0; i < 3; ++i) {
    h = std::tanh(0.8 * xs[i] - 0.6 * h + 0.1);
    const double y = 1.3 * h - 0.2;
    CHECK(std::fabs(ys[static_cast<std::size_t>(i)].value() - y) < 1e-15);
  }
}

TEST_CASE("rnn outputs are causal") {
  RNNConfig cfg{2, 1, 4, Activation::Tanh};
  ParameterSet ps = init_params(cfg, 23, InitDist::Uniform);
  CounterStream rng(12);
  std::vector<double> flat = testutil::random_vector(rng, 4 * 2);
  auto run = [&](const std::vector<double>& data) {
    std::vector<Tensor> xs;
    for (std::size_t i = 0; i < 4; ++i)
      xs.emplace_back(std::vector<std::size_t>{1, 2},
                      std::vector<double>{data[i * 2], data[i * 2 + 1]});
    BoundParams bp = constant_params(ps);
    return rnn_forward(cfg, bp, xs);
  };
  auto base = run(flat);
  std::vector<double> bumped = flat;
  bumped[2 * 2] += 0.5;  // perturb x_2
  auto pert = run(bumped);
  CHECK(pert[0].value() == base[0].value());
  CHECK(pert[1].value() == base[1].value());
  CHECK(pert[2].value() != base[2].value());
}

TEST_CASE("rnn rejects an empty sequence") {
  RNNConfig cfg{1, 1, 2, Activation::Tanh};
  ParameterSet ps = init_params(cfg, 3, InitDist::Uniform);
  BoundParams bp = constant_params(ps);
  CHECK_THROWS_AS(rnn_forward(cfg, bp, {}), std::invalid_argument);
}

TEST_CASE("published parameter counts") {
  CHECK(param_count(CountScheme::LDBSDE_original, 100) == 223745);
  CHECK(param_count(CountScheme::LaDBSDE, 100) == 25961);
  CHECK(param_count(CountScheme::DBSDE, 1, 2) == 191);
  CHECK_THROWS_AS(param_count(CountScheme::DBSDE, 1, 1), std::invalid_argument);

  const double ratio = static_cast<double>(param_count(CountScheme::LDBSDE_original, 100)) /
                       static_cast<double>(param_count(CountScheme::LaDBSDE, 100));
  CHECK(ratio > 8.5);
  CHECK(ratio < 9.0);
}

TEST_CASE("configured single-net layout matches its itemized count") {
  // the width-(10+d) net: (10+d)(d+2) + 3(10+d)(11+d) + (11+d) parameters
  for (std::size_t d : {1u, 2u, 10u, 50u, 100u}) {
    MLPConfig cfg{d + 1, 1, 4, 10 + d, Activation::Tanh, false};
    const std::size_t itemized = (10 + d) * (d + 2) + 3 * (10 + d) * (11 + d) + (11 + d);
    CHECK(layout_size(mlp_layout(cfg)) == itemized);
    CHECK(param_count(CountScheme::LDBSDE_paper, d) == itemized);
  }
}

TEST_CASE("inference-mode normalization with unit running stats is affine") {
  MLPConfig cfg{2, 2, 1, 2, Activation::Relu, true};
  ParameterSet ps = init_params(cfg, 41, InitDist::Uniform);
  auto bn = make_bn_states(cfg);  // running stats start at (0, 1)
  for (const Segment& s : ps.layout) {
    if (s.kind == SegmentKind::BnScale)
      for (double& v : ps.view(s)) v = 1.7;
    if (s.kind == SegmentKind::BnShift)
      for (double& v : ps.view(s)) v = -0.3;
  }
  {
    auto w = ps.view(ps.layout[0]);  // identity W1
    w[0] = 1.0;
    w[1] = 0.0;
    w[2] = 0.0;
    w[3] = 1.0;
  }
  BoundParams bp = constant_params(ps);
  Tensor x({3, 2}, {0.2, 1.4, -0.7, 0.9, 2.0, -1.1});
  Tensor out = mlp_forward(cfg, bp, x, NetMode::Inference, &bn);
  auto wv = ps.view(ps.layout[3]);  // W2
  for (std::size_t m = 0; m < 3; ++m) {
    double h[2];
    for (std::size_t j = 0; j < 2; ++j) h[j] = std::max(0.0, 1.7 * x.at(m * 2 + j) - 0.3);
    for (std::size_t j = 0; j < 2; ++j) {
      const double pre = h[0] * wv[0 * 2 + j] + h[1] * wv[1 * 2 + j];
      const double want = 1.7 * pre - 0.3;
      CHECK(std::fabs(out.at(m * 2 + j) - want) < 1e-5);
    }
  }
}

TEST_CASE("train-mode normalization updates the running statistics") {
  MLPConfig cfg{2, 2, 1, 2, Activation::Relu, true};
  ParameterSet ps = init_params(cfg, 51, InitDist::Uniform);
  auto bn = make_bn_states(cfg);
  CounterStream rng(13);
  Tensor x({64, 2}, testutil::random_vector(rng, 128));
  BoundParams bp = constant_params(ps);
  mlp_forward(cfg, bp, x, NetMode::Train, &bn);
  bool moved = false;
  for (double m : bn[0].running_mean) moved = moved || m != 0.0;
  CHECK(moved);
}

TEST_CASE("parameter blob round-trips byte for byte") {
  MLPConfig cfg{3, 2, 2, 4, Activation::Sin, false};
  ParameterSet ps = init_params(cfg, 67, InitDist::Normal);
  std::stringstream buf;
  save_params(buf, ps);
  ParameterSet back = load_params(buf);
  REQUIRE(back.theta.size() == ps.theta.size());
  for (std::size_t i = 0; i < ps.theta.size(); ++i) CHECK(back.theta[i] == ps.theta[i]);
  REQUIRE(back.layout.size() == ps.layout.size());
  for (std::size_t i = 0; i < ps.layout.size(); ++i) {
    CHECK(back.layout[i].name == ps.layout[i].name);
    CHECK(back.layout[i].offset == ps.layout[i].offset);
    CHECK(back.layout[i].shape == ps.layout[i].shape);
  }
}
