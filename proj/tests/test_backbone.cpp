#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hep/backbone.hpp"
#include "hep/error.hpp"
#include "hep/rng.hpp"
#include "hep/tgraph.hpp"

using namespace hep;

namespace {

// Identity-weight layer: W_r = W_n = I, biases 0, gate frozen at 1, identity phi.
TdgcLayerParams identity_layer(int64_t d, int64_t h) {
  TdgcLayerParams p;
  std::vector<double> eye(static_cast<size_t>(d * d), 0.0);
  for (int64_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  p.w_n = Tensor::from({d, d}, eye);
  p.b_n = Tensor::zeros({1, d});
  p.w_r = Tensor::from({d, d}, eye);
  p.b_r = Tensor::zeros({1, d});
  p.gate_w1 = Tensor::zeros({1, h});
  p.gate_b1 = Tensor::zeros({1, h});
  p.gate_w2 = Tensor::zeros({h, d});
  p.gate_b2 = Tensor::full({1, d}, 1.0);
  p.phi = Activation::identity;
  return p;
}

TdgcLayerParams random_layer(int64_t d, int64_t h, uint64_t seed) {
  CounterRng rng(seed);
  TdgcLayerParams p;
  p.w_n = init_param({d, d}, d, rng, "w_n");
  p.b_n = init_param({1, d}, d, rng, "b_n");
  p.w_r = init_param({d, d}, d, rng, "w_r");
  p.b_r = init_param({1, d}, d, rng, "b_r");
  p.gate_w1 = init_param({1, h}, 1, rng, "gw1");
  p.gate_b1 = init_param({1, h}, 1, rng, "gb1");
  p.gate_w2 = init_param({h, d}, h, rng, "gw2");
  p.gate_b2 = init_param({1, d}, h, rng, "gb2");
  p.phi = Activation::relu;
  return p;
}

// Independent per-node message-passing oracle following the layer equation
// directly, with no shared code beyond raw value access.
std::vector<double> tdgc_oracle(const TemporalGraph& g, const TdgcLayerParams& p) {
  const int64_t n = g.num_nodes(), d = g.width();
  const int64_t h = p.gate_w1.shape()[1];
  auto apply_affine = [&](const std::vector<double>& w, const std::vector<double>& b,
                          const std::vector<double>& in, int64_t rows_in, int64_t cols_out,
                          int64_t inner) {
    std::vector<double> out(static_cast<size_t>(rows_in * cols_out), 0.0);
    for (int64_t i = 0; i < rows_in; ++i)
      for (int64_t j = 0; j < cols_out; ++j) {
        double s = b[static_cast<size_t>(j)];
        for (int64_t k = 0; k < inner; ++k)
          s += in[static_cast<size_t>(i * inner + k)] * w[static_cast<size_t>(k * cols_out + j)];
        out[static_cast<size_t>(i * cols_out + j)] = s;
      }
    return out;
  };

  std::vector<double> xn =
      apply_affine(p.w_n.values(), p.b_n.values(), g.x.values(), n, d, d);
  if (p.phi == Activation::relu)
    for (auto& v : xn) v = std::max(v, 0.0);
  std::vector<double> root =
      apply_affine(p.w_r.values(), p.b_r.values(), g.x.values(), n, d, d);

  const double scale = std::ldexp(1.0, static_cast<int>(g.stage));
  std::vector<double> out = root;
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> acc(static_cast<size_t>(d), 0.0);
    int64_t deg = 0;
    for (auto [src, dst] : g.edges) {
      if (dst != i) continue;
      ++deg;
      double delta = g.pe[static_cast<size_t>(i)] - g.pe[static_cast<size_t>(src)];
      double s = delta > 0 ? 1.0 : (delta < 0 ? -1.0 : 0.0);
      std::vector<double> din = {std::fabs(delta) / scale};
      std::vector<double> hid = apply_affine(p.gate_w1.values(), p.gate_b1.values(), din, 1, h, 1);
      for (auto& v : hid) v = std::max(v, 0.0);
      std::vector<double> gate = apply_affine(p.gate_w2.values(), p.gate_b2.values(), hid, 1, d, h);
      for (int64_t j = 0; j < d; ++j)
        acc[static_cast<size_t>(j)] += s * gate[static_cast<size_t>(j)] *
                                       xn[static_cast<size_t>(src * d + j)];
    }
    if (deg > 0)
      for (int64_t j = 0; j < d; ++j)
        out[static_cast<size_t>(i * d + j)] += acc[static_cast<size_t>(j)] / deg;
  }
  return out;
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("identity-weight configuration reproduces the worked example") {
  // Node 0 at pe=0 with neighbors at pe=1 (x=2) and pe=-1 (x=4).
  TemporalGraph g;
  g.x = Tensor::from({3, 1}, {4, 0, 2});
  g.pe = {-1.0, 0.0, 1.0};  // node order by time; center node is index 1
  g.edges = {{0, 1}, {2, 1}, {1, 0}, {1, 2}};
  g.stage = 0;
  g.tau = 1.5;

  Tensor out = tdgc_forward(g, identity_layer(1, 2));
  // center node: mean(sign(0-(-1))*4, sign(0-1)*2) = mean(4, -2) = 1
  CHECK(out.values()[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("equal timestamps annihilate neighbor messages") {
  TemporalGraph g;  // fixture forces equal pe, bypassing build_graph validation
  g.x = Tensor::from({2, 2}, {1, 2, 3, 4});
  g.pe = {1.0, 1.0};
  g.edges = {{1, 0}, {0, 1}};
  g.stage = 0;
  g.tau = 1.0;

  TdgcLayerParams p = random_layer(2, 3, 99);
  Tensor out = tdgc_forward(g, p);
  Tensor root = add(matmul(g.x, p.w_r), p.b_r);
  for (int64_t i = 0; i < out.size(); ++i)
    CHECK(std::fabs(out.values()[i] - root.values()[i]) == 0.0);
}

TEST_CASE("isolated node receives exactly the root term") {
  TemporalGraph g;
  g.x = Tensor::from({1, 2}, {0.3, -0.7});
  g.pe = {0.5};
  g.stage = 0;
  g.tau = 1.0;
  TdgcLayerParams p = random_layer(2, 3, 7);
  Tensor out = tdgc_forward(g, p);
  Tensor root = add(matmul(g.x, p.w_r), p.b_r);
  CHECK(out.values() == root.values());
}

TEST_CASE("tdgc matches the per-node loop oracle on random graphs") {
  for (uint64_t seed : {100u, 200u, 300u}) {
    CounterRng rng(seed);
    const int64_t n = 12, d = 5;
    std::vector<double> pe(n);
    double t = 0;
    for (int64_t i = 0; i < n; ++i) {
      t += rng.uniform(static_cast<uint64_t>(i), 0.2, 1.4);
      pe[static_cast<size_t>(i)] = t;
    }
    std::vector<double> xv(static_cast<size_t>(n * d));
    for (size_t i = 0; i < xv.size(); ++i) xv[i] = rng.uniform(1000 + i, -1, 1);

    TemporalGraph g = build_graph(Tensor::from({n, d}, xv), pe, 1.5);
    TdgcLayerParams p = random_layer(d, 4, seed + 1);
    Tensor out = tdgc_forward(g, p);
    auto expect = tdgc_oracle(g, p);
    for (size_t i = 0; i < expect.size(); ++i)
      CHECK(std::fabs(out.values()[i] - expect[i]) <= 1e-12);
  }
}

TEST_CASE("time reversal negates the neighbor aggregate exactly") {
  CounterRng rng(404);
  const int64_t n = 10, d = 4;
  std::vector<double> pe(n);
  double t = 0;
  for (int64_t i = 0; i < n; ++i) {
    t += rng.uniform(static_cast<uint64_t>(i), 0.3, 1.1);
    pe[static_cast<size_t>(i)] = t;
  }
  std::vector<double> xv(static_cast<size_t>(n * d));
  for (size_t i = 0; i < xv.size(); ++i) xv[i] = rng.uniform(500 + i, -1, 1);

  TemporalGraph g = build_graph(Tensor::from({n, d}, xv), pe, 1.6);
  TdgcLayerParams p = random_layer(d, 3, 405);

  // Reversed graph: pe -> -pe, node order flipped to restore monotonicity.
  std::vector<double> rpe(n), rxv(static_cast<size_t>(n * d));
  for (int64_t i = 0; i < n; ++i) {
    rpe[static_cast<size_t>(i)] = -pe[static_cast<size_t>(n - 1 - i)];
    for (int64_t j = 0; j < d; ++j)
      rxv[static_cast<size_t>(i * d + j)] = xv[static_cast<size_t>((n - 1 - i) * d + j)];
  }
  TemporalGraph gr = build_graph(Tensor::from({n, d}, rxv), rpe, 1.6);

  Tensor out = tdgc_forward(g, p);
  Tensor out_r = tdgc_forward(gr, p);
  Tensor root = add(matmul(g.x, p.w_r), p.b_r);
  Tensor root_r = add(matmul(gr.x, p.w_r), p.b_r);

  double worst = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) {
      double agg = out.at(i, j) - root.at(i, j);
      double agg_r = out_r.at(n - 1 - i, j) - root_r.at(n - 1 - i, j);
      worst = std::max(worst, std::fabs(agg + agg_r));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("node permutation equivariance") {
  const int64_t n = 6, d = 3;
  CounterRng rng(606);
  std::vector<double> xv(static_cast<size_t>(n * d));
  for (size_t i = 0; i < xv.size(); ++i) xv[i] = rng.uniform(i, -1, 1);
  std::vector<double> pe = {0.5, 1.5, 2.5, 3.5, 4.5, 5.5};
  TdgcLayerParams p = random_layer(d, 3, 607);

  TemporalGraph g = build_graph(Tensor::from({n, d}, xv), pe, 1.2);
  Tensor out = tdgc_forward(g, p);

  // Apply a permutation directly to the graph fields; pe loses monotonicity,
  // which tdgc_forward itself does not require.
  std::vector<int64_t> perm = {3, 0, 5, 1, 4, 2};
  TemporalGraph gp;
  gp.stage = 0;
  gp.tau = g.tau;
  std::vector<double> pxv(static_cast<size_t>(n * d));
  gp.pe.resize(static_cast<size_t>(n));
  std::vector<int64_t> inv(n);
  for (int64_t i = 0; i < n; ++i) inv[perm[static_cast<size_t>(i)]] = i;
  for (int64_t i = 0; i < n; ++i) {
    int64_t p_i = perm[static_cast<size_t>(i)];
    gp.pe[static_cast<size_t>(i)] = pe[static_cast<size_t>(p_i)];
    for (int64_t j = 0; j < d; ++j)
      pxv[static_cast<size_t>(i * d + j)] = xv[static_cast<size_t>(p_i * d + j)];
  }
  gp.x = Tensor::from({n, d}, pxv);
  for (auto [src, dst] : g.edges) gp.edges.emplace_back(inv[src], inv[dst]);

  Tensor outp = tdgc_forward(gp, p);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      CHECK(outp.at(inv[i], j) == doctest::Approx(out.at(i, j)).epsilon(1e-13));
}

TEST_CASE("locality: gradients vanish outside the receptive field") {
  // Single layer, tau couples only adjacent nodes; node 0's loss cannot see
  // node 3's features.
  const int64_t n = 4, d = 2;
  std::vector<double> xv(static_cast<size_t>(n * d), 0.25);
  Tensor x = Tensor::from({n, d}, xv, true);
  TemporalGraph g = build_graph(x, {0.5, 1.5, 2.5, 3.5}, 1.0);
  TdgcLayerParams p = random_layer(d, 3, 808);
  Tensor out = tdgc_forward(g, p);
  backward(sum(gather_rows(out, {0})));
  for (int64_t j = 0; j < d; ++j) {
    CHECK(x.grad()[static_cast<size_t>(2 * d + j)] == 0.0);
    CHECK(x.grad()[static_cast<size_t>(3 * d + j)] == 0.0);
  }
}

TEST_CASE("hierarchy node counts follow ceil(N/2) recursion") {
  BackboneConfig cfg;
  cfg.stages = 3;
  cfg.layers_per_stage = {1, 1, 1};
  cfg.dim = 3;
  cfg.tau = 1.2;
  cfg.gate_hidden = 2;

  ParameterStore store;
  CounterRng rng(42);
  BackboneParams params = init_backbone(cfg, store, "backbone", rng);

  std::vector<double> pe(64);
  for (int i = 0; i < 64; ++i) pe[static_cast<size_t>(i)] = 0.5 + i;
  TemporalGraph g0 = build_graph(Tensor::zeros({64, 3}), pe, cfg.tau);
  GraphHierarchy h = backbone_forward(g0, cfg, params);
  REQUIRE(h.levels.size() == 3);
  CHECK(h.levels[0].num_nodes() == 64);
  CHECK(h.levels[1].num_nodes() == 32);
  CHECK(h.levels[2].num_nodes() == 16);
  CHECK(h.levels[0].stage == 0);
  CHECK(h.levels[1].stage == 1);
  CHECK(h.levels[2].stage == 2);
  CHECK(h.pooling.size() == 2);
}

TEST_CASE("single-stage backbone applies no pooling") {
  BackboneConfig cfg;
  cfg.stages = 1;
  cfg.layers_per_stage = {2};
  cfg.dim = 2;
  cfg.tau = 1.0;
  cfg.gate_hidden = 2;
  ParameterStore store;
  BackboneParams params = init_backbone(cfg, store, "bb", CounterRng(5));
  TemporalGraph g0 = build_graph(Tensor::zeros({7, 2}), {0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5}, 1.0);
  GraphHierarchy h = backbone_forward(g0, cfg, params);
  CHECK(h.levels.size() == 1);
  CHECK(h.levels[0].num_nodes() == 7);
  CHECK(h.pooling.empty());
}

TEST_CASE("degree statistics stay constant across stages on uniform spacing") {
  std::vector<double> pe(64);
  for (int i = 0; i < 64; ++i) pe[static_cast<size_t>(i)] = 0.5 + i;
  TemporalGraph g = build_graph(Tensor::zeros({64, 1}), pe, 2.0);

  auto mean_degree = [](const TemporalGraph& gg) {
    return static_cast<double>(gg.edges.size()) / static_cast<double>(gg.num_nodes());
  };
  double base = mean_degree(g);
  for (int level = 1; level < 3; ++level) {
    g = pool(g, PoolMode::mean).first;
    CHECK(std::fabs(mean_degree(g) - base) <= 1.0);
  }
}

TEST_CASE("backbone width mismatch raises a dimension error") {
  TemporalGraph g;
  g.x = Tensor::zeros({3, 4});
  g.pe = {0.5, 1.5, 2.5};
  g.edges = {};
  TdgcLayerParams p = random_layer(3, 2, 1);
  CHECK_THROWS_AS(tdgc_forward(g, p), DimensionError);
}

}  // TEST_SUITE
