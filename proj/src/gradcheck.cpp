#include "hep/gradcheck.hpp"

#include <cmath>

#include "hep/backbone.hpp"
#include "hep/error.hpp"
#include "hep/rng.hpp"
#include "hep/tgraph.hpp"

namespace hep {

namespace {

double rel_err(double a, double n) {
  return std::fabs(a - n) / std::max({1.0, std::fabs(a), std::fabs(n)});
}

std::vector<double> rand_vec(const CounterRng& rng, int64_t n, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) v[i] = rng.uniform(static_cast<uint64_t>(i), lo, hi);
  return v;
}

// Unit-scale values kept away from the relu/abs kink at zero so central
// differences stay valid.
std::vector<double> rand_vec_nokink(const CounterRng& rng, int64_t n) {
  std::vector<double> v = rand_vec(rng, n, -1.0, 1.0);
  for (double& x : v) x += x >= 0.0 ? 0.05 : -0.05;
  return v;
}

struct OpCheck {
  std::string name;
  std::vector<Shape> shapes;
  // Builds the scalar output from the given input tensors.
  std::function<Tensor(const std::vector<Tensor>&)> build;
  // Draws the input blocks for one instance.
  std::function<std::vector<std::vector<double>>(const CounterRng&)> draw;
};

double run_check(const OpCheck& op, const CounterRng& rng, int64_t instances) {
  double worst = 0.0;
  for (int64_t inst = 0; inst < instances; ++inst) {
    CounterRng irng = rng.stream(op.name).stream(static_cast<uint64_t>(inst));
    std::vector<std::vector<double>> inputs = op.draw(irng);

    std::vector<Tensor> tensors;
    for (size_t i = 0; i < inputs.size(); ++i)
      tensors.push_back(Tensor::from(op.shapes[i], inputs[i], true));
    Tensor out = op.build(tensors);
    backward(out);
    std::vector<std::vector<double>> analytic;
    for (auto& t : tensors) analytic.push_back(t.grad());

    auto forward = [&](const std::vector<std::vector<double>>& vals) {
      std::vector<Tensor> ts;
      for (size_t i = 0; i < vals.size(); ++i)
        ts.push_back(Tensor::from(op.shapes[i], vals[i], false));
      return op.build(ts).item();
    };
    FiniteDiffReport rep = check_gradients(forward, inputs, analytic);
    worst = std::max(worst, rep.max_rel_err);
  }
  return worst;
}

// Fixed-weight scalarization so every output coordinate sees a distinct
// upstream gradient.
Tensor pin(const Tensor& out, uint64_t salt) {
  CounterRng w(0x77eeddcc ^ salt);
  std::vector<double> ws(static_cast<size_t>(out.size()));
  for (int64_t i = 0; i < out.size(); ++i) ws[i] = w.uniform(static_cast<uint64_t>(i), -1.0, 1.0);
  return sum(mul(out, Tensor::from(out.shape(), std::move(ws))));
}

std::vector<OpCheck> op_checks() {
  std::vector<OpCheck> ops;

  ops.push_back({"matmul",
                 {{3, 4}, {4, 2}},
                 [](const std::vector<Tensor>& t) { return pin(matmul(t[0], t[1]), 1); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 12, -1, 1),
                                                           rand_vec(r.stream(1), 8, -1, 1)};
                 }});

  ops.push_back({"add_row_broadcast",
                 {{4, 3}, {1, 3}},
                 [](const std::vector<Tensor>& t) { return pin(add(t[0], t[1]), 2); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 12, -1, 1),
                                                           rand_vec(r.stream(1), 3, -1, 1)};
                 }});

  ops.push_back({"sub_scalar_broadcast",
                 {{4, 3}, {1}},
                 [](const std::vector<Tensor>& t) { return pin(sub(t[0], t[1]), 3); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 12, -1, 1),
                                                           rand_vec(r.stream(1), 1, -1, 1)};
                 }});

  ops.push_back({"mul",
                 {{5, 2}, {5, 2}},
                 [](const std::vector<Tensor>& t) { return pin(mul(t[0], t[1]), 4); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 10, -1, 1),
                                                           rand_vec(r.stream(1), 10, -1, 1)};
                 }});

  ops.push_back({"abs",
                 {{6}},
                 [](const std::vector<Tensor>& t) { return pin(abs(t[0]), 5); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec_nokink(r.stream(0), 6)};
                 }});

  ops.push_back({"relu",
                 {{8}},
                 [](const std::vector<Tensor>& t) { return pin(relu(t[0]), 6); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec_nokink(r.stream(0), 8)};
                 }});

  ops.push_back({"softplus",
                 {{8}},
                 [](const std::vector<Tensor>& t) { return pin(softplus(t[0]), 7); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 8, -1, 1)};
                 }});

  ops.push_back({"row_scale",
                 {{4, 3}},
                 [](const std::vector<Tensor>& t) {
                   return pin(row_scale(t[0], {0.5, -1.25, 2.0, 0.0}), 8);
                 },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 12, -1, 1)};
                 }});

  ops.push_back({"gather_rows",
                 {{5, 3}},
                 [](const std::vector<Tensor>& t) {
                   return pin(gather_rows(t[0], {4, 0, 0, 2, 4}), 9);
                 },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 15, -1, 1)};
                 }});

  ops.push_back({"segment_mean",
                 {{6, 2}},
                 [](const std::vector<Tensor>& t) {
                   return pin(segment_mean(t[0], {0, 0, 2, 2, 2, 0}, 4), 10);
                 },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 12, -1, 1)};
                 }});

  ops.push_back({"segment_max",
                 {{6, 2}},
                 [](const std::vector<Tensor>& t) {
                   return pin(segment_max(t[0], {0, 1, 1, 0, 2, 2}, 3), 11);
                 },
                 [](const CounterRng& r) {
                   // Enforce per-(segment, column) gaps so the argmax cannot
                   // flip under the finite-difference step.
                   std::vector<double> v = rand_vec(r.stream(0), 12, -1, 1);
                   const std::vector<int64_t> ids = {0, 1, 1, 0, 2, 2};
                   for (int64_t col = 0; col < 2; ++col) {
                     for (int64_t a = 0; a < 6; ++a) {
                       for (int64_t b = a + 1; b < 6; ++b) {
                         if (ids[a] != ids[b]) continue;
                         double& va = v[static_cast<size_t>(a * 2 + col)];
                         double& vb = v[static_cast<size_t>(b * 2 + col)];
                         if (std::fabs(va - vb) < 1e-3) vb += vb >= va ? 2e-3 : -2e-3;
                       }
                     }
                   }
                   return std::vector<std::vector<double>>{v};
                 }});

  ops.push_back({"concat_rows",
                 {{2, 3}, {3, 3}},
                 [](const std::vector<Tensor>& t) { return pin(concat_rows({t[0], t[1]}), 12); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 6, -1, 1),
                                                           rand_vec(r.stream(1), 9, -1, 1)};
                 }});

  ops.push_back({"cross_entropy",
                 {{3, 5}},
                 [](const std::vector<Tensor>& t) { return cross_entropy(t[0], {2, 0, 4}); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 15, -1, 1)};
                 }});

  ops.push_back({"mse",
                 {{4, 2}, {4, 2}},
                 [](const std::vector<Tensor>& t) { return mse(t[0], t[1]); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 8, -1, 1),
                                                           rand_vec(r.stream(1), 8, -1, 1)};
                 }});

  ops.push_back({"binary_ce",
                 {{3, 3}, {3, 3}},
                 [](const std::vector<Tensor>& t) { return binary_ce(t[0], t[1]); },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 9, -2, 2),
                                                           rand_vec(r.stream(1), 9, 0, 1)};
                 }});

  ops.push_back({"pool_mean_graph",
                 {{5, 3}},
                 [](const std::vector<Tensor>& t) {
                   TemporalGraph g = build_graph(t[0], {0.5, 1.5, 2.5, 3.5, 4.5}, 1.2);
                   auto [child, map] = pool(g, PoolMode::mean);
                   return pin(child.x, 13);
                 },
                 [](const CounterRng& r) {
                   return std::vector<std::vector<double>>{rand_vec(r.stream(0), 15, -1, 1)};
                 }});

  return ops;
}

// --- end-to-end fixture --------------------------------------------------------

struct EndToEndFixture {
  BackboneConfig cfg;
  std::vector<double> pe;
  std::vector<Shape> shapes;      // X, per-layer params, head
  std::vector<std::string> names;
  int64_t classes = 3;

  Tensor build(const std::vector<Tensor>& t) const {
    BackboneParams params;
    size_t at = 1;
    for (int64_t l = 0; l < cfg.stages; ++l) {
      std::vector<TdgcLayerParams> layers;
      for (int64_t i = 0; i < cfg.layers_per_stage[static_cast<size_t>(l)]; ++i) {
        TdgcLayerParams lp;
        lp.phi = cfg.activation;
        lp.w_n = t[at++];
        lp.b_n = t[at++];
        lp.w_r = t[at++];
        lp.b_r = t[at++];
        lp.gate_w1 = t[at++];
        lp.gate_b1 = t[at++];
        lp.gate_w2 = t[at++];
        lp.gate_b2 = t[at++];
        layers.push_back(std::move(lp));
      }
      params.stages.push_back(std::move(layers));
    }
    Tensor head = t[at++];
    TemporalGraph g0 = build_graph(t[0], pe, cfg.tau);
    GraphHierarchy h = backbone_forward(g0, cfg, params);
    const TemporalGraph& last = h.levels.back();
    std::vector<int64_t> ids(static_cast<size_t>(last.num_nodes()), 0);
    Tensor pooled = segment_mean(last.x, ids, 1);
    return cross_entropy(matmul(pooled, head), {1});
  }
};

EndToEndFixture make_end_to_end_fixture() {
  EndToEndFixture f;
  f.cfg.stages = 2;
  f.cfg.layers_per_stage = {1, 1};
  f.cfg.dim = 4;
  f.cfg.tau = 1.2;
  f.cfg.gate_hidden = 3;
  f.pe = {0.5, 1.5, 2.5, 3.5, 4.5, 5.5};
  const int64_t d = f.cfg.dim, hw = f.cfg.gate_hidden;
  f.shapes.push_back({6, d});
  for (int64_t l = 0; l < f.cfg.stages; ++l) {
    f.shapes.push_back({d, d});
    f.shapes.push_back({1, d});
    f.shapes.push_back({d, d});
    f.shapes.push_back({1, d});
    f.shapes.push_back({1, hw});
    f.shapes.push_back({1, hw});
    f.shapes.push_back({hw, d});
    f.shapes.push_back({1, d});
  }
  f.shapes.push_back({d, f.classes});
  return f;
}

// Rejects draws whose relu pre-activations sit within `margin` of zero
// anywhere along the path; the finite-difference step must not cross a kink.
bool preactivations_clear(const EndToEndFixture& f, const std::vector<std::vector<double>>& vals,
                          double margin) {
  std::vector<Tensor> t;
  for (size_t i = 0; i < vals.size(); ++i) t.push_back(Tensor::from(f.shapes[i], vals[i], false));

  TemporalGraph g = build_graph(t[0], f.pe, f.cfg.tau);
  size_t at = 1;
  for (int64_t l = 0; l < f.cfg.stages; ++l) {
    for (int64_t i = 0; i < f.cfg.layers_per_stage[static_cast<size_t>(l)]; ++i) {
      TdgcLayerParams lp;
      lp.w_n = t[at++];
      lp.b_n = t[at++];
      lp.w_r = t[at++];
      lp.b_r = t[at++];
      lp.gate_w1 = t[at++];
      lp.gate_b1 = t[at++];
      lp.gate_w2 = t[at++];
      lp.gate_b2 = t[at++];
      lp.phi = f.cfg.activation;

      Tensor pre_n = add(matmul(g.x, lp.w_n), lp.b_n);
      for (double v : pre_n.values())
        if (std::fabs(v) < margin) return false;
      if (!g.edges.empty()) {
        std::vector<double> dist;
        const double inv_scale = 1.0 / std::ldexp(1.0, static_cast<int>(g.stage));
        for (auto [src, dst] : g.edges) dist.push_back(std::fabs(g.pe[dst] - g.pe[src]) * inv_scale);
        Tensor din = Tensor::from({static_cast<int64_t>(dist.size()), 1}, dist);
        Tensor pre_h = add(matmul(din, lp.gate_w1), lp.gate_b1);
        for (double v : pre_h.values())
          if (std::fabs(v) < margin) return false;
      }
      g.x = tdgc_forward(g, lp);
    }
    if (l + 1 < f.cfg.stages) g = pool(g, f.cfg.pool_mode).first;
  }
  return true;
}

}  // namespace

FiniteDiffReport check_gradients(
    const std::function<double(const std::vector<std::vector<double>>&)>& forward,
    std::vector<std::vector<double>> inputs,
    const std::vector<std::vector<double>>& analytic, double h) {
  FiniteDiffReport rep;
  for (size_t b = 0; b < inputs.size(); ++b) {
    for (size_t c = 0; c < inputs[b].size(); ++c) {
      const double x0 = inputs[b][c];
      inputs[b][c] = x0 + h;
      const double fp = forward(inputs);
      inputs[b][c] = x0 - h;
      const double fm = forward(inputs);
      inputs[b][c] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = rel_err(analytic[b][c], numeric);
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.input_block = static_cast<int64_t>(b);
        rep.coordinate = static_cast<int64_t>(c);
      }
    }
  }
  return rep;
}

GradSuiteResult run_gradient_suite(uint64_t seed, int64_t instances_per_op) {
  GradSuiteResult result;
  CounterRng rng(seed);

  for (const auto& op : op_checks()) {
    double err = run_check(op, rng, instances_per_op);
    result.max_per_op_rel_err = std::max(result.max_per_op_rel_err, err);
    result.checks_run += instances_per_op;
  }

  const EndToEndFixture fixture = make_end_to_end_fixture();
  CounterRng erng = rng.stream("end_to_end");
  int64_t accepted = 0;
  uint64_t attempt = 0;
  while (accepted < instances_per_op) {
    CounterRng irng = erng.stream(attempt++);
    std::vector<std::vector<double>> inputs;
    for (size_t i = 0; i < fixture.shapes.size(); ++i) {
      int64_t n = 1;
      for (int64_t d : fixture.shapes[i]) n *= d;
      inputs.push_back(rand_vec(irng.stream(static_cast<uint64_t>(i)), n, -0.9, 0.9));
    }
    if (!preactivations_clear(fixture, inputs, 1e-3)) continue;
    ++accepted;

    std::vector<Tensor> tensors;
    for (size_t i = 0; i < inputs.size(); ++i)
      tensors.push_back(Tensor::from(fixture.shapes[i], inputs[i], true));
    Tensor loss = fixture.build(tensors);
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& t : tensors) analytic.push_back(t.grad());

    auto forward = [&](const std::vector<std::vector<double>>& vals) {
      std::vector<Tensor> ts;
      for (size_t i = 0; i < vals.size(); ++i)
        ts.push_back(Tensor::from(fixture.shapes[i], vals[i], false));
      return fixture.build(ts).item();
    };
    FiniteDiffReport rep = check_gradients(forward, inputs, analytic);
    result.max_end_to_end_rel_err = std::max(result.max_end_to_end_rel_err, rep.max_rel_err);
    result.checks_run += 1;
  }
  return result;
}

}  // namespace hep
