#include "hep/backbone.hpp"

#include <cmath>

#include "hep/error.hpp"

namespace hep {

void BackboneConfig::validate() const {
  if (stages < 1) throw ValidationError("backbone: stage count must be at least 1");
  if (static_cast<int64_t>(layers_per_stage.size()) != stages)
    throw ValidationError("backbone: layers_per_stage has " +
                          std::to_string(layers_per_stage.size()) + " entries for " +
                          std::to_string(stages) + " stages");
  for (int64_t n : layers_per_stage)
    if (n < 1) throw ValidationError("backbone: every stage needs at least one layer");
  if (dim < 1) throw ValidationError("backbone: feature width must be positive");
  if (!(tau > 0.0)) throw ValidationError("backbone: tau must be positive");
  if (gate_hidden < 1) throw ValidationError("backbone: gate hidden width must be positive");
}

Tensor tdgc_forward(const TemporalGraph& g, const TdgcLayerParams& params) {
  const int64_t n = g.num_nodes();
  const int64_t d = params.w_n.shape()[0];
  if (g.width() != d)
    throw DimensionError("tdgc_forward: graph width " + std::to_string(g.width()) +
                         " does not match layer width " + std::to_string(d));

  Tensor root = add(matmul(g.x, params.w_r), params.b_r);
  if (g.edges.empty()) return root;

  Tensor xn = add(matmul(g.x, params.w_n), params.b_n);
  if (params.phi == Activation::relu) xn = relu(xn);

  const int64_t e = static_cast<int64_t>(g.edges.size());
  std::vector<int64_t> src(e), dst(e);
  std::vector<double> dist(e), sgn(e);
  const double inv_scale = 1.0 / std::ldexp(1.0, static_cast<int>(g.stage));
  for (int64_t k = 0; k < e; ++k) {
    src[k] = g.edges[k].first;
    dst[k] = g.edges[k].second;
    double delta = g.pe[dst[k]] - g.pe[src[k]];
    dist[k] = std::fabs(delta) * inv_scale;
    sgn[k] = delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0);
  }

  Tensor din = Tensor::from({e, 1}, std::move(dist));
  Tensor hidden = relu(add(matmul(din, params.gate_w1), params.gate_b1));
  Tensor gate = add(matmul(hidden, params.gate_w2), params.gate_b2);

  Tensor msg = row_scale(mul(gather_rows(xn, src), gate), sgn);
  Tensor agg = segment_mean(msg, dst, n);
  return add(root, agg);
}

GraphHierarchy backbone_forward(const TemporalGraph& g0, const BackboneConfig& cfg,
                                const BackboneParams& params) {
  cfg.validate();
  if (g0.stage != 0) throw UsageError("backbone_forward: input graph must be at stage 0");
  if (static_cast<int64_t>(params.stages.size()) != cfg.stages)
    throw UsageError("backbone_forward: parameter stages do not match config");

  GraphHierarchy h;
  TemporalGraph cur = g0;
  for (int64_t l = 0; l < cfg.stages; ++l) {
    for (const auto& layer : params.stages[static_cast<size_t>(l)]) cur.x = tdgc_forward(cur, layer);
    h.levels.push_back(cur);
    if (l + 1 < cfg.stages) {
      auto [pooled, map] = pool(cur, cfg.pool_mode);
      h.pooling.push_back(std::move(map));
      cur = std::move(pooled);
    }
  }
  return h;
}

Tensor init_param(const Shape& shape, int64_t fan_in, const CounterRng& rng,
                  const std::string& name) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(fan_in, 1)));
  CounterRng s = rng.stream(name);
  std::vector<double> v(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) v[i] = s.uniform(static_cast<uint64_t>(i), -bound, bound);
  return Tensor::from(shape, std::move(v), true);
}

BackboneParams init_backbone(const BackboneConfig& cfg, ParameterStore& store,
                             const std::string& prefix, const CounterRng& rng) {
  cfg.validate();
  BackboneParams p;
  const int64_t d = cfg.dim, h = cfg.gate_hidden;
  for (int64_t l = 0; l < cfg.stages; ++l) {
    std::vector<TdgcLayerParams> layers;
    for (int64_t i = 0; i < cfg.layers_per_stage[static_cast<size_t>(l)]; ++i) {
      std::string base = prefix + ".s" + std::to_string(l) + ".l" + std::to_string(i) + ".";
      TdgcLayerParams lp;
      lp.phi = cfg.activation;
      lp.w_n = store.add(base + "w_n", init_param({d, d}, d, rng, base + "w_n"));
      lp.b_n = store.add(base + "b_n", init_param({1, d}, d, rng, base + "b_n"));
      lp.w_r = store.add(base + "w_r", init_param({d, d}, d, rng, base + "w_r"));
      lp.b_r = store.add(base + "b_r", init_param({1, d}, d, rng, base + "b_r"));
      lp.gate_w1 = store.add(base + "gate_w1", init_param({1, h}, 1, rng, base + "gate_w1"));
      lp.gate_b1 = store.add(base + "gate_b1", init_param({1, h}, 1, rng, base + "gate_b1"));
      lp.gate_w2 = store.add(base + "gate_w2", init_param({h, d}, h, rng, base + "gate_w2"));
      lp.gate_b2 = store.add(base + "gate_b2", init_param({1, d}, h, rng, base + "gate_b2"));
      layers.push_back(std::move(lp));
    }
    p.stages.push_back(std::move(layers));
  }
  return p;
}

}  // namespace hep
