#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hep/optim.hpp"
#include "hep/rng.hpp"
#include "hep/tensor.hpp"
#include "hep/tgraph.hpp"

namespace hep {

enum class Activation { relu, identity };

// One temporal-distance-gated convolution layer. Messages from neighbor j to
// node i are the transformed neighbor features, gated elementwise by an MLP
// of the (stage-normalized) absolute temporal distance and signed by the
// temporal direction; node i adds its own root transform.
struct TdgcLayerParams {
  Tensor w_n, b_n;                          // neighbor transform, D -> D
  Tensor w_r, b_r;                          // root transform, D -> D
  Tensor gate_w1, gate_b1, gate_w2, gate_b2;  // gate MLP, 1 -> H -> D
  Activation phi = Activation::relu;        // neighbor-transform nonlinearity
};

struct BackboneConfig {
  int64_t stages = 3;
  std::vector<int64_t> layers_per_stage = {2, 2, 2};
  int64_t dim = 128;
  double tau = 2.0;
  PoolMode pool_mode = PoolMode::mean;
  int64_t gate_hidden = 16;
  Activation activation = Activation::relu;

  void validate() const;
};

struct BackboneParams {
  std::vector<std::vector<TdgcLayerParams>> stages;
};

// The L per-stage graphs emitted by the backbone, finest first, plus the
// pooling maps between consecutive levels.
struct GraphHierarchy {
  std::vector<TemporalGraph> levels;
  std::vector<PoolingMap> pooling;
};

Tensor tdgc_forward(const TemporalGraph& g, const TdgcLayerParams& params);

GraphHierarchy backbone_forward(const TemporalGraph& g0, const BackboneConfig& cfg,
                                const BackboneParams& params);

// Registers freshly initialized layer parameters under
// "<prefix>.s<stage>.l<layer>.<name>" and returns handles to them.
// Initialization is uniform in +-1/sqrt(fan_in), seeded per parameter name.
BackboneParams init_backbone(const BackboneConfig& cfg, ParameterStore& store,
                             const std::string& prefix, const CounterRng& rng);

// Uniform +-1/sqrt(fan_in) initializer used for all learned matrices.
Tensor init_param(const Shape& shape, int64_t fan_in, const CounterRng& rng,
                  const std::string& name);

}  // namespace hep
