#include "hep/tgraph.hpp"

#include <algorithm>
#include <cmath>

#include "hep/error.hpp"

namespace hep {

double stage_edge_threshold(double tau, int64_t stage) {
  if (stage < 0) throw ValidationError("stage must be non-negative");
  return tau * std::ldexp(1.0, static_cast<int>(stage));
}

std::vector<std::pair<int64_t, int64_t>> build_edges(const std::vector<double>& pe, double thr) {
  const int64_t n = static_cast<int64_t>(pe.size());
  std::vector<std::pair<int64_t, int64_t>> edges;  // (src, dst) sorted by (dst, src)
  int64_t lo = 0, hi = 0;
  for (int64_t i = 0; i < n; ++i) {
    while (lo < i && pe[i] - pe[lo] > thr) ++lo;
    if (hi < i + 1) hi = i + 1;
    while (hi < n && pe[hi] - pe[i] <= thr) ++hi;
    for (int64_t j = lo; j < hi; ++j) {
      if (j != i) edges.emplace_back(j, i);
    }
  }
  return edges;
}

TemporalGraph build_graph(const Tensor& features, const std::vector<double>& timestamps,
                          double tau) {
  if (timestamps.empty()) throw ValidationError("build_graph: empty timestamp list");
  if (features.shape().size() != 2)
    throw ValidationError("build_graph: features must be a rank-2 tensor");
  if (features.shape()[0] != static_cast<int64_t>(timestamps.size()))
    throw ValidationError("build_graph: " + std::to_string(features.shape()[0]) +
                          " feature rows for " + std::to_string(timestamps.size()) +
                          " timestamps");
  if (!(tau > 0.0)) throw ValidationError("build_graph: tau must be positive");
  for (size_t i = 1; i < timestamps.size(); ++i) {
    if (!(timestamps[i] > timestamps[i - 1]))
      throw ValidationError("build_graph: timestamps must be strictly increasing at index " +
                            std::to_string(i));
  }
  TemporalGraph g;
  g.x = features;
  g.pe = timestamps;
  g.tau = tau;
  g.stage = 0;
  g.edges = build_edges(g.pe, tau);
  return g;
}

std::pair<TemporalGraph, PoolingMap> pool(const TemporalGraph& g, PoolMode mode, int64_t stride) {
  if (stride < 2) throw ValidationError("pool: stride must be at least 2");
  const int64_t n = g.num_nodes();
  if (n <= 1) {
    PoolingMap identity;
    identity.mode = mode;
    if (n == 1) identity.windows.emplace_back(0, 1);
    return {g, identity};
  }

  const int64_t children = (n + stride - 1) / stride;
  PoolingMap map;
  map.mode = mode;
  std::vector<int64_t> ids(static_cast<size_t>(n));
  std::vector<double> child_pe(static_cast<size_t>(children), 0.0);
  for (int64_t c = 0; c < children; ++c) {
    int64_t b = c * stride;
    int64_t e = std::min(n, b + stride);
    map.windows.emplace_back(b, e);
    double acc = 0.0;
    for (int64_t i = b; i < e; ++i) {
      ids[static_cast<size_t>(i)] = c;
      acc += g.pe[static_cast<size_t>(i)];
    }
    child_pe[static_cast<size_t>(c)] = acc / static_cast<double>(e - b);
  }

  TemporalGraph out;
  out.x = mode == PoolMode::mean ? segment_mean(g.x, ids, children)
                                 : segment_max(g.x, ids, children);
  out.pe = std::move(child_pe);
  out.stage = g.stage + 1;
  out.tau = g.tau;
  out.edges = build_edges(out.pe, stage_edge_threshold(g.tau, out.stage));
  return {std::move(out), std::move(map)};
}

}  // namespace hep
