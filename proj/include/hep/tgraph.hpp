#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hep/tensor.hpp"

namespace hep {

// Temporal video graph: one node per fixed-length segment, timestamps in
// seconds, and an edge between nodes whose temporal distance is within the
// stage threshold. Edges are directed and stored in both orientations,
// sorted by (dst, src).
struct TemporalGraph {
  Tensor x;                // {N, D} node features
  std::vector<double> pe;  // per-node timestamps (midpoints), strictly increasing
  std::vector<std::pair<int64_t, int64_t>> edges;  // (src, dst)
  int64_t stage = 0;
  double tau = 0.0;  // base (stage-0) distance threshold in seconds

  int64_t num_nodes() const { return static_cast<int64_t>(pe.size()); }
  int64_t width() const { return x.shape().size() == 2 ? x.shape()[1] : 0; }
};

enum class PoolMode { mean, max };

// child node -> half-open window [begin, end) of parent node indices.
struct PoolingMap {
  std::vector<std::pair<int64_t, int64_t>> windows;
  PoolMode mode = PoolMode::mean;
};

// Effective edge threshold at stage l: tau * 2^l. Timestamps stay in original
// seconds; scaling the threshold keeps neighborhood cardinality roughly
// constant as the graph coarsens.
double stage_edge_threshold(double tau, int64_t stage);

// Stage-0 graph over the given features/timestamps. Edge (i,j), i != j,
// exists iff |pe_i - pe_j| <= tau.
TemporalGraph build_graph(const Tensor& features, const std::vector<double>& timestamps,
                          double tau);

// Reduces consecutive windows of `stride` nodes (the final window may be
// shorter); child pe is the mean of its parents' pe; edges are rebuilt with
// the child stage's threshold. A single-node graph is returned unchanged
// with an identity map.
std::pair<TemporalGraph, PoolingMap> pool(const TemporalGraph& g, PoolMode mode,
                                          int64_t stride = 2);

// Edge list for the given timestamps under threshold `thr`, both
// orientations, sorted by (dst, src).
std::vector<std::pair<int64_t, int64_t>> build_edges(const std::vector<double>& pe, double thr);

}  // namespace hep
