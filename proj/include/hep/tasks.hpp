#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hep/tensor.hpp"

namespace hep {

enum class TaskKind { recognition, state_change, keyframe, anticipation, localization };

// One of the five task archetypes with its label space. Fine-grained tasks
// consume only the finest backbone level; localization consumes all of them.
struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::recognition;
  int64_t verbs = 0;    // recognition, anticipation
  int64_t nouns = 0;    // recognition, anticipation
  int64_t classes = 0;  // localization
  int64_t horizon = 0;  // anticipation
  bool multi_stage = false;

  void validate() const;
};

TaskKind task_kind_from_id(const std::string& id);

// Temporally grounded ground truth; payload fields are kind-specific.
struct SegmentAnnotation {
  double start = 0.0;
  double end = 0.0;
  int64_t verb = -1;
  int64_t noun = -1;
  int flag = -1;          // state change
  double keyframe = 0.0;  // keyframe time within [start, end]
  std::vector<std::pair<int64_t, int64_t>> future;  // next-horizon (verb, noun) pairs
  int64_t cls = -1;       // localization class
};

// Two affine D->D layers with a rectifier between.
struct NeckParams {
  Tensor w1, b1, w2, b2;
};

Tensor neck_forward(const Tensor& x, const NeckParams& neck);

struct HeadParams {
  Tensor verb_w, verb_b, noun_w, noun_b;  // recognition
  Tensor w, b;                            // state_change (D->2), keyframe (D->1)
  Tensor cls_w, cls_b, off_w, off_b;      // localization class scores + offsets
  std::vector<Tensor> step_verb_w, step_verb_b, step_noun_w, step_noun_b;  // anticipation
};

struct HeadOutput {
  Tensor verb_scores, noun_scores;               // recognition
  Tensor scores;                                 // state_change / keyframe / localization classes
  Tensor offsets;                                // localization, softplus-mapped (non-negative)
  std::vector<std::pair<Tensor, Tensor>> steps;  // anticipation (verb, noun) score pairs
};

HeadOutput head_forward(const TaskSpec& spec, const Tensor& features, const HeadParams& head);

// Mean of the rows whose timestamp lies strictly inside (s, e). When no row
// does, falls back to the single node nearest to the midpoint and reports it.
struct AlignResult {
  Tensor feature;  // {1, D}
  bool fallback = false;
  int64_t fallback_node = -1;
};

AlignResult align(const Tensor& xk, const std::vector<double>& pe, double s, double e);

// Node indices with s < pe < e, or the nearest-midpoint singleton fallback.
struct WindowNodes {
  std::vector<int64_t> nodes;
  bool fallback = false;
};
WindowNodes window_nodes(const std::vector<double>& pe, double s, double e);

// --- localization decoding ----------------------------------------------------

struct Detection {
  double t_start = 0.0;
  double t_end = 0.0;
  int64_t cls = 0;
  double score = 0.0;
};

double temporal_iou(double s1, double e1, double s2, double e2);

// Candidates are per-node per-class sigmoid scores at or above
// score_threshold, with intervals (pe - left, pe + right); duplicates are
// removed per class by greedy hard NMS (suppress at tIoU >= nms_iou).
std::vector<Detection> decode_localization(const Tensor& class_scores, const Tensor& offsets,
                                           const std::vector<double>& pe, double score_threshold,
                                           double nms_iou);

// --- metrics -------------------------------------------------------------------

struct MetricRecord {
  std::vector<std::pair<std::string, double>> entries;

  void put(const std::string& key, double value) { entries.emplace_back(key, value); }
  double get(const std::string& key) const;
  bool has(const std::string& key) const;
};

int64_t edit_distance(const std::vector<int64_t>& a, const std::vector<int64_t>& b);

struct LocalizedInterval {
  std::string video;
  double t_start = 0.0;
  double t_end = 0.0;
  int64_t cls = 0;
  double score = 0.0;
};

// Predictions and ground truth for one task over an evaluation split.
// Only the fields for the task's kind are consulted.
struct TaskEvalData {
  std::vector<std::pair<int64_t, int64_t>> rec_pred, rec_true;        // recognition
  std::vector<int> sc_pred, sc_true;                                  // state change
  std::vector<double> kf_pred, kf_true;                               // keyframe times
  std::vector<std::vector<int64_t>> ant_verb_pred, ant_verb_true;     // anticipation
  std::vector<std::vector<int64_t>> ant_noun_pred, ant_noun_true;
  std::vector<LocalizedInterval> loc_pred, loc_true;                  // localization
};

MetricRecord metric(const TaskSpec& spec, const TaskEvalData& data,
                    const std::vector<double>& tiou_grid = {0.1, 0.2, 0.3, 0.4, 0.5});

// Interpolated average precision averaged over classes and tIoU thresholds,
// in percent.
double localization_map(const std::vector<LocalizedInterval>& predictions,
                        const std::vector<LocalizedInterval>& truth,
                        const std::vector<double>& tiou_grid);

// argmax with ties broken toward the lower index
int64_t argmax_index(const double* row, int64_t n);

}  // namespace hep
