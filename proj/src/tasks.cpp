#include "hep/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hep/error.hpp"

namespace hep {

void TaskSpec::validate() const {
  if (id.empty()) throw ValidationError("task id must not be empty");
  switch (kind) {
    case TaskKind::recognition:
      if (verbs < 1 || nouns < 1)
        throw ValidationError("task " + id + ": recognition needs verb and noun counts");
      break;
    case TaskKind::state_change:
      break;
    case TaskKind::keyframe:
      break;
    case TaskKind::anticipation:
      if (verbs < 1 || nouns < 1 || horizon < 1)
        throw ValidationError("task " + id + ": anticipation needs verb/noun counts and a horizon");
      break;
    case TaskKind::localization:
      if (classes < 1) throw ValidationError("task " + id + ": localization needs a class count");
      break;
  }
}

TaskKind task_kind_from_id(const std::string& id) {
  if (id == "ar") return TaskKind::recognition;
  if (id == "oscc") return TaskKind::state_change;
  if (id == "pnr") return TaskKind::keyframe;
  if (id == "lta") return TaskKind::anticipation;
  if (id == "mq") return TaskKind::localization;
  throw ValidationError("unknown task id: " + id);
}

Tensor neck_forward(const Tensor& x, const NeckParams& neck) {
  if (x.shape().size() != 2 || x.shape()[1] != neck.w1.shape()[0])
    throw DimensionError("neck_forward: input width does not match neck width");
  Tensor hidden = relu(add(matmul(x, neck.w1), neck.b1));
  return add(matmul(hidden, neck.w2), neck.b2);
}

HeadOutput head_forward(const TaskSpec& spec, const Tensor& features, const HeadParams& head) {
  HeadOutput out;
  switch (spec.kind) {
    case TaskKind::recognition:
      out.verb_scores = add(matmul(features, head.verb_w), head.verb_b);
      out.noun_scores = add(matmul(features, head.noun_w), head.noun_b);
      break;
    case TaskKind::state_change:
      out.scores = add(matmul(features, head.w), head.b);
      break;
    case TaskKind::keyframe:
      out.scores = add(matmul(features, head.w), head.b);
      break;
    case TaskKind::anticipation: {
      if (static_cast<int64_t>(head.step_verb_w.size()) != spec.horizon)
        throw UsageError("head_forward: anticipation head does not match the task horizon");
      for (int64_t z = 0; z < spec.horizon; ++z) {
        out.steps.emplace_back(
            add(matmul(features, head.step_verb_w[static_cast<size_t>(z)]),
                head.step_verb_b[static_cast<size_t>(z)]),
            add(matmul(features, head.step_noun_w[static_cast<size_t>(z)]),
                head.step_noun_b[static_cast<size_t>(z)]));
      }
      break;
    }
    case TaskKind::localization:
      out.scores = add(matmul(features, head.cls_w), head.cls_b);
      out.offsets = softplus(add(matmul(features, head.off_w), head.off_b));
      break;
  }
  return out;
}

WindowNodes window_nodes(const std::vector<double>& pe, double s, double e) {
  if (!(s < e)) throw ValidationError("window: start must precede end");
  WindowNodes w;
  for (size_t i = 0; i < pe.size(); ++i)
    if (s < pe[i] && pe[i] < e) w.nodes.push_back(static_cast<int64_t>(i));
  if (w.nodes.empty()) {
    const double mid = 0.5 * (s + e);
    int64_t best = 0;
    double best_d = std::fabs(pe[0] - mid);
    for (size_t i = 1; i < pe.size(); ++i) {
      double d = std::fabs(pe[i] - mid);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int64_t>(i);
      }
    }
    w.nodes.push_back(best);
    w.fallback = true;
  }
  return w;
}

AlignResult align(const Tensor& xk, const std::vector<double>& pe, double s, double e) {
  if (xk.shape().size() != 2 || xk.shape()[0] != static_cast<int64_t>(pe.size()))
    throw DimensionError("align: feature rows do not match timestamp count");
  WindowNodes w = window_nodes(pe, s, e);
  AlignResult res;
  res.fallback = w.fallback;
  if (w.fallback) res.fallback_node = w.nodes[0];
  Tensor rows = gather_rows(xk, w.nodes);
  std::vector<int64_t> ids(w.nodes.size(), 0);
  res.feature = segment_mean(rows, ids, 1);
  return res;
}

double temporal_iou(double s1, double e1, double s2, double e2) {
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double uni = (e1 - s1) + (e2 - s2) - inter;
  if (uni > 0.0) return inter / uni;
  return (s1 == s2 && e1 == e2) ? 1.0 : 0.0;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.cls != b.cls) return a.cls < b.cls;
  if (a.t_start != b.t_start) return a.t_start < b.t_start;
  return a.t_end < b.t_end;
}

}  // namespace

std::vector<Detection> decode_localization(const Tensor& class_scores, const Tensor& offsets,
                                           const std::vector<double>& pe, double score_threshold,
                                           double nms_iou) {
  if (!(score_threshold > 0.0 && score_threshold < 1.0))
    throw ValidationError("decode_localization: score threshold must lie in (0,1)");
  if (!(nms_iou > 0.0 && nms_iou < 1.0))
    throw ValidationError("decode_localization: nms threshold must lie in (0,1)");
  const int64_t n = class_scores.shape()[0];
  const int64_t classes = class_scores.shape()[1];
  if (offsets.shape()[0] != n || offsets.shape()[1] != 2)
    throw DimensionError("decode_localization: offsets must be {N,2}");
  if (static_cast<int64_t>(pe.size()) != n)
    throw DimensionError("decode_localization: timestamp count does not match node count");

  std::vector<Detection> candidates;
  for (int64_t i = 0; i < n; ++i) {
    const double left = offsets.at(i, 0);
    const double right = offsets.at(i, 1);
    for (int64_t c = 0; c < classes; ++c) {
      const double p = sigmoid(class_scores.at(i, c));
      if (p >= score_threshold)
        candidates.push_back({pe[static_cast<size_t>(i)] - left,
                              pe[static_cast<size_t>(i)] + right, c, p});
    }
  }
  std::sort(candidates.begin(), candidates.end(), detection_order);

  std::vector<Detection> kept;
  for (const Detection& cand : candidates) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.cls != cand.cls) continue;
      if (temporal_iou(k.t_start, k.t_end, cand.t_start, cand.t_end) >= nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

double MetricRecord::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw NotFoundError("metric record has no entry: " + key);
}

bool MetricRecord::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

int64_t edit_distance(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
  const size_t m = a.size(), n = b.size();
  std::vector<int64_t> row(n + 1);
  for (size_t j = 0; j <= n; ++j) row[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= m; ++i) {
    int64_t diag = row[0];
    row[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= n; ++j) {
      int64_t old = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = old;
    }
  }
  return row[n];
}

int64_t argmax_index(const double* row, int64_t n) {
  int64_t best = 0;
  for (int64_t i = 1; i < n; ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

namespace {

bool interval_order(const LocalizedInterval& a, const LocalizedInterval& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video != b.video) return a.video < b.video;
  if (a.t_start != b.t_start) return a.t_start < b.t_start;
  return a.t_end < b.t_end;
}

// Interpolated AP for one class at one tIoU threshold.
double average_precision(std::vector<LocalizedInterval> preds,
                         const std::vector<const LocalizedInterval*>& gts, double thr) {
  if (gts.empty()) return 0.0;
  std::sort(preds.begin(), preds.end(), interval_order);
  std::vector<bool> matched(gts.size(), false);
  std::vector<double> precision, recall;
  int64_t tp = 0;
  for (size_t k = 0; k < preds.size(); ++k) {
    const auto& p = preds[k];
    double best_iou = -1.0;
    int64_t best_gt = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g]->video != p.video) continue;
      double iou = temporal_iou(p.t_start, p.t_end, gts[g]->t_start, gts[g]->t_end);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int64_t>(g);
      }
    }
    if (best_gt >= 0 && best_iou >= thr) {
      matched[static_cast<size_t>(best_gt)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  // All-point interpolation: running max of precision from the right.
  double ap = 0.0, prev_recall = 0.0, pmax = 0.0;
  std::vector<double> pinterp(precision.size());
  for (size_t k = precision.size(); k-- > 0;) {
    pmax = std::max(pmax, precision[k]);
    pinterp[k] = pmax;
  }
  for (size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * pinterp[k];
    prev_recall = recall[k];
  }
  return ap;
}

}  // namespace

double localization_map(const std::vector<LocalizedInterval>& predictions,
                        const std::vector<LocalizedInterval>& truth,
                        const std::vector<double>& tiou_grid) {
  if (truth.empty()) throw ValidationError("localization metric: empty ground truth");
  std::map<int64_t, std::vector<const LocalizedInterval*>> gt_by_class;
  for (const auto& g : truth) gt_by_class[g.cls].push_back(&g);
  std::map<int64_t, std::vector<LocalizedInterval>> pred_by_class;
  for (const auto& p : predictions) pred_by_class[p.cls].push_back(p);

  double total = 0.0;
  for (double thr : tiou_grid) {
    double sum_ap = 0.0;
    for (const auto& [cls, gts] : gt_by_class) {
      auto it = pred_by_class.find(cls);
      sum_ap += average_precision(
          it == pred_by_class.end() ? std::vector<LocalizedInterval>{} : it->second, gts, thr);
    }
    total += sum_ap / static_cast<double>(gt_by_class.size());
  }
  return 100.0 * total / static_cast<double>(tiou_grid.size());
}

MetricRecord metric(const TaskSpec& spec, const TaskEvalData& data,
                    const std::vector<double>& tiou_grid) {
  MetricRecord rec;
  switch (spec.kind) {
    case TaskKind::recognition: {
      if (data.rec_pred.size() != data.rec_true.size() || data.rec_true.empty())
        throw ValidationError("recognition metric: prediction/truth cardinality mismatch");
      double verb_hits = 0, noun_hits = 0;
      for (size_t i = 0; i < data.rec_pred.size(); ++i) {
        verb_hits += data.rec_pred[i].first == data.rec_true[i].first;
        noun_hits += data.rec_pred[i].second == data.rec_true[i].second;
      }
      const double n = static_cast<double>(data.rec_pred.size());
      rec.put("top1_verb", 100.0 * verb_hits / n);
      rec.put("top1_noun", 100.0 * noun_hits / n);
      break;
    }
    case TaskKind::state_change: {
      if (data.sc_pred.size() != data.sc_true.size() || data.sc_true.empty())
        throw ValidationError("state-change metric: prediction/truth cardinality mismatch");
      double hits = 0;
      for (size_t i = 0; i < data.sc_pred.size(); ++i) hits += data.sc_pred[i] == data.sc_true[i];
      rec.put("accuracy", 100.0 * hits / static_cast<double>(data.sc_pred.size()));
      break;
    }
    case TaskKind::keyframe: {
      if (data.kf_pred.size() != data.kf_true.size() || data.kf_true.empty())
        throw ValidationError("keyframe metric: prediction/truth cardinality mismatch");
      double err = 0;
      for (size_t i = 0; i < data.kf_pred.size(); ++i)
        err += std::fabs(data.kf_pred[i] - data.kf_true[i]);
      rec.put("error_s", err / static_cast<double>(data.kf_pred.size()));
      break;
    }
    case TaskKind::anticipation: {
      if (data.ant_verb_pred.size() != data.ant_verb_true.size() ||
          data.ant_noun_pred.size() != data.ant_noun_true.size() || data.ant_verb_true.empty())
        throw ValidationError("anticipation metric: prediction/truth cardinality mismatch");
      double verb_ed = 0, noun_ed = 0;
      for (size_t i = 0; i < data.ant_verb_pred.size(); ++i) {
        verb_ed +=
            static_cast<double>(edit_distance(data.ant_verb_pred[i], data.ant_verb_true[i])) /
            static_cast<double>(spec.horizon);
        noun_ed +=
            static_cast<double>(edit_distance(data.ant_noun_pred[i], data.ant_noun_true[i])) /
            static_cast<double>(spec.horizon);
      }
      const double n = static_cast<double>(data.ant_verb_pred.size());
      rec.put("ed_verb", verb_ed / n);
      rec.put("ed_noun", noun_ed / n);
      break;
    }
    case TaskKind::localization: {
      rec.put("map", localization_map(data.loc_pred, data.loc_true, tiou_grid));
      break;
    }
  }
  return rec;
}

}  // namespace hep
