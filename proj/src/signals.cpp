#include "miaudit/signals.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace miaudit {

namespace {

constexpr double kClip = 1e-12;

double clipped(double p) { return std::clamp(p, kClip, 1.0 - kClip); }

double log_clipped(double p) { return std::log(clipped(p)); }

}  // namespace

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::max_prob: return "max_prob";
    case Metric::gt_prob: return "gt_prob";
    case Metric::ce_loss: return "ce_loss";
    case Metric::celoss_variant: return "celoss_variant";
    case Metric::mentr: return "mentr";
    case Metric::entropy: return "entropy";
    case Metric::norm_entropy: return "norm_entropy";
  }
  return "max_prob";
}

Metric metric_from_name(const std::string& name) {
  for (int i = 0; i < kNumMetrics; ++i)
    if (name == metric_name(static_cast<Metric>(i))) return static_cast<Metric>(i);
  throw std::invalid_argument("unknown metric: " + name);
}

double get_metric(const SignalVector& sv, Metric m) {
  switch (m) {
    case Metric::max_prob: return sv.max_prob;
    case Metric::gt_prob: return sv.gt_prob;
    case Metric::ce_loss: return sv.ce_loss;
    case Metric::celoss_variant: return sv.celoss_variant;
    case Metric::mentr: return sv.mentr;
    case Metric::entropy: return sv.entropy;
    case Metric::norm_entropy: return sv.norm_entropy;
  }
  return sv.max_prob;
}

SignalVector extract_signals(const TrainedModel& model,
                             const std::vector<double>& features, int point_id,
                             int label) {
  if (label < 0 || label >= model.n_classes)
    throw std::invalid_argument("extract_signals: label out of range");
  SignalVector sv;
  sv.point_id = point_id;
  sv.label = label;
  sv.prob = predict_proba(model, features);
  const auto& p = sv.prob;
  std::size_t y = static_cast<std::size_t>(label);

  sv.max_prob = *std::max_element(p.begin(), p.end());
  sv.gt_prob = p[y];
  sv.ce_loss = -log_clipped(p[y]);

  // cross-entropy over the clipped, renormalized vector
  double clip_sum = 0.0;
  for (double v : p) clip_sum += clipped(v);
  sv.celoss_variant = -std::log(clipped(p[y]) / clip_sum);

  double mentr = -(1.0 - p[y]) * log_clipped(p[y]);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (i != y) mentr -= p[i] * log_clipped(1.0 - p[i]);
  sv.mentr = mentr;

  double ent = 0.0;
  for (double v : p) ent -= v * log_clipped(v);
  sv.entropy = ent;
  sv.norm_entropy = ent / std::log(static_cast<double>(model.n_classes));
  return sv;
}

SignalVector extract_signals_point(const TrainedModel& model, const Corpus& corpus,
                                   int point_id, int label) {
  return extract_signals(model, corpus.point(point_id).features, point_id, label);
}

std::unordered_map<int, int> relabel(const std::vector<int>& point_ids,
                                     const Corpus& corpus,
                                     const TrainedModel& model) {
  std::unordered_map<int, int> labels;
  labels.reserve(point_ids.size());
  for (int id : point_ids)
    labels[id] = predict_class(model, corpus.point(id).features);
  return labels;
}

}  // namespace miaudit
