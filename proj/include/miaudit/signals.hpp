#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "miaudit/model.hpp"

namespace miaudit {

// The seven scalar metrics computed from a probability vector and a label.
// Order here is the canonical registry order.
enum class Metric {
  max_prob = 0,
  gt_prob = 1,
  ce_loss = 2,
  celoss_variant = 3,
  mentr = 4,
  entropy = 5,
  norm_entropy = 6,
};

constexpr int kNumMetrics = 7;

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

// Per-point attack inputs extracted from one model. prob is the full softmax
// vector; the scalars are derived from it and from the reference label.
struct SignalVector {
  int point_id = 0;
  int label = 0;
  std::vector<double> prob;
  double max_prob = 0.0;
  double gt_prob = 0.0;
  double ce_loss = 0.0;
  double celoss_variant = 0.0;
  double mentr = 0.0;
  double entropy = 0.0;
  double norm_entropy = 0.0;
};

double get_metric(const SignalVector& sv, Metric m);

// Probabilities are clamped into [1e-12, 1 - 1e-12] before every logarithm,
// so signals stay finite even for one-hot outputs. Natural logs throughout.
SignalVector extract_signals(const TrainedModel& model,
                             const std::vector<double>& features, int point_id,
                             int label);

SignalVector extract_signals_point(const TrainedModel& model, const Corpus& corpus,
                                   int point_id, int label);

// New labels for the given points: the model's argmax prediction (ties to the
// lowest class index). Keyed by point id.
std::unordered_map<int, int> relabel(const std::vector<int>& point_ids,
                                     const Corpus& corpus,
                                     const TrainedModel& model);

}  // namespace miaudit
