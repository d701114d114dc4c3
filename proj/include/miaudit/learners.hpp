#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaudit/model.hpp"

namespace miaudit {

// Binary learners backing the classifier attacks. All four are implemented
// here so training stays deterministic given the seed; no external ML
// dependency is involved.
enum class Learner {
  linear_margin = 0,       // hinge loss + L2, full-batch gradient descent
  logistic_linear = 1,     // logistic loss, full-batch gradient descent
  boosted_stumps = 2,      // 50 rounds of depth-1 gradient boosting, log loss
  shallow_feedforward = 3, // one hidden layer of 32, trained like the victim models
};

constexpr int kNumLearners = 4;

const char* learner_name(Learner l);

struct Stump {
  int feature = -1;  // -1 encodes a constant stump
  double threshold = 0.0;
  double left_value = 0.0;   // x[feature] <= threshold
  double right_value = 0.0;
};

// Trained binary membership classifier. Inputs are standardized with the
// moments recorded at training time; prediction ties (score exactly zero, or
// equal class probabilities) resolve to class 0, the nonmember side.
struct BinaryClassifier {
  Learner learner = Learner::linear_margin;
  std::vector<double> mean;
  std::vector<double> scale;
  // linear models
  std::vector<double> w;
  double bias = 0.0;
  // boosted stumps
  double f0 = 0.0;
  std::vector<Stump> stumps;
  // shallow feed-forward
  TrainedModel net;

  double decision_score(const std::vector<double>& raw) const;
  int predict(const std::vector<double>& raw) const;
};

// member_feats carry class 1, nonmember_feats class 0. Both must be nonempty
// and of one common width; otherwise the shadow side is degenerate and an
// invalid_argument is thrown.
BinaryClassifier train_binary_classifier(Learner learner,
                                         const std::vector<std::vector<double>>& member_feats,
                                         const std::vector<std::vector<double>>& nonmember_feats,
                                         std::uint64_t seed);

}  // namespace miaudit
