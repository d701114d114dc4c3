#include "miaudit/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace miaudit {

namespace {

constexpr int kGdIters = 400;
constexpr double kHingeLr = 0.1;
constexpr double kHingeL2 = 1e-3;
constexpr double kLogisticLr = 1.0;
constexpr int kBoostRounds = 50;
constexpr double kShrinkage = 0.1;
constexpr double kLeafClamp = 10.0;

std::vector<std::vector<double>> standardized(
    const std::vector<std::vector<double>>& member_feats,
    const std::vector<std::vector<double>>& nonmember_feats,
    std::vector<double>& mean, std::vector<double>& scale) {
  std::size_t dim = member_feats.front().size();
  std::size_t n = member_feats.size() + nonmember_feats.size();
  mean.assign(dim, 0.0);
  scale.assign(dim, 0.0);
  auto accumulate_mean = [&](const std::vector<std::vector<double>>& rows) {
    for (const auto& row : rows) {
      if (row.size() != dim)
        throw std::invalid_argument("attack features have inconsistent width");
      for (std::size_t k = 0; k < dim; ++k) mean[k] += row[k];
    }
  };
  accumulate_mean(member_feats);
  accumulate_mean(nonmember_feats);
  for (auto& m : mean) m /= static_cast<double>(n);
  auto accumulate_var = [&](const std::vector<std::vector<double>>& rows) {
    for (const auto& row : rows)
      for (std::size_t k = 0; k < dim; ++k) {
        double d = row[k] - mean[k];
        scale[k] += d * d;
      }
  };
  accumulate_var(member_feats);
  accumulate_var(nonmember_feats);
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;  // constant feature, leave it centered
  }
  std::vector<std::vector<double>> x;
  x.reserve(n);
  auto push = [&](const std::vector<std::vector<double>>& rows) {
    for (const auto& row : rows) {
      std::vector<double> v(dim);
      for (std::size_t k = 0; k < dim; ++k) v[k] = (row[k] - mean[k]) / scale[k];
      x.push_back(std::move(v));
    }
  };
  push(member_feats);
  push(nonmember_feats);
  return x;
}

void train_linear(BinaryClassifier& clf, const std::vector<std::vector<double>>& x,
                  const std::vector<int>& y01, bool hinge) {
  std::size_t n = x.size();
  std::size_t dim = x.front().size();
  clf.w.assign(dim, 0.0);
  clf.bias = 0.0;
  std::vector<double> gw(dim);
  double lr = hinge ? kHingeLr : kLogisticLr;
  for (int it = 0; it < kGdIters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = y01[i] ? 1.0 : -1.0;
      double z = clf.bias;
      for (std::size_t k = 0; k < dim; ++k) z += clf.w[k] * x[i][k];
      double coef;
      if (hinge) {
        coef = s * z < 1.0 ? -s : 0.0;
      } else {
        coef = -s / (1.0 + std::exp(s * z));
      }
      if (coef != 0.0) {
        for (std::size_t k = 0; k < dim; ++k) gw[k] += coef * x[i][k];
        gb += coef;
      }
    }
    double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < dim; ++k) {
      double g = gw[k] * inv_n + (hinge ? kHingeL2 * clf.w[k] : 0.0);
      clf.w[k] -= lr * g;
    }
    clf.bias -= lr * gb * inv_n;
  }
}

void train_stumps(BinaryClassifier& clf, const std::vector<std::vector<double>>& x,
                  const std::vector<int>& y01) {
  std::size_t n = x.size();
  std::size_t dim = x.front().size();
  double pos = static_cast<double>(std::accumulate(y01.begin(), y01.end(), 0));
  double prior = std::clamp(pos / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  clf.f0 = std::log(prior / (1.0 - prior));

  // per-feature sort orders are reused every round
  std::vector<std::vector<int>> order(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    order[f].resize(n);
    std::iota(order[f].begin(), order[f].end(), 0);
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](int a, int b) { return x[static_cast<std::size_t>(a)][f] < x[static_cast<std::size_t>(b)][f]; });
  }

  std::vector<double> score(n, clf.f0);
  std::vector<double> resid(n), hess(n);
  auto leaf = [](double g, double h) {
    return std::clamp(g / (h + 1e-12), -kLeafClamp, kLeafClamp);
  };
  for (int round = 0; round < kBoostRounds; ++round) {
    double g_total = 0.0, h_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double p = 1.0 / (1.0 + std::exp(-score[i]));
      resid[i] = static_cast<double>(y01[i]) - p;
      hess[i] = std::max(p * (1.0 - p), 1e-12);
      g_total += resid[i];
      h_total += hess[i];
    }
    double base = g_total * g_total / static_cast<double>(n);
    double best_gain = base + 1e-12;
    int best_f = -1;
    std::size_t best_k = 0;
    double best_threshold = 0.0;
    for (std::size_t f = 0; f < dim; ++f) {
      double gl = 0.0;
      for (std::size_t k = 1; k < n; ++k) {
        int prev = order[f][k - 1];
        gl += resid[static_cast<std::size_t>(prev)];
        double v_prev = x[static_cast<std::size_t>(prev)][f];
        double v_next = x[static_cast<std::size_t>(order[f][k])][f];
        if (!(v_prev < v_next)) continue;
        double gr = g_total - gl;
        double gain = gl * gl / static_cast<double>(k) +
                      gr * gr / static_cast<double>(n - k);
        if (gain > best_gain) {
          best_gain = gain;
          best_f = static_cast<int>(f);
          best_k = k;
          best_threshold = 0.5 * (v_prev + v_next);
        }
      }
    }
    Stump stump;
    if (best_f < 0) {
      stump.feature = -1;
      stump.left_value = stump.right_value = kShrinkage * leaf(g_total, h_total);
    } else {
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k < best_k; ++k) {
        int i = order[static_cast<std::size_t>(best_f)][k];
        gl += resid[static_cast<std::size_t>(i)];
        hl += hess[static_cast<std::size_t>(i)];
      }
      stump.feature = best_f;
      stump.threshold = best_threshold;
      stump.left_value = kShrinkage * leaf(gl, hl);
      stump.right_value = kShrinkage * leaf(g_total - gl, h_total - hl);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      if (stump.feature < 0)
        v = stump.left_value;
      else
        v = x[i][static_cast<std::size_t>(stump.feature)] <= stump.threshold
                ? stump.left_value
                : stump.right_value;
      score[i] += v;
    }
    clf.stumps.push_back(stump);
  }
}

void train_mlp(BinaryClassifier& clf, const std::vector<std::vector<double>>& x,
               const std::vector<int>& y01, std::uint64_t seed) {
  Corpus c;
  c.n_classes = 2;
  c.dim = static_cast<int>(x.front().size());
  c.points.resize(x.size());
  std::vector<int> ids(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    c.points[i].id = static_cast<int>(i);
    c.points[i].features = x[i];
    c.points[i].label = y01[i];
    ids[i] = static_cast<int>(i);
  }
  TrainSpec spec;
  spec.hidden_widths = {32};
  spec.activation = Activation::tanh;
  spec.epochs = 40;
  spec.batch_size = 64;
  spec.learning_rate = 3e-3;
  spec.weight_decay = 0.0;
  spec.seed = seed;
  clf.net = train(c, ids, {}, spec, ModelRole::attack, -1);
}

}  // namespace

const char* learner_name(Learner l) {
  switch (l) {
    case Learner::linear_margin: return "linear_margin";
    case Learner::logistic_linear: return "logistic_linear";
    case Learner::boosted_stumps: return "boosted_stumps";
    case Learner::shallow_feedforward: return "shallow_feedforward";
  }
  return "linear_margin";
}

double BinaryClassifier::decision_score(const std::vector<double>& raw) const {
  if (raw.size() != mean.size())
    throw std::invalid_argument("attack feature width mismatch");
  std::vector<double> x(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) x[k] = (raw[k] - mean[k]) / scale[k];
  switch (learner) {
    case Learner::linear_margin:
    case Learner::logistic_linear: {
      double z = bias;
      for (std::size_t k = 0; k < x.size(); ++k) z += w[k] * x[k];
      return z;
    }
    case Learner::boosted_stumps: {
      double f = f0;
      for (const auto& s : stumps) {
        if (s.feature < 0)
          f += s.left_value;
        else
          f += x[static_cast<std::size_t>(s.feature)] <= s.threshold ? s.left_value
                                                                     : s.right_value;
      }
      return f;
    }
    case Learner::shallow_feedforward: {
      auto p = predict_proba(net, x);
      return p[1] - p[0];
    }
  }
  return 0.0;
}

int BinaryClassifier::predict(const std::vector<double>& raw) const {
  // exact zero ties fall to the nonmember class
  return decision_score(raw) > 0.0 ? 1 : 0;
}

BinaryClassifier train_binary_classifier(
    Learner learner, const std::vector<std::vector<double>>& member_feats,
    const std::vector<std::vector<double>>& nonmember_feats, std::uint64_t seed) {
  if (member_feats.empty() || nonmember_feats.empty())
    throw std::invalid_argument(
        "degenerate shadow side: need both member and nonmember examples");
  BinaryClassifier clf;
  clf.learner = learner;
  auto x = standardized(member_feats, nonmember_feats, clf.mean, clf.scale);
  std::vector<int> y01(x.size(), 0);
  for (std::size_t i = 0; i < member_feats.size(); ++i) y01[i] = 1;
  switch (learner) {
    case Learner::linear_margin:
      train_linear(clf, x, y01, /*hinge=*/true);
      break;
    case Learner::logistic_linear:
      train_linear(clf, x, y01, /*hinge=*/false);
      break;
    case Learner::boosted_stumps:
      train_stumps(clf, x, y01);
      break;
    case Learner::shallow_feedforward:
      train_mlp(clf, x, y01, seed);
      break;
  }
  return clf;
}

}  // namespace miaudit
