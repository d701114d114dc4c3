#include "miaudit/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "miaudit/io.hpp"
#include "miaudit/rng.hpp"

namespace miaudit {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

struct AdamState {
  std::vector<double> m_w, v_w, m_b, v_b;
};

void validate_spec(const TrainSpec& spec) {
  if (spec.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (spec.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(spec.learning_rate >= 0.0))
    throw std::invalid_argument("learning_rate must be >= 0");
  if (!(spec.weight_decay >= 0.0 && spec.weight_decay < 1.0))
    throw std::invalid_argument("weight_decay must be in [0, 1)");
  for (int h : spec.hidden_widths)
    if (h < 1) throw std::invalid_argument("hidden layer widths must be >= 1");
}

void softmax_inplace(std::vector<double>& z) {
  double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// forward pass keeping post-activation values per layer; acts[0] is the input
void forward_layers(const TrainedModel& model, const std::vector<double>& x,
                    std::vector<std::vector<double>>& acts) {
  acts.resize(model.layers.size() + 1);
  acts[0] = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    auto& out = acts[l + 1];
    out.assign(static_cast<std::size_t>(layer.out), 0.0);
    const auto& in = acts[l];
    for (int r = 0; r < layer.out; ++r) {
      double z = layer.b[static_cast<std::size_t>(r)];
      const double* wr = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
      for (int c = 0; c < layer.in; ++c) z += wr[c] * in[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(r)] = z;
    }
    bool is_output = l + 1 == model.layers.size();
    if (!is_output) {
      if (model.spec.activation == Activation::tanh)
        for (auto& v : out) v = std::tanh(v);
      else
        for (auto& v : out) v = v > 0.0 ? v : 0.0;
    }
  }
}

// Backprop for one sample. Accumulates the cross-entropy gradient into
// grad_w / grad_b (not scaled by batch size) and returns the sample loss.
// Scratch buffers are caller-owned so batch loops do not reallocate.
double sample_loss_grad(const TrainedModel& model, const std::vector<double>& x,
                        int y, std::vector<std::vector<double>>& acts,
                        std::vector<double>& delta,
                        std::vector<double>& delta_prev,
                        std::vector<std::vector<double>>& grad_w,
                        std::vector<std::vector<double>>& grad_b) {
  forward_layers(model, x, acts);
  auto& probs = acts.back();
  softmax_inplace(probs);
  double loss = -std::log(probs[static_cast<std::size_t>(y)]);
  delta = probs;
  delta[static_cast<std::size_t>(y)] -= 1.0;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Layer& layer = model.layers[l];
    const auto& in = acts[l];
    for (int r = 0; r < layer.out; ++r) {
      double d = delta[static_cast<std::size_t>(r)];
      grad_b[l][static_cast<std::size_t>(r)] += d;
      double* gw = grad_w[l].data() + static_cast<std::size_t>(r) * layer.in;
      for (int c = 0; c < layer.in; ++c) gw[c] += d * in[static_cast<std::size_t>(c)];
    }
    if (l > 0) {
      delta_prev.assign(static_cast<std::size_t>(layer.in), 0.0);
      for (int r = 0; r < layer.out; ++r) {
        double d = delta[static_cast<std::size_t>(r)];
        const double* wr = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
        for (int c = 0; c < layer.in; ++c)
          delta_prev[static_cast<std::size_t>(c)] += wr[c] * d;
      }
      const auto& h = acts[l];
      if (model.spec.activation == Activation::tanh)
        for (int c = 0; c < layer.in; ++c)
          delta_prev[static_cast<std::size_t>(c)] *=
              1.0 - h[static_cast<std::size_t>(c)] * h[static_cast<std::size_t>(c)];
      else
        for (int c = 0; c < layer.in; ++c)
          if (h[static_cast<std::size_t>(c)] <= 0.0)
            delta_prev[static_cast<std::size_t>(c)] = 0.0;
      delta.swap(delta_prev);
    }
  }
  return loss;
}

}  // namespace

const char* activation_name(Activation a) {
  return a == Activation::tanh ? "tanh" : "relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation: " + name);
}

const char* model_role_name(ModelRole r) {
  switch (r) {
    case ModelRole::target: return "target";
    case ModelRole::shadow: return "shadow";
    case ModelRole::relabelled_shadow: return "relabelled_shadow";
    case ModelRole::reference: return "reference";
    case ModelRole::attack: return "attack";
  }
  return "target";
}

ModelRole model_role_from_name(const std::string& name) {
  if (name == "target") return ModelRole::target;
  if (name == "shadow") return ModelRole::shadow;
  if (name == "relabelled_shadow") return ModelRole::relabelled_shadow;
  if (name == "reference") return ModelRole::reference;
  if (name == "attack") return ModelRole::attack;
  throw std::invalid_argument("unknown model role: " + name);
}

TrainedModel train(const Corpus& corpus, const std::vector<int>& train_ids,
                   const std::vector<int>& labels_override,
                   const TrainSpec& spec, ModelRole role, int split_id) {
  validate_spec(spec);
  if (train_ids.empty()) throw std::invalid_argument("train: empty training set");
  if (!labels_override.empty() && labels_override.size() != train_ids.size())
    throw std::invalid_argument("train: labels_override must align with train_ids");
  if (corpus.n_classes < 2) throw std::invalid_argument("train: corpus needs >= 2 classes");

  TrainedModel model;
  model.spec = spec;
  model.role = role;
  model.split_id = split_id;
  model.input_dim = corpus.dim;
  model.n_classes = corpus.n_classes;

  std::vector<int> widths;
  widths.push_back(corpus.dim);
  for (int h : spec.hidden_widths) widths.push_back(h);
  widths.push_back(corpus.n_classes);

  Rng rng(spec.seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
    layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
    double limit = std::sqrt(6.0 / (layer.in + layer.out));
    for (auto& w : layer.w) w = rng.uniform(-limit, limit);
    model.layers.push_back(std::move(layer));
  }

  std::vector<AdamState> adam(model.layers.size());
  std::vector<std::vector<double>> grad_w(model.layers.size());
  std::vector<std::vector<double>> grad_b(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    adam[l].m_w.assign(model.layers[l].w.size(), 0.0);
    adam[l].v_w.assign(model.layers[l].w.size(), 0.0);
    adam[l].m_b.assign(model.layers[l].b.size(), 0.0);
    adam[l].v_b.assign(model.layers[l].b.size(), 0.0);
    grad_w[l].resize(model.layers[l].w.size());
    grad_b[l].resize(model.layers[l].b.size());
  }

  std::vector<int> order(train_ids.begin(), train_ids.end());
  std::vector<int> labels(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    labels[i] = labels_override.empty()
                    ? corpus.point(train_ids[i]).label
                    : labels_override[i];
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= corpus.n_classes)
      throw std::invalid_argument("train: label out of range");

  std::vector<std::size_t> perm(order.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;

  std::vector<std::vector<double>> acts;
  std::vector<double> delta, delta_prev;
  long long step = 0;

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(perm);
    std::size_t n = perm.size();
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(spec.batch_size)) {
      std::size_t stop = std::min(n, start + static_cast<std::size_t>(spec.batch_size));
      double batch = static_cast<double>(stop - start);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        std::fill(grad_w[l].begin(), grad_w[l].end(), 0.0);
        std::fill(grad_b[l].begin(), grad_b[l].end(), 0.0);
      }
      double loss = 0.0;
      for (std::size_t bi = start; bi < stop; ++bi) {
        std::size_t idx = perm[bi];
        const DataPoint& p = corpus.point(order[idx]);
        loss += sample_loss_grad(model, p.features, labels[idx], acts, delta,
                                 delta_prev, grad_w, grad_b);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
      ++step;
      double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Layer& layer = model.layers[l];
        double shrink = 1.0 - spec.weight_decay;
        for (std::size_t i = 0; i < layer.w.size(); ++i) {
          double g = grad_w[l][i] / batch;
          auto& st = adam[l];
          st.m_w[i] = kBeta1 * st.m_w[i] + (1.0 - kBeta1) * g;
          st.v_w[i] = kBeta2 * st.v_w[i] + (1.0 - kBeta2) * g * g;
          double update = (st.m_w[i] / bc1) / (std::sqrt(st.v_w[i] / bc2) + kEps);
          layer.w[i] = layer.w[i] * shrink - spec.learning_rate * update;
        }
        for (std::size_t i = 0; i < layer.b.size(); ++i) {
          double g = grad_b[l][i] / batch;
          auto& st = adam[l];
          st.m_b[i] = kBeta1 * st.m_b[i] + (1.0 - kBeta1) * g;
          st.v_b[i] = kBeta2 * st.v_b[i] + (1.0 - kBeta2) * g * g;
          double update = (st.m_b[i] / bc1) / (std::sqrt(st.v_b[i] / bc2) + kEps);
          layer.b[i] -= spec.learning_rate * update;
        }
      }
    }
  }

  for (const auto& layer : model.layers) {
    for (double w : layer.w)
      if (!std::isfinite(w)) throw std::runtime_error("training produced non-finite weights");
    for (double b : layer.b)
      if (!std::isfinite(b)) throw std::runtime_error("training produced non-finite weights");
  }
  return model;
}

std::vector<double> predict_proba(const TrainedModel& model,
                                  const std::vector<double>& features) {
  if (static_cast<int>(features.size()) != model.input_dim)
    throw std::invalid_argument("predict_proba: feature dimension mismatch");
  std::vector<std::vector<double>> acts;
  forward_layers(model, features, acts);
  softmax_inplace(acts.back());
  return acts.back();
}

int predict_class(const TrainedModel& model, const std::vector<double>& features) {
  auto probs = predict_proba(model, features);
  int best = 0;
  for (int c = 1; c < static_cast<int>(probs.size()); ++c)
    if (probs[static_cast<std::size_t>(c)] > probs[static_cast<std::size_t>(best)]) best = c;
  return best;
}

double accuracy(const TrainedModel& model, const Corpus& corpus,
                const std::vector<int>& ids,
                const std::vector<int>& labels_override) {
  if (ids.empty()) throw std::invalid_argument("accuracy: empty id set");
  if (!labels_override.empty() && labels_override.size() != ids.size())
    throw std::invalid_argument("accuracy: labels_override must align with ids");
  int correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const DataPoint& p = corpus.point(ids[i]);
    int want = labels_override.empty() ? p.label : labels_override[i];
    if (predict_class(model, p.features) == want) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

double data_loss(const TrainedModel& model, const Corpus& corpus,
                 const std::vector<int>& ids,
                 const std::vector<int>& labels_override) {
  if (ids.empty()) throw std::invalid_argument("data_loss: empty id set");
  if (!labels_override.empty() && labels_override.size() != ids.size())
    throw std::invalid_argument("data_loss: labels_override must align with ids");
  double total = 0.0;
  std::vector<std::vector<double>> acts;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const DataPoint& p = corpus.point(ids[i]);
    int y = labels_override.empty() ? p.label : labels_override[i];
    if (y < 0 || y >= model.n_classes)
      throw std::invalid_argument("data_loss: label out of range");
    forward_layers(model, p.features, acts);
    softmax_inplace(acts.back());
    total += -std::log(acts.back()[static_cast<std::size_t>(y)]);
  }
  return total / static_cast<double>(ids.size());
}

std::vector<double> loss_gradient(const TrainedModel& model, const Corpus& corpus,
                                  const std::vector<int>& ids,
                                  const std::vector<int>& labels_override) {
  if (ids.empty()) throw std::invalid_argument("loss_gradient: empty id set");
  if (!labels_override.empty() && labels_override.size() != ids.size())
    throw std::invalid_argument("loss_gradient: labels_override must align with ids");
  std::vector<std::vector<double>> grad_w(model.layers.size());
  std::vector<std::vector<double>> grad_b(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    grad_w[l].assign(model.layers[l].w.size(), 0.0);
    grad_b[l].assign(model.layers[l].b.size(), 0.0);
  }
  std::vector<std::vector<double>> acts;
  std::vector<double> delta, delta_prev;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const DataPoint& p = corpus.point(ids[i]);
    int y = labels_override.empty() ? p.label : labels_override[i];
    sample_loss_grad(model, p.features, y, acts, delta, delta_prev, grad_w, grad_b);
  }
  double inv_n = 1.0 / static_cast<double>(ids.size());
  std::vector<double> flat;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (double g : grad_w[l]) flat.push_back(g * inv_n);
    for (double g : grad_b[l]) flat.push_back(g * inv_n);
  }
  return flat;
}

void save_model(const TrainedModel& model, const std::string& path) {
  std::string out;
  out += "miaudit_model 1\n";
  out += std::string("role ") + model_role_name(model.role) + "\n";
  out += "split_id " + std::to_string(model.split_id) + "\n";
  out += std::string("activation ") + activation_name(model.spec.activation) + "\n";
  out += "hidden";
  if (model.spec.hidden_widths.empty()) {
    out += " -";
  } else {
    for (int h : model.spec.hidden_widths) out += " " + std::to_string(h);
  }
  out += "\n";
  out += "epochs " + std::to_string(model.spec.epochs) + "\n";
  out += "batch_size " + std::to_string(model.spec.batch_size) + "\n";
  out += "learning_rate " + fmt_g17(model.spec.learning_rate) + "\n";
  out += "weight_decay " + fmt_g17(model.spec.weight_decay) + "\n";
  out += "seed " + std::to_string(model.spec.seed) + "\n";
  out += "input_dim " + std::to_string(model.input_dim) + "\n";
  out += "n_classes " + std::to_string(model.n_classes) + "\n";
  out += "n_layers " + std::to_string(model.layers.size()) + "\n";
  for (const auto& layer : model.layers) {
    out += "layer " + std::to_string(layer.out) + " " + std::to_string(layer.in) + "\n";
    for (int r = 0; r < layer.out; ++r) {
      for (int c = 0; c < layer.in; ++c) {
        if (c) out += ' ';
        append_g17(out, layer.w[static_cast<std::size_t>(r) * layer.in + c]);
      }
      out += "\n";
    }
    for (int r = 0; r < layer.out; ++r) {
      if (r) out += ' ';
      append_g17(out, layer.b[static_cast<std::size_t>(r)]);
    }
    out += "\n";
  }
  write_text_file(path, out);
}

namespace {

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream ss(line);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

const std::string& expect_line(const std::vector<std::string>& lines,
                               std::size_t i, const std::string& path) {
  if (i >= lines.size()) throw std::runtime_error(path + ": truncated model snapshot");
  return lines[i];
}

std::string expect_kv(const std::vector<std::string>& lines, std::size_t i,
                      const std::string& key, const std::string& path) {
  auto toks = tokens(expect_line(lines, i, path));
  if (toks.size() < 2 || toks[0] != key)
    throw std::runtime_error(path + ": expected '" + key + "' at line " + std::to_string(i + 1));
  return toks[1];
}

}  // namespace

TrainedModel load_model(const std::string& path) {
  auto lines = split_lines(read_text_file(path));
  std::size_t i = 0;
  auto head = tokens(expect_line(lines, i, path));
  if (head.size() != 2 || head[0] != "miaudit_model" || head[1] != "1")
    throw std::runtime_error(path + ": unsupported model snapshot version");
  ++i;
  TrainedModel model;
  model.role = model_role_from_name(expect_kv(lines, i++, "role", path));
  model.split_id = static_cast<int>(parse_int_strict(expect_kv(lines, i++, "split_id", path), path));
  model.spec.activation = activation_from_name(expect_kv(lines, i++, "activation", path));
  {
    auto toks = tokens(expect_line(lines, i, path));
    if (toks.empty() || toks[0] != "hidden")
      throw std::runtime_error(path + ": expected 'hidden' at line " + std::to_string(i + 1));
    model.spec.hidden_widths.clear();
    if (!(toks.size() == 2 && toks[1] == "-"))
      for (std::size_t t = 1; t < toks.size(); ++t)
        model.spec.hidden_widths.push_back(static_cast<int>(parse_int_strict(toks[t], path)));
    ++i;
  }
  model.spec.epochs = static_cast<int>(parse_int_strict(expect_kv(lines, i++, "epochs", path), path));
  model.spec.batch_size = static_cast<int>(parse_int_strict(expect_kv(lines, i++, "batch_size", path), path));
  model.spec.learning_rate = parse_double_strict(expect_kv(lines, i++, "learning_rate", path), path);
  model.spec.weight_decay = parse_double_strict(expect_kv(lines, i++, "weight_decay", path), path);
  model.spec.seed = static_cast<std::uint64_t>(parse_int_strict(expect_kv(lines, i++, "seed", path), path));
  model.input_dim = static_cast<int>(parse_int_strict(expect_kv(lines, i++, "input_dim", path), path));
  model.n_classes = static_cast<int>(parse_int_strict(expect_kv(lines, i++, "n_classes", path), path));
  int n_layers = static_cast<int>(parse_int_strict(expect_kv(lines, i++, "n_layers", path), path));
  for (int l = 0; l < n_layers; ++l) {
    auto toks = tokens(expect_line(lines, i, path));
    if (toks.size() != 3 || toks[0] != "layer")
      throw std::runtime_error(path + ": expected 'layer' at line " + std::to_string(i + 1));
    Layer layer;
    layer.out = static_cast<int>(parse_int_strict(toks[1], path));
    layer.in = static_cast<int>(parse_int_strict(toks[2], path));
    if (layer.out < 1 || layer.in < 1)
      throw std::runtime_error(path + ": bad layer shape");
    ++i;
    layer.w.resize(static_cast<std::size_t>(layer.out) * layer.in);
    for (int r = 0; r < layer.out; ++r) {
      auto row = tokens(expect_line(lines, i, path));
      if (static_cast<int>(row.size()) != layer.in)
        throw std::runtime_error(path + ": weight row length mismatch at line " + std::to_string(i + 1));
      for (int c = 0; c < layer.in; ++c)
        layer.w[static_cast<std::size_t>(r) * layer.in + c] = parse_double_strict(row[static_cast<std::size_t>(c)], path);
      ++i;
    }
    auto brow = tokens(expect_line(lines, i, path));
    if (static_cast<int>(brow.size()) != layer.out)
      throw std::runtime_error(path + ": bias row length mismatch at line " + std::to_string(i + 1));
    layer.b.resize(static_cast<std::size_t>(layer.out));
    for (int r = 0; r < layer.out; ++r)
      layer.b[static_cast<std::size_t>(r)] = parse_double_strict(brow[static_cast<std::size_t>(r)], path);
    ++i;
    model.layers.push_back(std::move(layer));
  }
  if (model.layers.empty()) throw std::runtime_error(path + ": model has no layers");
  if (model.layers.front().in != model.input_dim ||
      model.layers.back().out != model.n_classes)
    throw std::runtime_error(path + ": layer shapes disagree with header dims");
  return model;
}

}  // namespace miaudit
