#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaudit/dataset.hpp"

namespace miaudit {

enum class Activation { tanh, relu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Training hyperparameters for one feed-forward softmax classifier.
struct TrainSpec {
  std::vector<int> hidden_widths{64};
  Activation activation = Activation::tanh;
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

enum class ModelRole { target, shadow, relabelled_shadow, reference, attack };

const char* model_role_name(ModelRole r);
ModelRole model_role_from_name(const std::string& name);

// Dense layer, weights row-major [out][in].
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> w;
  std::vector<double> b;
};

struct TrainedModel {
  TrainSpec spec;
  ModelRole role = ModelRole::target;
  int split_id = -1;
  int input_dim = 0;
  int n_classes = 0;
  std::vector<Layer> layers;
};

// Mini-batch training with per-parameter adaptive steps (first and second
// gradient moments, bias-corrected) on softmax cross-entropy. Weight decay is
// applied as a direct multiplicative shrink each optimizer step, independent
// of the learning rate. Deterministic given spec.seed: fixed init order and
// seeded batch shuffles. Throws if the loss goes non-finite, naming the
// epoch. labels_override, when nonempty, must cover exactly train_ids and
// replaces the corpus labels (used for training on relabelled data).
TrainedModel train(const Corpus& corpus, const std::vector<int>& train_ids,
                   const std::vector<int>& labels_override,
                   const TrainSpec& spec, ModelRole role, int split_id);

// Softmax probabilities; components nonnegative, sum 1.
std::vector<double> predict_proba(const TrainedModel& model,
                                  const std::vector<double>& features);

// Argmax class with ties broken toward the lowest class index.
int predict_class(const TrainedModel& model, const std::vector<double>& features);

// Fraction of ids whose argmax prediction equals the reference label. When
// labels_override is nonempty it must align with ids.
double accuracy(const TrainedModel& model, const Corpus& corpus,
                const std::vector<int>& ids,
                const std::vector<int>& labels_override = {});

// Mean cross-entropy loss over ids (no weight decay term).
double data_loss(const TrainedModel& model, const Corpus& corpus,
                 const std::vector<int>& ids,
                 const std::vector<int>& labels_override = {});

// Analytic gradient of data_loss, flattened layer by layer: weights row-major,
// then biases. Matches central finite differences; tests rely on that.
std::vector<double> loss_gradient(const TrainedModel& model, const Corpus& corpus,
                                  const std::vector<int>& ids,
                                  const std::vector<int>& labels_override = {});

// Versioned text snapshot: header, layer shapes, then row-major weights at 17
// significant digits. load_model inverts save_model bit for bit.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace miaudit
