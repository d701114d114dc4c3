#include "miaudit/config.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "miaudit/attacks.hpp"
#include "miaudit/io.hpp"
#include "miaudit/rng.hpp"

namespace miaudit {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

long long to_int(const std::string& v, const std::string& key) {
  try {
    return parse_int_strict(v, key);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return parse_double_strict(v, key);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  for (const auto& part : split_csv_line(v))
    out.push_back(static_cast<int>(to_int(trim(part), key)));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  for (const auto& raw : split_lines(text)) {
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line is not key=value: '" + raw + "'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("duplicate config key: " + key);

    if (key == "dataset.source") cfg.dataset.source = val;
    else if (key == "dataset.n_points") cfg.dataset.n_points = static_cast<int>(to_int(val, key));
    else if (key == "dataset.n_classes") cfg.dataset.n_classes = static_cast<int>(to_int(val, key));
    else if (key == "dataset.dim") cfg.dataset.dim = static_cast<int>(to_int(val, key));
    else if (key == "dataset.cluster_spread") cfg.dataset.cluster_spread = to_double(val, key);
    else if (key == "dataset.label_noise") cfg.dataset.label_noise = to_double(val, key);
    else if (key == "dataset.reference_pool") cfg.dataset.reference_pool = static_cast<int>(to_int(val, key));
    else if (key == "dataset.path") cfg.dataset.path = val;
    else if (key == "dataset.label_column") cfg.dataset.label_column = static_cast<int>(to_int(val, key));
    else if (key == "dataset.corpus_limit") cfg.dataset.corpus_limit = static_cast<int>(to_int(val, key));
    else if (key == "dataset.seed") cfg.dataset.seed = static_cast<std::uint64_t>(to_int(val, key));
    else if (key == "rates.target_shadow") cfg.rates.target_shadow_rate = to_double(val, key);
    else if (key == "rates.target_split") cfg.rates.target_split_rate = to_double(val, key);
    else if (key == "rates.shadow_split") cfg.rates.shadow_split_rate = to_double(val, key);
    else if (key == "split_num") cfg.split_num = static_cast<int>(to_int(val, key));
    else if (key == "model.hidden") {
      cfg.model.hidden_widths = to_int_list(val, key);
    } else if (key == "model.activation") {
      try {
        cfg.model.activation = activation_from_name(val);
      } catch (const std::exception&) {
        throw ConfigError(key + ": expected tanh or relu, got '" + val + "'");
      }
    }
    else if (key == "model.epochs") cfg.model.epochs = static_cast<int>(to_int(val, key));
    else if (key == "model.batch_size") cfg.model.batch_size = static_cast<int>(to_int(val, key));
    else if (key == "model.learning_rate") cfg.model.learning_rate = to_double(val, key);
    else if (key == "model.weight_decay") cfg.model.weight_decay = to_double(val, key);
    else if (key == "attacks.include_gap") cfg.attacks.include_gap = to_bool(val, key);
    else if (key == "attacks.enabled") cfg.attacks.enabled = to_int_list(val, key);
    else if (key == "vuln.k") cfg.vuln.k = static_cast<int>(to_int(val, key));
    else if (key == "vuln.shapley_k") cfg.vuln.shapley_k = static_cast<int>(to_int(val, key));
    else if (key == "vuln.bins") cfg.vuln.bins = static_cast<int>(to_int(val, key));
    else if (key == "vuln.risk_per_class") cfg.vuln.risk_per_class = to_bool(val, key);
    else if (key == "vuln.neighbor_threshold") cfg.vuln.neighbor_threshold = to_double(val, key);
    else if (key == "vuln.reference_models") cfg.vuln.reference_models = static_cast<int>(to_int(val, key));
    else if (key == "vuln.repetitions") cfg.vuln.repetitions = static_cast<int>(to_int(val, key));
    else if (key == "output.dir") cfg.output.dir = val;
    else if (key == "output.save_models") cfg.output.save_models = to_bool(val, key);
    else if (key == "output.dump_signals") cfg.output.dump_signals = to_bool(val, key);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(val, key));
    else throw ConfigError("unknown config key: " + key);
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string serialize_config(const RunConfig& c) {
  std::string s;
  auto kv = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  auto kb = [&kv](const std::string& k, bool v) { kv(k, v ? "true" : "false"); };
  kv("attacks.enabled", join_ints(c.attacks.enabled));
  kb("attacks.include_gap", c.attacks.include_gap);
  kv("dataset.cluster_spread", fmt_g17(c.dataset.cluster_spread));
  kv("dataset.corpus_limit", std::to_string(c.dataset.corpus_limit));
  kv("dataset.dim", std::to_string(c.dataset.dim));
  kv("dataset.label_column", std::to_string(c.dataset.label_column));
  kv("dataset.label_noise", fmt_g17(c.dataset.label_noise));
  kv("dataset.n_classes", std::to_string(c.dataset.n_classes));
  kv("dataset.n_points", std::to_string(c.dataset.n_points));
  kv("dataset.path", c.dataset.path);
  kv("dataset.reference_pool", std::to_string(c.dataset.reference_pool));
  kv("dataset.seed", std::to_string(c.dataset.seed));
  kv("dataset.source", c.dataset.source);
  kv("model.activation", activation_name(c.model.activation));
  kv("model.batch_size", std::to_string(c.model.batch_size));
  kv("model.epochs", std::to_string(c.model.epochs));
  kv("model.hidden", join_ints(c.model.hidden_widths));
  kv("model.learning_rate", fmt_g17(c.model.learning_rate));
  kv("model.weight_decay", fmt_g17(c.model.weight_decay));
  // output.dir is where the run lands, not what the run is; it stays out of
  // the canonical form so relocated reruns hash identically
  kb("output.dump_signals", c.output.dump_signals);
  kb("output.save_models", c.output.save_models);
  kv("rates.shadow_split", fmt_g17(c.rates.shadow_split_rate));
  kv("rates.target_shadow", fmt_g17(c.rates.target_shadow_rate));
  kv("rates.target_split", fmt_g17(c.rates.target_split_rate));
  kv("seed", std::to_string(c.seed));
  kv("split_num", std::to_string(c.split_num));
  kv("vuln.bins", std::to_string(c.vuln.bins));
  kv("vuln.k", std::to_string(c.vuln.k));
  kv("vuln.neighbor_threshold", fmt_g17(c.vuln.neighbor_threshold));
  kv("vuln.reference_models", std::to_string(c.vuln.reference_models));
  kv("vuln.repetitions", std::to_string(c.vuln.repetitions));
  kb("vuln.risk_per_class", c.vuln.risk_per_class);
  kv("vuln.shapley_k", std::to_string(c.vuln.shapley_k));
  return s;
}

std::string config_hash(const RunConfig& config) {
  return hex64(fnv1a64(serialize_config(config)));
}

std::vector<int> enabled_attack_ids(const RunConfig& config) {
  std::vector<int> ids = config.attacks.enabled;
  if (ids.empty()) {
    ids.resize(54);
    for (int i = 0; i < 54; ++i) ids[static_cast<std::size_t>(i)] = i;
    return ids;
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };

  if (c.dataset.source != "synthetic" && c.dataset.source != "file")
    fail("dataset.source must be synthetic or file, got '" + c.dataset.source + "'");
  if (c.dataset.source == "synthetic") {
    if (c.dataset.n_points < 4) fail("dataset.n_points must be >= 4");
    if (c.dataset.n_classes < 2) fail("dataset.n_classes must be >= 2");
    if (c.dataset.dim < 1) fail("dataset.dim must be >= 1");
    if (!(c.dataset.cluster_spread >= 0.0)) fail("dataset.cluster_spread must be >= 0");
    if (!(c.dataset.label_noise >= 0.0 && c.dataset.label_noise <= 1.0))
      fail("dataset.label_noise must be in [0, 1]");
    if (c.dataset.reference_pool < 1) fail("dataset.reference_pool must be >= 1");
  } else {
    if (c.dataset.path.empty()) fail("dataset.path is required for dataset.source=file");
    if (c.dataset.corpus_limit < 0) fail("dataset.corpus_limit must be >= 0");
  }

  for (auto [r, name] : {std::pair<double, const char*>{c.rates.target_shadow_rate, "rates.target_shadow"},
                         {c.rates.target_split_rate, "rates.target_split"},
                         {c.rates.shadow_split_rate, "rates.shadow_split"}})
    if (!(r > 0.0 && r < 1.0)) fail(std::string(name) + " must be in (0, 1)");

  if (c.split_num < 1) fail("split_num must be >= 1");
  if (c.model.epochs < 1) fail("model.epochs must be >= 1");
  if (c.model.batch_size < 1) fail("model.batch_size must be >= 1");
  if (!(c.model.learning_rate >= 0.0)) fail("model.learning_rate must be >= 0");
  if (!(c.model.weight_decay >= 0.0 && c.model.weight_decay < 1.0))
    fail("model.weight_decay must be in [0, 1)");
  for (int h : c.model.hidden_widths)
    if (h < 1) fail("model.hidden widths must be >= 1");

  {
    std::unordered_set<int> seen;
    for (int id : c.attacks.enabled) {
      if (id < 0 || id >= 54) fail("attacks.enabled: id " + std::to_string(id) + " outside the registry");
      if (!seen.insert(id).second) fail("attacks.enabled: duplicate id " + std::to_string(id));
    }
  }

  if (c.vuln.k < 1) fail("vuln.k must be >= 1");
  if (c.vuln.shapley_k < 1) fail("vuln.shapley_k must be >= 1");
  if (c.vuln.bins < 1) fail("vuln.bins must be >= 1");
  if (!(c.vuln.neighbor_threshold > 0.0)) fail("vuln.neighbor_threshold must be positive");
  if (c.vuln.reference_models < 1) fail("vuln.reference_models must be >= 1");
  if (c.vuln.repetitions < 1) fail("vuln.repetitions must be >= 1");

  if (c.dataset.source == "synthetic") {
    try {
      compute_split_sizes(c.dataset.n_points, c.rates);
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
}

}  // namespace miaudit
