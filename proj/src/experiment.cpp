#include "miaudit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "miaudit/io.hpp"
#include "miaudit/rng.hpp"

namespace fs = std::filesystem;

namespace miaudit {

namespace {

const char* kIncompleteMarker = "INCOMPLETE";
const char* kManifestHeader = "miaudit_run 1";

std::string attack_kind_label(AttackKind k) {
  switch (k) {
    case AttackKind::threshold: return "threshold";
    case AttackKind::classifier: return "classifier";
    case AttackKind::gap: return "gap";
  }
  return "gap";
}

// name lookup covering the gap baseline and the whole registry
std::map<int, std::string> attack_name_table() {
  std::map<int, std::string> names;
  names[kGapAttackId] = gap_attack().name();
  for (const auto& spec : default_registry()) names[spec.attack_id] = spec.name();
  return names;
}

std::vector<int> counted_attack_ids(const RunConfig& cfg) {
  std::vector<int> counted = enabled_attack_ids(cfg);
  if (cfg.attacks.include_gap) counted.insert(counted.begin(), kGapAttackId);
  return counted;
}

SplitOutcome run_split(const RunConfig& cfg, const Corpus& corpus,
                       const std::vector<AttackSpec>& registry,
                       const std::vector<int>& enabled, std::uint64_t master,
                       int repetition, int j) {
  SplitOutcome out;
  std::uint64_t uj = static_cast<std::uint64_t>(j);
  out.plan = make_split(corpus, cfg.rates, j, derive_seed(master, "split", uj));
  const SplitPlan& plan = out.plan;

  TrainSpec spec = cfg.model;
  spec.seed = derive_seed(master, "train_target", uj);
  out.target_model = train(corpus, plan.target_train_ids, {}, spec, ModelRole::target, j);
  spec.seed = derive_seed(master, "train_shadow", uj);
  out.shadow_model = train(corpus, plan.shadow_train_ids, {}, spec, ModelRole::shadow, j);

  std::vector<int> shadow_ids = plan.shadow_train_ids;
  shadow_ids.insert(shadow_ids.end(), plan.shadow_test_ids.begin(), plan.shadow_test_ids.end());
  auto new_labels = relabel(shadow_ids, corpus, out.target_model);
  std::vector<int> relab_train(plan.shadow_train_ids.size());
  for (std::size_t i = 0; i < plan.shadow_train_ids.size(); ++i)
    relab_train[i] = new_labels.at(plan.shadow_train_ids[i]);
  std::vector<int> relab_test(plan.shadow_test_ids.size());
  for (std::size_t i = 0; i < plan.shadow_test_ids.size(); ++i)
    relab_test[i] = new_labels.at(plan.shadow_test_ids[i]);
  spec.seed = derive_seed(master, "train_relab", uj);
  out.relab_model =
      train(corpus, plan.shadow_train_ids, relab_train, spec, ModelRole::relabelled_shadow, j);

  out.stats.push_back({repetition, j, "target",
                       accuracy(out.target_model, corpus, plan.target_train_ids),
                       accuracy(out.target_model, corpus, plan.target_test_ids)});
  out.stats.push_back({repetition, j, "shadow",
                       accuracy(out.shadow_model, corpus, plan.shadow_train_ids),
                       accuracy(out.shadow_model, corpus, plan.shadow_test_ids)});
  // the relabelled model is judged on its own objective, the relabelled labels
  out.stats.push_back({repetition, j, "relabelled_shadow",
                       accuracy(out.relab_model, corpus, plan.shadow_train_ids, relab_train),
                       accuracy(out.relab_model, corpus, plan.shadow_test_ids, relab_test)});

  auto extract_block = [&corpus](const TrainedModel& model, const std::vector<int>& ids,
                                 const std::vector<int>* labels_override,
                                 std::vector<SignalVector>& dst) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      int label = labels_override ? (*labels_override)[i] : corpus.point(ids[i]).label;
      dst.push_back(extract_signals_point(model, corpus, ids[i], label));
    }
  };
  std::size_t n_target = plan.target_train_ids.size() + plan.target_test_ids.size();
  out.sig_target_direct.reserve(n_target);
  extract_block(out.target_model, plan.target_train_ids, nullptr, out.sig_target_direct);
  extract_block(out.target_model, plan.target_test_ids, nullptr, out.sig_target_direct);
  out.sig_target_relab.reserve(n_target);
  extract_block(out.relab_model, plan.target_train_ids, nullptr, out.sig_target_relab);
  extract_block(out.relab_model, plan.target_test_ids, nullptr, out.sig_target_relab);
  out.sig_shadow_direct.reserve(shadow_ids.size());
  extract_block(out.shadow_model, plan.shadow_train_ids, nullptr, out.sig_shadow_direct);
  extract_block(out.shadow_model, plan.shadow_test_ids, nullptr, out.sig_shadow_direct);
  out.sig_shadow_relab.reserve(shadow_ids.size());
  extract_block(out.relab_model, plan.shadow_train_ids, &relab_train, out.sig_shadow_relab);
  extract_block(out.relab_model, plan.shadow_test_ids, &relab_test, out.sig_shadow_relab);

  out.records.reserve((enabled.size() + 1) * n_target);
  auto run_one = [&](const AttackSpec& s) {
    const auto& tgt = s.relabelled ? out.sig_target_relab : out.sig_target_direct;
    const auto& shd = s.relabelled ? out.sig_shadow_relab : out.sig_shadow_direct;
    std::uint64_t aseed =
        derive_seed(master, "attack", uj, static_cast<std::uint64_t>(static_cast<std::int64_t>(s.attack_id)));
    auto recs = run_attack(s, plan, tgt, shd, aseed);
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  };
  run_one(gap_attack());
  for (int id : enabled) run_one(registry[static_cast<std::size_t>(id)]);
  return out;
}

}  // namespace

const std::vector<std::string>& vulnerable_method_order() {
  static const std::vector<std::string> order = {
      "amer_topk", "anmer_topk", "neighbors", "knn_shapley", "privacy_risk",
      "outlier_baseline"};
  return order;
}

int resolve_worker_count() {
  const char* env = std::getenv("MIAUDIT_WORKERS");
  if (env != nullptr && *env != '\0') {
    long long v = 0;
    try {
      v = parse_int_strict(env, "MIAUDIT_WORKERS");
    } catch (const std::exception&) {
      throw ConfigError("MIAUDIT_WORKERS must be a positive integer, got '" + std::string(env) + "'");
    }
    if (v < 1) throw ConfigError("MIAUDIT_WORKERS must be a positive integer, got '" + std::string(env) + "'");
    return static_cast<int>(std::min<long long>(v, 512));
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void materialize_corpus(const RunConfig& cfg, Corpus& corpus, Corpus& extended) {
  if (cfg.dataset.source == "synthetic") {
    corpus = generate_synthetic(cfg.dataset.n_points, cfg.dataset.n_classes, cfg.dataset.dim,
                                cfg.dataset.cluster_spread, cfg.dataset.label_noise,
                                cfg.dataset.seed);
    auto pool = generate_reference_points(cfg.dataset.reference_pool, corpus.size(),
                                          cfg.dataset.n_classes, cfg.dataset.dim,
                                          cfg.dataset.cluster_spread, cfg.dataset.label_noise,
                                          cfg.dataset.seed);
    extended = corpus;
    extended.points.insert(extended.points.end(), pool.begin(), pool.end());
  } else {
    Corpus full = load_delimited(cfg.dataset.path, cfg.dataset.label_column);
    int limit = cfg.dataset.corpus_limit == 0 ? full.size() : cfg.dataset.corpus_limit;
    if (limit > full.size())
      throw ConfigError("dataset.corpus_limit (" + std::to_string(limit) +
                        ") exceeds the file row count (" + std::to_string(full.size()) + ")");
    if (limit == full.size())
      throw ConfigError("dataset leaves no reference pool rows; lower dataset.corpus_limit "
                        "below the row count");
    if (full.n_classes < 2) throw ConfigError("dataset has fewer than two classes");
    corpus.points.assign(full.points.begin(), full.points.begin() + limit);
    corpus.n_classes = full.n_classes;
    corpus.dim = full.dim;
    extended = std::move(full);
  }
  try {
    compute_split_sizes(corpus.size(), cfg.rates);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RepetitionOutcome run_repetition(const RunConfig& cfg, const Corpus& corpus,
                                 const Corpus& extended, int repetition, int workers) {
  RepetitionOutcome rep;
  rep.repetition = repetition;
  rep.master = derive_seed(cfg.seed, "repetition", static_cast<std::uint64_t>(repetition));

  const std::vector<AttackSpec> registry = default_registry();
  const std::vector<int> enabled = enabled_attack_ids(cfg);

  rep.splits.resize(static_cast<std::size_t>(cfg.split_num));
  int nthreads = std::clamp(workers, 1, cfg.split_num);
  if (nthreads <= 1) {
    for (int j = 0; j < cfg.split_num; ++j)
      rep.splits[static_cast<std::size_t>(j)] =
          run_split(cfg, corpus, registry, enabled, rep.master, repetition, j);
  } else {
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
      for (;;) {
        int j = next.fetch_add(1);
        if (j >= cfg.split_num) return;
        try {
          rep.splits[static_cast<std::size_t>(j)] =
              run_split(cfg, corpus, registry, enabled, rep.master, repetition, j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<SplitPlan> plans;
  plans.reserve(rep.splits.size());
  for (const auto& so : rep.splits) plans.push_back(so.plan);
  rep.ledger = tally_membership(plans);

  std::vector<InferenceRecord> all_records;
  {
    std::size_t total = 0;
    for (const auto& so : rep.splits) total += so.records.size();
    all_records.reserve(total);
    for (const auto& so : rep.splits)
      all_records.insert(all_records.end(), so.records.begin(), so.records.end());
  }
  rep.point_rates = compute_point_rates(all_records, rep.ledger, counted_attack_ids(cfg));
  rep.attack_rates = compute_attack_rates(all_records, rep.ledger);

  int n = corpus.size();
  int k = cfg.vuln.k;

  VulnerableSet amer_set = top_k_by_rate(rep.point_rates, RateKind::amer, k);
  VulnerableSet anmer_set = top_k_by_rate(rep.point_rates, RateKind::anmer, k);

  std::vector<int> audited_ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) audited_ids[static_cast<std::size_t>(i)] = i;
  std::vector<int> pool_ids;
  pool_ids.reserve(static_cast<std::size_t>(extended.size() - n));
  for (int i = n; i < extended.size(); ++i) pool_ids.push_back(i);
  VulnerableSet nbr_set =
      neighbors_based(extended, audited_ids, pool_ids, cfg.model, cfg.vuln.reference_models,
                      cfg.vuln.neighbor_threshold, k, derive_seed(rep.master, "neighbors"));

  // shapley and risk scores per point, averaged over the splits where the
  // point sat in target train
  std::vector<double> shap_sum(static_cast<std::size_t>(n), 0.0);
  std::vector<double> risk_sum(static_cast<std::size_t>(n), 0.0);
  std::vector<int> member_splits(static_cast<std::size_t>(n), 0);
  for (const auto& so : rep.splits) {
    std::size_t nt = so.plan.target_train_ids.size();
    std::vector<std::vector<double>> train_out(nt);
    std::vector<int> train_lab(nt);
    for (std::size_t i = 0; i < nt; ++i) {
      train_out[i] = so.sig_target_direct[i].prob;
      train_lab[i] = so.sig_target_direct[i].label;
    }
    std::size_t ne = so.sig_target_direct.size() - nt;
    std::vector<std::vector<double>> test_out(ne);
    std::vector<int> test_lab(ne);
    for (std::size_t i = 0; i < ne; ++i) {
      test_out[i] = so.sig_target_direct[nt + i].prob;
      test_lab[i] = so.sig_target_direct[nt + i].label;
    }
    std::vector<double> shap = knn_shapley(train_out, train_lab, test_out, test_lab,
                                           cfg.vuln.shapley_k);

    std::size_t ns = so.plan.shadow_train_ids.size();
    std::vector<double> sm_val(ns);
    std::vector<int> sm_lab(ns);
    for (std::size_t i = 0; i < ns; ++i) {
      sm_val[i] = so.sig_shadow_direct[i].mentr;
      sm_lab[i] = so.sig_shadow_direct[i].label;
    }
    std::size_t nn = so.sig_shadow_direct.size() - ns;
    std::vector<double> sn_val(nn);
    std::vector<int> sn_lab(nn);
    for (std::size_t i = 0; i < nn; ++i) {
      sn_val[i] = so.sig_shadow_direct[ns + i].mentr;
      sn_lab[i] = so.sig_shadow_direct[ns + i].label;
    }
    std::vector<double> tv(nt);
    std::vector<int> tl(nt);
    for (std::size_t i = 0; i < nt; ++i) {
      tv[i] = so.sig_target_direct[i].mentr;
      tl[i] = so.sig_target_direct[i].label;
    }
    std::vector<double> risk = privacy_risk_scores(sm_val, sm_lab, sn_val, sn_lab, tv, tl,
                                                   cfg.vuln.risk_per_class, cfg.vuln.bins);

    for (std::size_t i = 0; i < nt; ++i) {
      std::size_t id = static_cast<std::size_t>(so.plan.target_train_ids[i]);
      shap_sum[id] += shap[i];
      risk_sum[id] += risk[i];
      member_splits[id]++;
    }
  }
  std::vector<int> eligible;
  std::vector<double> shap_mean, risk_mean;
  for (int i = 0; i < n; ++i) {
    std::size_t si = static_cast<std::size_t>(i);
    if (member_splits[si] == 0) continue;
    eligible.push_back(i);
    shap_mean.push_back(shap_sum[si] / member_splits[si]);
    risk_mean.push_back(risk_sum[si] / member_splits[si]);
  }
  VulnerableSet shap_set = top_k_scored("knn_shapley", eligible, shap_mean, k);
  VulnerableSet risk_set = top_k_scored("privacy_risk", eligible, risk_mean, k);
  VulnerableSet outlier_set = outlier_baseline(corpus, k);

  rep.vulnerable = {std::move(amer_set), std::move(anmer_set), std::move(nbr_set),
                    std::move(shap_set), std::move(risk_set), std::move(outlier_set)};
  for (auto& set : rep.vulnerable) set.repetition = repetition;
  return rep;
}

RunResult run_experiment(const RunConfig& cfg, int workers) {
  validate_config(cfg);
  RunResult res;
  res.config = cfg;
  materialize_corpus(cfg, res.corpus, res.extended);
  res.repetitions.reserve(static_cast<std::size_t>(cfg.vuln.repetitions));
  for (int r = 0; r < cfg.vuln.repetitions; ++r)
    res.repetitions.push_back(run_repetition(cfg, res.corpus, res.extended, r, workers));
  return res;
}

namespace {

std::string build_splits_csv(const RepetitionOutcome& rep0) {
  std::string s = "split_id,partition,point_id\n";
  std::size_t rows = 0;
  for (const auto& so : rep0.splits) rows += static_cast<std::size_t>(so.plan.n_points);
  s.reserve(s.size() + rows * 24);
  for (const auto& so : rep0.splits) {
    const SplitPlan& p = so.plan;
    auto block = [&s, &p](const char* part, const std::vector<int>& ids) {
      for (int id : ids) {
        s += std::to_string(p.split_id);
        s += ',';
        s += part;
        s += ',';
        s += std::to_string(id);
        s += '\n';
      }
    };
    block("target_train", p.target_train_ids);
    block("target_test", p.target_test_ids);
    block("shadow_train", p.shadow_train_ids);
    block("shadow_test", p.shadow_test_ids);
  }
  return s;
}

std::string build_records_csv(const RepetitionOutcome& rep0) {
  std::string s = "split_id,attack_id,point_id,b,b_pred\n";
  std::size_t rows = 0;
  for (const auto& so : rep0.splits) rows += so.records.size();
  s.reserve(s.size() + rows * 16);
  for (const auto& so : rep0.splits) {
    for (const auto& r : so.records) {
      s += std::to_string(r.split_id);
      s += ',';
      s += std::to_string(r.attack_id);
      s += ',';
      s += std::to_string(r.point_id);
      s += ',';
      s += static_cast<char>('0' + r.b);
      s += ',';
      s += static_cast<char>('0' + r.b_pred);
      s += '\n';
    }
  }
  return s;
}

std::string build_attacks_json(const RunConfig& cfg) {
  const std::vector<int> enabled_list = enabled_attack_ids(cfg);
  std::unordered_set<int> enabled(enabled_list.begin(), enabled_list.end());
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  auto add = [&arr](const AttackSpec& s, bool is_enabled, bool is_counted) {
    nlohmann::ordered_json e;
    e["id"] = s.attack_id;
    e["name"] = s.name();
    e["kind"] = attack_kind_label(s.kind);
    e["relabelled"] = s.relabelled;
    if (s.kind == AttackKind::threshold) {
      e["metric"] = metric_name(s.metric);
      e["direction"] = metric_direction(s.metric) == Direction::higher_is_member
                           ? "higher_is_member"
                           : "lower_is_member";
    } else if (s.kind == AttackKind::classifier) {
      e["learner"] = learner_name(s.learner);
      e["feature_set"] = feature_set_name(s.feature_set);
    }
    e["enabled"] = is_enabled;
    e["counted"] = is_counted;
    arr.push_back(std::move(e));
  };
  add(gap_attack(), true, cfg.attacks.include_gap);
  for (const auto& spec : default_registry()) {
    bool on = enabled.count(spec.attack_id) > 0;
    add(spec, on, on);
  }
  return arr.dump(2) + "\n";
}

std::string build_model_stats_csv(const std::vector<ModelStats>& stats) {
  std::string s = "repetition,split_id,role,train_acc,test_acc\n";
  for (const auto& st : stats) {
    s += std::to_string(st.repetition);
    s += ',';
    s += std::to_string(st.split_id);
    s += ',';
    s += st.role;
    s += ',';
    append_g17(s, st.train_acc);
    s += ',';
    append_g17(s, st.test_acc);
    s += '\n';
  }
  return s;
}

std::string build_point_rates_csv(const std::vector<PointRates>& rates) {
  std::string s = "point_id,mt,nmt,amer,anmer,exposure_gap\n";
  s.reserve(s.size() + rates.size() * 48);
  for (const auto& pr : rates) {
    s += std::to_string(pr.point_id);
    s += ',';
    s += std::to_string(pr.mt);
    s += ',';
    s += std::to_string(pr.nmt);
    s += ',';
    if (pr.has_amer) append_g17(s, pr.amer);
    s += ',';
    if (pr.has_anmer) append_g17(s, pr.anmer);
    s += ',';
    if (pr.has_exposure_gap) append_g17(s, pr.exposure_gap);
    s += '\n';
  }
  return s;
}

std::string build_attack_rates_csv(const std::vector<AttackRates>& rates,
                                   const std::map<int, std::string>& names) {
  std::string s = "attack_id,name,amir,anmir,avg_accuracy\n";
  for (const auto& ar : rates) {
    s += std::to_string(ar.attack_id);
    s += ',';
    auto it = names.find(ar.attack_id);
    s += it == names.end() ? std::string("unknown") : it->second;
    s += ',';
    append_g17(s, ar.amir);
    s += ',';
    append_g17(s, ar.anmir);
    s += ',';
    append_g17(s, ar.avg_accuracy);
    s += '\n';
  }
  return s;
}

std::string build_curve_csv(const std::vector<RateCurveEntry>& curve) {
  std::string s = "rank,point_id,value,mt,nmt\n";
  s.reserve(s.size() + curve.size() * 40);
  int rank = 1;
  for (const auto& e : curve) {
    s += std::to_string(rank++);
    s += ',';
    s += std::to_string(e.point_id);
    s += ',';
    append_g17(s, e.value);
    s += ',';
    s += std::to_string(e.mt);
    s += ',';
    s += std::to_string(e.nmt);
    s += '\n';
  }
  return s;
}

struct SummaryInputs {
  int corpus_size = 0;
  int reference_pool_size = 0;
  const RunConfig* cfg = nullptr;
  const std::vector<ModelStats>* stats_rep0 = nullptr;
  const std::vector<PointRates>* point_rates = nullptr;
  const std::vector<AttackRates>* attack_rates = nullptr;
};

std::string build_report_summary(const SummaryInputs& in) {
  const RunConfig& cfg = *in.cfg;
  std::string s = "key,value\n";
  auto ki = [&s](const char* key, long long v) {
    s += key;
    s += ',';
    s += std::to_string(v);
    s += '\n';
  };
  auto kd = [&s](const char* key, double v) {
    s += key;
    s += ',';
    append_g17(s, v);
    s += '\n';
  };

  ki("corpus_size", in.corpus_size);
  ki("reference_pool_size", in.reference_pool_size);
  ki("split_num", cfg.split_num);
  ki("repetitions", cfg.vuln.repetitions);
  ki("enabled_attacks", static_cast<long long>(enabled_attack_ids(cfg).size()));
  ki("counted_attacks", static_cast<long long>(counted_attack_ids(cfg).size()));

  auto role_mean = [&in](const std::string& role, bool train) {
    double sum = 0.0;
    int count = 0;
    for (const auto& st : *in.stats_rep0) {
      if (st.repetition != 0 || st.role != role) continue;
      sum += train ? st.train_acc : st.test_acc;
      ++count;
    }
    return count == 0 ? 0.0 : sum / count;
  };
  double tt = role_mean("target", true);
  double te = role_mean("target", false);
  kd("mean_target_train_acc", tt);
  kd("mean_target_test_acc", te);
  kd("generalization_gap", tt - te);
  kd("mean_shadow_train_acc", role_mean("shadow", true));
  kd("mean_shadow_test_acc", role_mean("shadow", false));

  double gap_acc = 0.0;
  int best_id = -1, worst_id = -1;
  double best_acc = 0.0, worst_acc = 0.0;
  double acc_sum = 0.0;
  int acc_count = 0;
  for (const auto& ar : *in.attack_rates) {
    if (ar.attack_id == kGapAttackId) {
      gap_acc = ar.avg_accuracy;
      continue;
    }
    acc_sum += ar.avg_accuracy;
    ++acc_count;
    if (best_id < 0 || ar.avg_accuracy > best_acc) {
      best_id = ar.attack_id;
      best_acc = ar.avg_accuracy;
    }
    if (worst_id < 0 || ar.avg_accuracy < worst_acc) {
      worst_id = ar.attack_id;
      worst_acc = ar.avg_accuracy;
    }
  }
  kd("gap_attack_avg_accuracy", gap_acc);
  ki("best_attack_id", best_id);
  kd("best_attack_avg_accuracy", best_acc);
  ki("worst_attack_id", worst_id);
  kd("worst_attack_avg_accuracy", worst_acc);
  kd("mean_attack_avg_accuracy", acc_count == 0 ? 0.0 : acc_sum / acc_count);

  double amer_sum = 0.0, anmer_sum = 0.0, gap_sum = 0.0;
  int amer_n = 0, anmer_n = 0, gap_n = 0, amer_above = 0;
  for (const auto& pr : *in.point_rates) {
    if (pr.has_amer) {
      amer_sum += pr.amer;
      ++amer_n;
      if (pr.amer > 0.6) ++amer_above;
    }
    if (pr.has_anmer) {
      anmer_sum += pr.anmer;
      ++anmer_n;
    }
    if (pr.has_exposure_gap) {
      gap_sum += pr.exposure_gap;
      ++gap_n;
    }
  }
  kd("mean_amer", amer_n == 0 ? 0.0 : amer_sum / amer_n);
  kd("mean_anmer", anmer_n == 0 ? 0.0 : anmer_sum / anmer_n);
  kd("mean_exposure_gap", gap_n == 0 ? 0.0 : gap_sum / gap_n);
  kd("frac_member_points_amer_above_0.6",
     amer_n == 0 ? 0.0 : static_cast<double>(amer_above) / amer_n);
  return s;
}

std::string build_vulnerable_csv(const VulnerableSet& set) {
  std::string s = "rank,point_id,score\n";
  for (std::size_t i = 0; i < set.ids.size(); ++i) {
    s += std::to_string(i + 1);
    s += ',';
    s += std::to_string(set.ids[i]);
    s += ',';
    append_g17(s, set.scores[i]);
    s += '\n';
  }
  return s;
}

std::string build_overlap_csv(const std::vector<VulnerableSet>& sets,
                              const std::vector<std::string>& labels) {
  std::vector<std::vector<int>> m = overlap_matrix(sets);
  std::string s = "set";
  for (const auto& l : labels) {
    s += ',';
    s += l;
  }
  s += '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    s += labels[i];
    for (int v : m[i]) {
      s += ',';
      s += std::to_string(v);
    }
    s += '\n';
  }
  return s;
}

std::string build_signals_csv(const RepetitionOutcome& rep0) {
  std::string s =
      "split_id,model,point_id,label,max_prob,gt_prob,ce_loss,celoss_variant,mentr,entropy,"
      "norm_entropy\n";
  for (const auto& so : rep0.splits) {
    auto block = [&s, &so](const char* model, const std::vector<SignalVector>& sigs) {
      for (const auto& sv : sigs) {
        s += std::to_string(so.plan.split_id);
        s += ',';
        s += model;
        s += ',';
        s += std::to_string(sv.point_id);
        s += ',';
        s += std::to_string(sv.label);
        for (double v : {sv.max_prob, sv.gt_prob, sv.ce_loss, sv.celoss_variant, sv.mentr,
                         sv.entropy, sv.norm_entropy}) {
          s += ',';
          append_g17(s, v);
        }
        s += '\n';
      }
    };
    block("target", so.sig_target_direct);
    block("target_relab", so.sig_target_relab);
    block("shadow", so.sig_shadow_direct);
    block("shadow_relab", so.sig_shadow_relab);
  }
  return s;
}

std::string build_manifest(const RunResult& res, const std::string& corpus_hash_hex) {
  const RunConfig& cfg = res.config;
  std::string s = std::string(kManifestHeader) + "\n";
  s += "config_hash=" + config_hash(cfg) + "\n";
  s += "corpus_hash=" + corpus_hash_hex + "\n";
  s += "corpus_size=" + std::to_string(res.corpus.size()) + "\n";
  s += "reference_pool_size=" + std::to_string(res.extended.size() - res.corpus.size()) + "\n";
  s += "n_classes=" + std::to_string(res.corpus.n_classes) + "\n";
  s += "dim=" + std::to_string(res.corpus.dim) + "\n";
  s += "split_num=" + std::to_string(cfg.split_num) + "\n";
  s += "repetitions=" + std::to_string(cfg.vuln.repetitions) + "\n";
  s += "vuln_k=" + std::to_string(cfg.vuln.k) + "\n";
  s += "enabled_attacks=" + std::to_string(enabled_attack_ids(cfg).size()) + "\n";
  s += "counted_attacks=" + std::to_string(counted_attack_ids(cfg).size()) + "\n";
  s += std::string("include_gap=") + (cfg.attacks.include_gap ? "true" : "false") + "\n";
  return s;
}

std::map<std::string, std::string> read_manifest(const std::string& run_dir) {
  fs::path dir(run_dir);
  if (!fs::exists(dir / "manifest.txt"))
    throw StageError(run_dir + " is not a finished run (missing manifest.txt)");
  if (fs::exists(dir / kIncompleteMarker))
    throw StageError(run_dir + " holds an unfinished run (INCOMPLETE marker present)");
  auto lines = split_lines(read_text_file((dir / "manifest.txt").string()));
  if (lines.empty() || lines.front() != kManifestHeader)
    throw StageError(run_dir + ": unrecognized manifest format");
  std::map<std::string, std::string> kv;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::size_t eq = lines[i].find('=');
    if (eq == std::string::npos)
      throw StageError(run_dir + ": malformed manifest line '" + lines[i] + "'");
    kv[lines[i].substr(0, eq)] = lines[i].substr(eq + 1);
  }
  return kv;
}

int manifest_int(const std::map<std::string, std::string>& kv, const std::string& key,
                 const std::string& run_dir) {
  auto it = kv.find(key);
  if (it == kv.end()) throw StageError(run_dir + ": manifest is missing " + key);
  try {
    return static_cast<int>(parse_int_strict(it->second, key));
  } catch (const std::exception&) {
    throw StageError(run_dir + ": manifest value for " + key + " is not an integer");
  }
}

std::string manifest_str(const std::map<std::string, std::string>& kv, const std::string& key,
                         const std::string& run_dir) {
  auto it = kv.find(key);
  if (it == kv.end()) throw StageError(run_dir + ": manifest is missing " + key);
  return it->second;
}

std::vector<std::string> csv_rows(const std::string& text, const std::string& header,
                                  const std::string& what) {
  auto lines = split_lines(text);
  if (lines.empty() || lines.front() != header)
    throw StageError(what + ": unexpected header");
  lines.erase(lines.begin());
  return lines;
}

std::vector<SplitPlan> parse_splits_csv(const std::string& text, int corpus_size) {
  std::map<int, SplitPlan> by_split;
  for (const auto& row : csv_rows(text, "split_id,partition,point_id", "splits.csv")) {
    auto cells = split_csv_line(row);
    if (cells.size() != 3) throw StageError("splits.csv: malformed row '" + row + "'");
    int split_id, point_id;
    try {
      split_id = static_cast<int>(parse_int_strict(cells[0], "split_id"));
      point_id = static_cast<int>(parse_int_strict(cells[2], "point_id"));
    } catch (const std::exception&) {
      throw StageError("splits.csv: malformed row '" + row + "'");
    }
    if (point_id < 0 || point_id >= corpus_size)
      throw StageError("splits.csv: point id " + cells[2] + " outside the corpus");
    SplitPlan& plan = by_split[split_id];
    plan.split_id = split_id;
    plan.n_points = corpus_size;
    if (cells[1] == "target_train") plan.target_train_ids.push_back(point_id);
    else if (cells[1] == "target_test") plan.target_test_ids.push_back(point_id);
    else if (cells[1] == "shadow_train") plan.shadow_train_ids.push_back(point_id);
    else if (cells[1] == "shadow_test") plan.shadow_test_ids.push_back(point_id);
    else throw StageError("splits.csv: unknown partition '" + cells[1] + "'");
  }
  std::vector<SplitPlan> plans;
  plans.reserve(by_split.size());
  int expect = 0;
  for (auto& [sid, plan] : by_split) {
    if (sid != expect++)
      throw StageError("splits.csv: split ids are not dense from zero");
    plans.push_back(std::move(plan));
  }
  if (plans.empty()) throw StageError("splits.csv: no split rows");
  return plans;
}

std::vector<InferenceRecord> parse_records_csv(const std::string& text) {
  std::vector<InferenceRecord> records;
  auto rows = csv_rows(text, "split_id,attack_id,point_id,b,b_pred", "records.csv");
  records.reserve(rows.size());
  for (const auto& row : rows) {
    auto cells = split_csv_line(row);
    if (cells.size() != 5) throw StageError("records.csv: malformed row '" + row + "'");
    InferenceRecord r;
    try {
      r.split_id = static_cast<int>(parse_int_strict(cells[0], "split_id"));
      r.attack_id = static_cast<int>(parse_int_strict(cells[1], "attack_id"));
      r.point_id = static_cast<int>(parse_int_strict(cells[2], "point_id"));
    } catch (const std::exception&) {
      throw StageError("records.csv: malformed row '" + row + "'");
    }
    if ((cells[3] != "0" && cells[3] != "1") || (cells[4] != "0" && cells[4] != "1"))
      throw StageError("records.csv: membership bits must be 0 or 1 in row '" + row + "'");
    r.b = cells[3] == "1" ? 1 : 0;
    r.b_pred = cells[4] == "1" ? 1 : 0;
    records.push_back(r);
  }
  return records;
}

std::vector<ModelStats> parse_model_stats_csv(const std::string& text) {
  std::vector<ModelStats> stats;
  for (const auto& row :
       csv_rows(text, "repetition,split_id,role,train_acc,test_acc", "model_stats.csv")) {
    auto cells = split_csv_line(row);
    if (cells.size() != 5) throw StageError("model_stats.csv: malformed row '" + row + "'");
    ModelStats st;
    try {
      st.repetition = static_cast<int>(parse_int_strict(cells[0], "repetition"));
      st.split_id = static_cast<int>(parse_int_strict(cells[1], "split_id"));
      st.role = cells[2];
      st.train_acc = parse_double_strict(cells[3], "train_acc");
      st.test_acc = parse_double_strict(cells[4], "test_acc");
    } catch (const std::exception&) {
      throw StageError("model_stats.csv: malformed row '" + row + "'");
    }
    stats.push_back(std::move(st));
  }
  return stats;
}

VulnerableSet parse_vulnerable_csv(const std::string& path, const std::string& method,
                                   int repetition, int k) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw StageError(e.what());
  }
  VulnerableSet set;
  set.method = method;
  set.repetition = repetition;
  set.k = k;
  auto rows = csv_rows(text, "rank,point_id,score", path);
  if (static_cast<int>(rows.size()) != k)
    throw StageError(path + ": expected " + std::to_string(k) + " rows, found " +
                     std::to_string(rows.size()));
  for (const auto& row : rows) {
    auto cells = split_csv_line(row);
    if (cells.size() != 3) throw StageError(path + ": malformed row '" + row + "'");
    try {
      set.ids.push_back(static_cast<int>(parse_int_strict(cells[1], "point_id")));
      set.scores.push_back(parse_double_strict(cells[2], "score"));
    } catch (const std::exception&) {
      throw StageError(path + ": malformed row '" + row + "'");
    }
  }
  return set;
}

void write_rate_reports(const fs::path& dir, const RunConfig& cfg,
                        const std::vector<PointRates>& point_rates,
                        const std::vector<AttackRates>& attack_rates,
                        const std::vector<ModelStats>& stats, int corpus_size,
                        int reference_pool_size) {
  write_text_file((dir / "point_rates.csv").string(), build_point_rates_csv(point_rates));
  write_text_file((dir / "attack_rates.csv").string(),
                  build_attack_rates_csv(attack_rates, attack_name_table()));
  RateCurves curves = sorted_rate_curves(point_rates);
  write_text_file((dir / "amer_curve.csv").string(), build_curve_csv(curves.amer));
  write_text_file((dir / "anmer_curve.csv").string(), build_curve_csv(curves.anmer));
  write_text_file((dir / "exposure_gap_curve.csv").string(),
                  build_curve_csv(curves.exposure_gap));
  SummaryInputs in;
  in.corpus_size = corpus_size;
  in.reference_pool_size = reference_pool_size;
  in.cfg = &cfg;
  in.stats_rep0 = &stats;
  in.point_rates = &point_rates;
  in.attack_rates = &attack_rates;
  write_text_file((dir / "report_summary.csv").string(), build_report_summary(in));
}

}  // namespace

void write_run_artifacts(const RunResult& res) {
  const RunConfig& cfg = res.config;
  if (cfg.output.dir.empty()) throw StageError("output.dir is empty; nowhere to write the run");
  if (res.repetitions.empty()) throw StageError("run produced no repetitions");
  fs::path dir(cfg.output.dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StageError("cannot create output directory " + cfg.output.dir + ": " + ec.message());

  write_text_file((dir / "config.txt").string(), serialize_config(cfg));
  save_corpus(res.corpus, (dir / "corpus.csv").string());
  std::string corpus_hash_hex = hex64(hash_file_bytes((dir / "corpus.csv").string()));

  const RepetitionOutcome& rep0 = res.repetitions.front();
  write_text_file((dir / "splits.csv").string(), build_splits_csv(rep0));
  write_text_file((dir / "records.csv").string(), build_records_csv(rep0));
  write_text_file((dir / "attacks.json").string(), build_attacks_json(cfg));

  std::vector<ModelStats> all_stats;
  for (const auto& rep : res.repetitions)
    for (const auto& so : rep.splits)
      all_stats.insert(all_stats.end(), so.stats.begin(), so.stats.end());
  write_text_file((dir / "model_stats.csv").string(), build_model_stats_csv(all_stats));

  write_rate_reports(dir, cfg, rep0.point_rates, rep0.attack_rates, all_stats,
                     res.corpus.size(), res.extended.size() - res.corpus.size());

  std::vector<VulnerableSet> all_sets;
  std::vector<std::string> labels;
  for (const auto& rep : res.repetitions) {
    for (const auto& set : rep.vulnerable) {
      std::string stem = "vulnerable_" + set.method + "_r" + std::to_string(set.repetition);
      write_text_file((dir / (stem + ".csv")).string(), build_vulnerable_csv(set));
      all_sets.push_back(set);
      labels.push_back(set.method + "_r" + std::to_string(set.repetition));
    }
  }
  write_text_file((dir / "overlap.csv").string(), build_overlap_csv(all_sets, labels));

  if (cfg.output.dump_signals)
    write_text_file((dir / "signals.csv").string(), build_signals_csv(rep0));
  if (cfg.output.save_models) {
    fs::create_directories(dir / "models", ec);
    if (ec) throw StageError("cannot create models directory: " + ec.message());
    for (const auto& so : rep0.splits) {
      std::string stem = "split" + std::to_string(so.plan.split_id) + "_";
      save_model(so.target_model, (dir / "models" / (stem + "target.txt")).string());
      save_model(so.shadow_model, (dir / "models" / (stem + "shadow.txt")).string());
      save_model(so.relab_model,
                 (dir / "models" / (stem + "relabelled_shadow.txt")).string());
    }
  }

  write_text_file((dir / "manifest.txt").string(), build_manifest(res, corpus_hash_hex));
  fs::remove(dir / kIncompleteMarker, ec);
}

RunResult execute_run(const RunConfig& cfg, int workers) {
  validate_config(cfg);
  if (cfg.output.dir.empty()) throw ConfigError("output.dir is required to run");
  fs::path dir(cfg.output.dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StageError("cannot create output directory " + cfg.output.dir + ": " + ec.message());
  write_text_file((dir / kIncompleteMarker).string(), "run in progress\n");
  write_text_file((dir / "config.txt").string(), serialize_config(cfg));
  RunResult res = run_experiment(cfg, workers);
  write_run_artifacts(res);
  return res;
}

void emit_report(const std::string& run_dir) {
  auto manifest = read_manifest(run_dir);
  fs::path dir(run_dir);
  RunConfig cfg;
  try {
    cfg = parse_config(read_text_file((dir / "config.txt").string()));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(e.what());
  }
  if (config_hash(cfg) != manifest_str(manifest, "config_hash", run_dir))
    throw StageError(run_dir + ": config.txt does not match the manifest hash");
  int corpus_size = manifest_int(manifest, "corpus_size", run_dir);
  int pool_size = manifest_int(manifest, "reference_pool_size", run_dir);

  std::vector<SplitPlan> plans;
  std::vector<InferenceRecord> records;
  std::vector<ModelStats> stats;
  try {
    plans = parse_splits_csv(read_text_file((dir / "splits.csv").string()), corpus_size);
    records = parse_records_csv(read_text_file((dir / "records.csv").string()));
    stats = parse_model_stats_csv(read_text_file((dir / "model_stats.csv").string()));
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(e.what());
  }

  MembershipLedger ledger = tally_membership(plans);
  std::vector<PointRates> point_rates;
  std::vector<AttackRates> attack_rates;
  try {
    point_rates = compute_point_rates(records, ledger, counted_attack_ids(cfg));
    attack_rates = compute_attack_rates(records, ledger);
  } catch (const std::exception& e) {
    throw StageError(std::string("raw artifacts are inconsistent: ") + e.what());
  }
  write_rate_reports(dir, cfg, point_rates, attack_rates, stats, corpus_size, pool_size);
}

std::string compare_runs(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw ConfigError("compare needs at least one run directory");
  std::string corpus_hash;
  int k = 0;
  std::vector<VulnerableSet> sets;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < run_dirs.size(); ++i) {
    auto manifest = read_manifest(run_dirs[i]);
    std::string h = manifest_str(manifest, "corpus_hash", run_dirs[i]);
    int run_k = manifest_int(manifest, "vuln_k", run_dirs[i]);
    if (i == 0) {
      corpus_hash = h;
      k = run_k;
    } else {
      if (h != corpus_hash)
        throw StageError("runs audit different corpora: " + run_dirs[0] + " vs " + run_dirs[i]);
      if (run_k != k)
        throw StageError("runs disagree on vuln.k: " + run_dirs[0] + " has " + std::to_string(k) +
                         ", " + run_dirs[i] + " has " + std::to_string(run_k));
    }
    int reps = manifest_int(manifest, "repetitions", run_dirs[i]);
    for (int r = 0; r < reps; ++r) {
      for (const auto& method : vulnerable_method_order()) {
        std::string file = "vulnerable_" + method + "_r" + std::to_string(r) + ".csv";
        sets.push_back(parse_vulnerable_csv((fs::path(run_dirs[i]) / file).string(), method, r, k));
        labels.push_back("run" + std::to_string(i) + "." + method + ".r" + std::to_string(r));
      }
    }
  }
  return build_overlap_csv(sets, labels);
}

}  // namespace miaudit
