#include "ventlab/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ventlab/checkpoint.hpp"
#include "ventlab/error.hpp"
#include "ventlab/io.hpp"
#include "ventlab/rng.hpp"

namespace ventlab {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kManifestVersion = 1;

json strip_seed(const json& section, const std::string& name) {
  if (!section.is_object()) throw ConfigError(name + " must be an object");
  if (section.contains("seed"))
    throw ConfigError(name + ".seed is not configurable; stage seeds derive from the master seed");
  return section;
}

std::string rel(const Layout& l, const fs::path& p) { return fs::relative(p, l.root).generic_string(); }

std::pair<std::string, std::string> hashed(const Layout& l, const fs::path& p) {
  return {rel(l, p), sha256_file(p)};
}

// Config snapshot recorded in manifests; the output location is not part of a run's identity.
json snapshot(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output_dir");
  return j;
}

// Fails when an upstream artifact was produced under different settings for the
// sections it depends on.
void require_same(const Manifest& upstream, const RunConfig& cfg, std::initializer_list<const char*> keys) {
  const json now = snapshot(cfg);
  for (const char* k : keys)
    if (upstream.config.value(k, json()) != now.at(k))
      throw DataError("artifacts of stage '" + upstream.stage + "' were produced with a different '" + k +
                      "' setting; rerun that stage");
}

std::string method_stage(MethodKind k) { return "train-" + to_string(k); }

struct PolicyRef {
  std::string name;
  bool clinician = false;
  std::vector<fs::path> checkpoints;
  std::vector<std::pair<std::string, std::string>> inputs;
};

PolicyRef resolve_policy(const RunConfig& cfg, const Layout& layout, const std::string& policy) {
  PolicyRef ref;
  if (policy == "clinician") {
    ref.name = "clinician";
    ref.clinician = true;
    return ref;
  }
  std::optional<MethodKind> kind;
  try {
    kind = parse_method(policy);
  } catch (const ConfigError&) {
  }
  if (kind) {
    require_same(verify_stage(layout, method_stage(*kind)), cfg, {"seed", "runs", "model", "train"});
    ref.name = to_string(*kind);
    for (int k = 0; k < cfg.runs; ++k) {
      const auto p = layout.checkpoint(ref.name, k);
      ref.checkpoints.push_back(p);
      ref.inputs.push_back(hashed(layout, p));
    }
    return ref;
  }
  const fs::path p(policy);
  if (!fs::exists(p)) throw DataError("policy '" + policy + "' is neither a method, 'clinician' nor a checkpoint file");
  ref.name = p.stem().string();
  ref.checkpoints.push_back(p);
  ref.inputs.emplace_back(p.generic_string(), sha256_file(p));
  return ref;
}

std::vector<std::pair<std::string, std::string>> dataset_inputs(const Layout& l) {
  return {hashed(l, l.episodes()), hashed(l, l.dataset()), hashed(l, l.normalizer())};
}

json mean_std_json(std::span<const double> v) {
  const auto m = mean_std(v);
  return {{"mean", m.mean}, {"std", m.std}};
}

ActionHistogram merge(const std::vector<ActionHistogram>& hs) {
  ActionHistogram out;
  for (std::size_t d = 0; d < 5; ++d) out.percent[d].assign(static_cast<std::size_t>(kActionRadix[d]), 0.0);
  for (const auto& h : hs) out.count += h.count;
  if (out.count == 0) return out;
  for (const auto& h : hs)
    for (std::size_t d = 0; d < 5; ++d)
      for (std::size_t b = 0; b < out.percent[d].size(); ++b)
        out.percent[d][b] += h.percent[d][b] * static_cast<double>(h.count) / static_cast<double>(out.count);
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (cohort.n < 1) throw ConfigError("cohort.n must be >= 1");
  ventlab::validate(cohort.ranges);
  ventlab::validate(dataset);
  model.validate();
  train.validate();
  fqe.validate();
  if (online_eval.horizon < 1) throw ConfigError("online_eval.horizon must be >= 1");
  if (model.behavior_head) throw ConfigError("model.behavior_head is set by the training method");
  if (model.state_dim != static_cast<int>(kStateDim))
    throw ConfigError("model.state_dim must be " + std::to_string(kStateDim));
  if (model.num_actions != kNumActions) throw ConfigError("model.num_actions must be " + std::to_string(kNumActions));
}

json to_json(const RunConfig& c) {
  json train = to_json(c.train);
  train.erase("seed");
  json dataset = to_json(c.dataset);
  dataset.erase("seed");
  json fqe = to_json(c.fqe);
  fqe.erase("seed");
  return {{"seed", c.seed},
          {"runs", c.runs},
          {"output_dir", c.output_dir},
          {"cohort", {{"n", c.cohort.n}, {"ranges", to_json(c.cohort.ranges)}}},
          {"dataset", dataset},
          {"model", to_json(c.model)},
          {"train", train},
          {"fqe", fqe},
          {"online_eval", {{"horizon", c.online_eval.horizon}, {"ood", to_json(c.online_eval.ood)}}}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "runs") c.runs = v.get<int>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "cohort") {
        for (const auto& [k2, v2] : v.items()) {
          if (k2 == "n") c.cohort.n = v2.get<int>();
          else if (k2 == "ranges") c.cohort.ranges = param_ranges_from_json(v2);
          else throw ConfigError("cohort: unknown key '" + k2 + "'");
        }
      } else if (key == "dataset") c.dataset = dataset_config_from_json(strip_seed(v, key));
      else if (key == "model") c.model = net_config_from_json(v);
      else if (key == "train") c.train = train_config_from_json(strip_seed(v, key));
      else if (key == "fqe") c.fqe = fqe_config_from_json(strip_seed(v, key));
      else if (key == "online_eval") {
        for (const auto& [k2, v2] : v.items()) {
          if (k2 == "horizon") c.online_eval.horizon = v2.get<int>();
          else if (k2 == "ood") c.online_eval.ood = ood_config_from_json(v2);
          else throw ConfigError("online_eval: unknown key '" + k2 + "'");
        }
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json(path)); }

StageSeeds stage_seeds(const RunConfig& c) {
  StageSeeds s{derive_seed(c.seed, {1}), derive_seed(c.seed, {2}), derive_seed(c.seed, {4}),
               derive_seed(c.seed, {6}), {}, {}};
  for (int k = 0; k < c.runs; ++k) {
    s.train.push_back(derive_seed(c.seed, {3, static_cast<std::uint64_t>(k)}));
    s.online.push_back(derive_seed(c.seed, {5, static_cast<std::uint64_t>(k)}));
  }
  return s;
}

fs::path Layout::checkpoint(const std::string& method, int run) const {
  return root / "checkpoints" / (method + "-run" + std::to_string(run) + ".ckpt");
}
fs::path Layout::metrics(const std::string& method, int run) const {
  return root / "metrics" / (method + "-run" + std::to_string(run) + ".csv");
}
fs::path Layout::fqe_report(const std::string& policy) const { return root / "reports" / ("fqe-" + policy + ".json"); }
fs::path Layout::online_report(const std::string& policy) const {
  return root / "reports" / ("online-" + policy + ".json");
}
fs::path Layout::histogram(const std::string& policy) const {
  return root / "reports" / ("actions-" + policy + ".csv");
}
fs::path Layout::manifest(const std::string& stage) const { return root / "manifests" / (stage + ".json"); }

json to_json(const Manifest& m) {
  auto files = [](const auto& v) {
    json a = json::array();
    for (const auto& [path, hash] : v) a.push_back({{"path", path}, {"sha256", hash}});
    return a;
  };
  return {{"version", kManifestVersion}, {"stage", m.stage},       {"seed", m.seed},
          {"config", m.config},         {"inputs", files(m.inputs)}, {"outputs", files(m.outputs)}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  try {
    if (j.at("version").get<int>() != kManifestVersion) throw DataError("unsupported manifest version");
    m.stage = j.at("stage").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    for (const auto& f : j.at("inputs"))
      m.inputs.emplace_back(f.at("path").get<std::string>(), f.at("sha256").get<std::string>());
    for (const auto& f : j.at("outputs"))
      m.outputs.emplace_back(f.at("path").get<std::string>(), f.at("sha256").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const Layout& layout, const Manifest& m) { write_json(layout.manifest(m.stage), to_json(m)); }

Manifest read_manifest(const Layout& layout, const std::string& stage) {
  const auto p = layout.manifest(stage);
  if (!fs::exists(p)) throw DataError("missing manifest for stage '" + stage + "' (" + p.string() + ")");
  return manifest_from_json(read_json(p));
}

Manifest verify_stage(const Layout& layout, const std::string& stage) {
  auto m = read_manifest(layout, stage);
  for (const auto& [path, hash] : m.outputs) {
    const auto p = layout.root / path;
    if (!fs::exists(p)) throw DataError("missing artifact " + path);
    if (sha256_file(p) != hash) throw DataError("hash mismatch for artifact " + path);
  }
  return m;
}

Manifest run_spawn_cohort(const RunConfig& cfg) {
  cfg.validate();
  const Layout layout{cfg.output_dir};
  const auto seeds = stage_seeds(cfg);
  save_cohort(layout.cohort(), spawn_cohort(cfg.cohort.n, seeds.cohort, cfg.cohort.ranges));
  Manifest m{"cohort", snapshot(cfg), cfg.seed, {}, {hashed(layout, layout.cohort())}};
  write_manifest(layout, m);
  return m;
}

Manifest run_gen_data(const RunConfig& cfg) {
  cfg.validate();
  const Layout layout{cfg.output_dir};
  require_same(verify_stage(layout, "cohort"), cfg, {"seed", "cohort"});
  const auto cohort = load_cohort(layout.cohort());
  DatasetConfig dc = cfg.dataset;
  dc.seed = stage_seeds(cfg).dataset;
  const Dataset ds = generate_dataset(cohort, dc);
  save_episodes(layout.episodes(), ds.episodes);
  write_json(layout.dataset(), {{"config", to_json(ds.config)},
                                {"split", to_json(ds.split)},
                                {"episodes", ds.episodes.size()},
                                {"behavior_mortality", cohort_mortality(ds.episodes)}});
  write_json(layout.normalizer(), {{"state", to_json(ds.normalizer)}, {"reward", to_json(ds.reward_norms)}});
  Manifest m{"dataset", snapshot(cfg), cfg.seed, {hashed(layout, layout.cohort())}, dataset_inputs(layout)};
  write_manifest(layout, m);
  return m;
}

DatasetArtifacts load_dataset_artifacts(const RunConfig& cfg) {
  const Layout layout{cfg.output_dir};
  require_same(verify_stage(layout, "cohort"), cfg, {"seed", "cohort"});
  require_same(verify_stage(layout, "dataset"), cfg, {"seed", "cohort", "dataset"});
  DatasetArtifacts a;
  a.cohort = load_cohort(layout.cohort());
  const json meta = read_json(layout.dataset());
  const json norm = read_json(layout.normalizer());
  try {
    a.data.config = dataset_config_from_json(meta.at("config"));
    a.data.split = split_from_json(meta.at("split"));
    a.data.normalizer = normalizer_from_json(norm.at("state"));
    a.data.reward_norms = reward_norms_from_json(norm.at("reward"));
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset metadata: ") + e.what());
  }
  a.data.episodes = load_episodes(layout.episodes());
  const int n = static_cast<int>(a.data.episodes.size());
  for (const auto* part : {&a.data.split.train, &a.data.split.test})
    for (int i : *part)
      if (i < 0 || i >= n) throw DataError("dataset.json: split refers to a missing episode");
  return a;
}

Manifest run_train(const RunConfig& cfg, MethodKind method) {
  cfg.validate();
  const Layout layout{cfg.output_dir};
  const auto art = load_dataset_artifacts(cfg);
  const auto seeds = stage_seeds(cfg);
  const auto windows = make_windows(art.data.episodes, art.data.split.train, cfg.model.seq_len, art.data.normalizer);
  const std::string name = to_string(method);
  Manifest m{method_stage(method), snapshot(cfg), cfg.seed, dataset_inputs(layout), {}};
  for (int k = 0; k < cfg.runs; ++k) {
    TrainConfig tc = cfg.train;
    tc.seed = seeds.train[static_cast<std::size_t>(k)];
    std::ostringstream csv;
    write_metrics_header(csv);
    const auto ck = train_method(method, windows, cfg.model, tc, [&](const MetricsRow& row) { write_metrics_row(csv, row); });
    save_checkpoint(ck, layout.checkpoint(name, k));
    write_text(layout.metrics(name, k), csv.str());
    m.outputs.push_back(hashed(layout, layout.checkpoint(name, k)));
    m.outputs.push_back(hashed(layout, layout.metrics(name, k)));
  }
  write_manifest(layout, m);
  return m;
}

OodSet make_ood_set(const RunConfig& cfg, const DatasetArtifacts& art, const WindowSet& test) {
  const int L = test.length;
  const auto per = static_cast<std::size_t>(L) * kStateDim;
  std::vector<double> held;
  std::vector<double> w(per);
  for (auto i : test.initial_windows()) {
    test.gather(i, false, w);
    held.insert(held.end(), w.begin(), w.end());
  }
  const auto seed = stage_seeds(cfg).ood;
  const auto& oc = cfg.online_eval.ood;
  OodSet out;
  out.windows = make_ood_states(OodMode::feature_shift, cfg.cohort.ranges, art.data.normalizer, L, held, oc,
                                derive_seed(seed, {1}));
  const auto ext = make_ood_states(OodMode::extended_params, cfg.cohort.ranges, art.data.normalizer, L, {}, oc,
                                   derive_seed(seed, {2}));
  out.windows.insert(out.windows.end(), ext.begin(), ext.end());
  out.count = static_cast<int>(out.windows.size() / per);
  return out;
}

Manifest run_eval_fqe(const RunConfig& cfg, const std::string& policy) {
  cfg.validate();
  const Layout layout{cfg.output_dir};
  const auto ref = resolve_policy(cfg, layout, policy);
  const auto art = load_dataset_artifacts(cfg);
  const int L = cfg.model.seq_len;
  const auto train_w = make_windows(art.data.episodes, art.data.split.train, L, art.data.normalizer);
  const auto test_w = make_windows(art.data.episodes, art.data.split.test, L, art.data.normalizer);
  const auto ood = make_ood_set(cfg, art, test_w);
  const int per = L * static_cast<int>(kStateDim);
  std::vector<double> held;
  for (auto i : test_w.initial_windows()) {
    std::vector<double> w(static_cast<std::size_t>(per));
    test_w.gather(i, false, w);
    held.insert(held.end(), w.begin(), w.end());
  }

  FqeConfig fc = cfg.fqe;
  fc.seed = stage_seeds(cfg).fqe;
  NetConfig qnet = cfg.model;
  qnet.behavior_head = false;

  std::vector<double> scores, ood_q, id_q;
  json runs = json::array();
  // Expected return of each test episode averaged over runs, paired with the logged mortality.
  std::vector<double> per_episode;
  std::vector<int> episodes;
  auto run_one = [&](const ActionSelector& sel, const GreedySelector* greedy, int k) {
    NetworkQ q(qnet, fc);
    const auto fit = fit_fqe(q, train_w, sel, fc);
    const auto score = fqe_score(q, test_w, sel);
    if (per_episode.empty()) {
      per_episode.assign(score.per_episode.size(), 0.0);
      episodes = score.episodes;
    }
    for (std::size_t i = 0; i < per_episode.size(); ++i) per_episode[i] += score.per_episode[i];
    std::vector<double> mort;
    for (int e : score.episodes) mort.push_back(art.data.episodes[static_cast<std::size_t>(e)].death_probability);
    const auto corr = pearson(score.per_episode, mort);
    json row{{"run", k},
             {"fqe_score", score.mean},
             {"iterations", fit.iterations},
             {"converged", fit.converged},
             {"final_mse", fit.trace.back().regression_mse},
             {"correlation", {{"r", corr.r}, {"p", corr.p}, {"n", corr.n}}}};
    scores.push_back(score.mean);
    if (greedy) {
      ood_q.push_back(ood_initial_q(*greedy, ood.windows, ood.count));
      id_q.push_back(ood_initial_q(*greedy, held, static_cast<int>(held.size()) / per));
      row["ood_mean_q"] = ood_q.back();
      row["id_mean_q"] = id_q.back();
    }
    runs.push_back(row);
  };

  if (ref.clinician) {
    run_one(LoggedSelector{}, nullptr, 0);
  } else {
    for (std::size_t k = 0; k < ref.checkpoints.size(); ++k) {
      const GreedySelector sel(load_checkpoint(ref.checkpoints[k]), cfg.train.bcq_threshold);
      run_one(sel, &sel, static_cast<int>(k));
    }
  }
  for (auto& v : per_episode) v /= static_cast<double>(runs.size());
  std::vector<double> mort;
  for (int e : episodes) mort.push_back(art.data.episodes[static_cast<std::size_t>(e)].death_probability);
  const auto pooled = pearson(per_episode, mort);

  json report{{"policy", ref.name},
              {"runs", runs},
              {"fqe_score", mean_std_json(scores)},
              {"correlation", {{"r", pooled.r}, {"p", pooled.p}, {"n", pooled.n}}},
              {"ood_windows", ood.count}};
  if (!ood_q.empty()) {
    report["ood_mean_q"] = mean_std_json(ood_q);
    report["id_mean_q"] = mean_std_json(id_q);
    report["ood_below_threshold"] = std::count_if(ood_q.begin(), ood_q.end(), [](double v) { return v <= kMaxReturn; });
  }
  write_json(layout.fqe_report(ref.name), report);

  auto inputs = dataset_inputs(layout);
  inputs.insert(inputs.end(), ref.inputs.begin(), ref.inputs.end());
  Manifest m{"fqe-" + ref.name, snapshot(cfg), cfg.seed, inputs, {hashed(layout, layout.fqe_report(ref.name))}};
  write_manifest(layout, m);
  return m;
}

Manifest run_eval_online(const RunConfig& cfg, const std::string& policy) {
  cfg.validate();
  const Layout layout{cfg.output_dir};
  const auto ref = resolve_policy(cfg, layout, policy);
  const auto art = load_dataset_artifacts(cfg);
  const auto seeds = stage_seeds(cfg);

  RolloutConfig rc;
  rc.horizon = cfg.online_eval.horizon;
  rc.norms = art.data.reward_norms;
  rc.injury = art.data.config.injury;
  rc.injury_weight = art.data.config.injury_weight;

  OnlineReport rep;
  if (ref.clinician) {
    const ClinicianPolicy pol(art.data.config.clinician_eps, art.data.config.clinician);
    rep = evaluate_policy_online(pol, art.cohort, rc, seeds.online);
    rep.policy = ref.name;
  } else {
    // Run k pairs checkpoint k with rollout seed k; spread is across runs.
    std::vector<ActionHistogram> hists;
    for (std::size_t k = 0; k < ref.checkpoints.size(); ++k) {
      const NetworkPolicy pol(load_checkpoint(ref.checkpoints[k]), art.data.normalizer, cfg.train.bcq_threshold);
      const std::uint64_t s[1] = {seeds.online[k]};
      const auto one = evaluate_policy_online(pol, art.cohort, rc, s);
      rep.seeds.push_back(one.seeds.front());
      hists.push_back(one.actions);
    }
    rep.policy = ref.name;
    rep.actions = merge(hists);
    std::vector<double> safety, dp, ret, mort;
    for (const auto& s : rep.seeds) {
      safety.push_back(s.compliance.safety_rate);
      dp.push_back(s.compliance.reduced_dp_rate);
      ret.push_back(s.cumulative_reward);
      mort.push_back(s.mortality);
    }
    rep.safety_rate = mean_std(safety);
    rep.reduced_dp_rate = mean_std(dp);
    rep.cumulative_reward = mean_std(ret);
    rep.mortality = mean_std(mort);
  }
  write_json(layout.online_report(ref.name), to_json(rep));
  std::ostringstream csv;
  write_histogram_csv(csv, ref.name, rep.actions);
  write_text(layout.histogram(ref.name), csv.str());

  auto inputs = dataset_inputs(layout);
  inputs.push_back(hashed(layout, layout.cohort()));
  inputs.insert(inputs.end(), ref.inputs.begin(), ref.inputs.end());
  Manifest m{"online-" + ref.name, snapshot(cfg), cfg.seed, inputs,
             {hashed(layout, layout.online_report(ref.name)), hashed(layout, layout.histogram(ref.name))}};
  write_manifest(layout, m);
  return m;
}

Manifest run_report(const RunConfig& cfg) {
  cfg.validate();
  const Layout layout{cfg.output_dir};
  const std::vector<std::string> names{"tcql", "ddqn", "cql_fixed", "bcq", "clinician"};
  Manifest m{"report", snapshot(cfg), cfg.seed, {}, {}};
  std::string csv =
      "method,fqe_score_mean,fqe_score_std,mortality_mean,mortality_std,safety_rate_mean,safety_rate_std,"
      "reduced_dp_rate_mean,reduced_dp_rate_std,ood_mean_q_mean,ood_mean_q_std,corr_r,corr_p\n";
  int rows = 0;
  for (const auto& name : names) {
    const bool has_fqe = fs::exists(layout.manifest("fqe-" + name));
    const bool has_online = fs::exists(layout.manifest("online-" + name));
    if (!has_fqe && !has_online) continue;
    json fqe = json::object(), online = json::object();
    if (has_fqe) {
      verify_stage(layout, "fqe-" + name);
      fqe = read_json(layout.fqe_report(name));
      m.inputs.push_back(hashed(layout, layout.fqe_report(name)));
    }
    if (has_online) {
      verify_stage(layout, "online-" + name);
      online = read_json(layout.online_report(name));
      m.inputs.push_back(hashed(layout, layout.online_report(name)));
    }
    auto cell = [](const json& j, const char* a, const char* b) -> std::string {
      if (!j.contains(a)) return "";
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", j.at(a).at(b).get<double>());
      return buf;
    };
    csv += name;
    for (const auto& c : {cell(fqe, "fqe_score", "mean"), cell(fqe, "fqe_score", "std"),
                          cell(online, "mortality", "mean"), cell(online, "mortality", "std"),
                          cell(online, "safety_rate", "mean"), cell(online, "safety_rate", "std"),
                          cell(online, "reduced_dp_rate", "mean"), cell(online, "reduced_dp_rate", "std"),
                          cell(fqe, "ood_mean_q", "mean"), cell(fqe, "ood_mean_q", "std")}) {
      csv += ',';
      csv += c;
    }
    if (fqe.contains("correlation")) {
      char buf[96];
      std::snprintf(buf, sizeof buf, ",%.6f,%.6g", fqe["correlation"]["r"].get<double>(),
                    fqe["correlation"]["p"].get<double>());
      csv += buf;
    } else {
      csv += ",,";
    }
    csv += '\n';
    ++rows;
  }
  if (rows == 0) throw DataError("report: no evaluation reports found under " + layout.root.string());
  write_text(layout.comparison(), csv);
  m.outputs.push_back(hashed(layout, layout.comparison()));
  write_manifest(layout, m);
  return m;
}

}  // namespace ventlab
