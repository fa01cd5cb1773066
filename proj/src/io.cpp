#include "ventlab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "ventlab/error.hpp"

namespace ventlab {
namespace {

using nlohmann::json;

constexpr int kCohortVersion = 1;
constexpr int kEpisodesVersion = 1;

json range_json(const Range& r) { return {{"lo", r.lo}, {"hi", r.hi}, {"log_uniform", r.log_uniform}}; }

Range range_from(const json& j, Range r, const std::string& name) {
  for (const auto& [key, v] : j.items()) {
    if (key == "lo") r.lo = v.get<double>();
    else if (key == "hi") r.hi = v.get<double>();
    else if (key == "log_uniform") r.log_uniform = v.get<bool>();
    else throw ConfigError("ranges." + name + ": unknown key '" + key + "'");
  }
  return r;
}

// Name table shared by the ranges reader and writer.
template <typename Ranges, typename F>
void for_each_range(Ranges& r, F&& f) {
  f("compliance", r.compliance);
  f("resistance", r.resistance);
  f("shunt", r.shunt);
  f("deadspace", r.deadspace);
  f("vo2", r.vo2);
  f("rq", r.rq);
  f("hemoglobin", r.hemoglobin);
  f("cardiac_output", r.cardiac_output);
  f("weight", r.weight);
  f("age", r.age);
  f("hr", r.hr);
  f("sbp", r.sbp);
  f("dbp", r.dbp);
  f("temp", r.temp);
  f("lactate", r.lactate);
  f("na", r.na);
  f("k", r.k);
  f("cl", r.cl);
  f("hco3", r.hco3);
  f("creatinine", r.creatinine);
  f("bun", r.bun);
  f("wbc", r.wbc);
  f("platelets", r.platelets);
  f("gcs", r.gcs);
}

// JSON has no NaN; missing values travel as null.
json state_json(const PatientState& s) {
  json a = json::array();
  for (double v : s.values) {
    if (std::isnan(v)) a.push_back(nullptr);
    else a.push_back(v);
  }
  return a;
}

PatientState state_from(const json& j) {
  if (!j.is_array() || j.size() != kStateDim) throw DataError("state must have 24 values");
  PatientState s;
  for (std::size_t i = 0; i < kStateDim; ++i)
    s.values[i] = j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
  return s;
}

json mech_json(const MechanicsObservation& m) {
  const Action& a = m.settings;
  return json::array({m.pip_cmH2O, m.peep_set_cmH2O, m.auto_peep_cmH2O, m.tidal_volume_mL,
                      m.driving_pressure_cmH2O, m.alveolar_ventilation_L_per_min,
                      m.mechanical_power_proxy, a.peep_cmH2O, a.fio2, a.rr_per_min, a.ie.insp,
                      a.ie.exp, a.pvent_cmH2O});
}

MechanicsObservation mech_from(const json& j) {
  if (!j.is_array() || j.size() != 13) throw DataError("mechanics record must have 13 values");
  MechanicsObservation m;
  m.pip_cmH2O = j[0].get<double>();
  m.peep_set_cmH2O = j[1].get<double>();
  m.auto_peep_cmH2O = j[2].get<double>();
  m.tidal_volume_mL = j[3].get<double>();
  m.driving_pressure_cmH2O = j[4].get<double>();
  m.alveolar_ventilation_L_per_min = j[5].get<double>();
  m.mechanical_power_proxy = j[6].get<double>();
  m.settings.peep_cmH2O = j[7].get<double>();
  m.settings.fio2 = j[8].get<double>();
  m.settings.rr_per_min = j[9].get<double>();
  m.settings.ie.insp = j[10].get<int>();
  m.settings.ie.exp = j[11].get<int>();
  m.settings.pvent_cmH2O = j[12].get<double>();
  return m;
}

template <std::size_t N>
std::array<double, N> array_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) throw DataError(std::string(what) + ": wrong length");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
  return out;
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace

json to_json(const ParamRanges& r) {
  json j = json::object();
  for_each_range(r, [&](const char* name, const Range& x) { j[name] = range_json(x); });
  j["male_fraction"] = r.male_fraction;
  j["noise_scale"] = r.noise_scale;
  return j;
}

ParamRanges param_ranges_from_json(const json& j, ParamRanges r) {
  for (const auto& [key, v] : j.items()) {
    bool found = false;
    for_each_range(r, [&](const char* name, Range& x) {
      if (key == name) {
        x = range_from(v, x, key);
        found = true;
      }
    });
    if (found) continue;
    if (key == "male_fraction") r.male_fraction = v.get<double>();
    else if (key == "noise_scale") r.noise_scale = v.get<double>();
    else throw ConfigError("ranges: unknown key '" + key + "'");
  }
  validate(r);
  return r;
}

json to_json(const DatasetConfig& c) {
  return {{"episodes_per_twin", c.episodes_per_twin},
          {"horizon_steps", c.horizon_steps},
          {"clinician_eps", c.clinician_eps},
          {"seed", c.seed},
          {"injury_weight", c.injury_weight},
          {"missing_rate", c.missing_rate},
          {"knn_k", c.knn_k},
          {"train_ratio", c.train_ratio},
          {"clinician",
           {{"spo2_low", c.clinician.spo2_low},
            {"spo2_high", c.clinician.spo2_high},
            {"paco2_low", c.clinician.paco2_low},
            {"paco2_high", c.clinician.paco2_high},
            {"vt_low_mL_per_kg", c.clinician.vt_low_mL_per_kg},
            {"vt_high_mL_per_kg", c.clinician.vt_high_mL_per_kg}}},
          {"injury",
           {{"dp_rate", c.injury.dp_rate},
            {"pip_rate", c.injury.pip_rate},
            {"dp_threshold", c.injury.dp_threshold},
            {"pip_threshold", c.injury.pip_threshold}}}};
}

DatasetConfig dataset_config_from_json(const json& j, DatasetConfig c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "episodes_per_twin") c.episodes_per_twin = v.get<int>();
    else if (key == "horizon_steps") c.horizon_steps = v.get<int>();
    else if (key == "clinician_eps") c.clinician_eps = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "injury_weight") c.injury_weight = v.get<double>();
    else if (key == "missing_rate") c.missing_rate = v.get<double>();
    else if (key == "knn_k") c.knn_k = v.get<int>();
    else if (key == "train_ratio") c.train_ratio = v.get<double>();
    else if (key == "clinician") {
      for (const auto& [k2, v2] : v.items()) {
        auto& t = c.clinician;
        if (k2 == "spo2_low") t.spo2_low = v2.get<double>();
        else if (k2 == "spo2_high") t.spo2_high = v2.get<double>();
        else if (k2 == "paco2_low") t.paco2_low = v2.get<double>();
        else if (k2 == "paco2_high") t.paco2_high = v2.get<double>();
        else if (k2 == "vt_low_mL_per_kg") t.vt_low_mL_per_kg = v2.get<double>();
        else if (k2 == "vt_high_mL_per_kg") t.vt_high_mL_per_kg = v2.get<double>();
        else throw ConfigError("dataset.clinician: unknown key '" + k2 + "'");
      }
    } else if (key == "injury") {
      for (const auto& [k2, v2] : v.items()) {
        auto& t = c.injury;
        if (k2 == "dp_rate") t.dp_rate = v2.get<double>();
        else if (k2 == "pip_rate") t.pip_rate = v2.get<double>();
        else if (k2 == "dp_threshold") t.dp_threshold = v2.get<double>();
        else if (k2 == "pip_threshold") t.pip_threshold = v2.get<double>();
        else throw ConfigError("dataset.injury: unknown key '" + k2 + "'");
      }
    } else {
      throw ConfigError("dataset: unknown key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

void validate(const DatasetConfig& c) {
  if (c.episodes_per_twin < 1) throw ConfigError("dataset.episodes_per_twin must be >= 1");
  if (c.horizon_steps < 1) throw ConfigError("dataset.horizon_steps must be >= 1");
  if (!(c.clinician_eps >= 0 && c.clinician_eps <= 1))
    throw ConfigError("dataset.clinician_eps must lie in [0, 1]");
  if (!(c.injury_weight >= 0)) throw ConfigError("dataset.injury_weight must be >= 0");
  if (!(c.missing_rate >= 0 && c.missing_rate < 1))
    throw ConfigError("dataset.missing_rate must lie in [0, 1)");
  if (c.knn_k < 1) throw ConfigError("dataset.knn_k must be >= 1");
  if (!(c.train_ratio > 0 && c.train_ratio < 1))
    throw ConfigError("dataset.train_ratio must lie in (0, 1)");
  const auto& t = c.clinician;
  if (!(t.spo2_low < t.spo2_high) || !(t.paco2_low < t.paco2_high) ||
      !(t.vt_low_mL_per_kg < t.vt_high_mL_per_kg))
    throw ConfigError("dataset.clinician: each target band needs low < high");
  const auto& r = c.injury;
  if (!(r.dp_rate >= 0) || !(r.pip_rate >= 0))
    throw ConfigError("dataset.injury: rates must be >= 0");
}

json to_json(const FqeConfig& c) {
  return {{"gamma", c.gamma},           {"refreshes", c.refreshes}, {"epochs", c.epochs},
          {"tol", c.tol},               {"batch_size", c.batch_size},
          {"eta", c.eta},               {"seed", c.seed}};
}

FqeConfig fqe_config_from_json(const json& j, FqeConfig c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "gamma") c.gamma = v.get<double>();
    else if (key == "refreshes") c.refreshes = v.get<int>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "tol") c.tol = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "eta") c.eta = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw ConfigError("fqe: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

json to_json(const OodConfig& c) {
  return {{"extension", c.extension},
          {"shift_sigma", c.shift_sigma},
          {"shift_fraction", c.shift_fraction},
          {"count", c.count}};
}

OodConfig ood_config_from_json(const json& j, OodConfig c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "extension") c.extension = v.get<double>();
    else if (key == "shift_sigma") c.shift_sigma = v.get<double>();
    else if (key == "shift_fraction") c.shift_fraction = v.get<double>();
    else if (key == "count") c.count = v.get<int>();
    else throw ConfigError("ood: unknown key '" + key + "'");
  }
  if (!(c.extension >= 0)) throw ConfigError("ood.extension must be >= 0");
  if (!(c.shift_sigma > 0)) throw ConfigError("ood.shift_sigma must be positive");
  if (!(c.shift_fraction > 0 && c.shift_fraction <= 1))
    throw ConfigError("ood.shift_fraction must lie in (0, 1]");
  if (c.count < 1) throw ConfigError("ood.count must be >= 1");
  return c;
}

json to_json(const TwinParams& p) {
  return {{"compliance", p.compliance_mL_per_cmH2O},
          {"resistance", p.resistance_cmH2O_s_per_L},
          {"base_shunt", p.base_shunt_fraction},
          {"deadspace", p.deadspace_mL},
          {"vo2", p.vo2_L_per_min},
          {"vco2", p.vco2_L_per_min},
          {"hemoglobin", p.hemoglobin_g_per_dL},
          {"cardiac_output", p.cardiac_output_L_per_min},
          {"weight", p.weight_kg},
          {"age", p.age_years},
          {"sex", p.sex == Sex::male ? "male" : "female"},
          {"noise_std", p.noise_std},
          {"baseline", p.baseline.values}};
}

TwinParams twin_from_json(const json& j) {
  TwinParams p;
  p.compliance_mL_per_cmH2O = field(j, "compliance").get<double>();
  p.resistance_cmH2O_s_per_L = field(j, "resistance").get<double>();
  p.base_shunt_fraction = field(j, "base_shunt").get<double>();
  p.deadspace_mL = field(j, "deadspace").get<double>();
  p.vo2_L_per_min = field(j, "vo2").get<double>();
  p.vco2_L_per_min = field(j, "vco2").get<double>();
  p.hemoglobin_g_per_dL = field(j, "hemoglobin").get<double>();
  p.cardiac_output_L_per_min = field(j, "cardiac_output").get<double>();
  p.weight_kg = field(j, "weight").get<double>();
  p.age_years = field(j, "age").get<double>();
  const auto sex = field(j, "sex").get<std::string>();
  if (sex == "male") p.sex = Sex::male;
  else if (sex == "female") p.sex = Sex::female;
  else throw DataError("sex must be 'male' or 'female'");
  p.noise_std = array_from<kStateDim>(field(j, "noise_std"), "noise_std");
  p.baseline.values = array_from<kStateDim>(field(j, "baseline"), "baseline");
  if (j.size() != 13) throw DataError("twin record has unexpected fields");
  validate(p);
  return p;
}

json to_json(const Split& s) { return {{"train", s.train}, {"test", s.test}}; }

Split split_from_json(const json& j) {
  Split s;
  s.train = field(j, "train").get<std::vector<int>>();
  s.test = field(j, "test").get<std::vector<int>>();
  return s;
}

json to_json(const StateNormalizer& n) { return {{"mean", n.mean}, {"stddev", n.stddev}}; }

StateNormalizer normalizer_from_json(const json& j) {
  StateNormalizer n;
  n.mean = array_from<kStateDim>(field(j, "mean"), "normalizer.mean");
  n.stddev = array_from<kStateDim>(field(j, "stddev"), "normalizer.stddev");
  return n;
}

json to_json(const RewardNorms& n) { return {{"apache_max", n.apache_max}, {"dp_max", n.dp_max}}; }

RewardNorms reward_norms_from_json(const json& j) {
  RewardNorms n;
  n.apache_max = field(j, "apache_max").get<double>();
  n.dp_max = field(j, "dp_max").get<double>();
  return n;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw DataError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_cohort(const std::filesystem::path& path, const std::vector<TwinParams>& cohort) {
  json a = json::array();
  for (const auto& p : cohort) a.push_back(to_json(p));
  write_json(path, {{"schema", "ventlab.cohort"}, {"version", kCohortVersion}, {"twins", a}});
}

std::vector<TwinParams> load_cohort(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.is_object() || j.value("schema", "") != "ventlab.cohort")
    throw DataError(path.string() + ": not a cohort file");
  if (j.value("version", -1) != kCohortVersion) throw DataError(path.string() + ": unsupported cohort version");
  std::vector<TwinParams> out;
  for (const auto& t : field(j, "twins")) out.push_back(twin_from_json(t));
  return out;
}

void save_episodes(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  std::string text = json{{"schema", "ventlab.episodes"},
                          {"version", kEpisodesVersion},
                          {"episodes", episodes.size()}}
                         .dump();
  text += '\n';
  for (const auto& e : episodes) {
    for (int t = 0; t < e.horizon(); ++t) {
      const auto ut = static_cast<std::size_t>(t);
      json line{{"episode", e.episode_id},
                {"twin", e.twin_id},
                {"step", t},
                {"state", state_json(e.states[ut])},
                {"mech", mech_json(e.mechs[ut])},
                {"action", e.actions[ut].value},
                {"reward", e.rewards.empty() ? json(nullptr) : json(e.rewards[ut])},
                {"terminal", t + 1 == e.horizon()}};
      if (t + 1 == e.horizon()) {
        line["next_state"] = state_json(e.states[ut + 1]);
        line["next_mech"] = mech_json(e.mechs[ut + 1]);
        line["survived"] = e.survived;
        line["death_probability"] = e.death_probability;
        line["final_injury"] = e.final_injury;
      }
      text += line.dump();
      text += '\n';
    }
  }
  write_text(path, text);
}

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
  std::istringstream is(read_text(path));
  std::string line;
  int lineno = 1;
  std::vector<Episode> out;
  try {
    if (!std::getline(is, line)) throw DataError("empty file");
    const json header = json::parse(line);
    if (header.value("schema", "") != "ventlab.episodes" || header.value("version", -1) != kEpisodesVersion)
      throw DataError("missing or unsupported header");
    const auto expected = field(header, "episodes").get<std::size_t>();
    Episode cur;
    bool open = false;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      const int step = field(j, "step").get<int>();
      if (!open) {
        if (step != 0) throw DataError("episode does not start at step 0");
        cur = Episode{};
        cur.episode_id = field(j, "episode").get<int>();
        cur.twin_id = field(j, "twin").get<int>();
        open = true;
      } else if (field(j, "episode").get<int>() != cur.episode_id || step != cur.horizon()) {
        throw DataError("transition out of order");
      }
      const int a = field(j, "action").get<int>();
      if (a < 0 || a >= kNumActions) throw DataError("action index out of range");
      cur.states.push_back(state_from(field(j, "state")));
      cur.mechs.push_back(mech_from(field(j, "mech")));
      cur.actions.push_back(ActionIndex{a});
      if (!field(j, "reward").is_null()) cur.rewards.push_back(j["reward"].get<double>());
      if (field(j, "terminal").get<bool>()) {
        cur.states.push_back(state_from(field(j, "next_state")));
        cur.mechs.push_back(mech_from(field(j, "next_mech")));
        cur.survived = field(j, "survived").get<bool>();
        cur.death_probability = field(j, "death_probability").get<double>();
        cur.final_injury = field(j, "final_injury").get<double>();
        if (!cur.rewards.empty() && cur.rewards.size() != cur.actions.size())
          throw DataError("episode mixes rewarded and unrewarded transitions");
        out.push_back(std::move(cur));
        open = false;
      }
    }
    if (open) throw DataError("last episode has no terminal transition");
    if (out.size() != expected) throw DataError("header announces a different episode count");
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  return out;
}

void write_trajectory_csv(std::ostream& os, const Episode& e) {
  os << "step";
  for (const auto& c : kChannels) os << ',' << c.name;
  os << ",pip,peep_set,auto_peep,tidal_volume,driving_pressure,alveolar_ventilation,mechanical_power,action\n";
  char buf[32];
  for (std::size_t t = 0; t < e.states.size(); ++t) {
    os << t;
    for (double v : e.states[t].values) {
      std::snprintf(buf, sizeof buf, ",%.10g", v);
      os << buf;
    }
    const auto& m = e.mechs[t];
    for (double v : {m.pip_cmH2O, m.peep_set_cmH2O, m.auto_peep_cmH2O, m.tidal_volume_mL,
                     m.driving_pressure_cmH2O, m.alveolar_ventilation_L_per_min, m.mechanical_power_proxy}) {
      std::snprintf(buf, sizeof buf, ",%.10g", v);
      os << buf;
    }
    os << ',';
    if (t < e.actions.size()) os << e.actions[t].value;
    os << '\n';
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

}  // namespace ventlab
