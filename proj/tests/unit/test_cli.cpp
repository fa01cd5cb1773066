#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "ventlab/checkpoint.hpp"
#include "ventlab/error.hpp"
#include "ventlab/io.hpp"
#include "ventlab/pipeline.hpp"

using namespace ventlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ventlab-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_config(const fs::path& out) {
  auto cfg = load_run_config(fs::path(VENTLAB_SOURCE_DIR) / "configs" / "tiny.json");
  cfg.output_dir = out.string();
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VENTLAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text(e.path());
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run configuration is strict") {
  const auto base = run_config_from_json(nlohmann::json::object());
  CHECK(base.runs == 5);
  CHECK(base.cohort.n == 98);
  CHECK_NOTHROW(base.validate());

  CHECK_THROWS_AS(run_config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"seed", 4}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"dataset", {{"seed", 4}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"total_steps", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"model", {{"hidden", 10}, {"heads", 4}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"runs", 0}}), ConfigError);
  auto behavior = base;
  behavior.model.behavior_head = true;
  CHECK_THROWS_AS(behavior.validate(), ConfigError);

  const auto cfg = tiny_config("x");
  const auto round = run_config_from_json(to_json(cfg));
  CHECK(to_json(round) == to_json(cfg));
  CHECK(to_json(cfg).at("train").count("seed") == 0);
}

TEST_CASE("stage seeds derive from the master seed") {
  auto cfg = tiny_config("x");
  const auto a = stage_seeds(cfg);
  const auto b = stage_seeds(cfg);
  CHECK(a.cohort == b.cohort);
  CHECK(a.train == b.train);
  CHECK(a.train.size() == 2);
  CHECK(a.train[0] != a.train[1]);
  CHECK(a.cohort != a.dataset);
  cfg.seed += 1;
  CHECK(stage_seeds(cfg).cohort != a.cohort);
}

TEST_CASE("hashing") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto dir = scratch("hash");
  write_text(dir / "a.txt", "abc");
  CHECK(sha256_file(dir / "a.txt") == sha256_hex("abc"));
  CHECK_THROWS_AS(sha256_file(dir / "missing"), DataError);
}

TEST_CASE("cohort, episodes and normalizer round-trip") {
  const auto dir = scratch("io");
  const auto cohort = spawn_cohort(3, 2, ParamRanges{});
  save_cohort(dir / "c.json", cohort);
  CHECK(load_cohort(dir / "c.json") == cohort);

  auto episodes = fixtures::small_dataset().episodes;
  episodes.resize(3);
  episodes[1].states[2][Channel::lactate] = std::numeric_limits<double>::quiet_NaN();
  save_episodes(dir / "e.jsonl", episodes);
  const auto back = load_episodes(dir / "e.jsonl");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].twin_id == episodes[i].twin_id);
    CHECK(back[i].episode_id == episodes[i].episode_id);
    CHECK(back[i].actions == episodes[i].actions);
    CHECK(back[i].rewards == episodes[i].rewards);
    CHECK(back[i].mechs == episodes[i].mechs);
    CHECK(back[i].survived == episodes[i].survived);
    CHECK(back[i].death_probability == episodes[i].death_probability);
    REQUIRE(back[i].states.size() == episodes[i].states.size());
    for (std::size_t t = 0; t < back[i].states.size(); ++t)
      for (std::size_t c = 0; c < kStateDim; ++c) {
        const double x = episodes[i].states[t].values[c];
        const double y = back[i].states[t].values[c];
        CHECK((std::isnan(x) ? std::isnan(y) : x == y));
      }
  }
  const auto first = read_text(dir / "e.jsonl").substr(0, 60);
  CHECK(first.find("\"schema\":\"ventlab.episodes\"") != std::string::npos);

  const auto& norm = fixtures::small_dataset().normalizer;
  CHECK(normalizer_from_json(to_json(norm)) == norm);
  const Split s{{0, 2}, {1}};
  CHECK(split_from_json(to_json(s)).train == s.train);

  write_text(dir / "bad.json", "{\"schema\":\"other\",\"version\":1,\"twins\":[]}");
  CHECK_THROWS_AS(load_cohort(dir / "bad.json"), DataError);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  const auto dir = scratch("ckpt");
  Checkpoint ck;
  ck.kind = "ddqn";
  ck.net = fixtures::tiny_net(40);
  ck.params = Network(ck.net).init_params(2);
  ck.target = Network(ck.net).init_params(3);
  ck.adam.m.assign(ck.params.size(), 0.25);
  ck.adam.v.assign(ck.params.size(), 1e-300);
  ck.adam.t = 7;
  ck.step = 7;
  ck.seed = 99;
  save_checkpoint(ck, dir / "sub" / "a.ckpt");
  const auto back = load_checkpoint(dir / "sub" / "a.ckpt");
  CHECK(back.kind == "ddqn");
  CHECK(back.net == ck.net);
  CHECK(back.params == ck.params);
  CHECK(back.target == ck.target);
  CHECK(back.adam.v == ck.adam.v);
  CHECK(back.adam.t == 7);
  CHECK(back.seed == 99);
  write_text(dir / "junk.ckpt", "not a checkpoint");
  CHECK_THROWS(load_checkpoint(dir / "junk.ckpt"));
}

TEST_CASE("stages refuse tampered or mismatched upstream artifacts") {
  const auto dir = scratch("stages");
  auto cfg = tiny_config(dir);
  const auto m = run_spawn_cohort(cfg);
  CHECK(m.stage == "cohort");
  REQUIRE(m.outputs.size() == 1);
  CHECK(m.outputs[0].second == sha256_file(dir / "cohort.json"));
  CHECK_NOTHROW(verify_stage(Layout{dir}, "cohort"));
  const auto g = run_gen_data(cfg);
  CHECK(fs::exists(dir / "episodes.jsonl"));
  CHECK(fs::exists(dir / "normalizer.json"));
  CHECK(read_manifest(Layout{dir}, "dataset").seed == g.seed);

  auto other = cfg;
  other.seed += 1;
  CHECK_THROWS_AS(run_gen_data(other), DataError);
  auto resized = cfg;
  resized.cohort.n = 7;
  CHECK_THROWS_AS(run_gen_data(resized), DataError);

  std::string text = read_text(dir / "cohort.json");
  text.insert(text.size() - 1, " ");
  write_text(dir / "cohort.json", text);
  CHECK_THROWS_AS(verify_stage(Layout{dir}, "cohort"), DataError);
  CHECK_THROWS_AS(run_gen_data(cfg), DataError);

  const auto fresh = scratch("stages-empty");
  CHECK_THROWS_AS(run_train(tiny_config(fresh), MethodKind::tcql), DataError);
}

TEST_CASE("command line pipeline is reproducible byte for byte") {
  const auto a = scratch("cli-a");
  const auto b = scratch("cli-b");
  const std::string cfg = (fs::path(VENTLAB_SOURCE_DIR) / "configs" / "tiny.json").string();
  REQUIRE(run_cli("run-all --config " + cfg + " --out " + a.string()) == 0);
  REQUIRE(run_cli("run-all --config " + cfg + " --out " + b.string() + " --jobs 1") == 0);
  const auto ta = tree_bytes(a);
  const auto tb = tree_bytes(b);
  CHECK(ta.size() == tb.size());
  CHECK(ta.count("comparison.csv") == 1);
  CHECK(ta.count("checkpoints/tcql-run0.ckpt") == 1);
  CHECK(ta.count("reports/online-clinician.json") == 1);
  for (const auto& [path, bytes] : ta) {
    INFO(path);
    CHECK(tb.count(path) == 1);
    if (tb.count(path)) CHECK(bytes == tb.at(path));
  }
  const auto csv = ta.at("comparison.csv");
  CHECK(csv.rfind("method,fqe_score_mean,", 0) == 0);
  for (const char* m : {"\ntcql,", "\nddqn,", "\ncql_fixed,", "\nbcq,", "\nclinician,"})
    CHECK(csv.find(m) != std::string::npos);
}

TEST_CASE("command line stages and exit codes") {
  const auto dir = scratch("cli-stages");
  const std::string cfg = (fs::path(VENTLAB_SOURCE_DIR) / "configs" / "tiny.json").string();
  CHECK(run_cli("spawn-cohort --config " + cfg + " --out " + dir.string() + " --n 1") == 0);
  CHECK(load_cohort(dir / "cohort.json").size() == 1);

  write_text(dir / "bad.json", "{\"trian\": {}}");
  CHECK(run_cli("spawn-cohort --config " + (dir / "bad.json").string() + " --out " + dir.string()) == 2);
  CHECK(run_cli("train --baseline sac --config " + cfg + " --out " + dir.string()) != 0);
  CHECK(run_cli("eval-fqe --config " + cfg + " --out " + dir.string()) != 0);

  // gen-data against a cohort spawned with a different size is refused.
  CHECK(run_cli("gen-data --config " + cfg + " --out " + dir.string()) == 1);
}

}  // TEST_SUITE
