#include "ventlab/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "ventlab/error.hpp"

namespace ventlab {
namespace {

constexpr char kMagic[] = "VENTLAB-CKPT\n";

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little endian");

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

nlohmann::json to_json(const NetConfig& c) {
  return {{"state_dim", c.state_dim},     {"hidden", c.hidden},
          {"seq_len", c.seq_len},         {"layers", c.layers},
          {"heads", c.heads},             {"ff_hidden", c.ff_hidden},
          {"mlp_hidden", c.mlp_hidden},   {"num_actions", c.num_actions},
          {"positional_encoding", c.positional_encoding},
          {"behavior_head", c.behavior_head}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  NetConfig c;
  for (const auto& [key, val] : j.items()) {
    if (key == "state_dim") c.state_dim = val.get<int>();
    else if (key == "hidden") c.hidden = val.get<int>();
    else if (key == "seq_len") c.seq_len = val.get<int>();
    else if (key == "layers") c.layers = val.get<int>();
    else if (key == "heads") c.heads = val.get<int>();
    else if (key == "ff_hidden") c.ff_hidden = val.get<int>();
    else if (key == "mlp_hidden") c.mlp_hidden = val.get<int>();
    else if (key == "num_actions") c.num_actions = val.get<int>();
    else if (key == "positional_encoding") c.positional_encoding = val.get<bool>();
    else if (key == "behavior_head") c.behavior_head = val.get<bool>();
    else throw ConfigError("model: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::vector<std::pair<std::string, const std::vector<double>*>> arrays{
      {"params", &ck.params}, {"target", &ck.target}, {"adam.m", &ck.adam.m}, {"adam.v", &ck.adam.v}};
  nlohmann::json manifest{{"version", Checkpoint::kVersion},
                          {"kind", ck.kind},
                          {"model", to_json(ck.net)},
                          {"train", ck.train_config},
                          {"seed", ck.seed},
                          {"step", ck.step},
                          {"adam_t", ck.adam.t},
                          {"arrays", nlohmann::json::array()}};
  for (const auto& [name, v] : arrays) manifest["arrays"].push_back({{"name", name}, {"count", v->size()}});
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic - 1);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, v] : arrays)
    os.write(reinterpret_cast<const char*>(v->data()), static_cast<std::streamsize>(v->size() * sizeof(double)));
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  std::string magic(sizeof kMagic - 1, '\0');
  is.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kMagic) throw DataError("not a checkpoint: " + path.string());
  const std::uint64_t len = read_u64(is);
  if (!is || len > (1ULL << 30)) throw DataError("corrupt checkpoint manifest: " + path.string());
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  const auto manifest = nlohmann::json::parse(text);
  if (manifest.at("version").get<int>() != Checkpoint::kVersion)
    throw DataError("unsupported checkpoint version in " + path.string());

  Checkpoint ck;
  ck.kind = manifest.at("kind").get<std::string>();
  ck.net = net_config_from_json(manifest.at("model"));
  ck.train_config = manifest.at("train");
  ck.seed = manifest.at("seed").get<std::uint64_t>();
  ck.step = manifest.at("step").get<std::int64_t>();
  ck.adam.t = manifest.at("adam_t").get<std::int64_t>();
  for (const auto& a : manifest.at("arrays")) {
    const auto name = a.at("name").get<std::string>();
    std::vector<double>* dst = name == "params"   ? &ck.params
                               : name == "target" ? &ck.target
                               : name == "adam.m" ? &ck.adam.m
                               : name == "adam.v" ? &ck.adam.v
                                                  : nullptr;
    if (!dst) throw DataError("unknown checkpoint array '" + name + "'");
    dst->resize(a.at("count").get<std::size_t>());
    is.read(reinterpret_cast<char*>(dst->data()), static_cast<std::streamsize>(dst->size() * sizeof(double)));
  }
  if (!is) throw DataError("truncated checkpoint " + path.string());
  if (ck.params.size() != Network(ck.net).num_params())
    throw DataError("checkpoint parameter count does not match its model config");
  return ck;
}

}  // namespace ventlab
