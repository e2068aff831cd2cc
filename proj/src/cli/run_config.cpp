#include <fstream>

#include "bcgnn/error.hpp"
#include "bcgnn/run_config.hpp"

namespace bcgnn {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
}

template <class T>
T field(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + key + "': " + e.what());
  }
}

model::Hyper parse_model(const json& j, model::Hyper h) {
  require_object(j, "model");
  for (const auto& [key, v] : j.items()) {
    if (key == "node_dim") h.node_dim = field<std::size_t>(v, key);
    else if (key == "edge_dim") h.edge_dim = field<std::size_t>(v, key);
    else if (key == "message_dim") h.message_dim = field<std::size_t>(v, key);
    else if (key == "layers") h.layers = field<std::size_t>(v, key);
    else if (key == "aggregation") h.aggregation = model::parse_aggregation(field<std::string>(v, key));
    else if (key == "leaky_slope") h.leaky_slope = field<double>(v, key);
    else if (key == "attention_drop") h.attention_drop = field<double>(v, key);
    else if (key == "readout") h.readout = model::parse_readout(field<std::string>(v, key));
    else throw ConfigError("config: unknown key 'model." + key + "'");
  }
  h.validate();
  return h;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  require_object(j, "<root>");
  RunConfig c;
  if (j.contains("profile")) {
    const auto profile = field<std::string>(j.at("profile"), "profile");
    if (profile == "paper") c.train = train::TrainConfig::paper();
    else if (profile != "desk") throw ConfigError("config: profile must be 'desk' or 'paper'");
  }
  for (const auto& [key, v] : j.items()) {
    if (key == "profile") continue;
    if (key == "train") {
      c.train = train::TrainConfig::from_json(v, c.train);
    } else if (key == "model") {
      c.model = parse_model(v, c.model);
    } else if (key == "missingness") {
      require_object(v, key);
      for (const auto& [k, x] : v.items()) {
        if (k == "mechanism") c.missingness.mechanism = field<std::string>(x, k);
        else if (k == "rate") c.missingness.rate = field<double>(x, k);
        else if (k == "seed") c.missingness.seed = field<std::uint64_t>(x, k);
        else throw ConfigError("config: unknown key 'missingness." + k + "'");
      }
    } else if (key == "paths") {
      require_object(v, key);
      for (const auto& [k, x] : v.items()) {
        if (k == "data") c.paths.data = field<std::string>(x, k);
        else if (k == "schema") c.paths.schema = field<std::string>(x, k);
        else if (k == "mask") c.paths.mask = field<std::string>(x, k);
        else if (k == "checkpoint") c.paths.checkpoint = field<std::string>(x, k);
        else if (k == "log") c.paths.log = field<std::string>(x, k);
        else throw ConfigError("config: unknown key 'paths." + k + "'");
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  return {{"train", train.to_json()},
          {"model", model.to_json()},
          {"missingness",
           {{"mechanism", missingness.mechanism}, {"rate", missingness.rate}, {"seed", missingness.seed}}},
          {"paths",
           {{"data", paths.data},
            {"schema", paths.schema},
            {"mask", paths.mask},
            {"checkpoint", paths.checkpoint},
            {"log", paths.log}}}};
}

}  // namespace bcgnn
