#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "bcgnn/model.hpp"
#include "bcgnn/train.hpp"

namespace bcgnn {

/// Experiment file for `bcgnn train`. Sections: "profile" ("desk" or
/// "paper"), "train", "model", "missingness" and "paths". Unknown keys at any
/// level are rejected with ConfigError; omitted keys keep their defaults.
struct RunConfig {
  struct Missingness {
    std::string mechanism = "mcar";
    double rate = 0.3;
    std::uint64_t seed = 0;
  };
  struct Paths {
    std::string data, schema, mask, checkpoint, log;
  };

  train::TrainConfig train;
  model::Hyper model;
  Missingness missingness;
  Paths paths;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

}  // namespace bcgnn
