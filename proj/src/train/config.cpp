#include <ostream>

#include "bcgnn/error.hpp"
#include "bcgnn/train.hpp"

namespace bcgnn::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(drop_bipartite >= 0.0 && drop_bipartite < 1.0))
    throw ConfigError("drop_bipartite must lie in [0, 1)");
  if (!(drop_feature >= 0.0 && drop_feature < 1.0))
    throw ConfigError("drop_feature must lie in [0, 1)");
  if (!(label_weight >= 0.0)) throw ConfigError("label_weight must be non-negative");
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"lr", lr},
          {"drop_bipartite", drop_bipartite},
          {"drop_feature", drop_feature},
          {"estimator", corr::to_string(estimator)},
          {"seed", seed},
          {"label_task", label_task},
          {"label_weight", label_weight},
          {"log_interval", log_interval},
          {"ablate_interdependence", ablate_interdependence}};
}

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "drop_bipartite") c.drop_bipartite = value.get<double>();
      else if (key == "drop_feature") c.drop_feature = value.get<double>();
      else if (key == "estimator") c.estimator = corr::parse_estimator(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "label_task") c.label_task = value.get<bool>();
      else if (key == "label_weight") c.label_weight = value.get<double>();
      else if (key == "log_interval") c.log_interval = value.get<std::size_t>();
      else if (key == "ablate_interdependence") c.ablate_interdependence = value.get<bool>();
      else throw ConfigError("train config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("train config: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"imputation_loss", e.imputation_loss},
          {"label_loss", e.label_loss},
          {"wallclock", e.wallclock}};
}

void write_log(std::ostream& out, const std::vector<EpochLog>& history) {
  for (const auto& e : history) out << to_json(e).dump() << '\n';
}

}  // namespace bcgnn::train
