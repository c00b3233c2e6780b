#include "balgan/run_config.hpp"

#include <fstream>
#include <sstream>

#include "balgan/errors.hpp"

namespace balgan {

namespace {

template <class F>
void for_keys(const nlohmann::json& j, const std::string& section, F&& on_key) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      on_key(key, value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  gan.validate();
  gan_training.validate();
  if (gan.loss_mode != gan_training.loss_mode) {
    throw ConfigError("gan.loss_mode and gan_training.loss_mode disagree");
  }
  classifier.validate();
  classifier_training.validate();
  if (rebalance.target < 0) throw ConfigError("rebalance.target must be >= 0");
  if (rebalance.cap < 1) throw ConfigError("rebalance.cap must be >= 1");
  if (cross_validation.k < 2) throw ConfigError("cross_validation.k must be >= 2");
  if (cross_validation.per_fold_target < 0) throw ConfigError("cross_validation.per_fold_target must be >= 0");
}

void RunConfig::set_seed(std::uint64_t seed) {
  gan_training.seed = seed;
  classifier_training.seed = seed;
  rebalance.seed = seed;
  cross_validation.seed = seed;
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"gan", to_json(c.gan)},
          {"gan_training", to_json(c.gan_training)},
          {"classifier", to_json(c.classifier)},
          {"classifier_training", to_json(c.classifier_training)},
          {"rebalance", {{"target", c.rebalance.target}, {"cap", c.rebalance.cap}, {"seed", c.rebalance.seed}}},
          {"cross_validation",
           {{"k", c.cross_validation.k},
            {"seed", c.cross_validation.seed},
            {"stratified", c.cross_validation.stratified},
            {"real_only_eval", c.cross_validation.real_only_eval},
            {"per_fold_target", c.cross_validation.per_fold_target}}},
          {"freeze_prefixes", c.freeze_prefixes}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  bool training_mode_given = false;
  for_keys(j, "config", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "gan") {
      c.gan = gan_spec_from_json(v);
    } else if (key == "gan_training") {
      c.gan_training = train_config_from_json(v);
      training_mode_given = v.contains("loss_mode");
    } else if (key == "classifier") {
      c.classifier = classifier_spec_from_json(v);
    } else if (key == "classifier_training") {
      c.classifier_training = classifier_training_from_json(v);
    } else if (key == "rebalance") {
      for_keys(v, "rebalance", [&](const std::string& k, const nlohmann::json& x) {
        if (k == "target") {
          c.rebalance.target = x.get<int>();
        } else if (k == "cap") {
          c.rebalance.cap = x.get<int>();
        } else if (k == "seed") {
          c.rebalance.seed = x.get<std::uint64_t>();
        } else {
          throw ConfigError("unknown key 'rebalance." + k + "'");
        }
      });
    } else if (key == "cross_validation") {
      for_keys(v, "cross_validation", [&](const std::string& k, const nlohmann::json& x) {
        if (k == "k") {
          c.cross_validation.k = x.get<int>();
        } else if (k == "seed") {
          c.cross_validation.seed = x.get<std::uint64_t>();
        } else if (k == "stratified") {
          c.cross_validation.stratified = x.get<bool>();
        } else if (k == "real_only_eval") {
          c.cross_validation.real_only_eval = x.get<bool>();
        } else if (k == "per_fold_target") {
          c.cross_validation.per_fold_target = x.get<int>();
        } else {
          throw ConfigError("unknown key 'cross_validation." + k + "'");
        }
      });
    } else if (key == "freeze_prefixes") {
      c.freeze_prefixes = v.get<std::vector<std::string>>();
    } else {
      throw ConfigError("unknown configuration section '" + key + "'");
    }
  });
  // The training loss follows the architecture unless stated explicitly.
  if (!training_mode_given) c.gan_training.loss_mode = c.gan.loss_mode;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string resolved_config_text(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

void write_resolved_config(const RunConfig& config, const std::filesystem::path& out_dir) {
  std::ofstream out(out_dir / "run.resolved.config", std::ios::binary);
  if (!out) throw DataError("cannot write " + (out_dir / "run.resolved.config").string());
  out << resolved_config_text(config);
}

}  // namespace balgan
