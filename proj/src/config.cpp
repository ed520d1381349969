#include "neurodecode/config.hpp"

#include "neurodecode/errors.hpp"

#include <ctime>
#include <fstream>

namespace neurodecode {

using nlohmann::json;

json to_json(const signal::PipelineConfig& c) {
  return {{"ref_channel", c.ref_channel},
          {"low_hz", c.low_hz},
          {"high_hz", c.high_hz},
          {"filter_order", c.filter_order},
          {"target_rate", c.target_rate},
          {"baseline_start_ms", c.baseline_start_ms},
          {"baseline_end_ms", c.baseline_end_ms},
          {"crop_start_ms", c.crop_start_ms},
          {"crop_end_ms", c.crop_end_ms},
          {"zscore_epsilon", c.zscore_epsilon},
          {"expected_channels", c.expected_channels}};
}

signal::PipelineConfig pipeline_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  signal::PipelineConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "ref_channel") c.ref_channel = v.get<std::string>();
      else if (key == "low_hz") c.low_hz = v.get<double>();
      else if (key == "high_hz") c.high_hz = v.get<double>();
      else if (key == "filter_order") c.filter_order = v.get<int>();
      else if (key == "target_rate") c.target_rate = v.get<int>();
      else if (key == "baseline_start_ms") c.baseline_start_ms = v.get<double>();
      else if (key == "baseline_end_ms") c.baseline_end_ms = v.get<double>();
      else if (key == "crop_start_ms") c.crop_start_ms = v.get<double>();
      else if (key == "crop_end_ms") c.crop_end_ms = v.get<double>();
      else if (key == "zscore_epsilon") c.zscore_epsilon = v.get<double>();
      else if (key == "expected_channels") c.expected_channels = v.get<int>();
      else throw ConfigError("unknown pipeline config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const data::SynthConfig& c) {
  return {{"mode", data::to_string(c.mode)},
          {"n_trials", c.n_trials},
          {"n_subjects", c.n_subjects},
          {"snr", c.snr},
          {"seed", c.seed}};
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace neurodecode
