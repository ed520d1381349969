#pragma once

// JSON forms of the pipeline and generator configs. Field names match the
// struct members; missing keys keep their defaults, unknown keys are rejected.

#include "neurodecode/dataset.hpp"
#include "neurodecode/signal.hpp"

#include <json.hpp>

#include <filesystem>

namespace neurodecode {

inline constexpr const char* kVersion = "0.1.0";

nlohmann::json to_json(const signal::PipelineConfig& cfg);
signal::PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const data::SynthConfig& cfg);

// Parses a JSON file; ConfigError names the path on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);

// Current UTC time as ISO 8601.
std::string utc_timestamp();

}  // namespace neurodecode
