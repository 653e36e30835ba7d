#pragma once

#include "collabevo/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace collabevo {

/// Current on-disk document version for run states and configs.
inline constexpr int kDocumentVersion = 1;

nlohmann::json to_json(const RunConfig& config);
/// Fields absent from `doc` keep their defaults; unknown fields are rejected.
RunConfig config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const Individual& individual);
Individual individual_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const GenerationRecord& record);
GenerationRecord generation_record_from_json(const nlohmann::json& doc);

/// Versioned document {version, config, generation, population, hall_of_fame, rng_state, fitness_history, ...}.
nlohmann::json to_json(const RunState& state);
RunState run_state_from_json(const nlohmann::json& doc);

std::string serialize(const RunState& state);
RunState deserialize_run_state(const std::string& text);

void save_run_state(const RunState& state, const std::filesystem::path& path);
RunState load_run_state(const std::filesystem::path& path);

/// Config file: {"version": 1, "config": {...}} or a bare config object.
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

/// Reads a whole file; throws Error if unreadable.
std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

} // namespace collabevo
