#pragma once

#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "deta/episode.hpp"

namespace deta {

nlohmann::json episode_to_json(const Episode& episode);
Episode episode_from_json(const nlohmann::json& j);

void write_episode(const Episode& episode, const std::filesystem::path& path);
Episode read_episode(const std::filesystem::path& path);

// Shared helpers for the JSON files the CLI reads and writes.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace deta
