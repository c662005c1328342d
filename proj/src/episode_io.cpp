#include "deta/episode_io.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "deta/error.hpp"

namespace deta {
namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::SchemaError, std::string("missing key \"") + key + "\"");
  }
  return obj.at(key);
}

template <typename T>
T require_as(const json& obj, const char* key) {
  const json& v = require(obj, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::SchemaError, std::string("key \"") + key + "\" has the wrong type");
  }
}

json patches_to_json(const PatchGrid& g) {
  json rows = json::array();
  for (int r = 0; r < g.height(); ++r) {
    json row = json::array();
    for (int c = 0; c < g.width(); ++c) {
      const auto p = g.patch(r, c);
      row.push_back(std::vector<double>(p.data(), p.data() + p.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

PatchGrid patches_from_json(const json& j, SampleId id, int h, int w, int d) {
  if (!j.is_array() || static_cast<int>(j.size()) != h) {
    throw Error(ErrorCode::SchemaError, "sample " + std::to_string(id) + ": patches must have H rows");
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(h) * w * d);
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != w) {
      throw Error(ErrorCode::SchemaError, "sample " + std::to_string(id) + ": patch row must have W entries");
    }
    for (const auto& patch : row) {
      if (!patch.is_array() || static_cast<int>(patch.size()) != d) {
        throw Error(ErrorCode::SchemaError, "sample " + std::to_string(id) + ": patch must have d values");
      }
      for (const auto& v : patch) {
        if (!v.is_number()) throw Error(ErrorCode::SchemaError, "patch values must be numbers");
        data.push_back(v.get<double>());
      }
    }
  }
  return PatchGrid(id, h, w, d, std::move(data));
}

json sample_to_json(const Sample& s) {
  return {{"id", s.grid.id()},
          {"label", s.label},
          {"noise", std::string(to_string(s.noise))},
          {"patches", patches_to_json(s.grid)}};
}

Sample sample_from_json(const json& j, const Episode& ep, bool noise_required) {
  const auto id = require_as<SampleId>(j, "id");
  Sample s;
  s.label = require_as<int>(j, "label");
  if (noise_required || j.contains("noise")) {
    s.noise = noise_from_string(require_as<std::string>(j, "noise"));
  }
  s.grid = patches_from_json(require(j, "patches"), id, ep.height, ep.width, ep.dim);
  return s;
}

}  // namespace

json episode_to_json(const Episode& ep) {
  json support = json::array();
  for (const auto& s : ep.support) support.push_back(sample_to_json(s));
  json query = json::array();
  for (const auto& s : ep.query) query.push_back(sample_to_json(s));
  return {{"d", ep.dim},
          {"H", ep.height},
          {"W", ep.width},
          {"C", ep.num_classes},
          {"K", ep.shots},
          {"support", std::move(support)},
          {"query", std::move(query)},
          {"meta", {{"seed", ep.meta.seed}, {"ood_ratio", ep.meta.ood_ratio}, {"clutter_ratio", ep.meta.clutter_ratio}}}};
}

Episode episode_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "episode must be a JSON object");
  Episode ep;
  ep.dim = require_as<int>(j, "d");
  ep.height = require_as<int>(j, "H");
  ep.width = require_as<int>(j, "W");
  ep.num_classes = require_as<int>(j, "C");
  ep.shots = require_as<int>(j, "K");
  if (ep.dim < 1 || ep.height < 1 || ep.width < 1) {
    throw Error(ErrorCode::SchemaError, "d, H and W must be positive");
  }
  const json& support = require(j, "support");
  const json& query = require(j, "query");
  if (!support.is_array() || !query.is_array()) {
    throw Error(ErrorCode::SchemaError, "support and query must be arrays");
  }
  for (const auto& s : support) ep.support.push_back(sample_from_json(s, ep, false));
  for (const auto& s : query) ep.query.push_back(sample_from_json(s, ep, true));
  const json& meta = require(j, "meta");
  ep.meta.seed = require_as<std::int64_t>(meta, "seed");
  ep.meta.ood_ratio = require_as<double>(meta, "ood_ratio");
  ep.meta.clutter_ratio = require_as<double>(meta, "clutter_ratio");
  ep.validate();
  return ep;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_episode(const Episode& episode, const std::filesystem::path& path) {
  write_text_file(path, episode_to_json(episode).dump() + "\n");
}

Episode read_episode(const std::filesystem::path& path) { return episode_from_json(read_json_file(path)); }

}  // namespace deta
