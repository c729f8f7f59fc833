#pragma once

#include "charme/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace charme {

using Json = nlohmann::json;

// Model documents:
// {d, p, K, pi: [...],
//  experts: [{f: {widths, weights, biases, activation}, g: {kind, floor?, net?}}],
//  innovation: {family, sigma?}}
// Weights are nested arrays, one inner array per matrix row.

Json to_json(const FeedforwardNet& net);
FeedforwardNet net_from_json(const Json& doc);

Json to_json(const CharmeModel& model);
CharmeModel model_from_json(const Json& doc);

/// Reads a model document; throws ParseError/IoError. Does not validate.
CharmeModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const CharmeModel& model);

/// Stable two-space indented dump terminated by a newline.
std::string dump_json(const Json& doc);
void write_json_file(const std::filesystem::path& path, const Json& doc);
Json read_json_file(const std::filesystem::path& path);

Json to_json(const ValidationReport& report);

}  // namespace charme
