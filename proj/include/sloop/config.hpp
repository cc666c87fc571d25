#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace sloop {

// Parses a YAML document (JSON is a subset) into JSON. Unquoted scalars
// become booleans or numbers when they read as such.
nlohmann::json parse_config(const std::string& text);
nlohmann::json load_config(const std::filesystem::path& path);

}  // namespace sloop
