#pragma once

// Flat key=value configuration text. Blank lines and lines starting with '#'
// are ignored; a later assignment to the same key wins.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gazecone/synth.hpp"
#include "gazecone/train.hpp"

namespace gazecone::config {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Throws ConfigError naming the line for malformed input.
KeyValues parse(std::string_view text);
// Throws IoError if the file cannot be read.
KeyValues read(const std::filesystem::path& path);

// Assign every key; unknown keys and unparsable values throw ConfigError.
void apply(const KeyValues& kv, synth::GenConfig& cfg);
void apply(const KeyValues& kv, learning::TrainConfig& cfg);

KeyValues describe(const synth::GenConfig& cfg);
KeyValues describe(const learning::TrainConfig& cfg);

void print(const KeyValues& kv, std::ostream& out);

}  // namespace gazecone::config
