#pragma once

#include "mstgat/model.hpp"

#include <filesystem>
#include <string>

namespace mstgat {

inline constexpr int kCheckpointFormat = 1;

// Text header line followed by a JSON body; the header carries the format
// version, tool version, config hash and a checksum of the body.
std::string serialize_checkpoint(const ModelState& state);
ModelState deserialize_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace mstgat
