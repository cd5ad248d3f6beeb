#pragma once

#include <filesystem>

#include "sfc/surrogate/surrogate.hpp"

namespace sfc::surrogate {

// Self-describing JSON artifact: architecture, weights, normalization,
// alpha/m, conformal offsets or posterior, and training provenance.
void save_surrogate(const std::filesystem::path& path, const Surrogate& model);
Surrogate load_surrogate(const std::filesystem::path& path);

nlohmann::json surrogate_to_json(const Surrogate& model);
Surrogate surrogate_from_json(const nlohmann::json& j);

}  // namespace sfc::surrogate
