// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint: magic "EMFG", u32 format version, config block, then a
// tensor table of (name, rows, cols, little-endian float32 payload).
#pragma once

#include <filesystem>
#include <string>

#include "emotag/netcore/params.hpp"

namespace emotag {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelParams<float>& params);
ModelParams<float> deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

/// Loads into an existing model; the stored config and every tensor shape
/// must match, otherwise the error names the offending tensor.
void load_checkpoint_into(ModelParams<float>& params, const std::filesystem::path& path);

}  // namespace emotag
