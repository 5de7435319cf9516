#pragma once

// Parameter checkpoint file:
//
//   u64 (little-endian)   byte length N of the JSON header
//   N bytes               {"format":"explore-params","version":1,
//                          "tensors":[{"name":..., "shape":[rows, cols]}, ...]}
//   f64 (little-endian)   tensor payloads, in header order, row-major
//
// Loading validates every name and shape against the destination set, so a
// round trip reproduces parameters bit-for-bit.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "explore/diff/tape.hpp"

namespace explore::diff {

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params);
void decode_checkpoint(const std::vector<std::uint8_t>& bytes, const ParameterSet& params);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
void load_checkpoint(const std::filesystem::path& path, const ParameterSet& params);

}  // namespace explore::diff
