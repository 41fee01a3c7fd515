#pragma once

// Binary parameter files:
//   "MADP" | version u8 | segment count u32 |
//   per segment: name length u32, name bytes, offset u64, length u64 |
//   value count u64 | values as little-endian IEEE-754 f64.
// All integers are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>

#include "metaadapt/params.hpp"

namespace metaadapt::checkpoint {

inline constexpr std::uint8_t kFormatVersion = 1;

std::string encode(const ParameterVector& params);
/// Throws DataError on a bad magic, unknown version, truncation, or a layout
/// that does not match the value count.
ParameterVector decode(std::string_view bytes);

void save(const ParameterVector& params, const std::filesystem::path& path);
ParameterVector load(const std::filesystem::path& path);

}  // namespace metaadapt::checkpoint
