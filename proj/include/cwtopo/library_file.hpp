#pragma once

// Binary container for trained libraries.
//
// Layout: "CWLB", u32 version, u32 section count, then one table entry per
// section (u32 name length, name bytes, u64 offset, u64 size, u64 FNV-1a
// checksum of the payload), then the payloads. Integers and doubles are
// little-endian; matrices are (u64 rows, u64 cols) followed by column-major
// f64 values. Reference meshes are regenerated from the stored geometry.

#include "cwtopo/port_reduction.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cwtopo {

inline constexpr std::uint32_t library_format_version = 1;

std::vector<std::uint8_t> encode_library(const TrainedLibrary& library);
/// Throws LibraryError on bad magic, version, checksum or inconsistent dimensions.
TrainedLibrary decode_library(const std::vector<std::uint8_t>& bytes);

void write_library(const TrainedLibrary& library, const std::string& path);
TrainedLibrary read_library(const std::string& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

} // namespace cwtopo
