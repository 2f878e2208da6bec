#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "saf/types.hpp"

namespace saf {

// NDF epoch container, little-endian throughout:
//   "SAF1" | u32 version (=1) | u32 C | u32 M | f32 sample rate | u8 y |
//   u32 subject length | subject bytes (UTF-8) | C*M f32, channel-major
inline constexpr std::uint32_t kNdfVersion = 1;

void write_ndf(const Epoch& epoch, const std::filesystem::path& path);
Epoch read_ndf(const std::filesystem::path& path);

// Raw recording container, little-endian:
//   "SAFR" | u32 version (=1) | u32 C | u64 N | f64 sample rate |
//   C x (u32 length, name bytes) | C*N f64, channel-major
inline constexpr std::uint32_t kRecordingVersion = 1;

void write_recording(const Recording& rec, const std::filesystem::path& path);
Recording read_recording(const std::filesystem::path& path);

// Manifest CSV with the exact header "path,subject,class,split". Relative paths
// are resolved against the manifest's directory. Epochs come back in manifest
// order with subject_index assigned by sorted subject id.
std::pair<Manifest, EpochSet> load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace saf
